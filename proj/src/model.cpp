#include "pourforce/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pourforce {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

LstmLayerParams make_lstm(int input_size, int hidden_size, Rng& rng) {
    LstmLayerParams p;
    p.hidden_size = hidden_size;
    p.input_size = input_size;
    p.W = glorot_uniform(rng, 4 * hidden_size, input_size);
    p.U = glorot_uniform(rng, 4 * hidden_size, hidden_size);
    p.b = Matrix(4 * hidden_size, 1);
    // Unit forget bias: rows [H, 2H) of the stacked gate order.
    for (int r = hidden_size; r < 2 * hidden_size; ++r) p.b(r, 0) = 1.0;
    return p;
}

DenseParams make_dense(int input_size, Rng& rng) {
    DenseParams p;
    p.W = glorot_uniform(rng, 1, input_size);
    p.b = Matrix(1, 1);
    return p;
}

}  // namespace

void validate(const NetworkSpec& net) {
    require(net.input_size >= 1, "network: input_size must be positive");
    require(!net.layers.empty(), "network: no layers");
    int width = net.input_size;
    int dense_count = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const std::string at = "layer " + std::to_string(li);
        if (const auto* lstm = std::get_if<LstmLayerParams>(&net.layers[li])) {
            require(dense_count == 0, at + ": lstm after the dense layer");
            const int H = lstm->hidden_size, D = lstm->input_size;
            require(H >= 1 && D >= 1, at + ": non-positive lstm sizes");
            require(D == width, at + ": lstm expects input " +
                                    std::to_string(D) + ", gets " +
                                    std::to_string(width));
            require(lstm->W.rows() == 4 * H && lstm->W.cols() == D,
                    at + ": W is " + lstm->W.shape_str());
            require(lstm->U.rows() == 4 * H && lstm->U.cols() == H,
                    at + ": U is " + lstm->U.shape_str());
            require(lstm->b.rows() == 4 * H && lstm->b.cols() == 1,
                    at + ": b is " + lstm->b.shape_str());
            width = H;
        } else if (const auto* drop = std::get_if<Dropout>(&net.layers[li])) {
            require(dense_count == 0, at + ": dropout after the dense layer");
            require(drop->rate >= 0.0 && drop->rate < 1.0,
                    at + ": dropout rate " + std::to_string(drop->rate) +
                        " outside [0, 1)");
        } else {
            const auto& dense = std::get<DenseParams>(net.layers[li]);
            ++dense_count;
            require(dense_count == 1, at + ": more than one dense layer");
            require(dense.W.rows() == 1 && dense.W.cols() == width,
                    at + ": dense W is " + dense.W.shape_str() +
                        ", expects 1x" + std::to_string(width));
            require(dense.b.rows() == 1 && dense.b.cols() == 1,
                    at + ": dense b is " + dense.b.shape_str());
            width = 1;
        }
    }
    require(dense_count == 1 &&
                std::holds_alternative<DenseParams>(net.layers.back()),
            "network: exactly one dense layer must sit last");
}

LstmStep lstm_cell_step(const LstmLayerParams& p, const Matrix& x_t,
                        const Matrix& h_prev, const Matrix& c_prev) {
    const int H = p.hidden_size;
    require(x_t.rows() == p.input_size && x_t.cols() == 1,
            "lstm_cell_step: x is " + x_t.shape_str() + ", expects " +
                std::to_string(p.input_size) + "x1");
    require(h_prev.rows() == H && h_prev.cols() == 1,
            "lstm_cell_step: h_prev is " + h_prev.shape_str());
    require(c_prev.rows() == H && c_prev.cols() == 1,
            "lstm_cell_step: c_prev is " + c_prev.shape_str());

    Matrix z = add(add(matmul(p.W, x_t), matmul(p.U, h_prev)), p.b);
    LstmStep st;
    st.i = Matrix(H, 1);
    st.f = Matrix(H, 1);
    st.g = Matrix(H, 1);
    st.o = Matrix(H, 1);
    st.c = Matrix(H, 1);
    st.h = Matrix(H, 1);
    for (int r = 0; r < H; ++r) {
        const double i = sigmoid(z(r, 0));
        const double f = sigmoid(z(H + r, 0));
        const double g = std::tanh(z(2 * H + r, 0));
        const double o = sigmoid(z(3 * H + r, 0));
        const double c = f * c_prev(r, 0) + i * g;
        st.i(r, 0) = i;
        st.f(r, 0) = f;
        st.g(r, 0) = g;
        st.o(r, 0) = o;
        st.c(r, 0) = c;
        st.h(r, 0) = o * std::tanh(c);
    }
    return st;
}

std::pair<Matrix, Matrix> dropout_apply(double rate, Rng& rng, const Matrix& x,
                                        Mode mode) {
    require(rate >= 0.0 && rate < 1.0,
            "dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    if (mode == Mode::infer || rate == 0.0)
        return {x, Matrix(x.rows(), x.cols(), 1.0)};
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    for (double& m : mask.data())
        m = (rng.next_double() >= rate) ? keep_scale : 0.0;
    return {hadamard(x, mask), mask};
}

Matrix forward_sequence(const NetworkSpec& net, const Matrix& inputs, Mode mode,
                        Rng* rng, ForwardCache* cache) {
    validate(net);
    require(inputs.cols() == net.input_size,
            "forward: inputs have " + std::to_string(inputs.cols()) +
                " features, network expects " + std::to_string(net.input_size));
    const int T = inputs.rows();

    std::vector<Matrix> xs(T);
    for (int t = 0; t < T; ++t) {
        Matrix col(net.input_size, 1);
        for (int j = 0; j < net.input_size; ++j) col(j, 0) = inputs(t, j);
        xs[t] = std::move(col);
    }

    if (cache) {
        cache->timesteps = T;
        cache->layers.clear();
        cache->layers.reserve(net.layers.size());
    }

    Matrix predictions(T, 1);
    for (const Layer& layer : net.layers) {
        if (const auto* lstm = std::get_if<LstmLayerParams>(&layer)) {
            const int H = lstm->hidden_size;
            std::vector<Matrix> out(T);
            LstmLayerCache lc;
            if (cache) lc.steps.reserve(T);
            Matrix h(H, 1), c(H, 1);
            for (int t = 0; t < T; ++t) {
                LstmStep st = lstm_cell_step(*lstm, xs[t], h, c);
                h = st.h;
                c = st.c;
                out[t] = st.h;
                if (cache) lc.steps.push_back(std::move(st));
            }
            if (cache) {
                lc.inputs = std::move(xs);
                cache->layers.emplace_back(std::move(lc));
            }
            xs = std::move(out);
        } else if (const auto* drop = std::get_if<Dropout>(&layer)) {
            DropoutCache dc;
            if (cache) dc.masks.reserve(T);
            const bool active = (mode == Mode::train && drop->rate > 0.0);
            if (active && rng == nullptr)
                throw std::invalid_argument(
                    "forward: train-mode dropout needs an rng");
            Rng unused(0);   // never consumed when dropout is inactive
            Rng& r = active ? *rng : unused;
            for (int t = 0; t < T; ++t) {
                auto [y, mask] = dropout_apply(drop->rate, r, xs[t], mode);
                xs[t] = std::move(y);
                if (cache) dc.masks.push_back(std::move(mask));
            }
            if (cache) cache->layers.emplace_back(std::move(dc));
        } else {
            const auto& dense = std::get<DenseParams>(layer);
            for (int t = 0; t < T; ++t) {
                double y = dense.b(0, 0);
                for (int j = 0; j < dense.W.cols(); ++j)
                    y += dense.W(0, j) * xs[t](j, 0);
                predictions(t, 0) = y;
            }
            if (cache) {
                DenseCache dc;
                dc.inputs = std::move(xs);
                cache->layers.emplace_back(std::move(dc));
            }
        }
    }
    return predictions;
}

NetworkSpec build_preset(const std::string& name, int hidden_size, Rng& rng) {
    require(hidden_size >= 1, "build_preset: non-positive hidden size");
    NetworkSpec net;
    net.preset_name = name;
    net.input_size = kInputFeatures;
    const int H = hidden_size;
    if (name == "starting") {
        net.layers.emplace_back(make_lstm(kInputFeatures, H, rng));
    } else if (name == "second" || name == "final") {
        net.layers.emplace_back(make_lstm(kInputFeatures, H, rng));
        for (int i = 0; i < 4; ++i) net.layers.emplace_back(make_lstm(H, H, rng));
        net.layers.emplace_back(Dropout{0.2});
        if (name == "final") {
            net.layers.emplace_back(make_lstm(H, H, rng));
            net.layers.emplace_back(Dropout{0.15});
        }
    } else {
        throw std::invalid_argument("build_preset: unknown preset '" + name +
                                    "' (expected starting, second or final)");
    }
    net.layers.emplace_back(make_dense(H, rng));
    validate(net);
    return net;
}

std::vector<Matrix*> param_matrices(NetworkSpec& net) {
    std::vector<Matrix*> out;
    for (Layer& layer : net.layers) {
        if (auto* lstm = std::get_if<LstmLayerParams>(&layer)) {
            out.push_back(&lstm->W);
            out.push_back(&lstm->U);
            out.push_back(&lstm->b);
        } else if (auto* dense = std::get_if<DenseParams>(&layer)) {
            out.push_back(&dense->W);
            out.push_back(&dense->b);
        }
    }
    return out;
}

std::vector<const Matrix*> param_matrices(const NetworkSpec& net) {
    auto mut = param_matrices(const_cast<NetworkSpec&>(net));
    return {mut.begin(), mut.end()};
}

std::size_t param_count(const NetworkSpec& net) {
    std::size_t n = 0;
    for (const Matrix* m : param_matrices(net)) n += m->size();
    return n;
}

}  // namespace pourforce
