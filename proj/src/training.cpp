#include "pourforce/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace pourforce {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::size_t count_true(const std::vector<std::uint8_t>& mask) {
    std::size_t n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
}

// Param-list index of each layer's first matrix, in param_matrices() order.
std::vector<std::size_t> param_bases(const NetworkSpec& net) {
    std::vector<std::size_t> base(net.layers.size(), 0);
    std::size_t idx = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        base[li] = idx;
        if (std::holds_alternative<LstmLayerParams>(net.layers[li])) idx += 3;
        else if (std::holds_alternative<DenseParams>(net.layers[li])) idx += 2;
    }
    return base;
}

}  // namespace

const char* to_string(LossKind kind) {
    return kind == LossKind::mse ? "mse" : "masked_mse";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "mse") return LossKind::mse;
    if (name == "masked" || name == "masked_mse") return LossKind::masked_mse;
    throw std::invalid_argument("unknown loss kind '" + name +
                                "' (expected mse or masked)");
}

double mse(const Matrix& pred, const Matrix& target) {
    require(pred.same_shape(target), "mse: shape mismatch " + pred.shape_str() +
                                         " vs " + target.shape_str());
    require(pred.size() >= 1, "mse: empty input");
    double ssr = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred.data()[i] - target.data()[i];
        ssr += r * r;
    }
    return ssr / static_cast<double>(pred.size());
}

double masked_mse(const Matrix& pred, const Matrix& target,
                  const std::vector<std::uint8_t>& mask) {
    require(pred.same_shape(target), "masked_mse: shape mismatch " +
                                         pred.shape_str() + " vs " +
                                         target.shape_str());
    require(mask.size() == pred.size(),
            "masked_mse: mask length " + std::to_string(mask.size()) +
                " vs " + std::to_string(pred.size()) + " positions");
    double ssr = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double r = pred.data()[i] - target.data()[i];
        ssr += r * r;
        ++n;
    }
    require(n >= 1, "masked_mse: mask has no true positions");
    return ssr / static_cast<double>(n);
}

Gradients zero_gradients(const NetworkSpec& net) {
    Gradients g;
    for (const Matrix* p : param_matrices(net))
        g.mats.emplace_back(p->rows(), p->cols());
    return g;
}

void accumulate(Gradients& acc, const Gradients& g, double weight) {
    require(acc.mats.size() == g.mats.size(), "accumulate: gradient layouts differ");
    for (std::size_t i = 0; i < acc.mats.size(); ++i) {
        require(acc.mats[i].same_shape(g.mats[i]),
                "accumulate: gradient shapes differ");
        for (std::size_t k = 0; k < acc.mats[i].size(); ++k)
            acc.mats[i].data()[k] += weight * g.mats[i].data()[k];
    }
}

double global_norm(const Gradients& g) {
    double sq = 0.0;
    for (const Matrix& m : g.mats)
        for (double v : m.data()) sq += v * v;
    return std::sqrt(sq);
}

double clip_gradients(Gradients& g, double clip_norm) {
    require(clip_norm > 0.0, "clip_gradients: clip_norm must be positive");
    const double norm = global_norm(g);
    if (norm <= clip_norm) return 1.0;
    const double s = clip_norm / norm;
    for (Matrix& m : g.mats)
        for (double& v : m.data()) v *= s;
    return s;
}

Gradients backward(const NetworkSpec& net, const ForwardCache& cache,
                   const Matrix& pred, const Matrix& target,
                   const std::vector<std::uint8_t>& mask, LossKind kind) {
    const int T = cache.timesteps;
    require(cache.layers.size() == net.layers.size(),
            "backward: cache does not match the network");
    require(pred.rows() == T && pred.cols() == 1,
            "backward: pred is " + pred.shape_str() + ", cache has " +
                std::to_string(T) + " timesteps");
    require(pred.same_shape(target), "backward: target is " +
                                         target.shape_str() + ", pred is " +
                                         pred.shape_str());

    // dL/dpred, and the last timestep that carries any loss. Gradient flow
    // starts there: every position after it contributes exactly zero.
    std::vector<double> dpred(T, 0.0);
    int last = T - 1;
    if (kind == LossKind::mse) {
        const double inv_n = 1.0 / static_cast<double>(T);
        for (int t = 0; t < T; ++t)
            dpred[t] = 2.0 * (pred(t, 0) - target(t, 0)) * inv_n;
    } else {
        require(mask.size() == static_cast<std::size_t>(T),
                "backward: mask length " + std::to_string(mask.size()) +
                    " vs " + std::to_string(T) + " timesteps");
        const std::size_t n = count_true(mask);
        require(n >= 1, "backward: mask has no true positions");
        const double inv_n = 1.0 / static_cast<double>(n);
        last = -1;
        for (int t = 0; t < T; ++t) {
            if (!mask[t]) continue;
            dpred[t] = 2.0 * (pred(t, 0) - target(t, 0)) * inv_n;
            last = t;
        }
    }

    Gradients grads = zero_gradients(net);
    const std::vector<std::size_t> base = param_bases(net);

    // Upstream gradient for the current layer's outputs, timesteps 0..last.
    std::vector<Matrix> dY;

    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& layer = net.layers[li];
        const auto& lcache = cache.layers[li];

        if (const auto* dense = std::get_if<DenseParams>(&layer)) {
            const auto* dc = std::get_if<DenseCache>(&lcache);
            require(dc && dc->inputs.size() == static_cast<std::size_t>(T),
                    "backward: cache does not match the network");
            const int H = dense->W.cols();
            Matrix& dW = grads.mats[base[li]];
            Matrix& db = grads.mats[base[li] + 1];
            dY.assign(static_cast<std::size_t>(last + 1), Matrix());
            for (int t = 0; t <= last; ++t) {
                const double dy = dpred[t];
                const Matrix& x = dc->inputs[t];
                Matrix dx(H, 1);
                for (int j = 0; j < H; ++j) {
                    dW(0, j) += dy * x(j, 0);
                    dx(j, 0) = dense->W(0, j) * dy;
                }
                db(0, 0) += dy;
                dY[t] = std::move(dx);
            }
        } else if (std::holds_alternative<Dropout>(layer)) {
            const auto* dc = std::get_if<DropoutCache>(&lcache);
            require(dc && dc->masks.size() == static_cast<std::size_t>(T),
                    "backward: cache does not match the network");
            for (int t = 0; t <= last; ++t) dY[t] = hadamard(dY[t], dc->masks[t]);
        } else {
            const auto& p = std::get<LstmLayerParams>(layer);
            const auto* lc = std::get_if<LstmLayerCache>(&lcache);
            require(lc && lc->steps.size() == static_cast<std::size_t>(T) &&
                        lc->inputs.size() == static_cast<std::size_t>(T),
                    "backward: cache does not match the network");
            const int H = p.hidden_size, D = p.input_size;
            Matrix& dW = grads.mats[base[li]];
            Matrix& dU = grads.mats[base[li] + 1];
            Matrix& db = grads.mats[base[li] + 2];
            const double* Wd = p.W.data().data();
            const double* Ud = p.U.data().data();

            std::vector<Matrix> dX(static_cast<std::size_t>(last + 1));
            std::vector<double> dh(H, 0.0), dc_carry(H, 0.0), dz(4 * H);
            for (int t = last; t >= 0; --t) {
                const LstmStep& st = lc->steps[t];
                const Matrix& x = lc->inputs[t];
                const Matrix* h_prev = (t > 0) ? &lc->steps[t - 1].h : nullptr;
                const Matrix* c_prev = (t > 0) ? &lc->steps[t - 1].c : nullptr;
                for (int r = 0; r < H; ++r) {
                    const double dh_total = dh[r] + dY[t](r, 0);
                    const double i = st.i(r, 0), f = st.f(r, 0);
                    const double g = st.g(r, 0), o = st.o(r, 0);
                    const double tc = std::tanh(st.c(r, 0));
                    const double dc_total =
                        dc_carry[r] + dh_total * o * (1.0 - tc * tc);
                    const double cp = c_prev ? (*c_prev)(r, 0) : 0.0;
                    dz[r] = dc_total * g * i * (1.0 - i);
                    dz[H + r] = dc_total * cp * f * (1.0 - f);
                    dz[2 * H + r] = dc_total * i * (1.0 - g * g);
                    dz[3 * H + r] = dh_total * tc * o * (1.0 - o);
                    dc_carry[r] = dc_total * f;
                }
                // dW += dz x^T, dU += dz h_prev^T, db += dz
                for (int r = 0; r < 4 * H; ++r) {
                    const double z = dz[r];
                    if (z == 0.0) continue;
                    double* dWrow = dW.data().data() + static_cast<std::size_t>(r) * D;
                    for (int j = 0; j < D; ++j) dWrow[j] += z * x(j, 0);
                    if (h_prev) {
                        double* dUrow =
                            dU.data().data() + static_cast<std::size_t>(r) * H;
                        for (int j = 0; j < H; ++j) dUrow[j] += z * (*h_prev)(j, 0);
                    }
                    db(r, 0) += z;
                }
                // dx_t = W^T dz; carry dh_{t-1} = U^T dz
                Matrix dx(D, 1);
                for (int j = 0; j < D; ++j) {
                    double s = 0.0;
                    for (int r = 0; r < 4 * H; ++r)
                        s += Wd[static_cast<std::size_t>(r) * D + j] * dz[r];
                    dx(j, 0) = s;
                }
                for (int j = 0; j < H; ++j) {
                    double s = 0.0;
                    for (int r = 0; r < 4 * H; ++r)
                        s += Ud[static_cast<std::size_t>(r) * H + j] * dz[r];
                    dh[j] = s;
                }
                dX[t] = std::move(dx);
            }
            dY = std::move(dX);
        }
    }
    return grads;
}

double grad_check(const NetworkSpec& net_in, const Matrix& inputs,
                  const Matrix& target, const std::vector<std::uint8_t>& mask,
                  LossKind kind, double step, double fault_factor) {
    NetworkSpec net = net_in;
    for (Layer& layer : net.layers)
        if (auto* drop = std::get_if<Dropout>(&layer)) drop->rate = 0.0;

    ForwardCache cache;
    Matrix pred = forward_sequence(net, inputs, Mode::train, nullptr, &cache);
    Gradients g = backward(net, cache, pred, target, mask, kind);

    if (fault_factor != 1.0) {
        // Corrupt the largest-magnitude entry so the deviation cannot hide
        // under the relative-error floor.
        double* target_entry = nullptr;
        double best = 0.0;
        for (Matrix& m : g.mats)
            for (double& v : m.data())
                if (std::abs(v) > best) {
                    best = std::abs(v);
                    target_entry = &v;
                }
        if (target_entry) *target_entry *= fault_factor;
    }

    auto loss_at = [&]() {
        Matrix p = forward_sequence(net, inputs, Mode::infer);
        return kind == LossKind::mse ? mse(p, target)
                                     : masked_mse(p, target, mask);
    };

    double max_rel = 0.0;
    std::vector<Matrix*> params = param_matrices(net);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Matrix& m = *params[pi];
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double orig = m.data()[k];
            m.data()[k] = orig + step;
            const double lp = loss_at();
            m.data()[k] = orig - step;
            const double lm = loss_at();
            m.data()[k] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = g.mats[pi].data()[k];
            const double rel = std::abs(an - fd) /
                               std::max({std::abs(an), std::abs(fd), 1e-8});
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

AdamState AdamState::init(const NetworkSpec& net, double lr) {
    AdamState s;
    s.lr = lr;
    for (const Matrix* p : param_matrices(net)) {
        s.m.emplace_back(p->rows(), p->cols());
        s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
}

void adam_step(NetworkSpec& net, const Gradients& g, AdamState& s) {
    std::vector<Matrix*> params = param_matrices(net);
    require(params.size() == g.mats.size() && params.size() == s.m.size(),
            "adam_step: parameter/gradient/state layouts differ");
    s.step_count += 1;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        require(params[pi]->same_shape(g.mats[pi]),
                "adam_step: gradient shape mismatch");
        double* theta = params[pi]->data().data();
        double* m = s.m[pi].data().data();
        double* v = s.v[pi].data().data();
        const double* gd = g.mats[pi].data().data();
        const std::size_t n = params[pi]->size();
        for (std::size_t k = 0; k < n; ++k) {
            m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * gd[k];
            v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * gd[k] * gd[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            theta[k] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
    }
}

DivergenceError::DivergenceError(int epoch_, int batch_, TrainHistory partial_)
    : std::runtime_error("divergence: non-finite loss at epoch " +
                         std::to_string(epoch_) + ", batch " +
                         std::to_string(batch_)),
      epoch(epoch_), batch(batch_), partial(std::move(partial_)) {}

double batch_loss(const NetworkSpec& net, const PaddedBatch& batch,
                  LossKind kind) {
    require(batch.size() >= 1, "batch_loss: empty batch");
    double ssr = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Matrix pred = forward_sequence(net, batch.inputs[i], Mode::infer);
        const Matrix& target = batch.targets[i];
        for (int t = 0; t < pred.rows(); ++t) {
            if (kind == LossKind::masked_mse && !batch.mask[i][t]) continue;
            const double r = pred(t, 0) - target(t, 0);
            ssr += r * r;
            n += 1.0;
        }
    }
    require(n >= 1.0, "batch_loss: no counted positions");
    return ssr / n;
}

TrainHistory train(NetworkSpec& net, const PaddedBatch& train_set,
                   const PaddedBatch& val_set, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
    validate(net);
    require(cfg.epochs >= 1, "train: epochs must be >= 1");
    require(cfg.batch_size >= 1, "train: batch_size must be >= 1");
    require(train_set.size() >= 1 && val_set.size() >= 1,
            "train: empty train or validation set");
    require(train_set.inputs[0].cols() == net.input_size,
            "train: feature dimension " +
                std::to_string(train_set.inputs[0].cols()) +
                " does not match network input " +
                std::to_string(net.input_size));
    if (cfg.loss == LossKind::masked_mse) {
        for (std::size_t i = 0; i < train_set.size(); ++i)
            require(count_true(train_set.mask[i]) >= 1,
                    "train: sequence " + std::to_string(i) +
                        " has an all-false mask");
    }

    TrainHistory hist;
    hist.config = cfg;
    Rng rng(cfg.seed);
    AdamState adam = AdamState::init(net, cfg.lr);
    const std::size_t n_seq = train_set.size();
    std::vector<std::size_t> order(n_seq);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.shuffle) rng.shuffle(order);

        int batch_index = 0;
        for (std::size_t start = 0; start < n_seq;
             start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            const std::size_t end =
                std::min(n_seq, start + static_cast<std::size_t>(cfg.batch_size));

            double n_tot = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t i = order[bi];
                n_tot += (cfg.loss == LossKind::masked_mse)
                             ? static_cast<double>(count_true(train_set.mask[i]))
                             : static_cast<double>(train_set.targets[i].rows());
            }

            Gradients acc = zero_gradients(net);
            double ssr = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t i = order[bi];
                ForwardCache cache;
                Matrix pred = forward_sequence(net, train_set.inputs[i],
                                               Mode::train, &rng, &cache);
                double seq_count = 0.0;
                for (int t = 0; t < pred.rows(); ++t) {
                    if (cfg.loss == LossKind::masked_mse && !train_set.mask[i][t])
                        continue;
                    const double r = pred(t, 0) - train_set.targets[i](t, 0);
                    ssr += r * r;
                    seq_count += 1.0;
                }
                Gradients g = backward(net, cache, pred, train_set.targets[i],
                                       train_set.mask[i], cfg.loss);
                // The batch loss divides by the total counted positions, so a
                // per-sequence gradient (normalized by its own count) enters
                // with weight count_i / n_tot.
                accumulate(acc, g, seq_count / n_tot);
            }

            const double loss = ssr / n_tot;
            if (!std::isfinite(loss))
                throw DivergenceError(epoch, batch_index, hist);

            if (cfg.clip_norm) clip_gradients(acc, *cfg.clip_norm);
            adam_step(net, acc, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batch_loss(net, train_set, cfg.loss);
        rec.val_loss = batch_loss(net, val_set, cfg.loss);
        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
            throw DivergenceError(epoch, -1, hist);
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        hist.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    hist.param_checksum = param_checksum(net);
    return hist;
}

std::string param_checksum(const NetworkSpec& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Matrix* m : param_matrices(net)) {
        for (double v : m->data()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace pourforce
