#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pourforce/matrix.hpp"
#include "pourforce/rng.hpp"

namespace pourforce {

// Gate rows in W, U and b are stacked [input i, forget f, candidate g,
// output o]. This order is part of the serialized model format and never
// varies.
struct LstmLayerParams {
    int hidden_size = 0;   // H
    int input_size = 0;    // D
    Matrix W;              // 4H x D, input weights
    Matrix U;              // 4H x H, recurrent weights
    Matrix b;              // 4H x 1
};

struct DenseParams {
    Matrix W;   // 1 x H
    Matrix b;   // 1 x 1
};

struct Dropout {
    double rate = 0.0;   // in [0, 1)
};

using Layer = std::variant<LstmLayerParams, Dropout, DenseParams>;

// Ordered layer stack. Every LSTM layer emits its hidden state at every
// timestep; the single trailing dense layer maps H -> 1 per timestep.
struct NetworkSpec {
    std::string preset_name;              // empty for hand-built networks
    int input_size = kInputFeatures;
    std::vector<Layer> layers;
};

// Checks layer chaining (first LSTM consumes input_size, later ones the
// previous hidden size), dropout rates in [0, 1), and that exactly one
// dense layer exists and sits last. Throws std::invalid_argument.
void validate(const NetworkSpec& net);

enum class Mode { train, infer };

// One cell step's outputs plus everything backward() needs at this step.
struct LstmStep {
    Matrix h, c;           // H x 1
    Matrix i, f, g, o;     // gate activations, H x 1
};

//   i, f, o = sigmoid of their pre-activation rows, g = tanh of its row,
//   c_t = f (.) c_prev + i (.) g,   h_t = o (.) tanh(c_t)
LstmStep lstm_cell_step(const LstmLayerParams& p, const Matrix& x_t,
                        const Matrix& h_prev, const Matrix& c_prev);

// Inverted dropout. Train mode: each entry kept with probability 1 - rate
// and scaled by 1 / (1 - rate); the returned mask holds those factors for
// backward(). Infer mode (or rate 0): identity, all-ones mask, rng untouched.
std::pair<Matrix, Matrix> dropout_apply(double rate, Rng& rng, const Matrix& x,
                                        Mode mode);

struct LstmLayerCache {
    std::vector<Matrix> inputs;     // layer input per timestep, D x 1
    std::vector<LstmStep> steps;
};
struct DropoutCache {
    std::vector<Matrix> masks;      // keep/scale factors per timestep
};
struct DenseCache {
    std::vector<Matrix> inputs;     // H x 1 per timestep
};

struct ForwardCache {
    int timesteps = 0;
    std::vector<std::variant<LstmLayerCache, DropoutCache, DenseCache>> layers;
};

// inputs: T x input_size, one row per timestep; T is arbitrary, the same
// network accepts any sequence length. Initial LSTM states are zero.
// Returns T x 1 predictions. rng is consumed only by train-mode dropout;
// cache, when given, records what backward() needs.
Matrix forward_sequence(const NetworkSpec& net, const Matrix& inputs, Mode mode,
                        Rng* rng = nullptr, ForwardCache* cache = nullptr);

// The three architectures:
//   starting: [LSTM, Dense]
//   second:   [LSTM x5, Dropout(0.2), Dense]
//   final:    [LSTM x5, Dropout(0.2), LSTM, Dropout(0.15), Dense]
// All LSTM layers use the given hidden size. Weights are Glorot-uniform,
// biases zero except the forget-gate block, which starts at 1.
NetworkSpec build_preset(const std::string& name, int hidden_size, Rng& rng);

// Trainable matrices in fixed traversal order: per LSTM layer W, U, b;
// for the dense layer W, b. Gradient and optimizer state use this order.
std::vector<Matrix*> param_matrices(NetworkSpec& net);
std::vector<const Matrix*> param_matrices(const NetworkSpec& net);
std::size_t param_count(const NetworkSpec& net);

}  // namespace pourforce
