#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pourforce/data.hpp"
#include "pourforce/model.hpp"

namespace pourforce {

enum class LossKind { mse, masked_mse };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// Mean squared error over all positions: sum((y - y_pred)^2) / n.
double mse(const Matrix& pred, const Matrix& target);

// MSE restricted to mask-true positions, normalized by their count.
// An all-false mask is rejected (the loss is undefined).
double masked_mse(const Matrix& pred, const Matrix& target,
                  const std::vector<std::uint8_t>& mask);

// One matrix per parameter matrix, in param_matrices() order.
struct Gradients {
    std::vector<Matrix> mats;
};

Gradients zero_gradients(const NetworkSpec& net);
void accumulate(Gradients& acc, const Gradients& g, double weight);
double global_norm(const Gradients& g);

// Global-norm clipping: if the L2 norm over all gradients exceeds
// clip_norm, every entry is scaled by clip_norm / norm; otherwise the
// gradients are untouched (bit-for-bit). Returns the scale applied.
double clip_gradients(Gradients& g, double clip_norm);

// Exact analytic gradients of the selected loss w.r.t. every parameter,
// by backpropagation through time over the cached forward pass. Dropout
// masks are reused from the cache. For masked_mse, gradient flow starts at
// the last mask-true timestep; padded suffixes contribute exactly zero.
Gradients backward(const NetworkSpec& net, const ForwardCache& cache,
                   const Matrix& pred, const Matrix& target,
                   const std::vector<std::uint8_t>& mask, LossKind kind);

// Central finite-difference check of backward(). Dropout rates are forced
// to 0 for the check. Returns max over parameters of
// |g - g_fd| / max(|g|, |g_fd|, 1e-8). fault_factor != 1 multiplies the
// largest analytic gradient entry, for checker-sensitivity tests.
// The check is roundoff-limited: a loss of order 1 leaves eps*L/step of
// finite-difference noise against the 1e-8 floor, so probe targets should
// stay small (|target| <= ~0.1) for the check to resolve 1e-4.
double grad_check(const NetworkSpec& net, const Matrix& inputs,
                  const Matrix& target, const std::vector<std::uint8_t>& mask,
                  LossKind kind, double step = 1e-5, double fault_factor = 1.0);

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;          // t, incremented by each adam_step
    std::vector<Matrix> m, v;     // first/second moments, param order

    static AdamState init(const NetworkSpec& net, double lr = 1e-4);
};

// t <- t+1; m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;
// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), bias-corrected.
void adam_step(NetworkSpec& net, const Gradients& g, AdamState& s);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    std::optional<double> clip_norm = 5.0;   // nullopt disables clipping
    LossKind loss = LossKind::masked_mse;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::int64_t wall_ms = 0;
};

struct TrainHistory {
    TrainConfig config;
    std::vector<EpochRecord> epochs;
    std::string param_checksum;   // fnv1a-64 over the final parameters
};

// Thrown when a batch loss stops being finite. Carries the history of the
// epochs completed before the abort.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch_, int batch_, TrainHistory partial_);
    int epoch;
    int batch;
    TrainHistory partial;
};

// Batch-level loss with dropout disabled. The masked variant reduces over
// the whole batch: total squared residual at mask-true positions divided
// by their total count.
double batch_loss(const NetworkSpec& net, const PaddedBatch& batch,
                  LossKind kind);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Per epoch: optional seeded shuffle, mini-batches of batch_size sequences,
// forward (train mode) -> backward -> clip -> adam step; then full-pass
// train and validation losses with dropout disabled.
TrainHistory train(NetworkSpec& net, const PaddedBatch& train_set,
                   const PaddedBatch& val_set, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

std::string param_checksum(const NetworkSpec& net);

}  // namespace pourforce
