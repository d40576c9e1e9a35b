#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pourforce/matrix.hpp"
#include "pourforce/rng.hpp"

namespace pourforce {

// One pouring trial. theta and force vary per timestep; the other eight
// features are constant for the trial. force is the regression target.
struct MotionSequence {
    std::vector<double> theta;   // rotation angle, degrees
    std::vector<double> force;   // measured weight, lbf
    double f_init = 0.0;         // weight before pouring, lbf
    double f_empty = 0.0;        // weight while the cup is empty, lbf
    double f_final = 0.0;        // weight after pouring, lbf
    double d_cup = 0.0;          // receiving cup diameter, mm
    double h_cup = 0.0;          // receiving cup height, mm
    double d_ctn = 0.0;          // pouring cup diameter, mm
    double h_ctn = 0.0;          // pouring cup height, mm
    double rho = 0.0;            // relative material density

    int length() const { return static_cast<int>(theta.size()); }
};

enum class Provenance { real, synthetic };

struct Dataset {
    std::vector<MotionSequence> sequences;
    Provenance provenance = Provenance::real;

    std::size_t size() const { return sequences.size(); }
    int max_length() const;
};

// Input feature order. Fixed: it is part of the serialized-model contract.
inline constexpr std::array<const char*, kInputFeatures> kFeatureNames = {
    "theta", "f_init", "f_empty", "f_final", "d_cup",
    "h_cup", "d_ctn",  "h_ctn",   "rho"};

// Rectangular, zero-padded view of a corpus. mask[i][t] is 1 iff
// t < lengths[i]; padded positions of inputs and targets are exactly 0.
struct PaddedBatch {
    std::vector<Matrix> inputs;                    // each t_max x 9
    std::vector<Matrix> targets;                   // each t_max x 1
    std::vector<std::vector<std::uint8_t>> mask;   // N x t_max
    std::vector<int> lengths;
    int t_max = 0;

    std::size_t size() const { return inputs.size(); }
};

// Corpus format: JSON Lines, one object per sequence with keys theta,
// force, f_init, f_empty, f_final, d_cup, h_cup, d_ctn, h_ctn, rho.
// Rejects missing keys, length mismatches and non-finite values, naming
// the offending line.
Dataset parse_corpus(std::istream& in);
Dataset parse_corpus_file(const std::string& path);
void write_corpus(const Dataset& ds, std::ostream& out);
void write_corpus_file(const Dataset& ds, const std::string& path);

// Unpadded per-timestep features / targets for one sequence (T x 9, T x 1).
// Constant features are tiled across timesteps.
Matrix sequence_inputs(const MotionSequence& seq);
Matrix sequence_targets(const MotionSequence& seq);

// t_max defaults to the longest sequence; an explicit value below that is
// rejected.
PaddedBatch pad_and_mask(const Dataset& ds,
                         std::optional<int> t_max = std::nullopt);

struct SplitRatios {
    double train = 0.80;
    double val = 0.15;
    double test = 0.05;
};
struct SplitResult {
    Dataset train, val, test;
};

// Seeded shuffle, then floor(train*N) / floor(val*N) / remainder.
// 1307 sequences split to 1045 / 196 / 66.
SplitResult split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed,
                  bool shuffle = true);

struct FeatureRange {
    double min = 0.0;
    double max = 0.0;
    bool degenerate = false;   // max == min over the fitted data
};
struct NormStats {
    std::array<FeatureRange, kInputFeatures> features{};
};

// Min-max stats over the 9 input features. Fit on the training split only;
// targets are never normalized.
NormStats normalize_fit(const Dataset& ds);

// Scales unmasked input positions to (v - min) / (max - min); degenerate
// features map to 0. Padded positions stay 0. No clamping: values outside
// the fitted range may leave [0, 1].
void normalize_apply(PaddedBatch& batch, const NormStats& stats);
void normalize_apply(Matrix& inputs, const NormStats& stats);   // unpadded T x 9

struct SynthRanges {
    int t_min = 60, t_max = 120;
    double d_cup_min = 60.0, d_cup_max = 90.0;     // mm
    double h_cup_min = 80.0, h_cup_max = 120.0;
    double d_ctn_min = 60.0, d_ctn_max = 100.0;
    double h_ctn_min = 90.0, h_ctn_max = 160.0;
    double rho_min = 0.5, rho_max = 2.0;
    double f_init_min = 0.8, f_init_max = 1.6;     // lbf
    double f_empty_min = 0.05, f_empty_max = 0.15;
    double noise_std = 0.0;                        // gaussian noise on force
};

// Synthetic pouring trials. theta ramps 0 -> 120 degrees with seeded jitter;
// the force follows a logistic hand-off
//   f(t) = f_final + (f_init - f_final) * sigmoid(-k * (theta(t) - theta_pour))
// with theta_pour = atan(h_ctn / d_ctn) in degrees and steepness k growing
// with rho. f_empty < f_final < f_init is enforced. Noise-free forces are
// non-increasing in t.
Dataset synth_generate(int n, std::uint64_t seed, const SynthRanges& ranges = {});

// Prediction export: CSV with header "t,actual,predicted", numbers printed
// with round-trip precision.
void write_prediction_csv(std::ostream& out, const std::vector<double>& actual,
                          const std::vector<double>& predicted);
struct PredictionRows {
    std::vector<double> actual, predicted;
};
PredictionRows read_prediction_csv(std::istream& in);

}  // namespace pourforce
