#include "pourforce/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pourforce {

namespace {

using nlohmann::json;

[[noreturn]] void fail_line(int lineno, const std::string& what) {
    throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                             what);
}

double get_scalar(const json& j, const char* key, int lineno) {
    if (!j.contains(key)) fail_line(lineno, std::string("missing key '") + key + "'");
    const json& v = j.at(key);
    if (!v.is_number()) fail_line(lineno, std::string("'") + key + "' is not a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail_line(lineno, std::string("'") + key + "' is not finite");
    return d;
}

std::vector<double> get_array(const json& j, const char* key, int lineno) {
    if (!j.contains(key)) fail_line(lineno, std::string("missing key '") + key + "'");
    const json& v = j.at(key);
    if (!v.is_array()) fail_line(lineno, std::string("'") + key + "' is not an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& e : v) {
        if (!e.is_number())
            fail_line(lineno, std::string("'") + key + "' has a non-numeric entry");
        const double d = e.get<double>();
        if (!std::isfinite(d))
            fail_line(lineno, std::string("'") + key + "' has a non-finite entry");
        out.push_back(d);
    }
    return out;
}

void fill_input_row(Matrix& m, int row, const MotionSequence& seq, int t) {
    m(row, 0) = seq.theta[t];
    m(row, 1) = seq.f_init;
    m(row, 2) = seq.f_empty;
    m(row, 3) = seq.f_final;
    m(row, 4) = seq.d_cup;
    m(row, 5) = seq.h_cup;
    m(row, 6) = seq.d_ctn;
    m(row, 7) = seq.h_ctn;
    m(row, 8) = seq.rho;
}

}  // namespace

int Dataset::max_length() const {
    int m = 0;
    for (const MotionSequence& s : sequences) m = std::max(m, s.length());
    return m;
}

Dataset parse_corpus(std::istream& in) {
    Dataset ds;
    ds.provenance = Provenance::real;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {   // parse errors, number overflow
            fail_line(lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) fail_line(lineno, "not a JSON object");

        MotionSequence seq;
        seq.theta = get_array(j, "theta", lineno);
        seq.force = get_array(j, "force", lineno);
        seq.f_init = get_scalar(j, "f_init", lineno);
        seq.f_empty = get_scalar(j, "f_empty", lineno);
        seq.f_final = get_scalar(j, "f_final", lineno);
        seq.d_cup = get_scalar(j, "d_cup", lineno);
        seq.h_cup = get_scalar(j, "h_cup", lineno);
        seq.d_ctn = get_scalar(j, "d_ctn", lineno);
        seq.h_ctn = get_scalar(j, "h_ctn", lineno);
        seq.rho = get_scalar(j, "rho", lineno);

        if (seq.theta.size() != seq.force.size())
            fail_line(lineno, "len(theta)=" + std::to_string(seq.theta.size()) +
                                  " != len(force)=" +
                                  std::to_string(seq.force.size()));
        if (seq.theta.empty()) fail_line(lineno, "empty sequence");
        if (seq.d_cup <= 0 || seq.h_cup <= 0 || seq.d_ctn <= 0 || seq.h_ctn <= 0)
            fail_line(lineno, "cup geometry must be positive");

        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

Dataset parse_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    return parse_corpus(in);
}

void write_corpus(const Dataset& ds, std::ostream& out) {
    for (const MotionSequence& s : ds.sequences) {
        json j;
        j["theta"] = s.theta;
        j["force"] = s.force;
        j["f_init"] = s.f_init;
        j["f_empty"] = s.f_empty;
        j["f_final"] = s.f_final;
        j["d_cup"] = s.d_cup;
        j["h_cup"] = s.h_cup;
        j["d_ctn"] = s.d_ctn;
        j["h_ctn"] = s.h_ctn;
        j["rho"] = s.rho;
        out << j.dump() << '\n';
    }
}

void write_corpus_file(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    write_corpus(ds, out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing corpus file: " + path);
}

Matrix sequence_inputs(const MotionSequence& seq) {
    const int T = seq.length();
    Matrix m(T, kInputFeatures);
    for (int t = 0; t < T; ++t) fill_input_row(m, t, seq, t);
    return m;
}

Matrix sequence_targets(const MotionSequence& seq) {
    const int T = seq.length();
    Matrix m(T, 1);
    for (int t = 0; t < T; ++t) m(t, 0) = seq.force[t];
    return m;
}

PaddedBatch pad_and_mask(const Dataset& ds, std::optional<int> t_max_opt) {
    if (ds.sequences.empty())
        throw std::invalid_argument("pad_and_mask: empty dataset");
    const int max_len = ds.max_length();
    const int t_max = t_max_opt.value_or(max_len);
    if (t_max < max_len)
        throw std::invalid_argument(
            "pad_and_mask: t_max " + std::to_string(t_max) +
            " is below the longest sequence (" + std::to_string(max_len) + ")");

    PaddedBatch batch;
    batch.t_max = t_max;
    batch.inputs.reserve(ds.size());
    batch.targets.reserve(ds.size());
    batch.mask.reserve(ds.size());
    batch.lengths.reserve(ds.size());
    for (const MotionSequence& seq : ds.sequences) {
        const int T = seq.length();
        Matrix in(t_max, kInputFeatures);
        Matrix tgt(t_max, 1);
        std::vector<std::uint8_t> mk(static_cast<std::size_t>(t_max), 0);
        for (int t = 0; t < T; ++t) {
            fill_input_row(in, t, seq, t);
            tgt(t, 0) = seq.force[t];
            mk[t] = 1;
        }
        batch.inputs.push_back(std::move(in));
        batch.targets.push_back(std::move(tgt));
        batch.mask.push_back(std::move(mk));
        batch.lengths.push_back(T);
    }
    return batch;
}

SplitResult split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed,
                  bool shuffle) {
    const std::size_t n = ds.size();
    if (n < 3) throw std::invalid_argument("split: need at least 3 sequences");
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
        throw std::invalid_argument("split: ratios must be positive");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split: ratios must sum to 1");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(idx);
    }

    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n)));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n)));

    SplitResult out;
    out.train.provenance = out.val.provenance = out.test.provenance = ds.provenance;
    for (std::size_t k = 0; k < n; ++k) {
        const MotionSequence& s = ds.sequences[idx[k]];
        if (k < n_train) out.train.sequences.push_back(s);
        else if (k < n_train + n_val) out.val.sequences.push_back(s);
        else out.test.sequences.push_back(s);
    }
    return out;
}

NormStats normalize_fit(const Dataset& ds) {
    if (ds.sequences.empty())
        throw std::invalid_argument("normalize_fit: empty dataset");
    NormStats stats;
    bool theta_first = true, const_first = true;
    for (const MotionSequence& seq : ds.sequences) {
        for (double th : seq.theta) {
            FeatureRange& r = stats.features[0];
            if (theta_first || th < r.min) r.min = th;
            if (theta_first || th > r.max) r.max = th;
            theta_first = false;
        }
        const double constants[8] = {seq.f_init, seq.f_empty, seq.f_final,
                                     seq.d_cup,  seq.h_cup,   seq.d_ctn,
                                     seq.h_ctn,  seq.rho};
        for (int j = 0; j < 8; ++j) {
            FeatureRange& r = stats.features[j + 1];
            if (const_first || constants[j] < r.min) r.min = constants[j];
            if (const_first || constants[j] > r.max) r.max = constants[j];
        }
        const_first = false;
    }
    for (FeatureRange& r : stats.features) r.degenerate = !(r.max > r.min);
    return stats;
}

namespace {

void normalize_row(Matrix& m, int row, const NormStats& stats) {
    for (int j = 0; j < kInputFeatures; ++j) {
        const FeatureRange& r = stats.features[j];
        m(row, j) = r.degenerate ? 0.0 : (m(row, j) - r.min) / (r.max - r.min);
    }
}

}  // namespace

void normalize_apply(PaddedBatch& batch, const NormStats& stats) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (int t = 0; t < batch.lengths[i]; ++t)
            normalize_row(batch.inputs[i], t, stats);
}

void normalize_apply(Matrix& inputs, const NormStats& stats) {
    if (inputs.cols() != kInputFeatures)
        throw std::invalid_argument("normalize_apply: inputs have " +
                                    std::to_string(inputs.cols()) +
                                    " features");
    for (int t = 0; t < inputs.rows(); ++t) normalize_row(inputs, t, stats);
}

Dataset synth_generate(int n, std::uint64_t seed, const SynthRanges& r) {
    if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
    if (r.t_min < 1 || r.t_max < r.t_min)
        throw std::invalid_argument("synth_generate: bad t_range");

    constexpr double theta_end = 120.0;   // degrees
    constexpr double rad_to_deg = 57.295779513082320877;

    Dataset ds;
    ds.provenance = Provenance::synthetic;
    Rng rng(seed);
    for (int s = 0; s < n; ++s) {
        MotionSequence seq;
        const int T = rng.uniform_int(r.t_min, r.t_max);
        seq.d_cup = rng.uniform(r.d_cup_min, r.d_cup_max);
        seq.h_cup = rng.uniform(r.h_cup_min, r.h_cup_max);
        seq.d_ctn = rng.uniform(r.d_ctn_min, r.d_ctn_max);
        seq.h_ctn = rng.uniform(r.h_ctn_min, r.h_ctn_max);
        seq.rho = rng.uniform(r.rho_min, r.rho_max);
        seq.f_init = rng.uniform(r.f_init_min, r.f_init_max);
        seq.f_empty = rng.uniform(r.f_empty_min, r.f_empty_max);
        if (seq.f_empty >= seq.f_init) seq.f_empty = 0.5 * seq.f_init;
        seq.f_final =
            seq.f_empty + rng.uniform(0.3, 0.7) * (seq.f_init - seq.f_empty);

        // theta ramps 0 -> 120 with jittered, strictly positive increments.
        seq.theta.assign(static_cast<std::size_t>(T), 0.0);
        if (T > 1) {
            double cum = 0.0;
            std::vector<double> prefix(static_cast<std::size_t>(T), 0.0);
            for (int t = 1; t < T; ++t) {
                cum += 1.0 + 0.8 * (rng.next_double() - 0.5);
                prefix[t] = cum;
            }
            for (int t = 1; t < T; ++t)
                seq.theta[t] = theta_end * prefix[t] / cum;
        }

        // Pour onset from container aspect ratio; steepness grows with rho
        // and is scaled so both logistic tails are within ~0.2% at the ends.
        const double theta_pour = std::atan(seq.h_ctn / seq.d_ctn) * rad_to_deg;
        const double k = (5.0 + 2.5 * seq.rho) /
                         std::min(theta_pour, theta_end - theta_pour);

        seq.force.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            double f = seq.f_final + (seq.f_init - seq.f_final) *
                                         sigmoid(-k * (seq.theta[t] - theta_pour));
            if (r.noise_std > 0.0) f += rng.gaussian(0.0, r.noise_std);
            seq.force[t] = f;
        }
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

void write_prediction_csv(std::ostream& out, const std::vector<double>& actual,
                          const std::vector<double>& predicted) {
    if (actual.size() != predicted.size())
        throw std::invalid_argument("prediction csv: column lengths differ");
    out << "t,actual,predicted\n";
    for (std::size_t t = 0; t < actual.size(); ++t)
        out << t << ',' << format_double(actual[t]) << ','
            << format_double(predicted[t]) << '\n';
}

PredictionRows read_prediction_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("prediction csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,actual,predicted")
        throw std::runtime_error("prediction csv: bad header '" + line + "'");

    auto parse_field = [](const std::string& text, std::size_t from,
                          std::size_t to, int row) {
        double v = 0.0;
        auto res = std::from_chars(text.data() + from, text.data() + to, v);
        if (res.ec != std::errc{} || res.ptr != text.data() + to)
            throw std::runtime_error("prediction csv: bad number in row " +
                                     std::to_string(row));
        return v;
    };

    PredictionRows rows;
    int rowno = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = (c1 == std::string::npos)
                                   ? std::string::npos
                                   : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::runtime_error("prediction csv: bad row " +
                                     std::to_string(rowno));
        rows.actual.push_back(parse_field(line, c1 + 1, c2, rowno));
        rows.predicted.push_back(parse_field(line, c2 + 1, line.size(), rowno));
        ++rowno;
    }
    return rows;
}

}  // namespace pourforce
