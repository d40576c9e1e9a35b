#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "pourforce/data.hpp"
#include "pourforce/model.hpp"
#include "pourforce/serialize.hpp"
#include "pourforce/training.hpp"

namespace py = pybind11;
using namespace pourforce;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// A network plus the normalization stats it was trained with, so python
// callers cannot mismatch the scaling.
struct PyModel {
    NetworkSpec net;
    std::optional<NormStats> stats;
};

Matrix matrix_from_2d(const DoubleArray& arr, const char* what) {
    if (arr.ndim() != 2)
        throw std::invalid_argument(std::string(what) + ": expected a 2-D array");
    Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::memcpy(m.data().data(), arr.data(), m.size() * sizeof(double));
    return m;
}

Matrix column_from_1d(const DoubleArray& arr, const char* what) {
    if (arr.ndim() != 1)
        throw std::invalid_argument(std::string(what) + ": expected a 1-D array");
    Matrix m(static_cast<int>(arr.shape(0)), 1);
    std::memcpy(m.data().data(), arr.data(), m.size() * sizeof(double));
    return m;
}

py::array_t<double> column_to_1d(const Matrix& m) {
    py::array_t<double> out(m.rows());
    std::memcpy(out.mutable_data(), m.data().data(), m.size() * sizeof(double));
    return out;
}

py::dict history_to_dict(const TrainHistory& hist) {
    py::list epochs;
    for (const EpochRecord& r : hist.epochs) {
        py::dict e;
        e["epoch"] = r.epoch;
        e["train_loss"] = r.train_loss;
        e["val_loss"] = r.val_loss;
        e["wall_ms"] = r.wall_ms;
        epochs.append(std::move(e));
    }
    py::dict out;
    out["epochs"] = std::move(epochs);
    out["param_checksum"] = hist.param_checksum;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Stacked-LSTM sequence regression for pouring-force estimation";

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", [](const Dataset& ds) { return ds.size(); })
        .def_property_readonly("lengths",
                               [](const Dataset& ds) {
                                   std::vector<int> out;
                                   for (const auto& s : ds.sequences)
                                       out.push_back(s.length());
                                   return out;
                               })
        .def("sequence",
             [](const Dataset& ds, int i) {
                 if (i < 0 || i >= static_cast<int>(ds.size()))
                     throw std::out_of_range("sequence index out of range");
                 const MotionSequence& s = ds.sequences[i];
                 py::dict d;
                 d["theta"] = s.theta;
                 d["force"] = s.force;
                 d["f_init"] = s.f_init;
                 d["f_empty"] = s.f_empty;
                 d["f_final"] = s.f_final;
                 d["d_cup"] = s.d_cup;
                 d["h_cup"] = s.h_cup;
                 d["d_ctn"] = s.d_ctn;
                 d["h_ctn"] = s.h_ctn;
                 d["rho"] = s.rho;
                 return d;
             },
             py::arg("i"))
        .def("save", &write_corpus_file,
             py::arg("path"), "write the corpus as JSON Lines");

    m.def("load_corpus", &parse_corpus_file, py::arg("path"));
    m.def(
        "synth_corpus",
        [](int n, std::uint64_t seed, int t_min, int t_max, double noise_std) {
            SynthRanges r;
            r.t_min = t_min;
            r.t_max = t_max;
            r.noise_std = noise_std;
            return synth_generate(n, seed, r);
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("t_min") = 60,
        py::arg("t_max") = 120, py::arg("noise_std") = 0.0);

    py::class_<PyModel>(m, "Model")
        .def_static(
            "preset",
            [](const std::string& name, int hidden_size, std::uint64_t seed) {
                Rng rng(seed);
                return PyModel{build_preset(name, hidden_size, rng), {}};
            },
            py::arg("name"), py::arg("hidden_size") = 16, py::arg("seed") = 0)
        .def_static("load",
                    [](const std::string& path) {
                        SavedModel sm = load_model_file(path);
                        return PyModel{std::move(sm.net), std::move(sm.norm_stats)};
                    },
                    py::arg("path"))
        .def("save",
             [](const PyModel& self, const std::string& path) {
                 save_model_file(path, self.net, self.stats);
             },
             py::arg("path"))
        .def_property_readonly(
            "preset_name", [](const PyModel& self) { return self.net.preset_name; })
        .def_property_readonly(
            "layer_count",
            [](const PyModel& self) { return self.net.layers.size(); })
        .def_property_readonly(
            "normalized",
            [](const PyModel& self) { return self.stats.has_value(); })
        .def(
            "predict",
            [](const PyModel& self, const DoubleArray& inputs) {
                Matrix x = matrix_from_2d(inputs, "predict");
                if (self.stats) normalize_apply(x, *self.stats);
                return column_to_1d(forward_sequence(self.net, x, Mode::infer));
            },
            py::arg("inputs"),
            "per-timestep predictions for a (T, 9) feature array")
        .def(
            "predict_sequence",
            [](const PyModel& self, const Dataset& ds, int i) {
                if (i < 0 || i >= static_cast<int>(ds.size()))
                    throw std::out_of_range("sequence index out of range");
                Matrix x = sequence_inputs(ds.sequences[i]);
                if (self.stats) normalize_apply(x, *self.stats);
                return column_to_1d(forward_sequence(self.net, x, Mode::infer));
            },
            py::arg("dataset"), py::arg("i"));

    m.def(
        "train",
        [](PyModel& model, const Dataset& corpus, int epochs, int batch_size,
           double lr, py::object clip_norm, const std::string& loss,
           std::uint64_t seed, bool shuffle, bool normalize) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.lr = lr;
            cfg.clip_norm = clip_norm.is_none()
                                ? std::nullopt
                                : std::optional<double>(clip_norm.cast<double>());
            cfg.loss = loss_kind_from_string(loss);
            cfg.seed = seed;
            cfg.shuffle = shuffle;

            TrainHistory hist;
            {
                py::gil_scoped_release release;
                SplitResult splits = split(corpus, SplitRatios{}, seed);
                const int t_max = corpus.max_length();
                PaddedBatch train_b = pad_and_mask(splits.train, t_max);
                PaddedBatch val_b = pad_and_mask(splits.val, t_max);
                if (normalize) {
                    model.stats = normalize_fit(splits.train);
                    normalize_apply(train_b, *model.stats);
                    normalize_apply(val_b, *model.stats);
                }
                hist = train(model.net, train_b, val_b, cfg);
            }
            return history_to_dict(hist);
        },
        py::arg("model"), py::arg("corpus"), py::arg("epochs") = 10,
        py::arg("batch_size") = 32, py::arg("lr") = 1e-4,
        py::arg("clip_norm") = 5.0, py::arg("loss") = "masked",
        py::arg("seed") = 0, py::arg("shuffle") = true,
        py::arg("normalize") = false,
        "split the corpus 80/15/5, pad, and train in place; returns the history");

    m.def(
        "mse",
        [](const DoubleArray& pred, const DoubleArray& target) {
            return mse(column_from_1d(pred, "mse"), column_from_1d(target, "mse"));
        },
        py::arg("pred"), py::arg("target"));
    m.def(
        "masked_mse",
        [](const DoubleArray& pred, const DoubleArray& target,
           const std::vector<std::uint8_t>& mask) {
            return masked_mse(column_from_1d(pred, "masked_mse"),
                              column_from_1d(target, "masked_mse"), mask);
        },
        py::arg("pred"), py::arg("target"), py::arg("mask"));

    m.def(
        "grad_check",
        [](const std::string& preset, std::uint64_t seed, double step) {
            Rng rng(seed);
            NetworkSpec net = build_preset(preset, 3, rng);
            Matrix inputs(12, kInputFeatures), target(12, 1);
            for (double& v : inputs.data()) v = rng.uniform(-1.0, 1.0);
            for (double& v : target.data()) v = rng.uniform(-0.1, 0.1);
            std::vector<std::uint8_t> mask(12, 1);
            mask[10] = mask[11] = 0;
            py::dict out;
            out["mse"] = grad_check(net, inputs, target, mask, LossKind::mse, step);
            out["masked_mse"] =
                grad_check(net, inputs, target, mask, LossKind::masked_mse, step);
            return out;
        },
        py::arg("preset") = "final", py::arg("seed") = 0, py::arg("step") = 1e-5);
}
