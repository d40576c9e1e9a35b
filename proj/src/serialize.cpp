#include "pourforce/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pourforce {

namespace {

using nlohmann::json;

json matrix_to_array(const Matrix& m) { return json(m.data()); }

Matrix matrix_from_array(const json& a, int rows, int cols, const char* what) {
    if (!a.is_array() ||
        a.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw std::runtime_error(std::string("model: ") + what + " has " +
                                 std::to_string(a.size()) + " values, expected " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    return Matrix(rows, cols, a.get<std::vector<double>>());
}

json stats_to_json_obj(const NormStats& stats) {
    json j = json::object();
    for (int f = 0; f < kInputFeatures; ++f)
        j[kFeatureNames[f]] = {{"min", stats.features[f].min},
                               {"max", stats.features[f].max}};
    return j;
}

NormStats stats_from_json_obj(const json& j) {
    NormStats stats;
    for (int f = 0; f < kInputFeatures; ++f) {
        if (!j.contains(kFeatureNames[f]))
            throw std::runtime_error(std::string("norm stats: missing feature '") +
                                     kFeatureNames[f] + "'");
        const json& e = j.at(kFeatureNames[f]);
        stats.features[f].min = e.at("min").get<double>();
        stats.features[f].max = e.at("max").get<double>();
        stats.features[f].degenerate =
            !(stats.features[f].max > stats.features[f].min);
    }
    return stats;
}

}  // namespace

std::string model_to_json(const NetworkSpec& net,
                          const std::optional<NormStats>& stats) {
    validate(net);
    json j;
    j["format_version"] = 1;
    j["preset_name"] = net.preset_name;
    j["input_size"] = net.input_size;
    j["gate_order"] = "ifgo";
    json layers = json::array();
    for (const Layer& layer : net.layers) {
        json lj;
        if (const auto* lstm = std::get_if<LstmLayerParams>(&layer)) {
            lj["kind"] = "lstm";
            lj["hidden_size"] = lstm->hidden_size;
            lj["input_size"] = lstm->input_size;
            lj["W"] = matrix_to_array(lstm->W);
            lj["U"] = matrix_to_array(lstm->U);
            lj["b"] = matrix_to_array(lstm->b);
        } else if (const auto* drop = std::get_if<Dropout>(&layer)) {
            lj["kind"] = "dropout";
            lj["rate"] = drop->rate;
        } else {
            const auto& dense = std::get<DenseParams>(layer);
            lj["kind"] = "dense";
            lj["W"] = matrix_to_array(dense.W);
            lj["b"] = matrix_to_array(dense.b);
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    if (stats) j["norm_stats"] = stats_to_json_obj(*stats);
    return j.dump();
}

SavedModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model: invalid JSON: ") + e.what());
    }
    if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
        throw std::runtime_error("model: unsupported format_version");
    if (j.value("gate_order", "") != std::string("ifgo"))
        throw std::runtime_error("model: unsupported gate order");

    SavedModel out;
    out.net.preset_name = j.value("preset_name", "");
    out.net.input_size = j.at("input_size").get<int>();
    for (const json& lj : j.at("layers")) {
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "lstm") {
            LstmLayerParams p;
            p.hidden_size = lj.at("hidden_size").get<int>();
            p.input_size = lj.at("input_size").get<int>();
            p.W = matrix_from_array(lj.at("W"), 4 * p.hidden_size, p.input_size, "W");
            p.U = matrix_from_array(lj.at("U"), 4 * p.hidden_size, p.hidden_size, "U");
            p.b = matrix_from_array(lj.at("b"), 4 * p.hidden_size, 1, "b");
            out.net.layers.emplace_back(std::move(p));
        } else if (kind == "dropout") {
            out.net.layers.emplace_back(Dropout{lj.at("rate").get<double>()});
        } else if (kind == "dense") {
            DenseParams p;
            const json& w = lj.at("W");
            p.W = matrix_from_array(w, 1, static_cast<int>(w.size()), "dense W");
            p.b = matrix_from_array(lj.at("b"), 1, 1, "dense b");
            out.net.layers.emplace_back(std::move(p));
        } else {
            throw std::runtime_error("model: unknown layer kind '" + kind + "'");
        }
    }
    validate(out.net);
    if (j.contains("norm_stats"))
        out.norm_stats = stats_from_json_obj(j.at("norm_stats"));
    return out;
}

void save_model_file(const std::string& path, const NetworkSpec& net,
                     const std::optional<NormStats>& stats) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
    out << model_to_json(net, stats) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed writing model file: " + path);
}

SavedModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

std::string history_to_json(const TrainHistory& history) {
    json cfg;
    cfg["epochs"] = history.config.epochs;
    cfg["batch_size"] = history.config.batch_size;
    if (history.config.clip_norm) cfg["clip_norm"] = *history.config.clip_norm;
    else cfg["clip_norm"] = nullptr;
    cfg["loss"] = to_string(history.config.loss);
    cfg["lr"] = history.config.lr;
    cfg["seed"] = history.config.seed;
    cfg["shuffle"] = history.config.shuffle;

    json epochs = json::array();
    for (const EpochRecord& r : history.epochs)
        epochs.push_back({{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_loss", r.val_loss},
                          {"wall_ms", r.wall_ms}});

    json j;
    j["config"] = std::move(cfg);
    j["epochs"] = std::move(epochs);
    j["param_checksum"] = history.param_checksum;
    return j.dump();
}

std::string norm_stats_to_json(const NormStats& stats) {
    return stats_to_json_obj(stats).dump();
}

NormStats norm_stats_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("norm stats: invalid JSON: ") +
                                 e.what());
    }
    return stats_from_json_obj(j);
}

}  // namespace pourforce
