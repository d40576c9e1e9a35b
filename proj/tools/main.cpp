#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pourforce/data.hpp"
#include "pourforce/model.hpp"
#include "pourforce/serialize.hpp"
#include "pourforce/training.hpp"

namespace fs = std::filesystem;
using namespace pourforce;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;        // usage or contract error
constexpr int kExitDivergence = 3;   // non-finite training loss
constexpr int kExitVerification = 4; // gradient check failed

std::vector<int> parse_indices(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed writing: " + path);
}

struct TrainOptions {
    std::string corpus;
    std::string model_out = "model.json";
    std::string history_out = "history.json";
    std::string preset = "final";
    std::string loss = "masked";
    std::string config_path;
    int hidden = 16;
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-4;
    double clip_norm = 5.0;
    bool no_clip = false;
    bool normalize = false;
    bool no_shuffle = false;
    std::uint64_t seed = 0;
};

// --config <json> supplies defaults; explicitly passed flags win.
void apply_config_overrides(const CLI::App& cmd, TrainOptions& opt) {
    std::ifstream in(opt.config_path);
    if (!in) throw std::runtime_error("cannot open config: " + opt.config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config " + opt.config_path + ": " + e.what());
    }
    auto untouched = [&](const char* flag) { return cmd.count(flag) == 0; };
    if (j.contains("preset") && untouched("--preset"))
        opt.preset = j.at("preset").get<std::string>();
    if (j.contains("loss") && untouched("--loss"))
        opt.loss = j.at("loss").get<std::string>();
    if (j.contains("hidden") && untouched("--hidden"))
        opt.hidden = j.at("hidden").get<int>();
    if (j.contains("epochs") && untouched("--epochs"))
        opt.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size") && untouched("--batch-size"))
        opt.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr") && untouched("--lr")) opt.lr = j.at("lr").get<double>();
    if (j.contains("clip_norm") && untouched("--clip-norm") &&
        untouched("--no-clip")) {
        if (j.at("clip_norm").is_null()) opt.no_clip = true;
        else opt.clip_norm = j.at("clip_norm").get<double>();
    }
    if (j.contains("seed") && untouched("--seed"))
        opt.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("normalize") && untouched("--normalize"))
        opt.normalize = j.at("normalize").get<bool>();
    if (j.contains("shuffle") && untouched("--no-shuffle"))
        opt.no_shuffle = !j.at("shuffle").get<bool>();
}

int run_synth(int n, std::uint64_t seed, const std::string& out_path,
              const SynthRanges& ranges) {
    Dataset ds = synth_generate(n, seed, ranges);
    write_corpus_file(ds, out_path);
    std::cout << "wrote " << ds.size() << " sequences to " << out_path << "\n";
    return kExitOk;
}

int run_split(const std::string& corpus, const std::string& out_dir,
              const std::string& ratios_text, std::uint64_t seed,
              bool no_shuffle) {
    Dataset ds = parse_corpus_file(corpus);
    SplitRatios ratios;
    if (!ratios_text.empty()) {
        std::stringstream ss(ratios_text);
        std::string item;
        std::vector<double> vals;
        while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
        if (vals.size() != 3)
            throw std::invalid_argument("--ratios wants three comma-separated values");
        ratios = SplitRatios{vals[0], vals[1], vals[2]};
    }
    SplitResult r = split(ds, ratios, seed, !no_shuffle);
    fs::create_directories(out_dir);
    write_corpus_file(r.train, out_dir + "/train.jsonl");
    write_corpus_file(r.val, out_dir + "/val.jsonl");
    write_corpus_file(r.test, out_dir + "/test.jsonl");
    std::cout << "train " << r.train.size() << "\nval " << r.val.size()
              << "\ntest " << r.test.size() << "\n";
    return kExitOk;
}

int run_train(const CLI::App& cmd, TrainOptions opt) {
    if (!opt.config_path.empty()) apply_config_overrides(cmd, opt);

    Dataset corpus = parse_corpus_file(opt.corpus);
    SplitResult splits = split(corpus, SplitRatios{}, opt.seed);
    if (splits.val.sequences.empty())
        throw std::invalid_argument(
            "train: corpus too small, the 15% validation split is empty "
            "(need at least 7 sequences, got " + std::to_string(corpus.size()) +
            ")");
    const int t_max = corpus.max_length();
    PaddedBatch train_batch = pad_and_mask(splits.train, t_max);
    PaddedBatch val_batch = pad_and_mask(splits.val, t_max);

    std::optional<NormStats> stats;
    if (opt.normalize) {
        stats = normalize_fit(splits.train);
        normalize_apply(train_batch, *stats);
        normalize_apply(val_batch, *stats);
    }

    Rng rng(opt.seed);
    NetworkSpec net = build_preset(opt.preset, opt.hidden, rng);

    TrainConfig cfg;
    cfg.epochs = opt.epochs;
    cfg.batch_size = opt.batch_size;
    cfg.clip_norm = opt.no_clip ? std::nullopt : std::optional<double>(opt.clip_norm);
    cfg.loss = loss_kind_from_string(opt.loss);
    cfg.lr = opt.lr;
    cfg.seed = opt.seed;
    cfg.shuffle = !opt.no_shuffle;

    auto print_epoch = [](const EpochRecord& r) {
        std::cout << r.epoch << ' ' << format_double(r.train_loss) << ' '
                  << format_double(r.val_loss) << std::endl;
    };

    try {
        TrainHistory hist = train(net, train_batch, val_batch, cfg, print_epoch);
        save_model_file(opt.model_out, net, stats);
        if (stats) {
            fs::path stats_path(opt.model_out);
            stats_path.replace_extension(".norm.json");
            write_text_file(stats_path.string(), norm_stats_to_json(*stats));
        }
        write_text_file(opt.history_out, history_to_json(hist));
    } catch (const DivergenceError& e) {
        TrainHistory partial = e.partial;
        partial.param_checksum = param_checksum(net);
        write_text_file(opt.history_out, history_to_json(partial));
        std::cerr << e.what() << " (partial history written to "
                  << opt.history_out << ")\n";
        return kExitDivergence;
    }
    return kExitOk;
}

// Padded predictions for every sequence; the per-sequence prefix is
// identical to an unpadded forward pass, so one pass serves the masked
// metric, the padded-grid metric and the CSV exports.
int run_eval(const std::string& model_path, const std::string& corpus_path,
             const std::string& report_dir, const std::string& indices_text) {
    SavedModel model = load_model_file(model_path);
    Dataset corpus = parse_corpus_file(corpus_path);
    PaddedBatch batch = pad_and_mask(corpus);
    if (model.norm_stats) normalize_apply(batch, *model.norm_stats);

    std::vector<int> indices = parse_indices(indices_text);
    for (int idx : indices)
        if (idx < 0 || idx >= static_cast<int>(batch.size()))
            throw std::invalid_argument("eval: index " + std::to_string(idx) +
                                        " out of range (corpus has " +
                                        std::to_string(batch.size()) +
                                        " sequences)");

    double ssr_masked = 0.0, n_masked = 0.0, ssr_all = 0.0, n_all = 0.0;
    nlohmann::json per_seq = nlohmann::json::array();
    std::vector<Matrix> preds(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        preds[i] = forward_sequence(model.net, batch.inputs[i], Mode::infer);
        double seq_ssr = 0.0;
        for (int t = 0; t < batch.t_max; ++t) {
            const double r = preds[i](t, 0) - batch.targets[i](t, 0);
            ssr_all += r * r;
            n_all += 1.0;
            if (batch.mask[i][t]) {
                seq_ssr += r * r;
                ssr_masked += r * r;
                n_masked += 1.0;
            }
        }
        per_seq.push_back({{"index", i},
                           {"masked_mse", seq_ssr / batch.lengths[i]}});
    }

    nlohmann::json metrics;
    metrics["masked_mse"] = ssr_masked / n_masked;
    metrics["mse"] = ssr_all / n_all;
    metrics["per_sequence"] = std::move(per_seq);

    fs::create_directories(report_dir);
    write_text_file(report_dir + "/metrics.json", metrics.dump());

    for (int idx : indices) {
        std::vector<double> actual, predicted;
        for (int t = 0; t < batch.lengths[idx]; ++t) {
            actual.push_back(batch.targets[idx](t, 0));
            predicted.push_back(preds[idx](t, 0));
        }
        std::ofstream out(report_dir + "/seq_" + std::to_string(idx) + ".csv");
        if (!out) throw std::runtime_error("cannot write sequence csv");
        write_prediction_csv(out, actual, predicted);
    }

    std::cout << "masked_mse " << format_double(metrics["masked_mse"].get<double>())
              << "\nmse " << format_double(metrics["mse"].get<double>()) << "\n";
    return kExitOk;
}

int run_predict(const std::string& model_path, const std::string& corpus_path,
                int index) {
    SavedModel model = load_model_file(model_path);
    Dataset corpus = parse_corpus_file(corpus_path);
    if (index < 0 || index >= static_cast<int>(corpus.size()))
        throw std::invalid_argument("predict: index " + std::to_string(index) +
                                    " out of range (corpus has " +
                                    std::to_string(corpus.size()) +
                                    " sequences)");
    const MotionSequence& seq = corpus.sequences[index];
    Matrix inputs = sequence_inputs(seq);
    if (model.norm_stats) normalize_apply(inputs, *model.norm_stats);
    Matrix pred = forward_sequence(model.net, inputs, Mode::infer);
    std::vector<double> predicted(pred.data());
    write_prediction_csv(std::cout, seq.force, predicted);
    return kExitOk;
}

int run_gradcheck(const std::string& preset, std::uint64_t seed, double step,
                  bool inject_fault) {
    Rng rng(seed);
    NetworkSpec net = build_preset(preset, 3, rng);

    const int T = 12, padded = 3;
    Matrix inputs(T, kInputFeatures);
    Matrix target(T, 1);
    for (double& v : inputs.data()) v = rng.uniform(-1.0, 1.0);
    // Small targets keep finite-difference roundoff under the error floor.
    for (double& v : target.data()) v = rng.uniform(-0.1, 0.1);
    std::vector<std::uint8_t> mask(T, 1);
    for (int t = T - padded; t < T; ++t) mask[t] = 0;

    const double fault = inject_fault ? 1.1 : 1.0;
    bool ok = true;
    for (LossKind kind : {LossKind::mse, LossKind::masked_mse}) {
        const double err =
            grad_check(net, inputs, target, mask, kind, step, fault);
        const bool pass = err < 1e-4;
        ok = ok && pass;
        std::cout << "gradcheck " << to_string(kind)
                  << " max_rel_err=" << format_double(err)
                  << " (h=" << format_double(step) << ") "
                  << (pass ? "ok" : "FAIL") << "\n";
    }
    return ok ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pourforce: stacked-LSTM estimation of pouring forces"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    int synth_n = 0;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    SynthRanges ranges;
    synth->add_option("--n", synth_n, "number of sequences")
        ->required()
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--out", synth_out, "output corpus path (JSON Lines)")
        ->required();
    synth->add_option("--t-min", ranges.t_min, "minimum sequence length");
    synth->add_option("--t-max", ranges.t_max, "maximum sequence length");
    synth->add_option("--noise-std", ranges.noise_std,
                      "gaussian noise on the force channel");

    // split
    auto* split_cmd = app.add_subcommand("split", "split a corpus 80/15/5");
    std::string split_corpus, split_out_dir, split_ratios;
    std::uint64_t split_seed = 0;
    bool split_no_shuffle = false;
    split_cmd->add_option("--corpus", split_corpus, "corpus path")->required();
    split_cmd->add_option("--out-dir", split_out_dir, "output directory")
        ->required();
    split_cmd->add_option("--ratios", split_ratios,
                          "comma-separated ratios (default 0.8,0.15,0.05)");
    split_cmd->add_option("--seed", split_seed, "shuffle seed");
    split_cmd->add_flag("--no-shuffle", split_no_shuffle,
                        "split in file order");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a preset on a corpus");
    TrainOptions topt;
    train_cmd->add_option("--corpus", topt.corpus, "corpus path")->required();
    train_cmd->add_option("--out", topt.model_out, "model output path");
    train_cmd->add_option("--history", topt.history_out, "history output path");
    train_cmd->add_option("--preset", topt.preset,
                          "starting | second | final");
    train_cmd->add_option("--hidden", topt.hidden, "LSTM hidden size");
    train_cmd->add_option("--loss", topt.loss, "mse | masked");
    train_cmd->add_option("--epochs", topt.epochs, "training epochs");
    train_cmd->add_option("--batch-size", topt.batch_size, "sequences per batch");
    train_cmd->add_option("--lr", topt.lr, "Adam learning rate");
    train_cmd->add_option("--clip-norm", topt.clip_norm,
                          "global gradient-norm threshold");
    train_cmd->add_flag("--no-clip", topt.no_clip, "disable gradient clipping");
    train_cmd->add_flag("--normalize", topt.normalize,
                        "min-max normalize inputs (stats fit on train split)");
    train_cmd->add_flag("--no-shuffle", topt.no_shuffle,
                        "keep epoch order fixed");
    train_cmd->add_option("--seed", topt.seed, "seed for split/init/shuffle");
    train_cmd->add_option("--config", topt.config_path,
                          "JSON file with option overrides");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a corpus");
    std::string eval_model, eval_corpus, eval_report = "reports", eval_indices;
    eval_cmd->add_option("--model", eval_model, "model path")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "corpus path")->required();
    eval_cmd->add_option("--report-dir", eval_report, "report directory");
    eval_cmd->add_option("--indices", eval_indices,
                         "comma-separated sequence indices to export as CSV");

    // predict
    auto* predict_cmd =
        app.add_subcommand("predict", "stream one sequence's predictions");
    std::string pred_model, pred_corpus;
    int pred_index = 0;
    predict_cmd->add_option("--model", pred_model, "model path")->required();
    predict_cmd->add_option("--corpus", pred_corpus, "corpus path")->required();
    predict_cmd->add_option("--index", pred_index, "sequence index")->required();

    // gradcheck
    auto* grad_cmd = app.add_subcommand(
        "gradcheck", "finite-difference check of the analytic gradients");
    grad_cmd->set_help_flag("--help", "print help");   // frees -h for --h
    std::string grad_preset = "final";
    std::uint64_t grad_seed = 0;
    double grad_step = 1e-5;
    bool grad_fault = false;
    grad_cmd->add_option("--preset", grad_preset, "preset to check (H=3)");
    grad_cmd->add_option("--seed", grad_seed, "rng seed");
    grad_cmd->add_option("--h", grad_step, "finite-difference step size");
    grad_cmd->add_flag("--inject-fault", grad_fault,
                       "corrupt one gradient entry (checker sensitivity)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(synth_n, synth_seed, synth_out, ranges);
        if (split_cmd->parsed())
            return run_split(split_corpus, split_out_dir, split_ratios,
                             split_seed, split_no_shuffle);
        if (train_cmd->parsed()) return run_train(*train_cmd, topt);
        if (eval_cmd->parsed())
            return run_eval(eval_model, eval_corpus, eval_report, eval_indices);
        if (predict_cmd->parsed())
            return run_predict(pred_model, pred_corpus, pred_index);
        if (grad_cmd->parsed())
            return run_gradcheck(grad_preset, grad_seed, grad_step, grad_fault);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
