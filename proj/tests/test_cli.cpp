#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "pourforce/data.hpp"
#include "pourforce/serialize.hpp"
#include "pourforce/training.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* path = std::getenv("POURFORCE_CLI");
    REQUIRE_MESSAGE(path != nullptr, "POURFORCE_CLI must point at the binary");
    return path;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args;
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int line_count(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::path("cli_scratch") / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    std::string operator/(const std::string& leaf) const {
        return (dir / leaf).string();
    }
};

// Strips the wall-clock field, which is the one legitimately varying part.
nlohmann::json history_without_walltime(const std::string& path) {
    auto j = nlohmann::json::parse(slurp(path));
    for (auto& e : j.at("epochs")) e["wall_ms"] = 0;
    return j;
}

}  // namespace

TEST_CASE("synth: deterministic corpus generation") {
    Scratch s("synth");
    const std::string a = s / "a.jsonl", b = s / "b.jsonl";
    CHECK(run("synth --n 200 --seed 7 --t-min 4 --t-max 9 --out " + a) == 0);
    CHECK(run("synth --n 200 --seed 7 --t-min 4 --t-max 9 --out " + b) == 0);
    const std::string ta = slurp(a);
    CHECK(line_count(ta) == 200);
    CHECK(ta == slurp(b));

    CHECK(run("synth --n 0 --out " + (s / "zero.jsonl") + " 2>/dev/null") == 2);
    CHECK(run("synth --n 5 --out /nonexistent_dir_zz/x.jsonl 2>/dev/null") == 2);
}

TEST_CASE("split: sizes follow the floor rule") {
    Scratch s("split");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 20 --seed 3 --t-min 3 --t-max 6 --out " + corpus) == 0);
    CHECK(run("split --corpus " + corpus + " --out-dir " + (s / "parts") +
              " --seed 5 > /dev/null") == 0);
    CHECK(line_count(slurp(s / "parts/train.jsonl")) == 16);
    CHECK(line_count(slurp(s / "parts/val.jsonl")) == 3);
    CHECK(line_count(slurp(s / "parts/test.jsonl")) == 1);

    SUBCASE("--no-shuffle keeps file order") {
        CHECK(run("split --corpus " + corpus + " --out-dir " + (s / "ordered") +
                  " --no-shuffle > /dev/null") == 0);
        std::istringstream all(slurp(corpus));
        std::istringstream train(slurp(s / "ordered/train.jsonl"));
        std::string a, b;
        std::getline(all, a);
        std::getline(train, b);
        CHECK(a == b);
    }
}

TEST_CASE("train: writes model and history, reruns are identical") {
    Scratch s("train");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 10 --seed 2 --t-min 4 --t-max 8 --out " + corpus) == 0);

    const std::string out1 = s / "stdout1.txt";
    CHECK(run("train --corpus " + corpus +
              " --preset starting --hidden 3 --epochs 2 --batch-size 4"
              " --seed 1 --out " + (s / "model.json") + " --history " +
              (s / "hist1.json") + " > " + out1) == 0);
    CHECK(run("train --corpus " + corpus +
              " --preset starting --hidden 3 --epochs 2 --batch-size 4"
              " --seed 1 --out " + (s / "model2.json") + " --history " +
              (s / "hist2.json") + " > /dev/null") == 0);

    auto h1 = history_without_walltime(s / "hist1.json");
    auto h2 = history_without_walltime(s / "hist2.json");
    CHECK(h1.dump() == h2.dump());
    CHECK(h1.at("epochs").size() == 2);
    CHECK(h1.at("config").at("loss") == "masked_mse");

    // stdout carries one "epoch train val" line per epoch
    std::istringstream lines(slurp(out1));
    std::string line;
    int epoch_lines = 0;
    while (std::getline(lines, line)) {
        int e;
        double tr, va;
        if (std::sscanf(line.c_str(), "%d %lf %lf", &e, &tr, &va) == 3)
            ++epoch_lines;
    }
    CHECK(epoch_lines == 2);

    SUBCASE("lr 0 keeps the validation loss constant") {
        CHECK(run("train --corpus " + corpus +
                  " --preset starting --hidden 3 --epochs 3 --lr 0 --seed 1"
                  " --out " + (s / "m0.json") + " --history " + (s / "h0.json") +
                  " > /dev/null") == 0);
        auto h = nlohmann::json::parse(slurp(s / "h0.json"));
        const double v0 = h.at("epochs")[0].at("val_loss").get<double>();
        for (const auto& e : h.at("epochs"))
            CHECK(e.at("val_loss").get<double>() == v0);
    }

    SUBCASE("config file supplies defaults, flags win") {
        std::ofstream cfg(s / "cfg.json");
        cfg << R"({"epochs": 5, "preset": "starting", "hidden": 2})";
        cfg.close();
        CHECK(run("train --corpus " + corpus + " --config " + (s / "cfg.json") +
                  " --epochs 1 --seed 1 --out " + (s / "mc.json") +
                  " --history " + (s / "hc.json") + " > /dev/null") == 0);
        auto h = nlohmann::json::parse(slurp(s / "hc.json"));
        CHECK(h.at("epochs").size() == 1);   // flag overrides config
    }
}

TEST_CASE("train: divergence aborts with exit 3 and a partial history") {
    Scratch s("diverge");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 10 --seed 4 --t-min 4 --t-max 6 --out " + corpus) == 0);
    CHECK(run("train --corpus " + corpus +
              " --preset starting --hidden 3 --epochs 3 --batch-size 2"
              " --lr 1e200 --no-clip --seed 1 --out " + (s / "m.json") +
              " --history " + (s / "h.json") + " >/dev/null 2>&1") == 3);
    auto h = nlohmann::json::parse(slurp(s / "h.json"));
    CHECK(h.contains("epochs"));   // well-formed partial history
}

TEST_CASE("eval and predict: reports, CSVs and round trips") {
    Scratch s("eval");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 8 --seed 6 --t-min 5 --t-max 9 --out " + corpus) == 0);
    REQUIRE(run("train --corpus " + corpus +
                " --preset starting --hidden 3 --epochs 1 --seed 2 --out " +
                (s / "model.json") + " --history " + (s / "h.json") +
                " > /dev/null") == 0);

    const std::string reports = s / "reports";
    CHECK(run("eval --model " + (s / "model.json") + " --corpus " + corpus +
              " --report-dir " + reports + " --indices 0,2,4 > /dev/null") == 0);
    CHECK(fs::exists(reports + "/seq_0.csv"));
    CHECK(fs::exists(reports + "/seq_2.csv"));
    CHECK(fs::exists(reports + "/seq_4.csv"));
    CHECK_FALSE(fs::exists(reports + "/seq_1.csv"));

    auto metrics = nlohmann::json::parse(slurp(reports + "/metrics.json"));
    CHECK(metrics.contains("masked_mse"));
    CHECK(metrics.contains("mse"));
    CHECK(metrics.at("per_sequence").size() == 8);
    CHECK(metrics.at("masked_mse").get<double>() >= 0.0);

    SUBCASE("metrics agree with the library computation exactly") {
        pourforce::SavedModel sm = pourforce::load_model_file(s / "model.json");
        pourforce::Dataset ds = pourforce::parse_corpus_file(corpus);
        pourforce::PaddedBatch batch = pourforce::pad_and_mask(ds);
        double ssr_m = 0, n_m = 0, ssr_a = 0, n_a = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            pourforce::Matrix pred = pourforce::forward_sequence(
                sm.net, batch.inputs[i], pourforce::Mode::infer);
            for (int t = 0; t < batch.t_max; ++t) {
                const double r = pred(t, 0) - batch.targets[i](t, 0);
                ssr_a += r * r;
                n_a += 1;
                if (batch.mask[i][t]) {
                    ssr_m += r * r;
                    n_m += 1;
                }
            }
        }
        CHECK(metrics.at("masked_mse").get<double>() == ssr_m / n_m);
        CHECK(metrics.at("mse").get<double>() == ssr_a / n_a);
    }

    SUBCASE("predict streams the true-length CSV that round-trips") {
        const std::string out = s / "pred0.csv";
        CHECK(run("predict --model " + (s / "model.json") + " --corpus " +
                  corpus + " --index 0 > " + out) == 0);
        std::ifstream in(out);
        pourforce::PredictionRows rows = pourforce::read_prediction_csv(in);
        pourforce::Dataset ds = pourforce::parse_corpus_file(corpus);
        CHECK(rows.actual.size() ==
              static_cast<std::size_t>(ds.sequences[0].length()));

        // identical to the eval export for the same sequence
        std::ifstream eval_in(reports + "/seq_0.csv");
        pourforce::PredictionRows eval_rows =
            pourforce::read_prediction_csv(eval_in);
        REQUIRE(eval_rows.predicted.size() == rows.predicted.size());
        for (std::size_t t = 0; t < rows.predicted.size(); ++t) {
            CHECK(rows.predicted[t] == eval_rows.predicted[t]);
            CHECK(rows.actual[t] == eval_rows.actual[t]);
        }
    }

    SUBCASE("out-of-range index is a usage error") {
        CHECK(run("predict --model " + (s / "model.json") + " --corpus " +
                  corpus + " --index 999 2>/dev/null") == 2);
        CHECK(run("eval --model " + (s / "model.json") + " --corpus " + corpus +
                  " --report-dir " + reports +
                  " --indices 99 >/dev/null 2>&1") == 2);
    }

    SUBCASE("corrupt corpus is a usage error") {
        std::ofstream bad(s / "bad.jsonl");
        bad << R"({"theta":[0,1],"force":[1],"f_init":1,"f_empty":0.1,)"
            << R"("f_final":0.5,"d_cup":70,"h_cup":95,"d_ctn":80,"h_ctn":120,"rho":1})"
            << "\n";
        bad.close();
        CHECK(run("eval --model " + (s / "model.json") + " --corpus " +
                  (s / "bad.jsonl") + " --report-dir " + reports +
                  " 2>/dev/null") == 2);
    }
}

TEST_CASE("train with normalization embeds the stats in the model") {
    Scratch s("norm");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 10 --seed 8 --t-min 4 --t-max 7 --out " + corpus) == 0);
    CHECK(run("train --corpus " + corpus +
              " --preset starting --hidden 3 --epochs 1 --seed 3 --normalize"
              " --out " + (s / "model.json") + " --history " + (s / "h.json") +
              " > /dev/null") == 0);
    auto model = nlohmann::json::parse(slurp(s / "model.json"));
    REQUIRE(model.contains("norm_stats"));
    CHECK(model.at("norm_stats").contains("theta"));
    // stats also written standalone, next to the model
    auto stats = nlohmann::json::parse(slurp(s / "model.norm.json"));
    CHECK(stats.at("theta").contains("min"));
    CHECK(stats.at("rho").contains("max"));
    CHECK(run("eval --model " + (s / "model.json") + " --corpus " + corpus +
              " --report-dir " + (s / "reports") + " > /dev/null") == 0);
}

TEST_CASE("synth then split reproduces the 1307-sequence table") {
    Scratch s("table");
    const std::string corpus = s / "corpus.jsonl";
    REQUIRE(run("synth --n 1307 --seed 1 --t-min 2 --t-max 3 --out " + corpus) ==
            0);
    CHECK(line_count(slurp(corpus)) == 1307);
    CHECK(run("split --corpus " + corpus + " --out-dir " + (s / "parts") +
              " --seed 2 > /dev/null") == 0);
    CHECK(line_count(slurp(s / "parts/train.jsonl")) == 1045);
    CHECK(line_count(slurp(s / "parts/val.jsonl")) == 196);
    CHECK(line_count(slurp(s / "parts/test.jsonl")) == 66);
}

TEST_CASE("synth -> train -> eval is byte-deterministic end to end") {
    auto pipeline = [&](const std::string& tag) {
        Scratch s(tag);
        const std::string corpus = s / "c.jsonl";
        REQUIRE(run("synth --n 12 --seed 5 --t-min 4 --t-max 8 --out " + corpus) == 0);
        REQUIRE(run("train --corpus " + corpus +
                    " --preset second --hidden 3 --epochs 2 --batch-size 4"
                    " --seed 9 --out " + (s / "m.json") + " --history " +
                    (s / "h.json") + " > /dev/null") == 0);
        REQUIRE(run("eval --model " + (s / "m.json") + " --corpus " + corpus +
                    " --report-dir " + (s / "r") + " > /dev/null") == 0);
        return slurp(s / "r/metrics.json");
    };
    CHECK(pipeline("det_a") == pipeline("det_b"));
}

TEST_CASE("gradcheck: passes clean, catches the injected fault") {
    CHECK(run("gradcheck --preset final --seed 1 > /dev/null") == 0);
    CHECK(run("gradcheck --preset final --seed 1 --h 1e-6 > /dev/null") == 0);
    CHECK(run("gradcheck --preset final --seed 1 --inject-fault"
              " >/dev/null 2>&1") == 4);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run("2>/dev/null") == 2);                  // no subcommand
    CHECK(run("train 2>/dev/null") == 2);            // missing required flags
    CHECK(run("synth --n 5 2>/dev/null") == 2);      // missing --out
}
