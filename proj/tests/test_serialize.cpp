#include <stdexcept>

#include "doctest.h"
#include "json.hpp"
#include "pourforce/serialize.hpp"

using namespace pourforce;

TEST_CASE("model json round trip preserves predictions bit for bit") {
    Rng rng(71);
    NetworkSpec net = build_preset("final", 5, rng);
    std::string text = model_to_json(net);
    SavedModel loaded = model_from_json(text);
    CHECK(loaded.net.preset_name == "final");
    CHECK_FALSE(loaded.norm_stats.has_value());

    Matrix inputs(25, 9);
    for (double& v : inputs.data()) v = rng.uniform(-1, 1);
    Matrix a = forward_sequence(net, inputs, Mode::infer);
    Matrix b = forward_sequence(loaded.net, inputs, Mode::infer);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("model json carries the declared header fields") {
    Rng rng(72);
    NetworkSpec net = build_preset("second", 3, rng);
    auto j = nlohmann::json::parse(model_to_json(net));
    CHECK(j.at("format_version") == 1);
    CHECK(j.at("gate_order") == "ifgo");
    CHECK(j.at("input_size") == 9);
    CHECK(j.at("preset_name") == "second");
    CHECK(j.at("layers").size() == 7);
    CHECK(j.at("layers")[0].at("kind") == "lstm");
    CHECK(j.at("layers")[5].at("kind") == "dropout");
    CHECK(j.at("layers")[6].at("kind") == "dense");
}

TEST_CASE("model loader rejects foreign formats") {
    Rng rng(73);
    NetworkSpec net = build_preset("starting", 2, rng);
    auto j = nlohmann::json::parse(model_to_json(net));
    j["format_version"] = 2;
    CHECK_THROWS_AS(model_from_json(j.dump()), std::runtime_error);

    auto j2 = nlohmann::json::parse(model_to_json(net));
    j2["gate_order"] = "fiog";
    CHECK_THROWS_AS(model_from_json(j2.dump()), std::runtime_error);

    CHECK_THROWS_AS(model_from_json("{not json"), std::runtime_error);
}

TEST_CASE("embedded norm stats survive the round trip") {
    Rng rng(74);
    NetworkSpec net = build_preset("starting", 3, rng);
    NormStats stats;
    for (int f = 0; f < kInputFeatures; ++f) {
        stats.features[f].min = -1.0 * f;
        stats.features[f].max = 2.0 * f + 0.5;
        stats.features[f].degenerate = false;
    }
    SavedModel loaded = model_from_json(model_to_json(net, stats));
    REQUIRE(loaded.norm_stats.has_value());
    for (int f = 0; f < kInputFeatures; ++f) {
        CHECK(loaded.norm_stats->features[f].min == stats.features[f].min);
        CHECK(loaded.norm_stats->features[f].max == stats.features[f].max);
    }

    NormStats again = norm_stats_from_json(norm_stats_to_json(stats));
    CHECK(again.features[3].max == stats.features[3].max);
}

TEST_CASE("history json echoes the config and losses at full precision") {
    TrainHistory h;
    h.config.epochs = 3;
    h.config.batch_size = 8;
    h.config.clip_norm = 5.0;
    h.config.loss = LossKind::masked_mse;
    h.config.lr = 1e-4;
    h.config.seed = 42;
    h.config.shuffle = true;
    h.epochs.push_back({1, 0.123456789012345678, 0.2, 17});
    h.epochs.push_back({2, 0.1, 0.19, 18});
    h.epochs.push_back({3, 0.09, 0.185, 16});
    h.param_checksum = "00ff00ff00ff00ff";

    auto j = nlohmann::json::parse(history_to_json(h));
    CHECK(j.at("config").at("loss") == "masked_mse");
    CHECK(j.at("config").at("clip_norm") == 5.0);
    CHECK(j.at("config").at("seed") == 42);
    CHECK(j.at("epochs").size() == 3);
    CHECK(j.at("epochs")[0].at("train_loss").get<double>() ==
          0.123456789012345678);
    CHECK(j.at("param_checksum") == "00ff00ff00ff00ff");

    TrainHistory unclipped = h;
    unclipped.config.clip_norm = std::nullopt;
    auto j2 = nlohmann::json::parse(history_to_json(unclipped));
    CHECK(j2.at("config").at("clip_norm").is_null());
}

TEST_CASE("file save and load") {
    Rng rng(75);
    NetworkSpec net = build_preset("starting", 4, rng);
    const std::string path = "test_model_roundtrip.json";
    save_model_file(path, net);
    SavedModel loaded = load_model_file(path);
    CHECK(loaded.net.layers.size() == net.layers.size());
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_model_file("does_not_exist.json"), std::runtime_error);
}
