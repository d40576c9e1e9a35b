#pragma once

#include <optional>
#include <string>

#include "pourforce/data.hpp"
#include "pourforce/model.hpp"
#include "pourforce/training.hpp"

namespace pourforce {

struct SavedModel {
    NetworkSpec net;
    std::optional<NormStats> norm_stats;
};

// Model format (format_version 1): a single JSON document
//   {format_version, preset_name, input_size, gate_order: "ifgo", layers: [...]}
// with parameter matrices as row-major arrays printed at round-trip
// precision. norm_stats is embedded when normalization was used in
// training, so evaluation cannot mismatch the scaling.
std::string model_to_json(const NetworkSpec& net,
                          const std::optional<NormStats>& stats = std::nullopt);
SavedModel model_from_json(const std::string& text);
void save_model_file(const std::string& path, const NetworkSpec& net,
                     const std::optional<NormStats>& stats = std::nullopt);
SavedModel load_model_file(const std::string& path);

// {config, epochs: [{epoch, train_loss, val_loss, wall_ms}], param_checksum}
std::string history_to_json(const TrainHistory& history);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

}  // namespace pourforce
