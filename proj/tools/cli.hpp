#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "refsplat/trainer.hpp"

namespace refsplat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Runs the command line in-process; returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

nlohmann::json config_to_json(const TrainConfig& config);
/// Fills fields present in `j`; absent fields keep their current values.
void config_from_json(const nlohmann::json& j, TrainConfig& config);

/// Applies one "key=value" override to the loss weights (field names as in
/// LossWeights). Throws ConfigError on unknown keys or bad values.
void apply_weight_override(LossWeights& w, const std::string& assignment);

/// Switches one loss term off: init, depth, bi, ref or trans.
void disable_loss(LossWeights& w, const std::string& term);

}  // namespace refsplat::cli
