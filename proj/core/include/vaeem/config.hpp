#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "vaeem/em_cluster.hpp"

namespace vaeem {

/// A training run description: EM hyperparameters plus data locations.
/// Paths are kept as written; relative paths resolve against the caller's
/// working directory.
struct RunConfig {
  EmConfig em;
  std::string train_data;  // CSV
  std::string train_images;
  std::string train_labels;
  std::string normalize = "none";  // none | minmax
};

/// Parses flat `key = value` text. `#` starts a comment. A value of `-`
/// disables dropout or learning-rate decay. Unknown keys are rejected.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment to `config`.
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical text for the EM hyperparameters (stable key order, round-trip
/// number formatting). Parsing it back yields an identical EmConfig.
std::string format_em_config(const EmConfig& config);

std::string format_dims(const std::vector<int>& dims);

}  // namespace vaeem
