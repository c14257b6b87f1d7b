#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaeem/data.hpp"
#include "vaeem/em_cluster.hpp"

namespace vaeem {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to score, assign and sample after training.
///
/// Binary layout, all integers and reals little-endian:
///   "VAEEMCKP" | u32 version | u64 seed
///   | u32 len, config text (canonical key = value)
///   | u32 image_rows | u32 image_cols
///   | u32 scaler_dim, then scaler_dim f64 lo, scaler_dim f64 hi
///   | u32 K, per cluster: f64 slope, then four groups (trunk, mean head,
///     logvar head, decoder), each u8 activate_output | u32 layers |
///     per layer u32 rows, u32 cols, rows*cols f32 weights (row-major),
///     rows f32 biases
///   | u32 N | u32 K | N*K f32 responsibilities (row-major)
///   | u32 records, per record: u32 iteration, f64 objective,
///     f64 mean max responsibility, u8 has_accuracy, f64 accuracy,
///     f64 learning rate
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  EmConfig config;
  std::uint64_t seed = 0;
  int image_rows = 0;
  int image_cols = 0;
  std::optional<MinMaxScaler> scaler;
  std::vector<VaeModel> models;
  SoftAssignments assignments;
  EmHistory history;  // warnings are not persisted
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vaeem
