#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaeem/nn.hpp"

namespace vaeem {

/// Observations stored one sample per column (d x N), with optional labels
/// that are only ever used for evaluation.
struct Dataset {
  std::string name;
  Matrix features;
  std::optional<std::vector<int>> labels;
  int image_rows = 0;  // non-zero for image data
  int image_cols = 0;

  Eigen::Index size() const { return features.cols(); }
  Eigen::Index dim() const { return features.rows(); }
  bool is_image() const { return image_rows > 0 && image_cols > 0; }
  int num_classes() const;
  /// Throws std::invalid_argument if features are non-finite or outside
  /// [0,1], or if the label count is wrong.
  void validate_unit_range() const;
};

/// Points on `n_arcs` interleaved unit semicircles. Arc a is centred at
/// (1.1 a, 0) opening downward for even a, and at (1.1 a, 0.5) opening
/// upward for odd a. Labels are the arc index. Features are raw coordinates.
Dataset gen_half_moons(int n_total, int n_arcs, double noise_sigma, std::uint64_t seed);

/// Centre of arc `a` and the sign of its semicircle (+1 upper half, -1 lower).
struct ArcGeometry {
  double cx;
  double cy;
  double side;
};
ArcGeometry half_moon_arc(int arc);
/// Euclidean distance from (x, y) to the noiseless semicircle of `arc`.
double distance_to_arc(int arc, double x, double y);

/// `n_per` isotropic Gaussian draws around each row of `centers` (K x d).
Dataset gen_gaussian_blobs(int n_per, const Matrix& centers, double sigma, std::uint64_t seed);

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxFormatError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  Matrix pixels;  // (rows*cols) x N, values p/255
  int rows = 0;
  int cols = 0;
};

IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);
IdxImages parse_idx_images(const std::string& bytes);
std::vector<int> parse_idx_labels(const std::string& bytes);

std::string encode_idx_images(const std::vector<std::uint8_t>& pixels, std::uint32_t count, std::uint32_t rows,
                              std::uint32_t cols);
std::string encode_idx_labels(const std::vector<std::uint8_t>& labels);

/// Image file plus optional label file.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);

/// Per-dimension affine map onto [0,1]. Constant dimensions map to 0.5.
struct MinMaxScaler {
  Vector lo;
  Vector hi;

  static MinMaxScaler fit(const Matrix& x);
  Matrix transform(const Matrix& x) const;
  Matrix inverse(const Matrix& x) const;
  Eigen::Index dim() const { return lo.size(); }
};

struct Normalized {
  Matrix features;
  MinMaxScaler scaler;
};
Normalized normalize_minmax(const Matrix& x);

/// Class-stratified subset of `count` samples (labels required).
Dataset stratified_subset(const Dataset& data, int count, std::uint64_t seed);

}  // namespace vaeem
