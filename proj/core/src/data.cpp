#include "vaeem/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "vaeem/io.hpp"
#include "vaeem/random.hpp"

namespace vaeem {

int Dataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return *std::max_element(labels->begin(), labels->end()) + 1;
}

void Dataset::validate_unit_range() const {
  if (!features.allFinite()) throw std::invalid_argument(name + ": features must be finite");
  if (features.size() > 0 && (features.minCoeff() < 0.0 || features.maxCoeff() > 1.0))
    throw std::invalid_argument(name + ": features must lie in [0, 1]");
  if (labels && static_cast<Eigen::Index>(labels->size()) != size())
    throw std::invalid_argument(name + ": label count does not match sample count");
}

ArcGeometry half_moon_arc(int arc) {
  const bool odd = arc % 2 != 0;
  return {1.1 * arc, odd ? 0.5 : 0.0, odd ? -1.0 : 1.0};
}

double distance_to_arc(int arc, double x, double y) {
  const ArcGeometry g = half_moon_arc(arc);
  const double dx = x - g.cx, dy = y - g.cy;
  if (g.side * dy >= 0.0) return std::abs(std::hypot(dx, dy) - 1.0);
  return std::min(std::hypot(dx - 1.0, dy), std::hypot(dx + 1.0, dy));
}

Dataset gen_half_moons(int n_total, int n_arcs, double noise_sigma, std::uint64_t seed) {
  if (n_arcs < 1 || n_total < n_arcs) throw std::invalid_argument("half-moons needs n_total >= n_arcs >= 1");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset out;
  out.name = "half-moons";
  out.features.resize(2, n_total);
  out.labels.emplace();
  out.labels->reserve(n_total);
  Eigen::Index col = 0;
  for (int a = 0; a < n_arcs; ++a) {
    const int count = n_total / n_arcs + (a < n_total % n_arcs ? 1 : 0);
    const ArcGeometry g = half_moon_arc(a);
    for (int i = 0; i < count; ++i, ++col) {
      const double t = angle(rng);
      double x = g.cx + std::cos(t);
      double y = g.cy + g.side * std::sin(t);
      if (noise_sigma > 0.0) {
        x += noise_sigma * noise(rng);
        y += noise_sigma * noise(rng);
      }
      out.features(0, col) = x;
      out.features(1, col) = y;
      out.labels->push_back(a);
    }
  }
  return out;
}

Dataset gen_gaussian_blobs(int n_per, const Matrix& centers, double sigma, std::uint64_t seed) {
  if (n_per < 0) throw std::invalid_argument("n_per must be >= 0");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Eigen::Index k = centers.rows(), d = centers.cols();
  Dataset out;
  out.name = "blobs";
  out.features.resize(d, k * n_per);
  out.labels.emplace();
  Eigen::Index col = 0;
  for (Eigen::Index c = 0; c < k; ++c)
    for (int i = 0; i < n_per; ++i, ++col) {
      for (Eigen::Index j = 0; j < d; ++j) out.features(j, col) = centers(c, j) + sigma * noise(rng);
      out.labels->push_back(static_cast<int>(c));
    }
  return out;
}

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

void write_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string magic_hex(std::uint32_t magic) {
  std::ostringstream s;
  s << "0x" << std::hex << magic;
  return s.str();
}

}  // namespace

IdxImages parse_idx_images(const std::string& bytes) {
  if (bytes.size() < 4) throw IdxTruncatedError("IDX images: file shorter than the magic number");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic)
    throw IdxFormatError("IDX images: bad magic " + magic_hex(magic) + ", expected 0x803");
  if (bytes.size() < 16) throw IdxTruncatedError("IDX images: truncated header");
  const std::uint64_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
  const std::uint64_t expected = 16 + n * rows * cols;
  if (bytes.size() < expected)
    throw IdxTruncatedError("IDX images: payload has " + std::to_string(bytes.size() - 16) + " bytes, header implies " +
                            std::to_string(expected - 16));
  if (bytes.size() > expected) throw IdxFormatError("IDX images: trailing bytes after payload");

  IdxImages out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  const auto d = static_cast<Eigen::Index>(rows * cols);
  out.pixels.resize(d, static_cast<Eigen::Index>(n));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 16;
  for (Eigen::Index i = 0; i < out.pixels.cols(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) out.pixels(j, i) = static_cast<double>(*p++) / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(const std::string& bytes) {
  if (bytes.size() < 4) throw IdxTruncatedError("IDX labels: file shorter than the magic number");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic)
    throw IdxFormatError("IDX labels: bad magic " + magic_hex(magic) + ", expected 0x801");
  if (bytes.size() < 8) throw IdxTruncatedError("IDX labels: truncated header");
  const std::uint64_t n = read_be32(bytes, 4);
  if (bytes.size() < 8 + n) throw IdxTruncatedError("IDX labels: payload shorter than header count");
  if (bytes.size() > 8 + n) throw IdxFormatError("IDX labels: trailing bytes after payload");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

IdxImages load_idx_images(const std::filesystem::path& path) { return parse_idx_images(read_file(path)); }

std::vector<int> load_idx_labels(const std::filesystem::path& path) { return parse_idx_labels(read_file(path)); }

std::string encode_idx_images(const std::vector<std::uint8_t>& pixels, std::uint32_t count, std::uint32_t rows,
                              std::uint32_t cols) {
  if (pixels.size() != static_cast<std::size_t>(count) * rows * cols)
    throw std::invalid_argument("pixel count does not match header");
  std::string out;
  write_be32(out, kIdxImagesMagic);
  write_be32(out, count);
  write_be32(out, rows);
  write_be32(out, cols);
  out.append(pixels.begin(), pixels.end());
  return out;
}

std::string encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string out;
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  IdxImages img = load_idx_images(images);
  Dataset out;
  out.name = images.filename().string();
  out.features = std::move(img.pixels);
  out.image_rows = img.rows;
  out.image_cols = img.cols;
  if (labels) {
    out.labels = load_idx_labels(*labels);
    if (static_cast<Eigen::Index>(out.labels->size()) != out.size())
      throw IdxFormatError("IDX label count " + std::to_string(out.labels->size()) + " does not match image count " +
                           std::to_string(out.size()));
  }
  return out;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& x) {
  if (x.cols() == 0) throw std::invalid_argument("cannot fit a scaler on an empty matrix");
  return {x.rowwise().minCoeff(), x.rowwise().maxCoeff()};
}

Matrix MinMaxScaler::transform(const Matrix& x) const {
  if (x.rows() != dim()) throw DimensionError("scaler dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const double range = hi(j) - lo(j);
    if (range > 0.0)
      out.row(j) = (x.row(j).array() - lo(j)) / range;
    else
      out.row(j).setConstant(0.5);
  }
  return out;
}

Matrix MinMaxScaler::inverse(const Matrix& x) const {
  if (x.rows() != dim()) throw DimensionError("scaler dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const double range = hi(j) - lo(j);
    if (range > 0.0)
      out.row(j) = x.row(j).array() * range + lo(j);
    else
      out.row(j).setConstant(lo(j));
  }
  return out;
}

Normalized normalize_minmax(const Matrix& x) {
  MinMaxScaler s = MinMaxScaler::fit(x);
  return {s.transform(x), std::move(s)};
}

Dataset stratified_subset(const Dataset& data, int count, std::uint64_t seed) {
  if (!data.labels) throw std::invalid_argument("stratified subset needs labels");
  if (count < 0 || count > data.size()) throw std::invalid_argument("subset size out of range");
  const int classes = data.num_classes();
  std::vector<std::vector<Eigen::Index>> by_class(classes);
  for (Eigen::Index i = 0; i < data.size(); ++i) by_class[(*data.labels)[i]].push_back(i);
  Rng rng(seed);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  // Largest-remainder allocation proportional to class frequency.
  std::vector<int> take(classes, 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < classes; ++c) {
    const double exact = static_cast<double>(count) * by_class[c].size() / static_cast<double>(data.size());
    take[c] = static_cast<int>(std::floor(exact));
    assigned += take[c];
    remainders.emplace_back(exact - take[c], c);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int i = 0; assigned < count; ++i, ++assigned) ++take[remainders[i % classes].second];

  std::vector<Eigen::Index> chosen;
  for (int c = 0; c < classes; ++c)
    chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].begin() + take[c]);
  std::sort(chosen.begin(), chosen.end());

  Dataset out;
  out.name = data.name + "-subset";
  out.image_rows = data.image_rows;
  out.image_cols = data.image_cols;
  out.features.resize(data.dim(), static_cast<Eigen::Index>(chosen.size()));
  out.labels.emplace();
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    out.features.col(static_cast<Eigen::Index>(i)) = data.features.col(chosen[i]);
    out.labels->push_back((*data.labels)[chosen[i]]);
  }
  return out;
}

}  // namespace vaeem
