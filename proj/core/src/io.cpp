#include "vaeem/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace vaeem {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return {buf, end};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot write " + path.string() + ": " + ec.message());
  }
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

double parse_number(const std::string& cell, std::size_t line) {
  double v = 0.0;
  const std::string t = trim(cell);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw std::invalid_argument("CSV line " + std::to_string(line) + ": '" + t + "' is not a number");
  return v;
}

}  // namespace

Dataset parse_csv_dataset(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV is empty");
  std::vector<std::string> header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  const bool labelled = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (labelled ? 1 : 0);
  if (d == 0) throw std::invalid_argument("CSV has no feature columns");
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "x" + std::to_string(j))
      throw std::invalid_argument("CSV header column " + std::to_string(j) + " is '" + header[j] + "', expected x" +
                                  std::to_string(j));

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " columns");
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number(cells[j], line_no));
    if (labelled) {
      const double lab = parse_number(cells[d], line_no);
      if (lab < 0 || lab != std::floor(lab))
        throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": label must be a non-negative integer");
      labels.push_back(static_cast<int>(lab));
    }
  }
  Dataset out;
  out.name = name;
  const auto n = static_cast<Eigen::Index>(values.size() / d);
  out.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(d), n);
  if (labelled) out.labels = std::move(labels);
  return out;
}

Dataset read_csv_dataset(const std::filesystem::path& path) {
  return parse_csv_dataset(read_file(path), path.filename().string());
}

std::string dataset_to_csv(const Matrix& features, const std::optional<std::vector<int>>& labels,
                           const std::string& label_column) {
  std::string out;
  for (Eigen::Index j = 0; j < features.rows(); ++j) {
    if (j) out += ',';
    out += "x" + std::to_string(j);
  }
  if (labels) out += "," + label_column;
  out += '\n';
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    for (Eigen::Index j = 0; j < features.rows(); ++j) {
      if (j) out += ',';
      out += format_double(features(j, i));
    }
    if (labels) out += "," + std::to_string((*labels)[i]);
    out += '\n';
  }
  return out;
}

std::string pgm_grid(const std::vector<Matrix>& grid, int img_rows, int img_cols) {
  if (img_rows <= 0 || img_cols <= 0) throw std::invalid_argument("PGM grid needs positive image dimensions");
  Eigen::Index per_row = 0;
  for (const auto& r : grid) {
    if (r.cols() > 0 && r.rows() != static_cast<Eigen::Index>(img_rows) * img_cols)
      throw DimensionError("sample size does not match image dimensions");
    per_row = std::max(per_row, r.cols());
  }
  const auto width = static_cast<std::size_t>(per_row * img_cols);
  const auto height = static_cast<std::size_t>(grid.size() * img_rows);
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::string pixels(width * height, '\0');
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (Eigen::Index s = 0; s < grid[g].cols(); ++s)
      for (int r = 0; r < img_rows; ++r)
        for (int c = 0; c < img_cols; ++c) {
          double v = grid[g](static_cast<Eigen::Index>(r) * img_cols + c, s);
          if (!std::isfinite(v)) v = v > 0 ? 1.0 : 0.0;
          const double scaled = std::clamp(std::round(255.0 * v), 0.0, 255.0);
          const std::size_t y = g * img_rows + r;
          const std::size_t x = static_cast<std::size_t>(s) * img_cols + c;
          pixels[y * width + x] = static_cast<char>(static_cast<unsigned char>(scaled));
        }
  return out + pixels;
}

}  // namespace vaeem
