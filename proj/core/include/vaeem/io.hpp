#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaeem/data.hpp"

namespace vaeem {

/// Shortest decimal representation that round-trips.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

/// CSV with a header row `x0,...,x{d-1}[,label]`.
Dataset parse_csv_dataset(const std::string& text, const std::string& name = "csv");
Dataset read_csv_dataset(const std::filesystem::path& path);
std::string dataset_to_csv(const Matrix& features, const std::optional<std::vector<int>>& labels,
                           const std::string& label_column = "label");

/// Binary PGM (P5, maxval 255). `grid[r]` holds the samples of grid row r as
/// columns of a (img_rows*img_cols) x count matrix; pixels are
/// clamp(round(255 v)).
std::string pgm_grid(const std::vector<Matrix>& grid, int img_rows, int img_cols);

}  // namespace vaeem
