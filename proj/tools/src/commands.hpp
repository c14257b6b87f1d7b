#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaeem/data.hpp"

namespace vaeem::cli {

/// Where a command reads its samples from: a CSV file, or an IDX image file
/// with an optional IDX label file.
struct DataSource {
  std::string csv;
  std::string images;
  std::string labels;

  bool empty() const { return csv.empty() && images.empty(); }
};

Dataset load_dataset(const DataSource& source);

struct GenDataOptions {
  std::string kind = "half-moons";
  int n = 5000;
  int arcs = 5;
  double noise = 0.05;
  int n_per = 100;
  int centers = 3;
  int dim = 2;
  double separation = 8.0;  // centre spacing in units of sigma
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
void gen_data(const GenDataOptions& options);

struct TrainOptions {
  DataSource data;
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
  int runs = 1;
  int log_every = 0;
  std::filesystem::path out;
};
void train(const TrainOptions& options);

struct EvalOptions {
  std::vector<std::filesystem::path> checkpoints;
  int runs = 0;  // > 0: read run-i/checkpoint.bin under checkpoints[0]
  DataSource data;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
};
void eval(const EvalOptions& options);

struct GenerateOptions {
  std::filesystem::path checkpoint;
  std::optional<int> cluster;
  bool all = false;
  int count = 10;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
};
void generate(const GenerateOptions& options);

struct BaselineOptions {
  DataSource data;
  int k = 10;
  int iterations = 100;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};
void baseline_gmm(const BaselineOptions& options);

}  // namespace vaeem::cli
