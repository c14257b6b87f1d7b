#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "vaeem/checkpoint.hpp"
#include "vaeem/config.hpp"
#include "vaeem/em_cluster.hpp"
#include "vaeem/gmm.hpp"
#include "vaeem/io.hpp"
#include "vaeem/metrics.hpp"

namespace vaeem::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

void require_labels(const Dataset& data, const std::string& command) {
  if (!data.labels) throw std::invalid_argument(command + " needs labelled data (a label column or an IDX label file)");
}

void write_json(const std::filesystem::path& path, const json& doc) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, doc.dump(2) + "\n");
}

struct Scores {
  double accuracy = 0.0;
  double nmi = 0.0;
};

Scores score(const std::vector<int>& pred, const std::vector<int>& truth, int clusters) {
  const int classes = *std::max_element(truth.begin(), truth.end()) + 1;
  return {clustering_accuracy(pred, truth, std::max(clusters, classes)), vaeem::nmi(pred, truth)};
}

std::string history_csv(const EmHistory& history) {
  std::string out = "iteration,objective,accuracy,lr\n";
  for (const auto& r : history.records) {
    out += std::to_string(r.iteration) + ',' + format_double(r.objective) + ',';
    if (r.accuracy) out += format_double(*r.accuracy);
    out += ',' + format_double(r.learning_rate) + '\n';
  }
  return out;
}

/// Applies the normalisation named by `mode` and returns the fitted scaler, if any.
std::optional<MinMaxScaler> normalise(Dataset& data, const std::string& mode) {
  if (mode != "minmax") return std::nullopt;
  Normalized n = normalize_minmax(data.features);
  data.features = std::move(n.features);
  return std::move(n.scaler);
}

Matrix to_model_space(const Checkpoint& ck, const Dataset& data) {
  const int expected = ck.models.front().data_dim();
  if (data.dim() != expected)
    throw std::invalid_argument("checkpoint expects " + std::to_string(expected) + "-dimensional samples but data has " +
                                std::to_string(data.dim()));
  return ck.scaler ? ck.scaler->transform(data.features) : data.features;
}

void train_one(const RunConfig& rc, const Dataset& data, const std::optional<MinMaxScaler>& scaler,
               const std::filesystem::path& out_dir, int log_every) {
  std::filesystem::create_directories(out_dir);
  std::vector<double> iteration_seconds;
  auto last = Clock::now();
  const auto start = last;

  FitOptions options;
  options.labels = data.labels ? &*data.labels : nullptr;
  options.on_warning = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  options.on_iteration = [&](const EmRecord& rec) {
    const auto now = Clock::now();
    iteration_seconds.push_back(std::chrono::duration<double>(now - last).count());
    last = now;
    if (log_every > 0 && (rec.iteration % log_every == 0 || rec.iteration == rc.em.em_iterations)) {
      std::cerr << "iter " << rec.iteration << '/' << rc.em.em_iterations << " objective " << rec.objective;
      if (rec.accuracy) std::cerr << " accuracy " << *rec.accuracy;
      std::cerr << " lr " << rec.learning_rate << " (" << iteration_seconds.back() << " s)\n";
    }
  };
  FitResult result = fit(rc.em, data.features, options);

  Checkpoint ck;
  ck.config = rc.em;
  ck.seed = rc.em.seed;
  ck.image_rows = data.image_rows;
  ck.image_cols = data.image_cols;
  ck.scaler = scaler;
  ck.models = std::move(result.models);
  ck.assignments = std::move(result.assignments);
  ck.history = result.history;
  save_checkpoint(out_dir / "checkpoint.bin", ck);
  write_file_atomic(out_dir / "history.csv", history_csv(ck.history));

  json manifest;
  manifest["dataset"] = data.name;
  manifest["samples"] = data.size();
  manifest["seed"] = rc.em.seed;
  manifest["config"] = format_em_config(rc.em);
  manifest["iteration_seconds"] = iteration_seconds;
  manifest["total_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
  json metrics;
  if (!ck.history.records.empty()) {
    const EmRecord& final_rec = ck.history.records.back();
    metrics["objective"] = final_rec.objective;
    metrics["mean_max_responsibility"] = final_rec.mean_max_responsibility;
    if (final_rec.accuracy) metrics["accuracy"] = *final_rec.accuracy;
  }
  if (data.labels && ck.assignments.size() > 0)
    metrics["nmi"] = vaeem::nmi(ck.assignments.hard_labels(), *data.labels);
  manifest["final_metrics"] = metrics;
  manifest["warnings"] = result.history.warnings.size();
  write_json(out_dir / "manifest.json", manifest);

  std::cout << out_dir.string() << ":";
  if (metrics.contains("accuracy")) std::cout << " accuracy " << format_double(metrics["accuracy"].get<double>());
  if (metrics.contains("objective")) std::cout << " objective " << format_double(metrics["objective"].get<double>());
  std::cout << '\n';
}

}  // namespace

Dataset load_dataset(const DataSource& source) {
  if (!source.csv.empty() && !source.images.empty())
    throw std::invalid_argument("give either a CSV file or IDX images, not both");
  if (!source.csv.empty()) return read_csv_dataset(source.csv);
  if (!source.images.empty())
    return load_idx_dataset(source.images, source.labels.empty() ? std::nullopt
                                                                 : std::optional<std::filesystem::path>(source.labels));
  throw std::invalid_argument("no input data given (use --data or --images)");
}

void gen_data(const GenDataOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("gen-data needs --out");
  Dataset d;
  if (o.kind == "half-moons") {
    d = gen_half_moons(o.n, o.arcs, o.noise, o.seed);
  } else if (o.kind == "blobs") {
    if (o.centers < 1 || o.dim < 1) throw std::invalid_argument("blobs need --centers >= 1 and --dim >= 1");
    // Centres on a line along the first axis, `separation` sigmas apart.
    Matrix centers = Matrix::Zero(o.centers, o.dim);
    for (int c = 0; c < o.centers; ++c) centers(c, 0) = c * o.separation * o.sigma;
    d = gen_gaussian_blobs(o.n_per, centers, o.sigma, o.seed);
  } else {
    throw std::invalid_argument("unknown data kind '" + o.kind + "' (expected half-moons or blobs)");
  }
  if (o.out.has_parent_path()) std::filesystem::create_directories(o.out.parent_path());
  write_file_atomic(o.out, dataset_to_csv(d.features, d.labels));
}

void train(const TrainOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("train needs --out");
  if (o.runs < 1) throw std::invalid_argument("--runs must be >= 1");
  RunConfig rc = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  DataSource source = o.data;
  if (source.empty()) source = {rc.train_data, rc.train_images, rc.train_labels};
  const bool from_csv = !source.csv.empty();
  if (o.config_path.empty() && from_csv) rc.em = EmConfig::synthetic();
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_config_value(rc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) rc.em.seed = *o.seed;
  rc.em.validate();

  Dataset data = load_dataset(source);
  if (data.dim() != rc.em.encoder_dims.front())
    throw ConfigError("encoder_dims", "input width " + std::to_string(rc.em.encoder_dims.front()) +
                                          " does not match data dimension " + std::to_string(data.dim()));
  const std::optional<MinMaxScaler> scaler = normalise(data, rc.normalize);

  for (int r = 0; r < o.runs; ++r) {
    RunConfig run = rc;
    run.em.seed = rc.em.seed + static_cast<std::uint64_t>(r);
    train_one(run, data, scaler, o.runs == 1 ? o.out : o.out / ("run-" + std::to_string(r)), o.log_every);
  }
}

void eval(const EvalOptions& o) {
  std::vector<std::filesystem::path> paths = o.checkpoints;
  if (paths.empty()) throw std::invalid_argument("eval needs --checkpoint");
  if (o.runs > 0) {
    const std::filesystem::path root = paths.front();
    paths.clear();
    for (int r = 0; r < o.runs; ++r) paths.push_back(root / ("run-" + std::to_string(r)) / "checkpoint.bin");
  }
  const Dataset data = load_dataset(o.data);
  require_labels(data, "eval");

  json report;
  json runs = json::array();
  std::vector<double> acc;
  for (const auto& path : paths) {
    const Checkpoint ck = load_checkpoint(path);
    const Matrix x = to_model_space(ck, data);
    const SoftAssignments u =
        assign_all(ck.models, x, ck.config.mc_samples_e, o.seed.value_or(ck.seed), ck.config.threads);
    const Scores s = score(u.hard_labels(), *data.labels, static_cast<int>(ck.models.size()));
    acc.push_back(s.accuracy);
    runs.push_back({{"checkpoint", path.string()}, {"accuracy", s.accuracy}, {"nmi", s.nmi}});
    std::cout << path.string() << ": accuracy " << format_double(s.accuracy) << " nmi " << format_double(s.nmi)
              << '\n';
  }
  report["runs"] = runs;
  if (acc.size() > 1) {
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(acc.size()));
    const double best = *std::max_element(acc.begin(), acc.end());
    report["accuracy_mean"] = mean;
    report["accuracy_std"] = std_dev;
    report["accuracy_best"] = best;
    std::cout << "accuracy mean " << format_double(mean) << " std " << format_double(std_dev) << " best "
              << format_double(best) << '\n';
  }
  write_json(o.out, report);
}

void generate(const GenerateOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("generate needs --out");
  if (o.count < 0) throw std::invalid_argument("--count must be >= 0");
  if (o.all == o.cluster.has_value()) throw std::invalid_argument("give exactly one of --cluster or --all");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const int k = static_cast<int>(ck.models.size());
  std::vector<int> clusters;
  if (o.all) {
    clusters.resize(k);
    std::iota(clusters.begin(), clusters.end(), 0);
  } else {
    clusters.push_back(*o.cluster);
  }
  const std::uint64_t seed = o.seed.value_or(ck.seed);
  std::vector<Matrix> samples;
  for (int c : clusters) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
    Matrix s = vaeem::generate(ck.models, c, o.count, rng);
    samples.push_back(ck.scaler ? ck.scaler->inverse(s) : s);
  }

  if (o.out.has_parent_path()) std::filesystem::create_directories(o.out.parent_path());
  if (ck.image_rows > 0 && ck.image_cols > 0) {
    write_file_atomic(o.out, pgm_grid(samples, ck.image_rows, ck.image_cols));
    return;
  }
  const Eigen::Index d = ck.models.front().data_dim();
  Matrix all(d, static_cast<Eigen::Index>(clusters.size()) * o.count);
  std::vector<int> labels;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    all.middleCols(static_cast<Eigen::Index>(i) * o.count, o.count) = samples[i];
    labels.insert(labels.end(), o.count, clusters[i]);
  }
  write_file_atomic(o.out, dataset_to_csv(all, labels, "cluster"));
}

void baseline_gmm(const BaselineOptions& o) {
  const Dataset data = load_dataset(o.data);
  require_labels(data, "baseline-gmm");
  const GmmFit f = gmm_fit(data.features, o.k, o.iterations, o.seed);
  for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
  const Scores s = score(gmm_predict(f.params, data.features), *data.labels, o.k);
  std::cout << "accuracy " << format_double(s.accuracy) << " nmi " << format_double(s.nmi) << '\n';
  write_json(o.out, {{"dataset", data.name},
                     {"k", o.k},
                     {"iterations", o.iterations},
                     {"seed", o.seed},
                     {"accuracy", s.accuracy},
                     {"nmi", s.nmi},
                     {"log_likelihood", f.log_likelihood.back()}});
}

}  // namespace vaeem::cli
