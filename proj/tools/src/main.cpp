#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "vaeem/checkpoint.hpp"
#include "vaeem/config.hpp"
#include "vaeem/data.hpp"
#include "vaeem/malloc_tuning.hpp"

namespace {

void add_data_options(CLI::App* cmd, vaeem::cli::DataSource& data) {
  cmd->add_option("--data", data.csv, "CSV file with header x0,...,x{d-1}[,label]");
  cmd->add_option("--images", data.images, "IDX image file");
  cmd->add_option("--labels", data.labels, "IDX label file");
}

}  // namespace

int main(int argc, char** argv) {
  vaeem::tune_malloc_for_training();
  CLI::App app{"Clustering with per-cluster variational autoencoders trained by EM"};
  app.fallthrough();
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  app.add_option("--seed", seed, "Random seed (overrides the config file)");
  app.add_option("--config", config_path, "Config file of key = value lines");
  app.add_option("--out", out, "Output file or directory");

  vaeem::cli::GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic labelled dataset as CSV");
  gen_cmd->add_option("kind", gen.kind, "half-moons or blobs")->check(CLI::IsMember({"half-moons", "blobs"}));
  gen_cmd->add_option("--n", gen.n, "Half-moons: total points");
  gen_cmd->add_option("--arcs", gen.arcs, "Half-moons: number of arcs");
  gen_cmd->add_option("--noise", gen.noise, "Half-moons: Gaussian noise sigma");
  gen_cmd->add_option("--n-per", gen.n_per, "Blobs: points per centre");
  gen_cmd->add_option("--centers", gen.centers, "Blobs: number of centres");
  gen_cmd->add_option("--dim", gen.dim, "Blobs: dimension");
  gen_cmd->add_option("--separation", gen.separation, "Blobs: centre spacing in sigmas");
  gen_cmd->add_option("--sigma", gen.sigma, "Blobs: standard deviation");

  vaeem::cli::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Fit the mixture of VAEs and write checkpoint, history and manifest");
  add_data_options(train_cmd, train.data);
  train_cmd->add_option("--set", train.overrides, "Override a config key (key=value), repeatable");
  train_cmd->add_option("--runs", train.runs, "Independent runs with seeds seed, seed+1, ...");
  train_cmd->add_option("--log-every", train.log_every, "Print progress every N iterations (0: quiet)");

  vaeem::cli::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Assign samples with a trained checkpoint and report accuracy and NMI");
  eval_cmd->add_option("--checkpoint", eval.checkpoints, "Checkpoint file(s), or a run directory with --runs")
      ->required();
  eval_cmd->add_option("--runs", eval.runs, "Evaluate run-0 .. run-{N-1} under the checkpoint directory");
  add_data_options(eval_cmd, eval.data);

  vaeem::cli::GenerateOptions gen_samples;
  auto* generate_cmd = app.add_subcommand("generate", "Decode prior samples from one or all clusters");
  generate_cmd->add_option("--checkpoint", gen_samples.checkpoint, "Checkpoint file")->required();
  generate_cmd->add_option("--cluster", gen_samples.cluster, "Cluster index");
  generate_cmd->add_flag("--all", gen_samples.all, "Sample every cluster");
  generate_cmd->add_option("--count", gen_samples.count, "Samples per cluster");

  vaeem::cli::BaselineOptions baseline;
  auto* gmm_cmd = app.add_subcommand("baseline-gmm", "Diagonal Gaussian mixture baseline on raw features");
  add_data_options(gmm_cmd, baseline.data);
  gmm_cmd->add_option("--k", baseline.k, "Number of components");
  gmm_cmd->add_option("--iterations", baseline.iterations, "EM iterations");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen.seed = seed.value_or(0);
      gen.out = out;
      vaeem::cli::gen_data(gen);
    } else if (*train_cmd) {
      train.config_path = config_path;
      train.seed = seed;
      train.out = out;
      vaeem::cli::train(train);
    } else if (*eval_cmd) {
      eval.seed = seed;
      eval.out = out;
      vaeem::cli::eval(eval);
    } else if (*generate_cmd) {
      gen_samples.seed = seed;
      gen_samples.out = out;
      vaeem::cli::generate(gen_samples);
    } else if (*gmm_cmd) {
      baseline.seed = seed.value_or(0);
      baseline.out = out;
      vaeem::cli::baseline_gmm(baseline);
    }
  } catch (const vaeem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vaeem::IdxError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 1;
  } catch (const vaeem::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
