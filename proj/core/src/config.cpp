#include "vaeem/config.hpp"

#include <charconv>
#include <limits>
#include <sstream>

#include "vaeem/io.hpp"

namespace vaeem {

namespace {

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(ws) - b + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
    throw ConfigError(key, "cannot parse '" + value + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& value) { return parse_value<int>(key, value); }
double parse_real(const std::string& key, const std::string& value) { return parse_value<double>(key, value); }

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

std::vector<int> parse_dims(const std::string& key, const std::string& value) {
  std::vector<int> dims;
  std::string part;
  std::istringstream in(value);
  while (std::getline(in, part, '-')) {
    const int v = parse_int(key, trim(part));
    if (v <= 0) throw ConfigError(key, "widths must be positive");
    dims.push_back(v);
  }
  if (dims.size() < 2) throw ConfigError(key, "expected widths like 784-500-20");
  return dims;
}

}  // namespace

std::string format_dims(const std::vector<int>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(dims[i]);
  }
  return out;
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  EmConfig& em = config.em;
  if (key == "clusters") {
    em.clusters = parse_int(key, value);
  } else if (key == "encoder_dims") {
    em.encoder_dims = parse_dims(key, value);
  } else if (key == "decoder_dims") {
    em.decoder_dims = parse_dims(key, value);
  } else if (key == "network") {
    if (value != "fully_connected") throw ConfigError(key, "only fully_connected is supported");
  } else if (key == "activation_slope") {
    em.activation_slope = parse_real(key, value);
  } else if (key == "dropout_rate") {
    em.dropout_rate = value == "-" ? 0.0 : parse_real(key, value);
  } else if (key == "learning_rate") {
    em.learning_rate = parse_real(key, value);
  } else if (key == "lr_decay") {
    em.lr_decay = value == "-" ? 1.0 : parse_real(key, value);
    if (value == "-") em.decay_every = 0;
  } else if (key == "decay_every") {
    em.decay_every = value == "-" ? 0 : parse_int(key, value);
  } else if (key == "optimizer") {
    if (value != "adam") throw ConfigError(key, "only adam is supported");
  } else if (key == "batch_size") {
    em.batch_size = parse_int(key, value);
  } else if (key == "mc_samples_e") {
    em.mc_samples_e = parse_int(key, value);
  } else if (key == "mc_samples_m") {
    em.mc_samples_m = parse_int(key, value);
  } else if (key == "reconstruction_weight") {
    em.reconstruction_weight = parse_real(key, value);
  } else if (key == "epochs_per_m_step") {
    em.epochs_per_m_step = parse_int(key, value);
  } else if (key == "em_iterations") {
    em.em_iterations = parse_int(key, value);
  } else if (key == "seed") {
    em.seed = parse_value<std::uint64_t>(key, value);
  } else if (key == "threads") {
    em.threads = parse_int(key, value);
  } else if (key == "frozen_noise") {
    em.frozen_noise = parse_bool(key, value);
  } else if (key == "train_data") {
    config.train_data = value;
  } else if (key == "train_images") {
    config.train_images = value;
  } else if (key == "train_labels") {
    config.train_labels = value;
  } else if (key == "normalize") {
    if (value != "minmax" && value != "none") throw ConfigError(key, "expected minmax or none");
    config.normalize = value;
  } else {
    throw ConfigError(key, "unknown key");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(trim(line), "line " + std::to_string(line_no) + " is not a key = value pair");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.empty()) throw ConfigError(key, "missing value");
    apply_config_value(config, key, value);
  }
  config.em.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string format_em_config(const EmConfig& c) {
  std::ostringstream out;
  out << "clusters = " << c.clusters << '\n'
      << "encoder_dims = " << format_dims(c.encoder_dims) << '\n'
      << "decoder_dims = " << format_dims(c.decoder_dims) << '\n'
      << "activation_slope = " << format_double(c.activation_slope) << '\n'
      << "dropout_rate = " << format_double(c.dropout_rate) << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "lr_decay = " << format_double(c.lr_decay) << '\n'
      << "decay_every = " << c.decay_every << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "mc_samples_e = " << c.mc_samples_e << '\n'
      << "mc_samples_m = " << c.mc_samples_m << '\n'
      << "reconstruction_weight = " << format_double(c.reconstruction_weight) << '\n'
      << "epochs_per_m_step = " << c.epochs_per_m_step << '\n'
      << "em_iterations = " << c.em_iterations << '\n'
      << "seed = " << c.seed << '\n'
      << "threads = " << c.threads << '\n'
      << "frozen_noise = " << (c.frozen_noise ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace vaeem
