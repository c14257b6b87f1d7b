#include "vaeem/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "vaeem/config.hpp"
#include "vaeem/io.hpp"

namespace vaeem {

namespace {

constexpr char kMagic[8] = {'V', 'A', 'E', 'E', 'M', 'C', 'K', 'P'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  std::string take() { return std::move(out_); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f32() { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>())); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string bytes() {
    const std::uint32_t n = u32();
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const char* take(std::size_t n) {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le() {
    const char* p = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_mlp(Writer& w, const Mlp& mlp) {
  w.u8(mlp.activate_output() ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(mlp.layers().size()));
  for (const auto& l : mlp.layers()) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f32(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f32(l.bias(r));
  }
}

Mlp read_mlp(Reader& r, double slope) {
  const bool activate = r.u8() != 0;
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw CheckpointError("implausible layer count " + std::to_string(count));
  LayerStack layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
      throw CheckpointError("implausible layer shape");
    DenseLayer l{Matrix(rows, cols), Vector(rows)};
    for (Eigen::Index a = 0; a < l.weight.rows(); ++a)
      for (Eigen::Index b = 0; b < l.weight.cols(); ++b) l.weight(a, b) = r.f32();
    for (Eigen::Index a = 0; a < l.bias.size(); ++a) l.bias(a) = r.f32();
    layers.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(layers), slope, activate);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("declared shapes are inconsistent: ") + e.what());
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(ck.version);
  w.u64(ck.seed);
  w.bytes(format_em_config(ck.config));
  w.u32(static_cast<std::uint32_t>(ck.image_rows));
  w.u32(static_cast<std::uint32_t>(ck.image_cols));
  if (ck.scaler) {
    w.u32(static_cast<std::uint32_t>(ck.scaler->dim()));
    for (Eigen::Index j = 0; j < ck.scaler->dim(); ++j) w.f64(ck.scaler->lo(j));
    for (Eigen::Index j = 0; j < ck.scaler->dim(); ++j) w.f64(ck.scaler->hi(j));
  } else {
    w.u32(0);
  }
  w.u32(static_cast<std::uint32_t>(ck.models.size()));
  for (const auto& m : ck.models) {
    w.f64(m.trunk().slope());
    write_mlp(w, m.trunk());
    write_mlp(w, m.mean_head());
    write_mlp(w, m.logvar_head());
    write_mlp(w, m.decoder());
  }
  const Matrix& u = ck.assignments.u;
  w.u32(static_cast<std::uint32_t>(u.rows()));
  w.u32(static_cast<std::uint32_t>(u.cols()));
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index k = 0; k < u.cols(); ++k) w.f32(u(i, k));
  w.u32(static_cast<std::uint32_t>(ck.history.records.size()));
  for (const auto& rec : ck.history.records) {
    w.u32(static_cast<std::uint32_t>(rec.iteration));
    w.f64(rec.objective);
    w.f64(rec.mean_max_responsibility);
    w.u8(rec.accuracy ? 1 : 0);
    w.f64(rec.accuracy.value_or(0.0));
    w.f64(rec.learning_rate);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw CheckpointError("not a checkpoint file (bad magic)");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
  ck.seed = r.u64();
  try {
    ck.config = parse_config(r.bytes()).em;
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("embedded config: ") + e.what());
  }
  ck.image_rows = static_cast<int>(r.u32());
  ck.image_cols = static_cast<int>(r.u32());
  if (const std::uint32_t dim = r.u32(); dim > 0) {
    MinMaxScaler s{Vector(dim), Vector(dim)};
    for (std::uint32_t j = 0; j < dim; ++j) s.lo(j) = r.f64();
    for (std::uint32_t j = 0; j < dim; ++j) s.hi(j) = r.f64();
    ck.scaler = std::move(s);
  }
  const std::uint32_t k = r.u32();
  if (k > 4096) throw CheckpointError("implausible cluster count");
  for (std::uint32_t c = 0; c < k; ++c) {
    const double slope = r.f64();
    Mlp trunk = read_mlp(r, slope);
    Mlp mean_head = read_mlp(r, slope);
    Mlp logvar_head = read_mlp(r, slope);
    Mlp decoder = read_mlp(r, slope);
    try {
      ck.models.emplace_back(std::move(trunk), std::move(mean_head), std::move(logvar_head), std::move(decoder),
                             ck.config.reconstruction_weight, ck.config.dropout_rate);
    } catch (const std::exception& e) {
      throw CheckpointError("cluster " + std::to_string(c) + ": " + e.what());
    }
  }
  const std::uint32_t n = r.u32(), kk = r.u32();
  if (kk != k && n > 0) throw CheckpointError("assignment columns do not match cluster count");
  ck.assignments.u.resize(n, kk);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t c = 0; c < kk; ++c) ck.assignments.u(i, c) = r.f32();
  const std::uint32_t records = r.u32();
  for (std::uint32_t i = 0; i < records; ++i) {
    EmRecord rec;
    rec.iteration = static_cast<int>(r.u32());
    rec.objective = r.f64();
    rec.mean_max_responsibility = r.f64();
    const bool has_acc = r.u8() != 0;
    const double acc = r.f64();
    if (has_acc) rec.accuracy = acc;
    rec.learning_rate = r.f64();
    ck.history.records.push_back(rec);
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace vaeem
