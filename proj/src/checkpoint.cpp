#include "qaface/checkpoint.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qaface {

namespace {

class BlobWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u64(uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void doubles(const Vector& v) {
    u64(v.size());
    for (double e : v) f64(e);
  }
  void i64s(const std::vector<int64_t>& v) {
    u64(v.size());
    for (int64_t e : v) i64(e);
  }
  void u32s(const std::vector<uint32_t>& v) {
    u64(v.size());
    for (uint32_t e : v) u64(e);
  }
  void matrix(const Matrix& m) {
    i64(m.rows);
    i64(m.cols);
    for (double e : m.values) f64(e);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.append(s);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string bytes) : bytes_(std::move(bytes)) {}

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint64_t u64() {
    const char* p = take(8);
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Vector doubles() {
    Vector v(checked_count(u64()));
    for (auto& e : v) e = f64();
    return v;
  }
  std::vector<int64_t> i64s() {
    std::vector<int64_t> v(checked_count(u64()));
    for (auto& e : v) e = i64();
    return v;
  }
  std::vector<uint32_t> u32s() {
    std::vector<uint32_t> v(checked_count(u64()));
    for (auto& e : v) e = static_cast<uint32_t>(u64());
    return v;
  }
  Matrix matrix() {
    Matrix m;
    m.rows = i64();
    m.cols = i64();
    if (m.rows < 0 || m.cols < 0) throw CorruptFileError("negative matrix shape");
    m.values.resize(checked_count(static_cast<uint64_t>(m.rows * m.cols)));
    for (auto& e : m.values) e = f64();
    return m;
  }
  std::string str() {
    size_t n = checked_count(u64());
    const char* p = take(n);
    return std::string(p, n);
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  const char* take(size_t n) {
    if (pos_ + n > bytes_.size()) throw CorruptFileError("blob truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t checked_count(uint64_t n) const {
    if (n > bytes_.size()) throw CorruptFileError("blob count out of range");
    return static_cast<size_t>(n);
  }

  std::string bytes_;
  size_t pos_ = 0;
};

std::string serialize_state(const TrainerState& state) {
  BlobWriter w;
  w.i64(state.backbone.input_dim);
  w.i64(state.backbone.hidden_dim);
  w.i64(state.backbone.output_dim);
  w.doubles(state.backbone.w1);
  w.doubles(state.backbone.b1);
  w.doubles(state.backbone.w2);
  w.doubles(state.backbone.b2);
  w.f64(state.encoder.gamma);
  w.doubles(state.encoder.parameters);
  w.matrix(state.centers.raw);
  w.matrix(state.memory.entries);
  w.i64s(state.memory.last_write);
  w.i64(state.memory.delta_t_max);
  w.doubles(state.vel_backbone);
  w.matrix(state.vel_centers);
  w.str(state.rng.serialize());
  w.u32s(state.epoch_order);
  w.u64(state.epoch_pos);
  w.i64s(state.class_write_counts);
  return w.bytes();
}

TrainerState deserialize_state(const std::string& blob, int64_t epoch, int64_t iteration,
                               const QualityStats& stats) {
  BlobReader r(blob);
  TrainerState state;
  state.backbone.input_dim = r.i64();
  state.backbone.hidden_dim = r.i64();
  state.backbone.output_dim = r.i64();
  state.backbone.w1 = r.doubles();
  state.backbone.b1 = r.doubles();
  state.backbone.w2 = r.doubles();
  state.backbone.b2 = r.doubles();
  state.encoder.gamma = r.f64();
  state.encoder.parameters = r.doubles();
  state.momentum_net = state.backbone;
  state.momentum_net.set_parameters(state.encoder.parameters);
  state.centers.raw = r.matrix();
  state.memory.entries = r.matrix();
  state.memory.last_write = r.i64s();
  state.memory.delta_t_max = r.i64();
  state.stats = stats;
  state.vel_backbone = r.doubles();
  state.vel_centers = r.matrix();
  state.rng = SeededRng::deserialize(r.str());
  state.epoch_order = r.u32s();
  state.epoch_pos = r.u64();
  state.class_write_counts = r.i64s();
  state.epoch = epoch;
  state.iteration = iteration;
  if (!r.exhausted()) throw CorruptFileError("trailing bytes in blob");
  return state;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& state, uint64_t config_hash) {
  std::string blob = serialize_state(state);
  std::ostringstream header;
  header << "QAFACE-CKPT " << kCheckpointVersion << "\n";
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  header << "config_hash " << hex << "\n";
  header << "epoch " << state.epoch << "\n";
  header << "iteration " << state.iteration << "\n";
  // Quality statistics travel as plain decimal text, full precision.
  char decimal[64];
  std::snprintf(decimal, sizeof(decimal), "%.17g", state.stats.mu);
  header << "stats_mu " << decimal << "\n";
  std::snprintf(decimal, sizeof(decimal), "%.17g", state.stats.sigma);
  header << "stats_sigma " << decimal << "\n";
  std::snprintf(decimal, sizeof(decimal), "%.17g", state.stats.alpha);
  header << "stats_alpha " << decimal << "\n";
  header << "stats_initialized " << (state.stats.initialized ? 1 : 0) << "\n";
  header << "stats_orientation "
         << (state.stats.orientation == EmaOrientation::batch_weighted ? "batch" : "history")
         << "\n";
  header << "blob " << blob.size() << "\n";
  header << "---\n";

  std::string payload = header.str() + blob;
  uint64_t checksum = fnv1a64(payload);
  char tail[8];
  for (int b = 0; b < 8; ++b) tail[b] = static_cast<char>((checksum >> (8 * b)) & 0xff);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(tail, 8);
  if (!out) throw IoError("write failed for '" + path + "'");
}

TrainerState load_checkpoint(const std::string& path, uint64_t expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t header_end = content.find("---\n");
  if (header_end == std::string::npos) throw CorruptFileError("missing header terminator");
  size_t blob_begin = header_end + 4;

  std::istringstream header(content.substr(0, blob_begin));
  std::string magic;
  uint32_t version = 0;
  header >> magic >> version;
  if (magic != "QAFACE-CKPT") throw CorruptFileError("bad magic");
  if (version != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  std::string field;
  uint64_t file_hash = 0;
  int64_t epoch = 0, iteration = 0;
  uint64_t blob_size = 0;
  header >> field;
  if (field != "config_hash") throw CorruptFileError("missing config_hash");
  header >> std::hex >> file_hash >> std::dec;
  header >> field >> epoch;
  if (field != "epoch") throw CorruptFileError("missing epoch");
  header >> field >> iteration;
  if (field != "iteration") throw CorruptFileError("missing iteration");
  QualityStats stats;
  std::string text;
  header >> field >> text;
  if (field != "stats_mu") throw CorruptFileError("missing stats_mu");
  stats.mu = std::strtod(text.c_str(), nullptr);
  header >> field >> text;
  if (field != "stats_sigma") throw CorruptFileError("missing stats_sigma");
  stats.sigma = std::strtod(text.c_str(), nullptr);
  header >> field >> text;
  if (field != "stats_alpha") throw CorruptFileError("missing stats_alpha");
  stats.alpha = std::strtod(text.c_str(), nullptr);
  int initialized = 0;
  header >> field >> initialized;
  if (field != "stats_initialized") throw CorruptFileError("missing stats_initialized");
  stats.initialized = initialized != 0;
  header >> field >> text;
  if (field != "stats_orientation" || (text != "batch" && text != "history"))
    throw CorruptFileError("missing stats_orientation");
  stats.orientation =
      text == "batch" ? EmaOrientation::batch_weighted : EmaOrientation::history_weighted;
  header >> field >> blob_size;
  if (field != "blob" || header.fail()) throw CorruptFileError("missing blob size");

  if (content.size() < blob_begin + blob_size + 8) throw CorruptFileError("file truncated");
  if (content.size() > blob_begin + blob_size + 8) throw CorruptFileError("trailing bytes");

  uint64_t stored_checksum = 0;
  for (int b = 0; b < 8; ++b)
    stored_checksum |= static_cast<uint64_t>(
                           static_cast<unsigned char>(content[blob_begin + blob_size + static_cast<size_t>(b)]))
                       << (8 * b);
  uint64_t actual = fnv1a64(std::string_view(content.data(), blob_begin + blob_size));
  if (actual != stored_checksum) throw CorruptFileError("checksum mismatch");

  if (file_hash != expected_config_hash)
    throw ConfigMismatchError("checkpoint config hash does not match the supplied config");

  return deserialize_state(content.substr(blob_begin, blob_size), epoch, iteration, stats);
}

}  // namespace qaface
