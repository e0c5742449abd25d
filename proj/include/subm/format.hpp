#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "subm/model.hpp"
#include "subm/rng.hpp"
#include "subm/synth.hpp"

namespace subm {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and assume a little-endian host");
static_assert(sizeof(float) == 4);

// All formats share the same conventions: a 32-byte header starting with a
// 4-byte ASCII magic, little-endian integers, and 32-bit IEEE-754 floats.
// Declared sizes must match the remaining byte length exactly.

constexpr uint16_t kFormatVersion = 1;

namespace wire {

inline void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}
template <class T>
void put(std::string& out, T v) {
  put_bytes(out, &v, sizeof(v));
}
inline void put_floats(std::string& out, const std::vector<float>& v) {
  put_bytes(out, v.data(), v.size() * sizeof(float));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  template <class T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void get_floats(float* dst, size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  std::string get_magic() {
    need(4);
    std::string m = bytes_.substr(pos_, 4);
    pos_ += 4;
    return m;
  }

  size_t remaining() const { return bytes_.size() - pos_; }

  void expect_end() const {
    require(pos_ == bytes_.size(), ErrCode::truncated,
            origin_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }

 private:
  void need(size_t n) {
    require(pos_ + n <= bytes_.size(), ErrCode::truncated,
            origin_ + ": need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                ", file has " + std::to_string(bytes_.size()));
  }

  const std::string& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace wire

/// Writes via a temp file and rename; a concurrent reader sees either the old
/// or the new complete file, never a partial one.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(mix_seed(reinterpret_cast<uintptr_t>(&bytes),
                                          static_cast<uint64_t>(
                                              std::chrono::steady_clock::now().time_since_epoch().count())) &
                                 0xffffff);
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrCode::io_error, "cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    require(f.good(), ErrCode::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrCode::io_error, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrCode::io_error, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(!f.bad(), ErrCode::io_error, "read failed for " + path.string());
  return bytes;
}

// ---------------------------------------------------------------------------
// Submodel file (.subm), magic "SUBM".
// Header: magic, u16 version, u16 flags, u64 speaker_id, u32 d_model,
// u32 d_b, u32 n_layers, u32 reserved  (32 bytes).
// Body per layer: ln_gamma, ln_beta, w_down, b_down, w_up, b_up, alpha.
// ---------------------------------------------------------------------------

inline std::string encode_submodel(const Submodel& s) {
  std::string out;
  out.reserve(serialized_size(count_params(s.meta.d_model, s.meta.d_b, s.meta.n_layers)));
  out += "SUBM";
  wire::put<uint16_t>(out, s.meta.format_version);
  wire::put<uint16_t>(out, 0);
  wire::put<uint64_t>(out, s.meta.speaker_id);
  wire::put<uint32_t>(out, s.meta.d_model);
  wire::put<uint32_t>(out, s.meta.d_b);
  wire::put<uint32_t>(out, s.meta.n_layers);
  wire::put<uint32_t>(out, 0);
  for (const auto& l : s.layers) {
    wire::put_floats(out, l.body.ln_gamma.data);
    wire::put_floats(out, l.body.ln_beta.data);
    wire::put_floats(out, l.body.w_down.data);
    wire::put_floats(out, l.body.b_down.data);
    wire::put_floats(out, l.body.w_up.data);
    wire::put_floats(out, l.body.b_up.data);
    wire::put<float>(out, l.alpha);
  }
  return out;
}

inline Submodel decode_submodel(wire::Reader& r, const std::string& origin) {
  std::string magic = r.get_magic();
  require(magic == "SUBM", ErrCode::bad_magic, origin + ": bad magic '" + magic + "'");
  Submodel s;
  s.meta.format_version = r.get<uint16_t>();
  require(s.meta.format_version == kFormatVersion, ErrCode::bad_version,
          origin + ": unsupported version " + std::to_string(s.meta.format_version));
  r.get<uint16_t>();  // flags
  s.meta.speaker_id = r.get<uint64_t>();
  s.meta.d_model = r.get<uint32_t>();
  s.meta.d_b = r.get<uint32_t>();
  s.meta.n_layers = r.get<uint32_t>();
  r.get<uint32_t>();  // reserved
  require(s.meta.d_model >= 1 && s.meta.d_b >= 1 && s.meta.n_layers >= 1, ErrCode::dim_mismatch,
          origin + ": header declares zero dimension");
  const uint32_t d = s.meta.d_model, db = s.meta.d_b;
  s.layers.resize(s.meta.n_layers);
  for (auto& l : s.layers) {
    l.body.ln_gamma = Tensor({d});
    l.body.ln_beta = Tensor({d});
    l.body.w_down = Tensor({d, db});
    l.body.b_down = Tensor({db});
    l.body.w_up = Tensor({db, d});
    l.body.b_up = Tensor({d});
    r.get_floats(l.body.ln_gamma.data.data(), d);
    r.get_floats(l.body.ln_beta.data.data(), d);
    r.get_floats(l.body.w_down.data.data(), static_cast<size_t>(d) * db);
    r.get_floats(l.body.b_down.data.data(), db);
    r.get_floats(l.body.w_up.data.data(), static_cast<size_t>(db) * d);
    r.get_floats(l.body.b_up.data.data(), d);
    l.alpha = r.get<float>();
  }
  return s;
}

inline void save_submodel(const Submodel& s, const std::filesystem::path& path) {
  write_file_atomic(path, encode_submodel(s));
}

inline Submodel load_submodel(const std::filesystem::path& path,
                              const BasemodelConfig* expected = nullptr) {
  const std::string bytes = read_file(path);
  wire::Reader r(bytes, path.filename().string());
  Submodel s = decode_submodel(r, path.filename().string());
  r.expect_end();
  if (expected) check_submodel_shapes(*expected, s);
  return s;
}

// ---------------------------------------------------------------------------
// One-hot bundle file (.bndl): u32 member count, then each member encoded
// exactly as a .subm (header + body), in one-hot index order.
// ---------------------------------------------------------------------------

inline void save_bundle(const OneHotBundle& b, const std::filesystem::path& path) {
  b.validate();
  std::string out;
  wire::put<uint32_t>(out, static_cast<uint32_t>(b.members.size()));
  for (const auto& m : b.members) out += encode_submodel(m);
  write_file_atomic(path, out);
}

inline OneHotBundle load_bundle(const std::filesystem::path& path,
                                const BasemodelConfig* expected = nullptr) {
  const std::string bytes = read_file(path);
  const std::string origin = path.filename().string();
  wire::Reader r(bytes, origin);
  const uint32_t n = r.get<uint32_t>();
  OneHotBundle b;
  for (uint32_t i = 0; i < n; ++i) b.members.push_back(decode_submodel(r, origin));
  r.expect_end();
  b.validate();
  if (expected)
    for (const auto& m : b.members) check_submodel_shapes(*expected, m);
  return b;
}

// ---------------------------------------------------------------------------
// Embedding bundle file (.embm), magic "EMBM".
// Header: magic, u16 version, u16 flags, u32 d_model, u32 d_b, u32 n_layers,
// u32 m_banks, u32 n_speakers, u32 reserved  (32 bytes).
// Body: f32 alpha; u64 speaker_id[n]; f32 embedding[n * L * M]; banks in
// layer-major order, each bank as ln_gamma, ln_beta, w_down, b_down, w_up,
// b_up.
// ---------------------------------------------------------------------------

inline void save_embedding_bundle(const EmbeddingBundle& eb, const std::filesystem::path& path) {
  std::string out;
  out += "EMBM";
  wire::put<uint16_t>(out, kFormatVersion);
  wire::put<uint16_t>(out, 0);
  wire::put<uint32_t>(out, eb.d_model);
  wire::put<uint32_t>(out, eb.d_b);
  wire::put<uint32_t>(out, eb.n_layers);
  wire::put<uint32_t>(out, eb.m_banks);
  wire::put<uint32_t>(out, static_cast<uint32_t>(eb.speaker_ids.size()));
  wire::put<uint32_t>(out, 0);
  wire::put<float>(out, eb.alpha);
  for (uint64_t id : eb.speaker_ids) wire::put<uint64_t>(out, id);
  wire::put_floats(out, eb.embedding.data);
  for (const auto& layer : eb.banks)
    for (const auto& bank : layer) {
      wire::put_floats(out, bank.ln_gamma.data);
      wire::put_floats(out, bank.ln_beta.data);
      wire::put_floats(out, bank.w_down.data);
      wire::put_floats(out, bank.b_down.data);
      wire::put_floats(out, bank.w_up.data);
      wire::put_floats(out, bank.b_up.data);
    }
  write_file_atomic(path, out);
}

inline EmbeddingBundle load_embedding_bundle(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string origin = path.filename().string();
  wire::Reader r(bytes, origin);
  std::string magic = r.get_magic();
  require(magic == "EMBM", ErrCode::bad_magic, origin + ": bad magic '" + magic + "'");
  const uint16_t version = r.get<uint16_t>();
  require(version == kFormatVersion, ErrCode::bad_version,
          origin + ": unsupported version " + std::to_string(version));
  r.get<uint16_t>();
  EmbeddingBundle eb;
  eb.d_model = r.get<uint32_t>();
  eb.d_b = r.get<uint32_t>();
  eb.n_layers = r.get<uint32_t>();
  eb.m_banks = r.get<uint32_t>();
  const uint32_t n_speakers = r.get<uint32_t>();
  r.get<uint32_t>();
  require(eb.d_model >= 1 && eb.d_b >= 1 && eb.n_layers >= 1 && eb.m_banks >= 1,
          ErrCode::dim_mismatch, origin + ": header declares zero dimension");
  eb.alpha = r.get<float>();
  eb.speaker_ids.resize(n_speakers);
  for (auto& id : eb.speaker_ids) id = r.get<uint64_t>();
  eb.embedding = Tensor({n_speakers, static_cast<size_t>(eb.n_layers) * eb.m_banks});
  r.get_floats(eb.embedding.data.data(), eb.embedding.numel());
  eb.banks.resize(eb.n_layers);
  for (auto& layer : eb.banks) {
    layer.resize(eb.m_banks);
    for (auto& bank : layer) {
      bank.ln_gamma = Tensor({eb.d_model});
      bank.ln_beta = Tensor({eb.d_model});
      bank.w_down = Tensor({eb.d_model, eb.d_b});
      bank.b_down = Tensor({eb.d_b});
      bank.w_up = Tensor({eb.d_b, eb.d_model});
      bank.b_up = Tensor({eb.d_model});
      r.get_floats(bank.ln_gamma.data.data(), eb.d_model);
      r.get_floats(bank.ln_beta.data.data(), eb.d_model);
      r.get_floats(bank.w_down.data.data(), static_cast<size_t>(eb.d_model) * eb.d_b);
      r.get_floats(bank.b_down.data.data(), eb.d_b);
      r.get_floats(bank.w_up.data.data(), static_cast<size_t>(eb.d_b) * eb.d_model);
      r.get_floats(bank.b_up.data.data(), eb.d_model);
    }
  }
  r.expect_end();
  return eb;
}

// ---------------------------------------------------------------------------
// Basemodel file (.bm), magic "BASE".
// Header: magic, u16 version, u16 flags, u32 d_in, u32 d_model, u32 d_ff,
// u32 d_out, u32 n_layers, u32 reserved  (32 bytes).
// Body: parameters in canonical param_list order.
// ---------------------------------------------------------------------------

inline void save_basemodel(const Basemodel& m, const std::filesystem::path& path) {
  std::string out;
  out += "BASE";
  wire::put<uint16_t>(out, kFormatVersion);
  wire::put<uint16_t>(out, 0);
  wire::put<uint32_t>(out, m.config.d_in);
  wire::put<uint32_t>(out, m.config.d_model);
  wire::put<uint32_t>(out, m.config.d_ff);
  wire::put<uint32_t>(out, m.config.d_out);
  wire::put<uint32_t>(out, m.config.n_layers);
  wire::put<uint32_t>(out, 0);
  for (const Tensor* t : param_list(const_cast<Basemodel&>(m))) wire::put_floats(out, t->data);
  write_file_atomic(path, out);
}

inline Basemodel load_basemodel(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string origin = path.filename().string();
  wire::Reader r(bytes, origin);
  std::string magic = r.get_magic();
  require(magic == "BASE", ErrCode::bad_magic, origin + ": bad magic '" + magic + "'");
  const uint16_t version = r.get<uint16_t>();
  require(version == kFormatVersion, ErrCode::bad_version,
          origin + ": unsupported version " + std::to_string(version));
  r.get<uint16_t>();
  BasemodelConfig cfg;
  cfg.d_in = r.get<uint32_t>();
  cfg.d_model = r.get<uint32_t>();
  cfg.d_ff = r.get<uint32_t>();
  cfg.d_out = r.get<uint32_t>();
  cfg.n_layers = r.get<uint32_t>();
  r.get<uint32_t>();
  require(cfg.d_in >= 1 && cfg.d_model >= 1 && cfg.d_ff >= 1 && cfg.d_out >= 1 &&
              cfg.n_layers >= 1,
          ErrCode::dim_mismatch, origin + ": header declares zero dimension");
  Basemodel m;
  m.config = cfg;
  m.w_in = Tensor({cfg.d_in, cfg.d_model});
  m.b_in = Tensor({cfg.d_model});
  m.blocks.resize(cfg.n_layers);
  for (auto& b : m.blocks) {
    b.ln_gamma = Tensor({cfg.d_model});
    b.ln_beta = Tensor({cfg.d_model});
    b.w1 = Tensor({cfg.d_model, cfg.d_ff});
    b.b1 = Tensor({cfg.d_ff});
    b.w2 = Tensor({cfg.d_ff, cfg.d_model});
    b.b2 = Tensor({cfg.d_model});
  }
  m.w_out = Tensor({cfg.d_model, cfg.d_out});
  m.b_out = Tensor({cfg.d_out});
  for (Tensor* t : param_list(m)) r.get_floats(t->data.data(), t->numel());
  r.expect_end();
  return m;
}

// ---------------------------------------------------------------------------
// Corpus file (.corpus), magic "CORP".
// Header: magic, u16 version, u16 flags, u64 speaker_id, u32 d_in,
// u32 n_utts, u32 frames_per_utt, u32 reserved  (32 bytes).
// Body: u8 split[n_utts]; per utterance x[T*d] then y[T*d].
// ---------------------------------------------------------------------------

inline void save_corpus(const Corpus& c, const std::filesystem::path& path) {
  for (const auto& u : c.utts)
    require(u.x.shape[0] == c.frames_per_utt, ErrCode::precondition,
            "save_corpus requires uniform utterance length");
  std::string out;
  out += "CORP";
  wire::put<uint16_t>(out, kFormatVersion);
  wire::put<uint16_t>(out, 0);
  wire::put<uint64_t>(out, c.speaker_id);
  wire::put<uint32_t>(out, c.d_in);
  wire::put<uint32_t>(out, static_cast<uint32_t>(c.utts.size()));
  wire::put<uint32_t>(out, c.frames_per_utt);
  wire::put<uint32_t>(out, 0);
  out.append(reinterpret_cast<const char*>(c.split.data()), c.split.size());
  for (const auto& u : c.utts) {
    wire::put_floats(out, u.x.data);
    wire::put_floats(out, u.y.data);
  }
  write_file_atomic(path, out);
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string origin = path.filename().string();
  wire::Reader r(bytes, origin);
  std::string magic = r.get_magic();
  require(magic == "CORP", ErrCode::bad_magic, origin + ": bad magic '" + magic + "'");
  const uint16_t version = r.get<uint16_t>();
  require(version == kFormatVersion, ErrCode::bad_version,
          origin + ": unsupported version " + std::to_string(version));
  r.get<uint16_t>();
  Corpus c;
  c.speaker_id = r.get<uint64_t>();
  c.d_in = r.get<uint32_t>();
  const uint32_t n_utts = r.get<uint32_t>();
  c.frames_per_utt = r.get<uint32_t>();
  r.get<uint32_t>();
  require(c.d_in >= 1 && c.frames_per_utt >= 1, ErrCode::dim_mismatch,
          origin + ": header declares zero dimension");
  c.split.resize(n_utts);
  for (auto& s : c.split) s = r.get<uint8_t>();
  for (uint32_t i = 0; i < n_utts; ++i) {
    Utterance u;
    u.x = Tensor({c.frames_per_utt, c.d_in});
    u.y = Tensor({c.frames_per_utt, c.d_in});
    r.get_floats(u.x.data.data(), u.x.numel());
    r.get_floats(u.y.data.data(), u.y.numel());
    c.utts.push_back(std::move(u));
  }
  r.expect_end();
  return c;
}

}  // namespace subm
