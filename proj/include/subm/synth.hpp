#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subm/rng.hpp"
#include "subm/tensor.hpp"

namespace subm {

// Synthetic stand-in for a personalization corpus: each "speaker" applies a
// linear distortion A_s = I + severity * (R_etiology + kappa * P_speaker) to
// clean frames; the task is frame-wise un-distortion (x -> y regression).

constexpr float kSeverityMild = 0.1f;
constexpr float kSeverityModerate = 0.3f;
constexpr float kSeveritySevere = 0.6f;
constexpr float kIdiosyncrasyWeight = 0.3f;  // kappa
constexpr float kDefaultNoise = 0.05f;

struct EtiologyCatalog {
  uint32_t d_in = 0;
  uint64_t seed = 0;
  std::vector<Tensor> matrices;  // R_e, entries ~ N(0, 1/d_in)
  std::vector<std::string> names;
};

inline EtiologyCatalog gen_catalog(uint32_t n_etiologies, uint32_t d_in, uint64_t seed) {
  require(n_etiologies >= 2, ErrCode::precondition, "catalog needs at least 2 etiologies");
  require(d_in >= 1, ErrCode::precondition, "catalog d_in must be >= 1");
  EtiologyCatalog cat;
  cat.d_in = d_in;
  cat.seed = seed;
  const float std = 1.0f / std::sqrt(static_cast<float>(d_in));
  for (uint32_t e = 0; e < n_etiologies; ++e) {
    Rng rng(mix_seed(seed, 0x65740000ull + e));
    cat.matrices.push_back(Tensor::random_normal({d_in, d_in}, 0.0f, std, rng));
    cat.names.push_back("etiology-" + std::to_string(e));
  }
  return cat;
}

struct SpeakerProfile {
  uint64_t speaker_id = 0;
  uint32_t etiology = 0;
  float severity = 0.0f;  // 0 = typical
  float kappa = kIdiosyncrasyWeight;
  float noise = kDefaultNoise;  // sigma_n
  uint64_t seed = 0;
  Tensor idiosyncrasy;  // P_s, same distribution as R_e
  Tensor distortion;    // A_s = I + severity * (R_e + kappa * P_s)
};

inline SpeakerProfile gen_speaker(const EtiologyCatalog& cat, uint32_t etiology, float severity,
                                  uint64_t speaker_seed, uint64_t speaker_id,
                                  float noise = kDefaultNoise,
                                  float kappa = kIdiosyncrasyWeight) {
  require(etiology < cat.matrices.size(), ErrCode::precondition,
          "etiology index " + std::to_string(etiology) + " out of range");
  require(severity >= 0.0f, ErrCode::precondition, "severity must be >= 0");
  SpeakerProfile sp;
  sp.speaker_id = speaker_id;
  sp.etiology = etiology;
  sp.severity = severity;
  sp.kappa = kappa;
  sp.noise = noise;
  sp.seed = speaker_seed;
  Rng rng(mix_seed(speaker_seed, 0x73706b00ull));
  const uint32_t d = cat.d_in;
  sp.idiosyncrasy =
      Tensor::random_normal({d, d}, 0.0f, 1.0f / std::sqrt(static_cast<float>(d)), rng);
  sp.distortion = Tensor::identity(d);
  const Tensor& r = cat.matrices[etiology];
  for (size_t i = 0; i < sp.distortion.data.size(); ++i)
    sp.distortion.data[i] += severity * (r.data[i] + sp.kappa * sp.idiosyncrasy.data[i]);
  return sp;
}

/// x = A_s * y + sigma_n * eta, with eta drawn from the provided stream.
inline Tensor distort(const SpeakerProfile& sp, const Tensor& y, Rng& rng) {
  Tensor y_col = y;
  y_col.shape = {1, y.numel()};
  Tensor x = matmul_nt(y_col, sp.distortion);  // row vector times A^T = (A y)^T
  x.shape = {y.numel()};
  if (sp.noise > 0.0f)
    for (auto& v : x.data) v += sp.noise * static_cast<float>(rng.normal());
  return x;
}

enum class Split : uint8_t { train = 0, dev = 1, test = 2 };

struct Utterance {
  Tensor x;  // [T, d_in] distorted
  Tensor y;  // [T, d_in] clean
};

struct Corpus {
  uint64_t speaker_id = 0;
  uint32_t d_in = 0;
  uint32_t frames_per_utt = 0;
  std::vector<Utterance> utts;
  std::vector<uint8_t> split;  // one label per utterance

  std::vector<size_t> indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < split.size(); ++i)
      if (split[i] == static_cast<uint8_t>(s)) out.push_back(i);
    return out;
  }

  size_t count(Split s) const { return indices(s).size(); }

  /// Copy with the train split truncated to the first `frames` frames (in
  /// split order); used for low-data adaptation experiments. Dev/test are
  /// kept intact.
  Corpus limit_train_frames(size_t frames) const;
};

/// 80/10/10 by utterance: dev and test each get floor(n/10), train the rest,
/// assigned over a seeded shuffle of utterance indices.
inline std::vector<uint8_t> split_labels(size_t n_utts, uint64_t seed) {
  require(n_utts >= 10, ErrCode::precondition,
          "need at least 10 utterances to split 80/10/10, got " + std::to_string(n_utts));
  std::vector<size_t> order(n_utts);
  for (size_t i = 0; i < n_utts; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x73706c69ull));
  for (size_t i = n_utts; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  const size_t n_dev = n_utts / 10, n_test = n_utts / 10;
  std::vector<uint8_t> labels(n_utts, static_cast<uint8_t>(Split::train));
  for (size_t i = 0; i < n_dev; ++i) labels[order[i]] = static_cast<uint8_t>(Split::dev);
  for (size_t i = 0; i < n_test; ++i) labels[order[n_dev + i]] = static_cast<uint8_t>(Split::test);
  return labels;
}

inline Corpus gen_corpus(const SpeakerProfile& sp, size_t n_utts, size_t frames_per_utt,
                         uint64_t seed) {
  require(frames_per_utt >= 1, ErrCode::precondition, "frames_per_utt must be >= 1");
  Corpus c;
  c.speaker_id = sp.speaker_id;
  c.d_in = sp.distortion.shape[0];
  c.frames_per_utt = static_cast<uint32_t>(frames_per_utt);
  c.split = split_labels(n_utts, seed);
  Rng rng(mix_seed(seed, 0x636f7270ull));
  const size_t d = c.d_in;
  for (size_t u = 0; u < n_utts; ++u) {
    Utterance utt;
    utt.y = Tensor({frames_per_utt, d});
    for (auto& v : utt.y.data) v = static_cast<float>(rng.normal());
    utt.x = Tensor({frames_per_utt, d});
    for (size_t f = 0; f < frames_per_utt; ++f) {
      Tensor yf({d});
      std::copy(utt.y.data.begin() + f * d, utt.y.data.begin() + (f + 1) * d, yf.data.begin());
      Tensor xf = distort(sp, yf, rng);
      std::copy(xf.data.begin(), xf.data.end(), utt.x.data.begin() + f * d);
    }
    c.utts.push_back(std::move(utt));
  }
  return c;
}

inline Corpus Corpus::limit_train_frames(size_t frames) const {
  require(frames >= 1, ErrCode::precondition, "limit_train_frames needs frames >= 1");
  Corpus out;
  out.speaker_id = speaker_id;
  out.d_in = d_in;
  out.frames_per_utt = frames_per_utt;
  size_t budget = frames;
  for (size_t i = 0; i < utts.size(); ++i) {
    if (split[i] != static_cast<uint8_t>(Split::train)) {
      out.utts.push_back(utts[i]);
      out.split.push_back(split[i]);
      continue;
    }
    if (budget == 0) continue;
    const size_t take = std::min<size_t>(budget, frames_per_utt);
    Utterance u;
    u.x = Tensor({take, d_in});
    u.y = Tensor({take, d_in});
    std::copy(utts[i].x.data.begin(), utts[i].x.data.begin() + take * d_in, u.x.data.begin());
    std::copy(utts[i].y.data.begin(), utts[i].y.data.begin() + take * d_in, u.y.data.begin());
    out.utts.push_back(std::move(u));
    out.split.push_back(static_cast<uint8_t>(Split::train));
    budget -= take;
  }
  require(budget == 0, ErrCode::precondition,
          "corpus train split smaller than " + std::to_string(frames) + " frames");
  return out;
}

/// Total frames carried by one split.
inline size_t split_frames(const Corpus& c, Split s) {
  size_t n = 0;
  for (size_t i : c.indices(s)) n += c.utts[i].x.shape[0];
  return n;
}

}  // namespace subm
