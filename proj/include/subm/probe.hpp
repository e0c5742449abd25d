#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "subm/model.hpp"
#include "subm/rng.hpp"

namespace subm {

// Embedding export + the built-in separability probe: a leave-one-out binary
// logistic classifier per etiology pair over the flattened per-speaker
// embedding vectors (L*M components each).

struct EmbeddingRecord {
  uint64_t speaker_id = 0;
  std::string etiology;
  float severity = 0.0f;
  std::vector<float> vector;
};

struct SpeakerLabel {
  std::string etiology;
  float severity = 0.0f;
};

inline std::vector<EmbeddingRecord> export_embeddings(
    const EmbeddingBundle& eb, const std::map<uint64_t, SpeakerLabel>& labels) {
  require(!eb.speaker_ids.empty() && eb.embedding.numel() > 0, ErrCode::precondition,
          "embedding bundle has no trained rows");
  std::vector<EmbeddingRecord> out;
  const size_t dim = static_cast<size_t>(eb.n_layers) * eb.m_banks;
  for (size_t i = 0; i < eb.speaker_ids.size(); ++i) {
    EmbeddingRecord rec;
    rec.speaker_id = eb.speaker_ids[i];
    auto it = labels.find(rec.speaker_id);
    if (it != labels.end()) {
      rec.etiology = it->second.etiology;
      rec.severity = it->second.severity;
    }
    rec.vector.assign(eb.embedding.data.begin() + i * dim,
                      eb.embedding.data.begin() + (i + 1) * dim);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string records_to_jsonl(const std::vector<EmbeddingRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"speaker_id", r.speaker_id},
                     {"etiology", r.etiology},
                     {"severity", r.severity},
                     {"vector", r.vector}};
    out += j.dump();
    out += "\n";
  }
  return out;
}

inline std::vector<EmbeddingRecord> records_from_jsonl(const std::string& text) {
  std::vector<EmbeddingRecord> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded(), ErrCode::bad_request, "embedding record is not valid JSON");
    EmbeddingRecord r;
    r.speaker_id = j.at("speaker_id").get<uint64_t>();
    r.etiology = j.at("etiology").get<std::string>();
    r.severity = j.at("severity").get<float>();
    r.vector = j.at("vector").get<std::vector<float>>();
    out.push_back(std::move(r));
  }
  return out;
}

/// Permutes the etiology labels across records (chance-level control).
inline std::vector<EmbeddingRecord> shuffle_labels(std::vector<EmbeddingRecord> records,
                                                   uint64_t seed) {
  Rng rng(mix_seed(seed, 0x73687566ull));
  for (size_t i = records.size(); i-- > 1;) {
    const size_t j = rng.below(i + 1);
    std::swap(records[i].etiology, records[j].etiology);
  }
  return records;
}

struct ProbePair {
  std::string etiology_a, etiology_b;
  double accuracy = 0.0;
  size_t n = 0;
};

struct ProbeReport {
  std::vector<ProbePair> pairs;
  double mean_accuracy = 0.0;
};

namespace detail {

/// Gradient-trained logistic regression on standardized features; fixed 500
/// steps at lr 0.1 for determinism. Returns predicted label of `query`.
inline int logistic_loo_predict(const std::vector<const std::vector<float>*>& train_x,
                                const std::vector<int>& train_y,
                                const std::vector<float>& query) {
  const size_t n = train_x.size(), dim = query.size();
  std::vector<double> mean(dim, 0.0), stdev(dim, 0.0);
  for (const auto* x : train_x)
    for (size_t j = 0; j < dim; ++j) mean[j] += (*x)[j];
  for (size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(n);
  for (const auto* x : train_x)
    for (size_t j = 0; j < dim; ++j) {
      const double c = (*x)[j] - mean[j];
      stdev[j] += c * c;
    }
  for (size_t j = 0; j < dim; ++j) stdev[j] = std::max(1e-8, std::sqrt(stdev[j] / n));

  auto standardized = [&](const std::vector<float>& x, size_t j) {
    return (static_cast<double>(x[j]) - mean[j]) / stdev[j];
  };

  std::vector<double> w(dim + 1, 0.0);  // last entry = bias
  for (int step = 0; step < 500; ++step) {
    std::vector<double> grad(dim + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double z = w[dim];
      for (size_t j = 0; j < dim; ++j) z += w[j] * standardized(*train_x[i], j);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - static_cast<double>(train_y[i]);
      for (size_t j = 0; j < dim; ++j) grad[j] += err * standardized(*train_x[i], j);
      grad[dim] += err;
    }
    for (size_t j = 0; j <= dim; ++j) w[j] -= 0.1 * grad[j] / static_cast<double>(n);
  }
  double z = w[dim];
  for (size_t j = 0; j < dim; ++j) z += w[j] * standardized(query, j);
  return z > 0.0 ? 1 : 0;
}

}  // namespace detail

/// Leave-one-out pairwise accuracy per etiology pair, plus the mean across
/// pairs.
inline ProbeReport probe_separability(const std::vector<EmbeddingRecord>& records) {
  std::map<std::string, std::vector<const EmbeddingRecord*>> classes;
  for (const auto& r : records) classes[r.etiology].push_back(&r);
  require(classes.size() >= 2, ErrCode::precondition,
          "separability probe needs at least 2 etiologies");
  for (const auto& [name, members] : classes)
    require(members.size() >= 2, ErrCode::precondition,
            "etiology '" + name + "' has fewer than 2 speakers");

  ProbeReport report;
  std::vector<std::string> names;
  for (const auto& [name, members] : classes) names.push_back(name);
  for (size_t a = 0; a < names.size(); ++a) {
    for (size_t b = a + 1; b < names.size(); ++b) {
      std::vector<const std::vector<float>*> xs;
      std::vector<int> ys;
      for (const auto* r : classes[names[a]]) {
        xs.push_back(&r->vector);
        ys.push_back(0);
      }
      for (const auto* r : classes[names[b]]) {
        xs.push_back(&r->vector);
        ys.push_back(1);
      }
      size_t correct = 0;
      for (size_t hold = 0; hold < xs.size(); ++hold) {
        std::vector<const std::vector<float>*> train_x;
        std::vector<int> train_y;
        for (size_t i = 0; i < xs.size(); ++i) {
          if (i == hold) continue;
          train_x.push_back(xs[i]);
          train_y.push_back(ys[i]);
        }
        if (detail::logistic_loo_predict(train_x, train_y, *xs[hold]) == ys[hold]) ++correct;
      }
      ProbePair pair;
      pair.etiology_a = names[a];
      pair.etiology_b = names[b];
      pair.n = xs.size();
      pair.accuracy = static_cast<double>(correct) / static_cast<double>(xs.size());
      report.pairs.push_back(std::move(pair));
    }
  }
  double sum = 0;
  for (const auto& p : report.pairs) sum += p.accuracy;
  report.mean_accuracy = sum / static_cast<double>(report.pairs.size());
  return report;
}

}  // namespace subm
