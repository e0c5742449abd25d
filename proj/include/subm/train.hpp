#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "subm/adam.hpp"
#include "subm/format.hpp"
#include "subm/graph.hpp"
#include "subm/model.hpp"
#include "subm/synth.hpp"

namespace subm {

struct TrainConfig {
  uint32_t batch_size = 8;   // utterances per step
  uint32_t steps = 2000;     // desk default; the paper-faithful run uses 30000
  float lr = 1e-3f;
  uint64_t seed = 0;
  float adapter_init_std = 0.01f;
  bool zero_init_up = false;
  uint32_t log_every = 0;  // 0 = silent
};

struct TrainStats {
  float initial_loss = 0.0f;
  float final_loss = 0.0f;
  uint32_t steps_run = 0;
};

enum class AdaptMode { emb_only, emb_and_banks };

namespace detail {

struct SamplePool {
  // (corpus index, utterance index) over the train splits
  std::vector<std::pair<uint32_t, uint32_t>> pairs;

  explicit SamplePool(const std::vector<Corpus>& corpora) {
    for (uint32_t c = 0; c < corpora.size(); ++c)
      for (size_t u : corpora[c].indices(Split::train))
        pairs.emplace_back(c, static_cast<uint32_t>(u));
    require(!pairs.empty(), ErrCode::precondition, "no training utterances available");
  }
};

inline void append_utt(const Corpus& c, uint32_t utt, std::vector<float>& xs,
                       std::vector<float>& ys, size_t& frames) {
  const Utterance& u = c.utts[utt];
  xs.insert(xs.end(), u.x.data.begin(), u.x.data.end());
  ys.insert(ys.end(), u.y.data.begin(), u.y.data.end());
  frames += u.x.shape[0];
}

inline void check_finite_loss(float loss, uint32_t step) {
  require(std::isfinite(loss), ErrCode::diverged,
          "training diverged (non-finite loss) at step " + std::to_string(step));
}

inline void log_step(const TrainConfig& cfg, uint32_t step, float loss) {
  if (cfg.log_every && (step % cfg.log_every == 0))
    std::cerr << "step " << step << " loss " << loss << "\n";
}

inline uint64_t speaker_scoped_seed(const TrainConfig& cfg, uint64_t speaker_id, uint64_t tag) {
  return mix_seed(mix_seed(cfg.seed, speaker_id), tag);
}

/// Single-model training loop over one corpus; `build` maps a batch input ref
/// to a prediction ref on the tape.
template <class BuildFn>
TrainStats run_single_loop(const Corpus& corpus, const TrainConfig& cfg,
                           const std::vector<Tensor*>& params, BuildFn&& build) {
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  require(cfg.batch_size >= 1, ErrCode::precondition, "batch_size must be >= 1");
  const auto train_utts = corpus.indices(Split::train);
  require(!train_utts.empty(), ErrCode::precondition, "corpus has no training utterances");
  Rng rng(mix_seed(cfg.seed, 0x747261696eull));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  TrainStats stats;
  const size_t d = corpus.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    std::vector<float> xs, ys;
    size_t frames = 0;
    for (uint32_t b = 0; b < cfg.batch_size; ++b)
      append_utt(corpus, static_cast<uint32_t>(train_utts[rng.below(train_utts.size())]), xs, ys,
                 frames);
    Graph g;
    auto x = g.input(Tensor({frames, d}, std::move(xs)));
    auto y = g.input(Tensor({frames, d}, std::move(ys)));
    auto loss = g.mse(build(g, x), y);
    const float lv = g.value(loss).data[0];
    check_finite_loss(lv, step);
    if (step == 0) stats.initial_loss = lv;
    stats.final_loss = lv;
    log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    stats.steps_run = step + 1;
  }
  return stats;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training regimes
// ---------------------------------------------------------------------------

/// Trains a fresh Basemodel on pooled typical-speaker corpora. The returned
/// model is frozen by convention: no other regime ever writes to it.
inline Basemodel train_base(const std::vector<Corpus>& corpora, const BasemodelConfig& base_cfg,
                            const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
  require(!corpora.empty(), ErrCode::precondition, "train_base needs at least one corpus");
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  Basemodel base = make_basemodel(base_cfg);
  std::vector<Tensor*> params = param_list(base);

  detail::SamplePool pool(corpora);
  Rng rng(mix_seed(cfg.seed, 0x62617365ull));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  TrainStats stats;
  const size_t d = base_cfg.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    std::vector<float> xs, ys;
    size_t frames = 0;
    for (uint32_t b = 0; b < cfg.batch_size; ++b) {
      const auto [c, u] = pool.pairs[rng.below(pool.pairs.size())];
      detail::append_utt(corpora[c], u, xs, ys, frames);
    }
    Graph g;
    auto x = g.input(Tensor({frames, d}, std::move(xs)));
    auto y = g.input(Tensor({frames, d}, std::move(ys)));
    auto loss = g.mse(graph_base_forward(g, base, x, true), y);
    const float lv = g.value(loss).data[0];
    detail::check_finite_loss(lv, step);
    if (step == 0) stats.initial_loss = lv;
    stats.final_loss = lv;
    detail::log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    stats.steps_run = step + 1;
  }
  require(stats.final_loss <= 0.5f * stats.initial_loss, ErrCode::diverged,
          "base training did not halve its loss (start " + std::to_string(stats.initial_loss) +
              ", end " + std::to_string(stats.final_loss) + ")");
  if (stats_out) *stats_out = stats;
  return base;
}

/// Fine-tunes every parameter of a copy; the original base is untouched.
inline Basemodel finetune_full(const Basemodel& base, const Corpus& corpus,
                               const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
  Basemodel copy = base;
  std::vector<Tensor*> params = param_list(copy);
  TrainStats stats = detail::run_single_loop(
      corpus, cfg, params,
      [&](Graph& g, Graph::Ref x) { return graph_base_forward(g, copy, x, true); });
  if (stats_out) *stats_out = stats;
  return copy;
}

/// Continues training an existing submodel on a corpus (base frozen).
inline Submodel adapt_submodel(const Basemodel& base, Submodel sub, const Corpus& corpus,
                               const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
  check_submodel_shapes(base.config, sub);
  std::vector<Tensor*> params = param_list(sub);
  TrainStats stats = detail::run_single_loop(corpus, cfg, params, [&](Graph& g, Graph::Ref x) {
    return graph_forward_with_submodel(g, base, sub, x, false, true);
  });
  if (stats_out) *stats_out = stats;
  return sub;
}

/// Trains a fresh per-speaker submodel with the base frozen; adapters run
/// with alpha = 1 throughout.
inline Submodel train_submodel(const Basemodel& base, const Corpus& corpus, uint32_t d_b,
                               const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
  require(d_b >= 1, ErrCode::precondition, "d_b must be >= 1");
  Submodel sub = make_submodel(corpus.speaker_id, base.config.d_model, d_b, base.config.n_layers,
                               detail::speaker_scoped_seed(cfg, corpus.speaker_id, 0x73756200ull),
                               cfg.adapter_init_std, cfg.zero_init_up);
  return adapt_submodel(base, std::move(sub), corpus, cfg, stats_out);
}

/// Trains N member submodels in one job. Each batch samples (speaker,
/// utterance) pairs uniformly over the pooled train splits; only sampled
/// members receive gradient, so untouched members are bit-identical after the
/// step.
inline OneHotBundle train_onehot(const Basemodel& base, const std::vector<Corpus>& corpora,
                                 uint32_t d_b, const TrainConfig& cfg,
                                 TrainStats* stats_out = nullptr) {
  require(corpora.size() >= 2, ErrCode::precondition, "one-hot bundle needs N >= 2 speakers");
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  OneHotBundle bundle;
  for (const Corpus& c : corpora)
    bundle.members.push_back(make_submodel(
        c.speaker_id, base.config.d_model, d_b, base.config.n_layers,
        detail::speaker_scoped_seed(cfg, c.speaker_id, 0x73756200ull), cfg.adapter_init_std,
        cfg.zero_init_up));
  bundle.validate();

  std::vector<Tensor*> params;
  for (auto& m : bundle.members)
    for (Tensor* t : param_list(m)) params.push_back(t);

  detail::SamplePool pool(corpora);
  Rng rng(mix_seed(cfg.seed, 0x6f6e65686full));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  TrainStats stats;
  const size_t d = base.config.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    // group this batch by speaker so each member does one tape forward
    std::map<uint32_t, std::vector<uint32_t>> groups;
    for (uint32_t b = 0; b < cfg.batch_size; ++b) {
      const auto [c, u] = pool.pairs[rng.below(pool.pairs.size())];
      groups[c].push_back(u);
    }
    Graph g;
    Graph::Ref total{};
    size_t total_elems = 0;
    bool first = true;
    for (const auto& [c, utts] : groups) {
      std::vector<float> xs, ys;
      size_t frames = 0;
      for (uint32_t u : utts) detail::append_utt(corpora[c], u, xs, ys, frames);
      auto x = g.input(Tensor({frames, d}, std::move(xs)));
      auto y = g.input(Tensor({frames, d}, std::move(ys)));
      auto pred = graph_forward_with_submodel(g, base, bundle.members[c], x, false, true);
      auto part = g.sse(pred, y);
      total = first ? part : g.add_scalars(total, part);
      first = false;
      total_elems += frames * d;
    }
    auto loss = g.scale_const(total, 1.0f / static_cast<float>(total_elems));
    const float lv = g.value(loss).data[0];
    detail::check_finite_loss(lv, step);
    if (step == 0) stats.initial_loss = lv;
    stats.final_loss = lv;
    detail::log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    stats.steps_run = step + 1;
  }
  if (stats_out) *stats_out = stats;
  return bundle;
}

/// Writes each member as a standalone .subm file named <speaker_id>.subm.
/// The one-hot index map is not preserved in the outputs.
inline std::vector<std::filesystem::path> split_bundle(const OneHotBundle& bundle,
                                                       const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& m : bundle.members) {
    auto p = dir / (std::to_string(m.meta.speaker_id) + ".subm");
    save_submodel(m, p);
    out.push_back(std::move(p));
  }
  return out;
}

/// One shared submodel trained on pooled data, ignoring speaker identity.
inline Submodel train_pooled(const Basemodel& base, const std::vector<Corpus>& corpora,
                             uint32_t d_b_pooled, const TrainConfig& cfg,
                             TrainStats* stats_out = nullptr) {
  require(corpora.size() >= 2, ErrCode::precondition, "pooled training needs N >= 2 speakers");
  require(d_b_pooled >= 1, ErrCode::precondition, "d_b must be >= 1");
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  Submodel sub =
      make_submodel(0, base.config.d_model, d_b_pooled, base.config.n_layers,
                    mix_seed(cfg.seed, 0x706f6f6cull), cfg.adapter_init_std, cfg.zero_init_up);
  std::vector<Tensor*> params = param_list(sub);

  detail::SamplePool pool(corpora);
  Rng rng(mix_seed(cfg.seed, 0x706f6f6c32ull));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  TrainStats stats;
  const size_t d = base.config.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    std::vector<float> xs, ys;
    size_t frames = 0;
    for (uint32_t b = 0; b < cfg.batch_size; ++b) {
      const auto [c, u] = pool.pairs[rng.below(pool.pairs.size())];
      detail::append_utt(corpora[c], u, xs, ys, frames);
    }
    Graph g;
    auto x = g.input(Tensor({frames, d}, std::move(xs)));
    auto y = g.input(Tensor({frames, d}, std::move(ys)));
    auto loss = g.mse(graph_forward_with_submodel(g, base, sub, x, false, true), y);
    const float lv = g.value(loss).data[0];
    detail::check_finite_loss(lv, step);
    if (step == 0) stats.initial_loss = lv;
    stats.final_loss = lv;
    detail::log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    stats.steps_run = step + 1;
  }
  if (stats_out) *stats_out = stats;
  return sub;
}

/// Jointly trains M shared adapter banks per layer and one L x M embedding
/// row per speaker; each sample's forward uses its speaker's row.
inline EmbeddingBundle train_embedding(const Basemodel& base, const std::vector<Corpus>& corpora,
                                       uint32_t m_banks, uint32_t d_b, const TrainConfig& cfg,
                                       TrainStats* stats_out = nullptr) {
  require(corpora.size() >= 2, ErrCode::precondition, "embedding training needs N >= 2 speakers");
  require(m_banks >= 1, ErrCode::precondition, "M must be >= 1");
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  std::vector<uint64_t> ids;
  for (const Corpus& c : corpora) ids.push_back(c.speaker_id);
  EmbeddingBundle eb =
      make_embedding_bundle(ids, base.config.d_model, d_b, base.config.n_layers, m_banks,
                            mix_seed(cfg.seed, 0x656d6200ull), cfg.adapter_init_std);

  // per-speaker rows live in standalone tensors during training
  std::vector<Tensor> rows;
  for (size_t s = 0; s < ids.size(); ++s) rows.push_back(eb.row_for(ids[s]));

  std::vector<Tensor*> params = bank_param_list(eb);
  for (auto& r : rows) params.push_back(&r);

  detail::SamplePool pool(corpora);
  Rng rng(mix_seed(cfg.seed, 0x656d6232ull));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  TrainStats stats;
  const size_t d = base.config.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    std::map<uint32_t, std::vector<uint32_t>> groups;
    for (uint32_t b = 0; b < cfg.batch_size; ++b) {
      const auto [c, u] = pool.pairs[rng.below(pool.pairs.size())];
      groups[c].push_back(u);
    }
    Graph g;
    Graph::Ref total{};
    size_t total_elems = 0;
    bool first = true;
    for (const auto& [c, utts] : groups) {
      std::vector<float> xs, ys;
      size_t frames = 0;
      for (uint32_t u : utts) detail::append_utt(corpora[c], u, xs, ys, frames);
      auto x = g.input(Tensor({frames, d}, std::move(xs)));
      auto y = g.input(Tensor({frames, d}, std::move(ys)));
      auto pred = graph_forward_with_embedding(g, base, eb, &rows[c], x, true, true);
      auto part = g.sse(pred, y);
      total = first ? part : g.add_scalars(total, part);
      first = false;
      total_elems += frames * d;
    }
    auto loss = g.scale_const(total, 1.0f / static_cast<float>(total_elems));
    const float lv = g.value(loss).data[0];
    detail::check_finite_loss(lv, step);
    if (step == 0) stats.initial_loss = lv;
    stats.final_loss = lv;
    detail::log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    stats.steps_run = step + 1;
  }
  for (size_t s = 0; s < ids.size(); ++s)
    std::copy(rows[s].data.begin(), rows[s].data.end(),
              eb.embedding.data.begin() + s * eb.n_layers * eb.m_banks);
  if (stats_out) *stats_out = stats;
  return eb;
}

struct AdaptResult {
  Tensor e_row;            // [L, M] row trained for the new speaker
  EmbeddingBundle bundle;  // banks (possibly fine-tuned) + the single row
  TrainStats stats;
};

/// New-speaker adaptation: the trained embedding matrix is discarded and a
/// fresh row is initialized from N(0, variance 0.1). In emb_and_banks mode
/// the banks start from their pre-trained values and continue training; in
/// emb_only mode they stay frozen.
inline AdaptResult adapt_new_speaker(const Basemodel& base, const EmbeddingBundle& eb,
                                     const Corpus& corpus, const TrainConfig& cfg,
                                     AdaptMode mode = AdaptMode::emb_and_banks,
                                     size_t train_frames = 50) {
  require(cfg.steps >= 1, ErrCode::precondition, "steps must be >= 1");
  Corpus limited = corpus.limit_train_frames(train_frames);  // throws if too small

  AdaptResult result;
  result.bundle = eb;
  result.bundle.speaker_ids = {corpus.speaker_id};
  Rng rng(detail::speaker_scoped_seed(cfg, corpus.speaker_id, 0x6e657773ull));
  // variance 0.1 => std sqrt(0.1)
  result.e_row = Tensor::random_normal(
      {eb.n_layers, eb.m_banks}, 0.0f, 0.31622776601683794f, rng);

  std::vector<Tensor*> params{&result.e_row};
  if (mode == AdaptMode::emb_and_banks)
    for (Tensor* t : bank_param_list(result.bundle)) params.push_back(t);

  const auto train_utts = limited.indices(Split::train);
  Rng sampler(mix_seed(cfg.seed, 0x6164617074ull));
  AdamState state;
  AdamHyper hp{cfg.lr, 0.9f, 0.999f, 1e-8f};
  const size_t d = base.config.d_in;
  for (uint32_t step = 0; step < cfg.steps; ++step) {
    std::vector<float> xs, ys;
    size_t frames = 0;
    for (uint32_t b = 0; b < cfg.batch_size; ++b)
      detail::append_utt(limited, static_cast<uint32_t>(train_utts[sampler.below(train_utts.size())]),
                         xs, ys, frames);
    Graph g;
    auto x = g.input(Tensor({frames, d}, std::move(xs)));
    auto y = g.input(Tensor({frames, d}, std::move(ys)));
    auto pred = graph_forward_with_embedding(g, base, result.bundle, &result.e_row, x,
                                             mode == AdaptMode::emb_and_banks, true);
    auto loss = g.mse(pred, y);
    const float lv = g.value(loss).data[0];
    detail::check_finite_loss(lv, step);
    if (step == 0) result.stats.initial_loss = lv;
    result.stats.final_loss = lv;
    detail::log_step(cfg, step, lv);
    adam_step(params, g.backward(loss), state, hp);
    result.stats.steps_run = step + 1;
  }
  result.bundle.embedding = Tensor({1, static_cast<size_t>(eb.n_layers) * eb.m_banks},
                                   result.e_row.data);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

constexpr double kFerThreshold = 0.1;  // per-frame MSE above this counts as a frame error

/// Which model variant answers for a speaker. All pointers are optional;
/// everything null means the plain basemodel.
struct VariantRef {
  const Basemodel* full = nullptr;  // replaces the base entirely
  const Submodel* submodel = nullptr;
  const OneHotBundle* bundle = nullptr;
  const EmbeddingBundle* eb = nullptr;
  const Tensor* e_row = nullptr;  // explicit row; defaults to eb->row_for(speaker)
};

inline Tensor variant_forward(const Basemodel& base, const VariantRef& v, uint64_t speaker_id,
                              const Tensor& x) {
  const Basemodel& m = v.full ? *v.full : base;
  if (v.submodel) return forward_with_submodel(m, v.submodel, x);
  if (v.bundle) return forward_with_bundle(m, *v.bundle, speaker_id, x);
  if (v.eb) {
    Tensor row = v.e_row ? *v.e_row : v.eb->row_for(speaker_id);
    return forward_with_embedding(m, *v.eb, row, x);
  }
  return base_forward(m, x);
}

struct SplitEval {
  double mse = 0.0;
  double fer = 0.0;
  size_t frames = 0;
};

/// Deterministic per-split evaluation; per-frame squared errors accumulate in
/// double.
inline SplitEval evaluate(const Basemodel& base, const VariantRef& v, const Corpus& corpus,
                          Split split) {
  const auto utts = corpus.indices(split);
  require(!utts.empty(), ErrCode::precondition, "evaluate: split is empty");
  SplitEval out;
  double total = 0.0;
  size_t errors = 0;
  for (size_t u : utts) {
    const Utterance& utt = corpus.utts[u];
    Tensor pred = variant_forward(base, v, corpus.speaker_id, utt.x);
    const size_t frames = utt.x.shape[0], d = utt.x.shape[1];
    for (size_t f = 0; f < frames; ++f) {
      double acc = 0.0;
      for (size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(pred.data[f * d + j]) - utt.y.data[f * d + j];
        acc += diff * diff;
      }
      const double frame_mse = acc / static_cast<double>(d);
      total += frame_mse;
      if (frame_mse > kFerThreshold) ++errors;
      ++out.frames;
    }
  }
  out.mse = total / static_cast<double>(out.frames);
  out.fer = static_cast<double>(errors) / static_cast<double>(out.frames);
  return out;
}

struct EvalRow {
  uint64_t speaker_id = 0;
  double dev_mse = 0.0, dev_fer = 0.0;
  double test_mse = 0.0, test_fer = 0.0;
};

struct Aggregate {
  double mean = 0.0, median = 0.0, stdev = 0.0;
};

inline Aggregate aggregate(std::vector<double> values) {
  require(!values.empty(), ErrCode::precondition, "aggregate over empty values");
  Aggregate a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  a.median = (n % 2) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.stdev = std::sqrt(sq / static_cast<double>(n));
  return a;
}

struct EvalReport {
  std::string approach;
  std::vector<EvalRow> rows;
  Aggregate dev, test;
};

inline EvalRow evaluate_speaker(const Basemodel& base, const VariantRef& v, const Corpus& corpus) {
  EvalRow row;
  row.speaker_id = corpus.speaker_id;
  SplitEval dev = evaluate(base, v, corpus, Split::dev);
  SplitEval test = evaluate(base, v, corpus, Split::test);
  row.dev_mse = dev.mse;
  row.dev_fer = dev.fer;
  row.test_mse = test.mse;
  row.test_fer = test.fer;
  return row;
}

inline EvalReport build_report(std::string approach, std::vector<EvalRow> rows) {
  require(!rows.empty(), ErrCode::precondition, "report needs at least one row");
  EvalReport r;
  r.approach = std::move(approach);
  r.rows = std::move(rows);
  std::vector<double> dev, test;
  for (const auto& row : r.rows) {
    dev.push_back(row.dev_mse);
    test.push_back(row.test_mse);
  }
  r.dev = aggregate(dev);
  r.test = aggregate(test);
  return r;
}

/// Tab-separated comparison across approaches, one row per approach. All
/// reports must cover the same speakers.
inline std::string comparison_table(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), ErrCode::precondition, "no reports to compare");
  std::vector<uint64_t> ids;
  for (const auto& row : reports[0].rows) ids.push_back(row.speaker_id);
  for (const auto& rep : reports) {
    std::vector<uint64_t> got;
    for (const auto& row : rep.rows) got.push_back(row.speaker_id);
    require(got == ids, ErrCode::precondition,
            "comparison_table: reports cover different speaker sets");
  }
  std::string out = "approach\tdev_mean\tdev_median\tdev_stdev\ttest_mean\ttest_median\ttest_stdev\n";
  char buf[256];
  for (const auto& rep : reports) {
    std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  rep.approach.c_str(), rep.dev.mean, rep.dev.median, rep.dev.stdev,
                  rep.test.mean, rep.test.median, rep.test.stdev);
    out += buf;
  }
  return out;
}

}  // namespace subm
