#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "subm/graph.hpp"
#include "subm/rng.hpp"
#include "subm/tensor.hpp"

namespace subm {

// ---------------------------------------------------------------------------
// Basemodel: input projection, L feed-forward residual blocks, output head.
// Frozen after base training; submodels never touch these weights.
// ---------------------------------------------------------------------------

struct BasemodelConfig {
  uint32_t d_in = 32;
  uint32_t d_model = 32;
  uint32_t d_ff = 64;
  uint32_t d_out = 32;
  uint32_t n_layers = 4;
  uint64_t seed = 0;
};

template <class T>
struct BlockT {
  TensorT<T> ln_gamma, ln_beta;  // pre-block layer norm
  TensorT<T> w1, b1;             // d_model -> d_ff
  TensorT<T> w2, b2;             // d_ff -> d_model
};

template <class T>
struct BasemodelT {
  BasemodelConfig config;
  TensorT<T> w_in, b_in;
  std::vector<BlockT<T>> blocks;
  TensorT<T> w_out, b_out;
};

using Basemodel = BasemodelT<float>;

inline Basemodel make_basemodel(const BasemodelConfig& cfg) {
  require(cfg.d_in >= 1 && cfg.d_model >= 1 && cfg.d_ff >= 1 && cfg.d_out >= 1 &&
              cfg.n_layers >= 1,
          ErrCode::precondition, "basemodel dimensions must be >= 1");
  Rng rng(mix_seed(cfg.seed, 0x6261736500ull));
  Basemodel m;
  m.config = cfg;
  auto dense = [&](size_t in, size_t out) {
    return Tensor::random_normal({in, out}, 0.0f, 1.0f / std::sqrt(static_cast<float>(in)), rng);
  };
  m.w_in = dense(cfg.d_in, cfg.d_model);
  m.b_in = Tensor::zeros({cfg.d_model});
  m.blocks.resize(cfg.n_layers);
  for (auto& b : m.blocks) {
    b.ln_gamma = Tensor::full({cfg.d_model}, 1.0f);
    b.ln_beta = Tensor::zeros({cfg.d_model});
    b.w1 = dense(cfg.d_model, cfg.d_ff);
    b.b1 = Tensor::zeros({cfg.d_ff});
    // zero-init residual branch output: blocks start as identities
    b.w2 = Tensor::zeros({cfg.d_ff, cfg.d_model});
    b.b2 = Tensor::zeros({cfg.d_model});
  }
  m.w_out = dense(cfg.d_model, cfg.d_out);
  m.b_out = Tensor::zeros({cfg.d_out});
  return m;
}

/// Canonical parameter ordering; shared by training, serialization and the
/// 64-bit grad-check path.
template <class T>
std::vector<TensorT<T>*> param_list(BasemodelT<T>& m) {
  std::vector<TensorT<T>*> out{&m.w_in, &m.b_in};
  for (auto& b : m.blocks) {
    out.push_back(&b.ln_gamma);
    out.push_back(&b.ln_beta);
    out.push_back(&b.w1);
    out.push_back(&b.b1);
    out.push_back(&b.w2);
    out.push_back(&b.b2);
  }
  out.push_back(&m.w_out);
  out.push_back(&m.b_out);
  return out;
}

template <class T, class U>
BasemodelT<U> cast_model(const BasemodelT<T>& m) {
  BasemodelT<U> out;
  out.config = m.config;
  out.w_in = m.w_in.template cast<U>();
  out.b_in = m.b_in.template cast<U>();
  for (const auto& b : m.blocks) {
    BlockT<U> nb;
    nb.ln_gamma = b.ln_gamma.template cast<U>();
    nb.ln_beta = b.ln_beta.template cast<U>();
    nb.w1 = b.w1.template cast<U>();
    nb.b1 = b.b1.template cast<U>();
    nb.w2 = b.w2.template cast<U>();
    nb.b2 = b.b2.template cast<U>();
    out.blocks.push_back(std::move(nb));
  }
  out.w_out = m.w_out.template cast<U>();
  out.b_out = m.b_out.template cast<U>();
  return out;
}

inline uint64_t weights_hash(const Basemodel& m) {
  uint64_t h = kHashSeed;
  for (const Tensor* t : param_list(const_cast<Basemodel&>(m))) h = hash_tensor(h, *t);
  return h;
}

namespace detail {
template <class T>
TensorT<T> as_rows(const TensorT<T>& x, size_t width, const char* what) {
  if (x.ndim() == 2) {
    require(x.shape[1] == width, ErrCode::dim_mismatch,
            std::string(what) + " expects width " + std::to_string(width) + ", got " +
                x.shape_str());
    return x;
  }
  require(x.ndim() == 1 && x.shape[0] == width, ErrCode::dim_mismatch,
          std::string(what) + " expects width " + std::to_string(width) + ", got " +
              x.shape_str());
  TensorT<T> r = x;
  r.shape = {1, width};
  return r;
}

template <class T>
TensorT<T> like_input(TensorT<T> rows, const TensorT<T>& original) {
  if (original.ndim() == 1) rows.shape = {rows.shape[1]};
  return rows;
}
}  // namespace detail

template <class T>
TensorT<T> block_forward(const BlockT<T>& b, const TensorT<T>& h) {
  TensorT<T> t = layer_norm(h, b.ln_gamma, b.ln_beta, T(kLayerNormEps));
  t = relu(add_row_bias(matmul(t, b.w1), b.b1));
  t = add_row_bias(matmul(t, b.w2), b.b2);
  return add(h, t);
}

/// Pure function of (base, x); x may be a single frame [d_in] or a batch
/// [B x d_in].
template <class T>
TensorT<T> base_forward(const BasemodelT<T>& m, const TensorT<T>& x) {
  TensorT<T> h = detail::as_rows(x, m.config.d_in, "base_forward");
  h = add_row_bias(matmul(h, m.w_in), m.b_in);
  for (const auto& b : m.blocks) h = block_forward(b, h);
  h = add_row_bias(matmul(h, m.w_out), m.b_out);
  return detail::like_input(std::move(h), x);
}

// ---------------------------------------------------------------------------
// Submodels: residual adapters (LN -> down -> ReLU -> up) with a 0/1 residual
// factor, one per encoder block.
// ---------------------------------------------------------------------------

template <class T>
struct AdapterBodyT {
  TensorT<T> ln_gamma, ln_beta;
  TensorT<T> w_down, b_down;  // d_model -> d_b
  TensorT<T> w_up, b_up;      // d_b -> d_model
};

template <class T>
struct AdapterParamsT {
  AdapterBodyT<T> body;
  T alpha = T(1);  // activation switch, exactly 0 or 1; never trained
};

struct SubmodelMeta {
  uint64_t speaker_id = 0;
  uint32_t d_model = 0;
  uint32_t d_b = 0;
  uint32_t n_layers = 0;
  uint16_t format_version = 1;
};

template <class T>
struct SubmodelT {
  SubmodelMeta meta;
  std::vector<AdapterParamsT<T>> layers;
};

using AdapterBody = AdapterBodyT<float>;
using AdapterParams = AdapterParamsT<float>;
using Submodel = SubmodelT<float>;

/// Number of float values in one submodel: per layer LN(2d) + down(W+b) +
/// up(W+b) + the residual factor.
inline uint64_t count_params(uint64_t d_model, uint64_t d_b, uint64_t n_layers) {
  require(d_model >= 1 && d_b >= 1 && n_layers >= 1, ErrCode::precondition,
          "count_params dimensions must be >= 1");
  return n_layers * (2 * d_model + d_model * d_b + d_b + d_b * d_model + d_model + 1);
}

/// On-disk size: 32-byte header plus 4 bytes per stored float.
inline uint64_t serialized_size(uint64_t param_count) { return 32 + 4 * param_count; }

/// The pooled baseline doubles the bottleneck to compensate for sharing.
inline uint32_t pooled_bottleneck(uint32_t d_b) { return 2 * d_b; }

inline AdapterBody make_adapter_body(uint32_t d_model, uint32_t d_b, Rng& rng, float init_std,
                                     bool zero_init_up) {
  AdapterBody a;
  a.ln_gamma = Tensor::full({d_model}, 1.0f);
  a.ln_beta = Tensor::zeros({d_model});
  a.w_down = Tensor::random_normal({d_model, d_b}, 0.0f, init_std, rng);
  a.b_down = Tensor::random_normal({d_b}, 0.0f, init_std, rng);
  if (zero_init_up) {
    a.w_up = Tensor::zeros({d_b, d_model});
    a.b_up = Tensor::zeros({d_model});
  } else {
    a.w_up = Tensor::random_normal({d_b, d_model}, 0.0f, init_std, rng);
    a.b_up = Tensor::random_normal({d_model}, 0.0f, init_std, rng);
  }
  return a;
}

inline Submodel make_submodel(uint64_t speaker_id, uint32_t d_model, uint32_t d_b,
                              uint32_t n_layers, uint64_t seed, float init_std = 0.01f,
                              bool zero_init_up = false) {
  require(d_model >= 1 && d_b >= 1 && n_layers >= 1, ErrCode::precondition,
          "submodel dimensions must be >= 1");
  Rng rng(mix_seed(seed, 0x61646170ull));
  Submodel s;
  s.meta = {speaker_id, d_model, d_b, n_layers, 1};
  s.layers.resize(n_layers);
  for (auto& l : s.layers) {
    l.body = make_adapter_body(d_model, d_b, rng, init_std, zero_init_up);
    l.alpha = 1.0f;
  }
  return s;
}

template <class T>
std::vector<TensorT<T>*> param_list(AdapterBodyT<T>& a) {
  return {&a.ln_gamma, &a.ln_beta, &a.w_down, &a.b_down, &a.w_up, &a.b_up};
}

/// Trainable tensors only; alpha is a switch, not a weight.
template <class T>
std::vector<TensorT<T>*> param_list(SubmodelT<T>& s) {
  std::vector<TensorT<T>*> out;
  for (auto& l : s.layers)
    for (auto* t : param_list(l.body)) out.push_back(t);
  return out;
}

template <class T, class U>
AdapterBodyT<U> cast_body(const AdapterBodyT<T>& a) {
  AdapterBodyT<U> out;
  out.ln_gamma = a.ln_gamma.template cast<U>();
  out.ln_beta = a.ln_beta.template cast<U>();
  out.w_down = a.w_down.template cast<U>();
  out.b_down = a.b_down.template cast<U>();
  out.w_up = a.w_up.template cast<U>();
  out.b_up = a.b_up.template cast<U>();
  return out;
}

template <class T, class U>
SubmodelT<U> cast_submodel(const SubmodelT<T>& s) {
  SubmodelT<U> out;
  out.meta = s.meta;
  for (const auto& l : s.layers)
    out.layers.push_back({cast_body<T, U>(l.body), static_cast<U>(l.alpha)});
  return out;
}

inline uint64_t submodel_hash(const Submodel& s) {
  uint64_t h = kHashSeed;
  for (const Tensor* t : param_list(const_cast<Submodel&>(s))) h = hash_tensor(h, *t);
  for (const auto& l : s.layers) h = hash_bytes(h, &l.alpha, sizeof(l.alpha));
  return h;
}

/// Number of floats actually stored in this submodel instance.
inline uint64_t stored_floats(const Submodel& s) {
  uint64_t n = 0;
  for (const auto& l : s.layers) {
    const auto& b = l.body;
    n += b.ln_gamma.numel() + b.ln_beta.numel() + b.w_down.numel() + b.b_down.numel() +
         b.w_up.numel() + b.b_up.numel() + 1;
  }
  return n;
}

/// The four logical transport tensors of one adapter layer: LN stats
/// (gamma||beta), down projection (W||b), up projection (W||b), residual
/// factor.
inline std::array<Tensor, 4> transport_tensors(const AdapterParams& a) {
  auto concat = [](const Tensor& x, const Tensor& y) {
    Tensor out({x.numel() + y.numel()});
    std::copy(x.data.begin(), x.data.end(), out.data.begin());
    std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.numel());
    return out;
  };
  return {concat(a.body.ln_gamma, a.body.ln_beta), concat(a.body.w_down, a.body.b_down),
          concat(a.body.w_up, a.body.b_up), Tensor::full({1}, a.alpha)};
}

template <class T>
TensorT<T> adapter_body_apply(const AdapterBodyT<T>& a, const TensorT<T>& h) {
  TensorT<T> t = layer_norm(h, a.ln_gamma, a.ln_beta, T(kLayerNormEps));
  t = relu(add_row_bias(matmul(t, a.w_down), a.b_down));
  t = add_row_bias(matmul(t, a.w_up), a.b_up);
  return t;
}

/// h + alpha * body(h). With alpha == 0 the body is not evaluated and h is
/// returned unchanged.
template <class T>
TensorT<T> adapter_apply(const AdapterParamsT<T>& a, const TensorT<T>& h) {
  if (a.alpha == T(0)) return h;
  return add(h, scale(adapter_body_apply(a.body, h), a.alpha));
}

template <class T>
void check_submodel_shapes(const BasemodelConfig& cfg, const SubmodelT<T>& s) {
  require(s.meta.d_model == cfg.d_model && s.meta.n_layers == cfg.n_layers, ErrCode::dim_mismatch,
          "submodel (d_model=" + std::to_string(s.meta.d_model) +
              ", L=" + std::to_string(s.meta.n_layers) + ") does not match base (d_model=" +
              std::to_string(cfg.d_model) + ", L=" + std::to_string(cfg.n_layers) + ")");
  require(s.layers.size() == s.meta.n_layers, ErrCode::dim_mismatch,
          "submodel layer count does not match its meta");
  for (const auto& l : s.layers) {
    require(l.body.w_down.ndim() == 2 && l.body.w_down.shape[0] == s.meta.d_model &&
                l.body.w_down.shape[1] == s.meta.d_b && l.body.w_up.shape[0] == s.meta.d_b &&
                l.body.w_up.shape[1] == s.meta.d_model && l.body.ln_gamma.numel() == s.meta.d_model,
            ErrCode::dim_mismatch, "submodel tensor shapes do not match its meta");
  }
}

/// Basemodel forward with an adapter applied after each block; sub == nullptr
/// behaves exactly like base_forward.
template <class T>
TensorT<T> forward_with_submodel(const BasemodelT<T>& m, const SubmodelT<T>* sub,
                                 const TensorT<T>& x) {
  if (sub == nullptr) return base_forward(m, x);
  check_submodel_shapes(m.config, *sub);
  TensorT<T> h = detail::as_rows(x, m.config.d_in, "forward_with_submodel");
  h = add_row_bias(matmul(h, m.w_in), m.b_in);
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    h = block_forward(m.blocks[l], h);
    h = adapter_apply(sub->layers[l], h);
  }
  h = add_row_bias(matmul(h, m.w_out), m.b_out);
  return detail::like_input(std::move(h), x);
}

// ---------------------------------------------------------------------------
// One-hot bundle: N member submodels addressed by speaker id.
// ---------------------------------------------------------------------------

template <class T>
struct OneHotBundleT {
  std::vector<SubmodelT<T>> members;  // index in this vector = one-hot index

  size_t index_of(uint64_t speaker_id) const {
    for (size_t i = 0; i < members.size(); ++i)
      if (members[i].meta.speaker_id == speaker_id) return i;
    fail(ErrCode::unknown_speaker, "speaker " + std::to_string(speaker_id) + " not in bundle");
  }

  void validate() const {
    require(members.size() >= 1, ErrCode::precondition, "bundle has no members");
    for (size_t i = 0; i < members.size(); ++i)
      for (size_t j = i + 1; j < members.size(); ++j)
        require(members[i].meta.speaker_id != members[j].meta.speaker_id, ErrCode::precondition,
                "duplicate speaker id " + std::to_string(members[i].meta.speaker_id));
    for (const auto& m : members)
      require(m.meta.d_model == members[0].meta.d_model && m.meta.d_b == members[0].meta.d_b &&
                  m.meta.n_layers == members[0].meta.n_layers,
              ErrCode::dim_mismatch, "bundle members have differing shapes");
  }
};

using OneHotBundle = OneHotBundleT<float>;

/// Identical to forward_with_submodel on the selected member, bit for bit.
template <class T>
TensorT<T> forward_with_bundle(const BasemodelT<T>& m, const OneHotBundleT<T>& bundle,
                               uint64_t speaker_id, const TensorT<T>& x) {
  return forward_with_submodel(m, &bundle.members[bundle.index_of(speaker_id)], x);
}

// ---------------------------------------------------------------------------
// Embedding bundle: M shared adapter banks per layer, mixed by a per-speaker
// L x M real-valued embedding row.
// ---------------------------------------------------------------------------

template <class T>
struct EmbeddingBundleT {
  uint32_t d_model = 0, d_b = 0, n_layers = 0, m_banks = 0;
  T alpha = T(1);                                   // global activation switch
  std::vector<std::vector<AdapterBodyT<T>>> banks;  // [L][M]
  std::vector<uint64_t> speaker_ids;                // N registered speakers
  TensorT<T> embedding;                             // [N, L*M], row-major per layer

  size_t index_of(uint64_t speaker_id) const {
    for (size_t i = 0; i < speaker_ids.size(); ++i)
      if (speaker_ids[i] == speaker_id) return i;
    fail(ErrCode::unknown_speaker,
         "speaker " + std::to_string(speaker_id) + " not in embedding bundle");
  }

  /// The speaker's embedding as an [L, M] matrix.
  TensorT<T> row_for(uint64_t speaker_id) const {
    const size_t i = index_of(speaker_id);
    TensorT<T> r({n_layers, m_banks});
    std::copy(embedding.data.begin() + i * n_layers * m_banks,
              embedding.data.begin() + (i + 1) * n_layers * m_banks, r.data.begin());
    return r;
  }
};

using EmbeddingBundle = EmbeddingBundleT<float>;

inline EmbeddingBundle make_embedding_bundle(const std::vector<uint64_t>& speaker_ids,
                                             uint32_t d_model, uint32_t d_b, uint32_t n_layers,
                                             uint32_t m_banks, uint64_t seed,
                                             float init_std = 0.01f,
                                             float embed_init_std = 0.31622776601683794f) {
  require(m_banks >= 1, ErrCode::precondition, "embedding bundle needs M >= 1");
  Rng rng(mix_seed(seed, 0x656d626dull));
  EmbeddingBundle eb;
  eb.d_model = d_model;
  eb.d_b = d_b;
  eb.n_layers = n_layers;
  eb.m_banks = m_banks;
  eb.alpha = 1.0f;
  eb.banks.resize(n_layers);
  for (auto& layer : eb.banks)
    for (uint32_t m = 0; m < m_banks; ++m)
      layer.push_back(make_adapter_body(d_model, d_b, rng, init_std, false));
  eb.speaker_ids = speaker_ids;
  eb.embedding =
      Tensor::random_normal({speaker_ids.size(), static_cast<size_t>(n_layers) * m_banks}, 0.0f,
                            embed_init_std, rng);
  return eb;
}

template <class T>
std::vector<TensorT<T>*> bank_param_list(EmbeddingBundleT<T>& eb) {
  std::vector<TensorT<T>*> out;
  for (auto& layer : eb.banks)
    for (auto& bank : layer)
      for (auto* t : param_list(bank)) out.push_back(t);
  return out;
}

inline uint64_t banks_hash(const EmbeddingBundle& eb) {
  uint64_t h = kHashSeed;
  for (const Tensor* t : bank_param_list(const_cast<EmbeddingBundle&>(eb))) h = hash_tensor(h, *t);
  return h;
}

/// At each layer l the block output h gains alpha * sum_m e[l,m] * body_m(h).
/// When alpha == 0 the banks are not evaluated at all.
template <class T>
TensorT<T> forward_with_embedding(const BasemodelT<T>& m, const EmbeddingBundleT<T>& eb,
                                  const TensorT<T>& e_row, const TensorT<T>& x) {
  require(eb.d_model == m.config.d_model && eb.n_layers == m.config.n_layers,
          ErrCode::dim_mismatch, "embedding bundle does not match base config");
  require(e_row.numel() == static_cast<size_t>(eb.n_layers) * eb.m_banks, ErrCode::dim_mismatch,
          "embedding row shape " + e_row.shape_str() + " does not match L=" +
              std::to_string(eb.n_layers) + ", M=" + std::to_string(eb.m_banks));
  TensorT<T> h = detail::as_rows(x, m.config.d_in, "forward_with_embedding");
  h = add_row_bias(matmul(h, m.w_in), m.b_in);
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    h = block_forward(m.blocks[l], h);
    if (eb.alpha != T(0)) {
      TensorT<T> mix;
      for (size_t b = 0; b < eb.m_banks; ++b) {
        TensorT<T> body = scale(adapter_body_apply(eb.banks[l][b], h), e_row.data[l * eb.m_banks + b]);
        mix = (b == 0) ? std::move(body) : add(mix, body);
      }
      h = add(h, scale(mix, eb.alpha));
    }
  }
  h = add_row_bias(matmul(h, m.w_out), m.b_out);
  return detail::like_input(std::move(h), x);
}

// ---------------------------------------------------------------------------
// Tape-forward builders used by the training regimes.
// ---------------------------------------------------------------------------

inline Graph::Ref graph_block_forward(Graph& g, const BlockT<float>& b, Graph::Ref h,
                                      bool trainable) {
  auto t = g.layer_norm(h, g.leaf(&b.ln_gamma, trainable), g.leaf(&b.ln_beta, trainable));
  t = g.relu(g.add_row_bias(g.matmul(t, g.leaf(&b.w1, trainable)), g.leaf(&b.b1, trainable)));
  t = g.add_row_bias(g.matmul(t, g.leaf(&b.w2, trainable)), g.leaf(&b.b2, trainable));
  return g.add(h, t);
}

inline Graph::Ref graph_adapter_body(Graph& g, const AdapterBody& a, Graph::Ref h,
                                     bool trainable) {
  auto t = g.layer_norm(h, g.leaf(&a.ln_gamma, trainable), g.leaf(&a.ln_beta, trainable));
  t = g.relu(g.add_row_bias(g.matmul(t, g.leaf(&a.w_down, trainable)),
                            g.leaf(&a.b_down, trainable)));
  t = g.add_row_bias(g.matmul(t, g.leaf(&a.w_up, trainable)), g.leaf(&a.b_up, trainable));
  return t;
}

inline Graph::Ref graph_input_proj(Graph& g, const Basemodel& m, Graph::Ref x,
                                   bool train_base) {
  return g.add_row_bias(g.matmul(x, g.leaf(&m.w_in, train_base)), g.leaf(&m.b_in, train_base));
}

inline Graph::Ref graph_output_head(Graph& g, const Basemodel& m, Graph::Ref h,
                                    bool train_base) {
  return g.add_row_bias(g.matmul(h, g.leaf(&m.w_out, train_base)), g.leaf(&m.b_out, train_base));
}

inline Graph::Ref graph_base_forward(Graph& g, const Basemodel& m, Graph::Ref x,
                                     bool train_base) {
  auto h = graph_input_proj(g, m, x, train_base);
  for (const auto& b : m.blocks) h = graph_block_forward(g, b, h, train_base);
  return graph_output_head(g, m, h, train_base);
}

/// Forward used when training a submodel: adapters are applied with alpha = 1.
inline Graph::Ref graph_forward_with_submodel(Graph& g, const Basemodel& m, const Submodel& sub,
                                              Graph::Ref x, bool train_base,
                                              bool train_adapters) {
  check_submodel_shapes(m.config, sub);
  auto h = graph_input_proj(g, m, x, train_base);
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    h = graph_block_forward(g, m.blocks[l], h, train_base);
    h = g.add(h, graph_adapter_body(g, sub.layers[l].body, h, train_adapters));
  }
  return graph_output_head(g, m, h, train_base);
}

/// Forward used when training the embedding bundle. e_row points at an [L, M]
/// tensor owned by the caller (a view copy of one embedding row) and is bound
/// as a trainable leaf when train_row is set.
inline Graph::Ref graph_forward_with_embedding(Graph& g, const Basemodel& m,
                                               const EmbeddingBundle& eb, const Tensor* e_row,
                                               Graph::Ref x, bool train_banks, bool train_row) {
  auto row = g.leaf(e_row, train_row);
  auto h = graph_input_proj(g, m, x, false);
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    h = graph_block_forward(g, m.blocks[l], h, false);
    Graph::Ref mix{};
    for (size_t b = 0; b < eb.m_banks; ++b) {
      auto body = graph_adapter_body(g, eb.banks[l][b], h, train_banks);
      auto scaled = g.scale_by_entry(body, row, l * eb.m_banks + b);
      mix = (b == 0) ? scaled : g.add(mix, scaled);
    }
    h = g.add(h, mix);
  }
  return graph_output_head(g, m, h, false);
}

}  // namespace subm
