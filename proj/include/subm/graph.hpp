#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "subm/tensor.hpp"

namespace subm {

/// Gradients keyed by parameter storage (the Tensor living inside a model
/// struct). Only trainable parameters ever appear.
using GradMap = std::unordered_map<const Tensor*, Tensor>;

/// Reverse-mode tape over float tensors. One Graph records one forward pass;
/// backward() replays the log once, in reverse order, accumulating gradients
/// additively when a value is used more than once. A Graph is confined to a
/// single thread; independent Graphs may run concurrently.
class Graph {
 public:
  struct Ref {
    const Graph* owner = nullptr;
    int idx = -1;
  };

  /// Binds model parameter storage as a leaf. Repeated calls with the same
  /// pointer return the same node, so gradient contributions accumulate.
  Ref leaf(const Tensor* param, bool trainable) {
    auto it = leaf_index_.find(param);
    if (it != leaf_index_.end()) return ref(it->second);
    int idx = push_value(*param, trainable);
    leaf_index_.emplace(param, idx);
    if (trainable) trainable_leaves_.push_back({param, idx});
    return ref(idx);
  }

  /// A constant input (no gradient is ever propagated into it).
  Ref input(Tensor value) { return ref(push_value(std::move(value), false)); }

  const Tensor& value(Ref r) const {
    check_ref(r);
    return values_[r.idx];
  }

  Ref matmul(Ref a, Ref b) {
    check_ref(a), check_ref(b);
    int out = push_value(subm::matmul(values_[a.idx], values_[b.idx]),
                         needs_[a.idx] || needs_[b.idx]);
    if (needs_[out])
      nodes_.push_back([ai = a.idx, bi = b.idx, out](Graph& g) {
        const Tensor& go = g.grads_[out];
        if (g.needs_[ai]) g.accumulate(ai, detail::matmul_nt_acc64(go, g.values_[bi]));
        if (g.needs_[bi]) g.accumulate(bi, detail::matmul_tn_acc64(g.values_[ai], go));
      });
    return ref(out);
  }

  Ref add(Ref a, Ref b) {
    check_ref(a), check_ref(b);
    int out = push_value(subm::add(values_[a.idx], values_[b.idx]),
                         needs_[a.idx] || needs_[b.idx]);
    if (needs_[out])
      nodes_.push_back([ai = a.idx, bi = b.idx, out](Graph& g) {
        if (g.needs_[ai]) g.accumulate(ai, g.grads_[out]);
        if (g.needs_[bi]) g.accumulate(bi, g.grads_[out]);
      });
    return ref(out);
  }

  Ref add_row_bias(Ref x, Ref b) {
    check_ref(x), check_ref(b);
    int out = push_value(subm::add_row_bias(values_[x.idx], values_[b.idx]),
                         needs_[x.idx] || needs_[b.idx]);
    if (needs_[out])
      nodes_.push_back([xi = x.idx, bi = b.idx, out](Graph& g) {
        const Tensor& go = g.grads_[out];
        if (g.needs_[xi]) g.accumulate(xi, go);
        if (g.needs_[bi]) {
          const size_t d = g.values_[bi].numel();
          const size_t rows = go.numel() / d;
          std::vector<double> acc(d, 0.0);
          for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < d; ++j) acc[j] += go.data[i * d + j];
          Tensor db({d});
          for (size_t j = 0; j < d; ++j) db.data[j] = static_cast<float>(acc[j]);
          g.accumulate(bi, std::move(db));
        }
      });
    return ref(out);
  }

  Ref relu(Ref x) {
    check_ref(x);
    int out = push_value(subm::relu(values_[x.idx]), needs_[x.idx]);
    if (needs_[out])
      nodes_.push_back([xi = x.idx, out](Graph& g) {
        const Tensor& go = g.grads_[out];
        Tensor dx = go;
        const Tensor& xv = g.values_[xi];
        for (size_t i = 0; i < dx.data.size(); ++i)
          if (xv.data[i] <= 0.0f) dx.data[i] = 0.0f;
        g.accumulate(xi, std::move(dx));
      });
    return ref(out);
  }

  Ref layer_norm(Ref x, Ref gamma, Ref beta, float eps = kLayerNormEps) {
    check_ref(x), check_ref(gamma), check_ref(beta);
    const Tensor& xv = values_[x.idx];
    const Tensor& gv = values_[gamma.idx];
    Tensor y = subm::layer_norm(xv, gv, values_[beta.idx], eps);
    const size_t d = gv.numel();
    const size_t rows = xv.numel() / d;
    // cache normalized rows and per-row 1/sigma for the backward pass
    auto xhat = std::make_shared<Tensor>(xv.shape, std::vector<float>(xv.numel()));
    auto inv = std::make_shared<std::vector<float>>(rows);
    for (size_t i = 0; i < rows; ++i) {
      double sum = 0.0, sq = 0.0;
      const float* xr = &xv.data[i * d];
      for (size_t j = 0; j < d; ++j) sum += xr[j];
      const double mean = sum / static_cast<double>(d);
      for (size_t j = 0; j < d; ++j) {
        const double c = xr[j] - mean;
        sq += c * c;
      }
      const float mu = static_cast<float>(mean);
      const float is = static_cast<float>(1.0 / std::sqrt(sq / d + static_cast<double>(eps)));
      (*inv)[i] = is;
      for (size_t j = 0; j < d; ++j) xhat->data[i * d + j] = (xr[j] - mu) * is;
    }
    int out = push_value(std::move(y), needs_[x.idx] || needs_[gamma.idx] || needs_[beta.idx]);
    if (needs_[out])
      nodes_.push_back([xi = x.idx, gi = gamma.idx, bi = beta.idx, out, xhat, inv, d,
                        rows](Graph& g) {
        const Tensor& go = g.grads_[out];
        const Tensor& gv = g.values_[gi];
        if (g.needs_[bi]) {
          std::vector<double> acc(d, 0.0);
          for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < d; ++j) acc[j] += go.data[i * d + j];
          Tensor db({d});
          for (size_t j = 0; j < d; ++j) db.data[j] = static_cast<float>(acc[j]);
          g.accumulate(bi, std::move(db));
        }
        if (g.needs_[gi]) {
          std::vector<double> acc(d, 0.0);
          for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < d; ++j)
              acc[j] += static_cast<double>(go.data[i * d + j]) * xhat->data[i * d + j];
          Tensor dg({d});
          for (size_t j = 0; j < d; ++j) dg.data[j] = static_cast<float>(acc[j]);
          g.accumulate(gi, std::move(dg));
        }
        if (g.needs_[xi]) {
          Tensor dx(g.values_[xi].shape);
          for (size_t i = 0; i < rows; ++i) {
            double mean_gg = 0.0, mean_ggx = 0.0;
            for (size_t j = 0; j < d; ++j) {
              const double gg = static_cast<double>(go.data[i * d + j]) * gv.data[j];
              mean_gg += gg;
              mean_ggx += gg * xhat->data[i * d + j];
            }
            mean_gg /= static_cast<double>(d);
            mean_ggx /= static_cast<double>(d);
            const float is = (*inv)[i];
            for (size_t j = 0; j < d; ++j) {
              const double gg = static_cast<double>(go.data[i * d + j]) * gv.data[j];
              dx.data[i * d + j] = static_cast<float>(
                  (gg - mean_gg - xhat->data[i * d + j] * mean_ggx) * is);
            }
          }
          g.accumulate(xi, std::move(dx));
        }
      });
    return ref(out);
  }

  /// out = x * coeffs[entry]; gradient reaches both x and the single entry.
  Ref scale_by_entry(Ref x, Ref coeffs, size_t entry) {
    check_ref(x), check_ref(coeffs);
    require(entry < values_[coeffs.idx].numel(), ErrCode::precondition,
            "scale_by_entry index out of range");
    const float c = values_[coeffs.idx].data[entry];
    int out = push_value(subm::scale(values_[x.idx], c), needs_[x.idx] || needs_[coeffs.idx]);
    if (needs_[out])
      nodes_.push_back([xi = x.idx, ci = coeffs.idx, entry, c, out](Graph& g) {
        const Tensor& go = g.grads_[out];
        if (g.needs_[xi]) g.accumulate(xi, subm::scale(go, c));
        if (g.needs_[ci]) {
          const Tensor& xv = g.values_[xi];
          double acc = 0.0;
          for (size_t i = 0; i < xv.data.size(); ++i)
            acc += static_cast<double>(go.data[i]) * xv.data[i];
          Tensor dc(g.values_[ci].shape);
          dc.data[entry] = static_cast<float>(acc);
          g.accumulate(ci, std::move(dc));
        }
      });
    return ref(out);
  }

  /// Scalar node: mean over all elements of (pred-target)^2.
  Ref mse(Ref pred, Ref target) { return sq_error(pred, target, true); }

  /// Scalar node: sum over all elements of (pred-target)^2.
  Ref sse(Ref pred, Ref target) { return sq_error(pred, target, false); }

  Ref add_scalars(Ref a, Ref b) {
    check_ref(a), check_ref(b);
    require(values_[a.idx].numel() == 1 && values_[b.idx].numel() == 1, ErrCode::precondition,
            "add_scalars expects scalars");
    Tensor v({1});
    v.data[0] = values_[a.idx].data[0] + values_[b.idx].data[0];
    int out = push_value(std::move(v), needs_[a.idx] || needs_[b.idx]);
    if (needs_[out])
      nodes_.push_back([ai = a.idx, bi = b.idx, out](Graph& g) {
        if (g.needs_[ai]) g.accumulate(ai, g.grads_[out]);
        if (g.needs_[bi]) g.accumulate(bi, g.grads_[out]);
      });
    return ref(out);
  }

  Ref scale_const(Ref a, float c) {
    check_ref(a);
    int out = push_value(subm::scale(values_[a.idx], c), needs_[a.idx]);
    if (needs_[out])
      nodes_.push_back([ai = a.idx, c, out](Graph& g) {
        if (g.needs_[ai]) g.accumulate(ai, subm::scale(g.grads_[out], c));
      });
    return ref(out);
  }

  /// Replays the log backwards exactly once and returns gradients for the
  /// trainable leaves that participated in the recorded computation. Frozen
  /// parameters never appear in the result.
  GradMap backward(Ref loss) {
    check_ref(loss);
    require(values_[loss.idx].numel() == 1, ErrCode::precondition,
            "backward: loss is not a scalar, shape " + values_[loss.idx].shape_str());
    grads_.assign(values_.size(), Tensor());
    grads_[loss.idx] = Tensor::full({1}, 1.0f);
    for (size_t i = nodes_.size(); i-- > 0;) nodes_[i](*this);
    GradMap out;
    for (const auto& [param, idx] : trainable_leaves_) {
      if (grads_[idx].numel() == 0) continue;
      auto [it, fresh] = out.emplace(param, std::move(grads_[idx]));
      if (!fresh) it->second = subm::add(it->second, grads_[idx]);
    }
    return out;
  }

  size_t logged_ops() const { return nodes_.size(); }

 private:
  Ref ref(int idx) const { return Ref{this, idx}; }

  void check_ref(Ref r) const {
    require(r.owner == this && r.idx >= 0 && r.idx < static_cast<int>(values_.size()),
            ErrCode::precondition, "value was not produced under this record");
  }

  int push_value(Tensor v, bool needs) {
    values_.push_back(std::move(v));
    needs_.push_back(needs);
    return static_cast<int>(values_.size()) - 1;
  }

  void accumulate(int idx, Tensor g) {
    if (grads_[idx].numel() == 0)
      grads_[idx] = std::move(g);
    else
      grads_[idx] = subm::add(grads_[idx], g);
  }

  Ref sq_error(Ref pred, Ref target, bool mean) {
    check_ref(pred), check_ref(target);
    const Tensor& p = values_[pred.idx];
    const Tensor& t = values_[target.idx];
    require(p.same_shape(t), ErrCode::dim_mismatch,
            "loss shape mismatch: " + p.shape_str() + " vs " + t.shape_str());
    Tensor v({1});
    v.data[0] = mean ? subm::mse_loss(p, t) : subm::sse(p, t);
    const float w = mean ? 1.0f / static_cast<float>(p.numel()) : 1.0f;
    int out = push_value(std::move(v), needs_[pred.idx] || needs_[target.idx]);
    if (needs_[out])
      nodes_.push_back([pi = pred.idx, ti = target.idx, w, out](Graph& g) {
        const float g0 = g.grads_[out].data[0];
        const Tensor& p = g.values_[pi];
        const Tensor& t = g.values_[ti];
        if (g.needs_[pi]) {
          Tensor dp = subm::sub(p, t);
          for (auto& x : dp.data) x *= 2.0f * w * g0;
          g.accumulate(pi, std::move(dp));
        }
        if (g.needs_[ti]) {
          Tensor dt = subm::sub(t, p);
          for (auto& x : dt.data) x *= 2.0f * w * g0;
          g.accumulate(ti, std::move(dt));
        }
      });
    return ref(out);
  }

  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<char> needs_;
  std::vector<std::function<void(Graph&)>> nodes_;
  std::unordered_map<const Tensor*, int> leaf_index_;
  std::vector<std::pair<const Tensor*, int>> trainable_leaves_;
};

}  // namespace subm
