#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "subm/graph.hpp"
#include "subm/tensor.hpp"

namespace subm {

struct AdamHyper {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Per-parameter moments; the step counter advances only when that parameter
/// receives a gradient, so sparsely-updated parameters (one-hot bundle
/// members) get the same bias correction as a dedicated job would apply.
struct AdamSlot {
  Tensor m, v;
  int64_t t = 0;
};

class AdamState {
 public:
  AdamSlot& slot_for(const Tensor* param) {
    auto it = slots_.find(param);
    if (it == slots_.end()) {
      AdamSlot s;
      s.m = Tensor::zeros(param->shape);
      s.v = Tensor::zeros(param->shape);
      it = slots_.emplace(param, std::move(s)).first;
    }
    return it->second;
  }

  const AdamSlot* find(const Tensor* param) const {
    auto it = slots_.find(param);
    return it == slots_.end() ? nullptr : &it->second;
  }

  size_t size() const { return slots_.size(); }

 private:
  std::unordered_map<const Tensor*, AdamSlot> slots_;
};

/// Standard Adam with bias correction, applied only to parameters present in
/// grads. Parameters absent from grads are left bit-identical.
inline void adam_step(const std::vector<Tensor*>& params, const GradMap& grads, AdamState& state,
                      const AdamHyper& hp) {
  size_t applied = 0;
  for (Tensor* p : params) {
    auto it = grads.find(p);
    if (it == grads.end()) continue;
    ++applied;
    const Tensor& g = it->second;
    require(g.same_shape(*p), ErrCode::dim_mismatch,
            "adam_step gradient shape " + g.shape_str() + " vs param " + p->shape_str());
    AdamSlot& s = state.slot_for(p);
    s.t += 1;
    const float c1 = 1.0f - hp.beta1;
    const float c2 = 1.0f - hp.beta2;
    const float m_corr =
        static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(hp.beta1), s.t)));
    const float v_corr =
        static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(hp.beta2), s.t)));
    for (size_t i = 0; i < p->data.size(); ++i) {
      float& m = s.m.data[i];
      float& v = s.v.data[i];
      m = hp.beta1 * m + c1 * g.data[i];
      v = hp.beta2 * v + c2 * g.data[i] * g.data[i];
      const float mhat = m * m_corr;
      const float vhat = v * v_corr;
      p->data[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
  require(applied == grads.size(), ErrCode::precondition,
          "adam_step: gradient keys are not a subset of the parameter list");
}

}  // namespace subm
