#include <catch2/catch_amalgamated.hpp>

#include "subm/grad_check.hpp"
#include "subm/model.hpp"

using namespace subm;

namespace {

Tensor rand_frames(size_t n, size_t d, Rng& rng) {
  return Tensor::random_normal({n, d}, 0.0f, 1.0f, rng);
}

// Straight-line reimplementation of the adapter block for the 0-ULP check:
// LN with double mean/var accumulators, float normalization, canonical-order
// float matmuls.
Tensor adapter_oracle(const AdapterParams& a, const Tensor& h) {
  const size_t rows = h.shape[0], d = h.shape[1], db = a.body.b_down.numel();
  Tensor out = h;
  if (a.alpha == 0.0f) return out;
  for (size_t r = 0; r < rows; ++r) {
    const float* hr = &h.data[r * d];
    std::vector<float> ln(d);
    double sum = 0, sq = 0;
    for (size_t j = 0; j < d; ++j) sum += hr[j];
    const double mean = sum / static_cast<double>(d);
    for (size_t j = 0; j < d; ++j) sq += (hr[j] - mean) * (hr[j] - mean);
    const float mu = static_cast<float>(mean);
    const float inv = static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(d) + 1e-5));
    for (size_t j = 0; j < d; ++j)
      ln[j] = a.body.ln_gamma.data[j] * ((hr[j] - mu) * inv) + a.body.ln_beta.data[j];
    std::vector<float> mid(db);
    for (size_t k = 0; k < db; ++k) {
      float acc = 0.0f;
      for (size_t t = 0; t < d; ++t) acc += ln[t] * a.body.w_down.data[t * db + k];
      acc += a.body.b_down.data[k];
      mid[k] = acc > 0.0f ? acc : 0.0f;
    }
    for (size_t j = 0; j < d; ++j) {
      float acc = 0.0f;
      for (size_t t = 0; t < db; ++t) acc += mid[t] * a.body.w_up.data[t * d + j];
      acc += a.body.b_up.data[j];
      out.data[r * d + j] = hr[j] + a.alpha * acc;
    }
  }
  return out;
}

BasemodelConfig tiny_config() {
  BasemodelConfig cfg;
  cfg.d_in = cfg.d_model = cfg.d_out = 8;
  cfg.d_ff = 12;
  cfg.n_layers = 2;
  cfg.seed = 0;
  return cfg;
}

}  // namespace

TEST_CASE("count_params matches the reported paper-scale count") {
  REQUIRE(count_params(512, 64, 17) == 1141329ull);  // "only 1.2M parameters"
  REQUIRE(count_params(1, 1, 1) == 7ull);
  REQUIRE(count_params(512, 128, 17) == 2256529ull);  // pooled shape, d_b = 128
  REQUIRE_THROWS_AS(count_params(0, 64, 17), Error);
}

TEST_CASE("serialized_size matches the reported on-disk sizes") {
  REQUIRE(serialized_size(count_params(512, 64, 17)) == 4565348ull);
  REQUIRE(std::abs(4565348.0 / 4.6e6 - 1.0) < 0.02);  // quoted 4.6 MB
  REQUIRE(serialized_size(165000000ull) == 660000032ull);
  REQUIRE(std::abs(660000032.0 / 6.68e8 - 1.0) < 0.02);  // quoted 668 MB
  REQUIRE(serialized_size(0) == 32ull);
}

TEST_CASE("submodel-to-full-model accounting ratios") {
  const double sub = static_cast<double>(count_params(512, 64, 17));
  const double full = 165e6;
  REQUIRE(sub / full < 0.01);
  REQUIRE(std::abs(sub / full * 100.0 - 0.72) < 0.1);  // quoted 0.72%
  const double size_ratio = static_cast<double>(serialized_size(count_params(512, 64, 17))) /
                            static_cast<double>(serialized_size(165000000ull));
  REQUIRE(size_ratio < 0.01);
  REQUIRE(std::abs(1024.0 * sub / 1.3e9 - 1.0) < 0.15);  // quoted ~1.3B for 1024 speakers
}

TEST_CASE("pooled bottleneck default is 2x") { REQUIRE(pooled_bottleneck(64) == 128); }

TEST_CASE("stored float count equals count_params") {
  Submodel s = make_submodel(7, 32, 8, 4, 123);
  REQUIRE(stored_floats(s) == count_params(32, 8, 4));
  REQUIRE(count_params(32, 8, 4) == 2468ull);
}

TEST_CASE("transport grouping is four logical tensors per layer") {
  Submodel s = make_submodel(1, 16, 4, 2, 9);
  auto tt = transport_tensors(s.layers[0]);
  REQUIRE(tt.size() == 4);
  REQUIRE(tt[0].numel() == 32);           // gamma || beta
  REQUIRE(tt[1].numel() == 16 * 4 + 4);   // down W || b
  REQUIRE(tt[2].numel() == 4 * 16 + 16);  // up W || b
  REQUIRE(tt[3].numel() == 1);            // residual factor
  REQUIRE(tt[3].data[0] == 1.0f);
}

TEST_CASE("base_forward zero input through zero biases gives zero output") {
  BasemodelConfig cfg;
  cfg.d_in = cfg.d_model = cfg.d_out = 4;
  cfg.d_ff = 8;
  cfg.n_layers = 2;
  cfg.seed = 0;
  Basemodel m = make_basemodel(cfg);
  Tensor y = base_forward(m, Tensor::zeros({4}));
  for (float v : y.data) REQUIRE(v == 0.0f);
}

TEST_CASE("base_forward d=1 composed-bias path is hand computable") {
  BasemodelConfig cfg;
  cfg.d_in = cfg.d_model = cfg.d_ff = cfg.d_out = 1;
  cfg.n_layers = 1;
  Basemodel m = make_basemodel(cfg);
  m.w_in = Tensor({1, 1}, {2.0f});
  m.b_in = Tensor({1}, {0.5f});
  m.blocks[0].ln_gamma = Tensor({1}, {1.5f});
  m.blocks[0].ln_beta = Tensor({1}, {0.25f});
  m.blocks[0].w1 = Tensor({1, 1}, {3.0f});
  m.blocks[0].b1 = Tensor({1}, {-0.2f});
  m.blocks[0].w2 = Tensor({1, 1}, {1.5f});
  m.blocks[0].b2 = Tensor({1}, {0.1f});
  m.w_out = Tensor({1, 1}, {0.8f});
  m.b_out = Tensor({1}, {-0.3f});
  // x=0: h=0.5; LN (d=1, zero variance) -> beta=0.25; relu(0.25*3-0.2)=0.55;
  // 0.55*1.5+0.1=0.925; residual 1.425; out 1.425*0.8-0.3=0.84
  Tensor y = base_forward(m, Tensor::zeros({1}));
  REQUIRE_THAT(static_cast<double>(y.data[0]), Catch::Matchers::WithinAbs(0.84, 1e-6));
}

TEST_CASE("base_forward is pure and checks input width") {
  Basemodel m = make_basemodel({});
  Rng rng(21);
  Tensor x = rand_frames(5, m.config.d_in, rng);
  REQUIRE(base_forward(m, x).data == base_forward(m, x).data);
  REQUIRE_THROWS_AS(base_forward(m, Tensor::zeros({m.config.d_in + 1})), Error);
}

TEST_CASE("adapter_apply alpha=0 skips the body bit-exactly") {
  Rng rng(33);
  Submodel s = make_submodel(5, 16, 4, 1, 77);
  s.layers[0].alpha = 0.0f;
  Tensor h = rand_frames(3, 16, rng);
  REQUIRE(adapter_apply(s.layers[0], h).data == h.data);
}

TEST_CASE("adapter_apply with zero up projection is the identity") {
  Rng rng(34);
  Submodel s = make_submodel(5, 16, 4, 1, 78, 0.01f, /*zero_init_up=*/true);
  REQUIRE(s.layers[0].alpha == 1.0f);
  Tensor h = rand_frames(2, 16, rng);
  REQUIRE(adapter_apply(s.layers[0], h).data == h.data);
}

TEST_CASE("adapter_apply matches the straight-line oracle to 0 ULP") {
  Rng rng(35);
  Submodel s = make_submodel(5, 4, 2, 1, 79, 0.5f);
  Tensor h = rand_frames(6, 4, rng);
  Tensor got = adapter_apply(s.layers[0], h);
  Tensor expect = adapter_oracle(s.layers[0], h);
  for (size_t i = 0; i < got.data.size(); ++i) REQUIRE(got.data[i] == expect.data[i]);
}

TEST_CASE("forward_with_submodel: null and all-alpha-0 are the base") {
  Basemodel m = make_basemodel({});
  Submodel s = make_submodel(5, m.config.d_model, 8, m.config.n_layers, 80);
  for (auto& l : s.layers) l.alpha = 0.0f;
  Rng rng(36);
  Tensor x = rand_frames(4, m.config.d_in, rng);
  Tensor base = base_forward(m, x);
  REQUIRE(forward_with_submodel(m, static_cast<const Submodel*>(nullptr), x).data == base.data);
  REQUIRE(forward_with_submodel(m, &s, x).data == base.data);
}

TEST_CASE("forward_with_submodel rejects mismatched shapes") {
  Basemodel m = make_basemodel({});
  Submodel wrong_width = make_submodel(5, m.config.d_model + 1, 8, m.config.n_layers, 81);
  Tensor x = Tensor::zeros({m.config.d_in});
  try {
    forward_with_submodel(m, &wrong_width, x);
    FAIL("expected DIM_MISMATCH");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::dim_mismatch);
  }
  Submodel bad_meta = make_submodel(5, m.config.d_model, 8, m.config.n_layers, 82);
  bad_meta.meta.d_b = 16;  // meta no longer matches stored tensors
  REQUIRE_THROWS_AS(forward_with_submodel(m, &bad_meta, x), Error);
}

TEST_CASE("bundle selection equals the member forward, 0 ULP") {
  Basemodel m = make_basemodel({});
  OneHotBundle b;
  b.members.push_back(make_submodel(11, m.config.d_model, 8, m.config.n_layers, 90));
  b.members.push_back(make_submodel(22, m.config.d_model, 8, m.config.n_layers, 91));
  b.validate();
  Rng rng(40);
  for (int i = 0; i < 10; ++i) {
    Tensor x = rand_frames(1, m.config.d_in, rng);
    REQUIRE(forward_with_bundle(m, b, 22, x).data ==
            forward_with_submodel(m, &b.members[1], x).data);
  }
  REQUIRE_THROWS_AS(forward_with_bundle(m, b, 99, Tensor::zeros({m.config.d_in})), Error);
}

TEST_CASE("bundle validation rejects duplicates and mixed shapes") {
  OneHotBundle dup;
  dup.members.push_back(make_submodel(7, 32, 8, 4, 1));
  dup.members.push_back(make_submodel(7, 32, 8, 4, 2));
  REQUIRE_THROWS_AS(dup.validate(), Error);
  OneHotBundle mixed;
  mixed.members.push_back(make_submodel(1, 32, 8, 4, 1));
  mixed.members.push_back(make_submodel(2, 32, 4, 4, 2));
  REQUIRE_THROWS_AS(mixed.validate(), Error);
}

TEST_CASE("embedding mixture: zero row reproduces the base bit-exactly") {
  Basemodel m = make_basemodel({});
  auto eb = make_embedding_bundle({1, 2}, m.config.d_model, 8, m.config.n_layers, 4, 7);
  Tensor row = Tensor::zeros({m.config.n_layers, 4});
  Rng rng(41);
  Tensor x = rand_frames(3, m.config.d_in, rng);
  REQUIRE(forward_with_embedding(m, eb, row, x).data == base_forward(m, x).data);
}

TEST_CASE("embedding mixture M=1 with unit row equals a single submodel") {
  Basemodel m = make_basemodel({});
  auto eb = make_embedding_bundle({1}, m.config.d_model, 8, m.config.n_layers, 1, 8);
  Tensor row = Tensor::full({m.config.n_layers, 1}, 1.0f);
  Submodel s;
  s.meta = {1, m.config.d_model, 8, m.config.n_layers, 1};
  for (uint32_t l = 0; l < m.config.n_layers; ++l) s.layers.push_back({eb.banks[l][0], 1.0f});
  Rng rng(42);
  Tensor x = rand_frames(2, m.config.d_in, rng);
  REQUIRE(forward_with_embedding(m, eb, row, x).data ==
          forward_with_submodel(m, &s, x).data);
}

TEST_CASE("embedding mixture matches a straight-line oracle to 0 ULP") {
  BasemodelConfig cfg;
  cfg.d_in = cfg.d_model = cfg.d_out = 4;
  cfg.d_ff = 8;
  cfg.n_layers = 2;
  cfg.seed = 3;
  Basemodel m = make_basemodel(cfg);
  auto eb = make_embedding_bundle({1}, 4, 2, 2, 2, 9, 0.5f);
  Rng rng(43);
  Tensor row = Tensor::random_normal({2, 2}, 0.0f, 1.0f, rng);
  Tensor x = rand_frames(3, 4, rng);

  Tensor h = add_row_bias(matmul(Tensor({3, 4}, x.data), m.w_in), m.b_in);
  for (size_t l = 0; l < 2; ++l) {
    h = block_forward(m.blocks[l], h);
    Tensor mix;
    for (size_t b = 0; b < 2; ++b) {
      Tensor body = scale(adapter_body_apply(eb.banks[l][b], h), row.data[l * 2 + b]);
      mix = (b == 0) ? std::move(body) : add(mix, body);
    }
    h = add(h, scale(mix, eb.alpha));
  }
  h = add_row_bias(matmul(h, m.w_out), m.b_out);

  REQUIRE(forward_with_embedding(m, eb, row, x).data == h.data);
  REQUIRE_THROWS_AS(forward_with_embedding(m, eb, Tensor::zeros({3, 2}), x), Error);
}

TEST_CASE("frozen base hash is stable across submodel operations") {
  Basemodel m = make_basemodel({});
  const uint64_t h0 = weights_hash(m);
  Submodel s = make_submodel(5, m.config.d_model, 8, m.config.n_layers, 99);
  Rng rng(44);
  Tensor x = rand_frames(8, m.config.d_in, rng);
  forward_with_submodel(m, &s, x);
  auto eb = make_embedding_bundle({1, 2}, m.config.d_model, 8, m.config.n_layers, 2, 17);
  forward_with_embedding(m, eb, Tensor::zeros({m.config.n_layers, 2}), x);
  REQUIRE(weights_hash(m) == h0);
}

// ---------------------------------------------------------------------------
// Tape forwards: values must match the pure forwards bit-for-bit, and
// gradients must match 64-bit central differences.
// ---------------------------------------------------------------------------

TEST_CASE("tape forward value equals pure forward (submodel path)") {
  Basemodel m = make_basemodel(tiny_config());
  Submodel s = make_submodel(1, 8, 4, 2, 5, 0.3f);
  Rng rng(50);
  Tensor x = rand_frames(4, 8, rng);
  Graph g;
  auto pred = graph_forward_with_submodel(g, m, s, g.input(x), false, true);
  REQUIRE(g.value(pred).data == forward_with_submodel(m, &s, x).data);
}

TEST_CASE("grad check: frozen base + trainable adapter at d_model=8") {
  Basemodel m = make_basemodel(tiny_config());
  Submodel s = make_submodel(1, 8, 4, 2, 0, 0.3f);
  Rng rng(51);
  Tensor x = rand_frames(3, 8, rng);
  Tensor target = rand_frames(3, 8, rng);

  Graph g;
  auto pred = graph_forward_with_submodel(g, m, s, g.input(x), false, true);
  auto loss = g.mse(pred, g.input(target));
  GradMap grads = g.backward(loss);

  auto base_d = cast_model<float, double>(m);
  std::vector<const Tensor*> params;
  for (Tensor* t : param_list(s)) params.push_back(t);
  auto loss64 = [&](const std::vector<std::vector<double>>& p) {
    SubmodelT<double> sd = cast_submodel<float, double>(s);
    auto list = param_list(sd);
    for (size_t i = 0; i < list.size(); ++i) list[i]->data = p[i];
    auto pred_d = forward_with_submodel(base_d, &sd, x.cast<double>());
    return static_cast<double>(mse_loss(pred_d, target.cast<double>()));
  };
  auto report = grad_check(loss64, params, grads, 1e-3, 1e-3);
  INFO(report.worst_coord << " rel err " << report.max_rel_err);
  REQUIRE(report.pass);
  for (Tensor* t : param_list(m)) REQUIRE(grads.find(t) == grads.end());
}

TEST_CASE("grad check: full fine-tune trains every base parameter") {
  Basemodel m = make_basemodel(tiny_config());
  Rng rng(52);
  Tensor x = rand_frames(2, 8, rng);
  Tensor target = rand_frames(2, 8, rng);

  Graph g;
  auto pred = graph_base_forward(g, m, g.input(x), true);
  auto loss = g.mse(pred, g.input(target));
  GradMap grads = g.backward(loss);
  REQUIRE(grads.size() == param_list(m).size());

  std::vector<const Tensor*> params;
  for (Tensor* t : param_list(m)) params.push_back(t);
  auto loss64 = [&](const std::vector<std::vector<double>>& p) {
    BasemodelT<double> md = cast_model<float, double>(m);
    auto list = param_list(md);
    for (size_t i = 0; i < list.size(); ++i) list[i]->data = p[i];
    auto pred_d = base_forward(md, x.cast<double>());
    return static_cast<double>(mse_loss(pred_d, target.cast<double>()));
  };
  auto report = grad_check(loss64, params, grads, 1e-3, 1e-3);
  INFO(report.worst_coord << " rel err " << report.max_rel_err);
  REQUIRE(report.pass);
}

TEST_CASE("grad check: embedding mixture with M=2 banks") {
  Basemodel m = make_basemodel(tiny_config());
  auto eb = make_embedding_bundle({1}, 8, 4, 2, 2, 13, 0.3f);
  Tensor row = eb.row_for(1);
  Rng rng(53);
  Tensor x = rand_frames(2, 8, rng);
  Tensor target = rand_frames(2, 8, rng);

  Graph g;
  auto pred = graph_forward_with_embedding(g, m, eb, &row, g.input(x), true, true);
  auto loss = g.mse(pred, g.input(target));
  GradMap grads = g.backward(loss);

  std::vector<const Tensor*> params{&row};
  for (Tensor* t : bank_param_list(eb)) params.push_back(t);
  auto base_d = cast_model<float, double>(m);
  auto loss64 = [&](const std::vector<std::vector<double>>& p) {
    EmbeddingBundleT<double> ed;
    ed.d_model = eb.d_model;
    ed.d_b = eb.d_b;
    ed.n_layers = eb.n_layers;
    ed.m_banks = eb.m_banks;
    ed.alpha = 1.0;
    ed.speaker_ids = eb.speaker_ids;
    ed.embedding = eb.embedding.cast<double>();
    for (const auto& layer : eb.banks) {
      std::vector<AdapterBodyT<double>> dl;
      for (const auto& bank : layer) dl.push_back(cast_body<float, double>(bank));
      ed.banks.push_back(std::move(dl));
    }
    TensorT<double> row_d(row.shape, p[0]);
    size_t idx = 1;
    for (auto& layer : ed.banks)
      for (auto& bank : layer)
        for (auto* t : param_list(bank)) t->data = p[idx++];
    auto pred_d = forward_with_embedding(base_d, ed, row_d, x.cast<double>());
    return static_cast<double>(mse_loss(pred_d, target.cast<double>()));
  };
  auto report = grad_check(loss64, params, grads, 1e-3, 1e-3);
  INFO(report.worst_coord << " rel err " << report.max_rel_err);
  REQUIRE(report.pass);
}
