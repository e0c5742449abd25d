#include <catch2/catch_amalgamated.hpp>

#include "subm/synth.hpp"

using namespace subm;

namespace {

double frobenius(const Tensor& t) {
  double acc = 0;
  for (float v : t.data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

// Power-iteration operator-norm oracle in double precision.
double operator_norm(const Tensor& a) {
  const size_t d = a.shape[0];
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> av(d), atav(d);
  double sigma = 0;
  for (int it = 0; it < 200; ++it) {
    for (size_t i = 0; i < d; ++i) {
      double acc = 0;
      for (size_t j = 0; j < d; ++j) acc += static_cast<double>(a.data[i * d + j]) * v[j];
      av[i] = acc;
    }
    for (size_t j = 0; j < d; ++j) {
      double acc = 0;
      for (size_t i = 0; i < d; ++i) acc += static_cast<double>(a.data[i * d + j]) * av[i];
      atav[j] = acc;
    }
    double norm = 0;
    for (double x : atav) norm += x * x;
    norm = std::sqrt(norm);
    for (size_t j = 0; j < d; ++j) v[j] = atav[j] / norm;
    double num = 0;
    for (double x : av) num += x * x;
    sigma = std::sqrt(num);
  }
  return sigma;
}

}  // namespace

TEST_CASE("gen_catalog is deterministic and validates preconditions") {
  auto a = gen_catalog(4, 16, 42);
  auto b = gen_catalog(4, 16, 42);
  for (size_t e = 0; e < 4; ++e) REQUIRE(a.matrices[e].data == b.matrices[e].data);
  REQUIRE_THROWS_AS(gen_catalog(1, 16, 42), Error);
}

TEST_CASE("etiology matrices have Frobenius norm near sqrt(d_in)") {
  const uint32_t d = 32;
  auto cat = gen_catalog(4, d, 7);
  for (const auto& r : cat.matrices) {
    const double f = frobenius(r);
    REQUIRE(f > std::sqrt(static_cast<double>(d)) * 0.8);
    REQUIRE(f < std::sqrt(static_cast<double>(d)) * 1.2);
  }
}

TEST_CASE("severity zero gives the exact identity distortion") {
  auto cat = gen_catalog(2, 8, 1);
  auto sp = gen_speaker(cat, 0, 0.0f, 5, 100);
  REQUIRE(sp.distortion.data == Tensor::identity(8).data);
  REQUIRE_THROWS_AS(gen_speaker(cat, 2, 0.1f, 5, 100), Error);
}

TEST_CASE("same-etiology speakers are closer than cross-etiology on average") {
  const uint32_t d = 32;
  auto cat = gen_catalog(4, d, 11);
  double same = 0, cross = 0;
  int n = 0;
  for (uint64_t k = 0; k < 20; ++k) {
    auto s = gen_speaker(cat, 0, kSeverityModerate, 1000 + k, k);
    auto t = gen_speaker(cat, 0, kSeverityModerate, 2000 + k, 100 + k);
    auto u = gen_speaker(cat, 1, kSeverityModerate, 3000 + k, 200 + k);
    same += frobenius(sub(s.distortion, t.distortion));
    cross += frobenius(sub(s.distortion, u.distortion));
    ++n;
  }
  REQUIRE(same / n < cross / n);
}

TEST_CASE("distortion magnitude is linear in severity") {
  auto cat = gen_catalog(2, 16, 3);
  auto mild = gen_speaker(cat, 0, kSeverityMild, 9, 1);
  auto severe = gen_speaker(cat, 0, kSeveritySevere, 9, 2);  // same speaker seed
  const Tensor eye = Tensor::identity(16);
  const double ratio =
      frobenius(sub(mild.distortion, eye)) / frobenius(sub(severe.distortion, eye));
  REQUIRE_THAT(ratio, Catch::Matchers::WithinAbs(0.1 / 0.6, 1e-5));
}

TEST_CASE("gen_corpus splits 300 utterances into 240/30/30") {
  auto cat = gen_catalog(2, 8, 4);
  auto sp = gen_speaker(cat, 0, kSeverityMild, 13, 1);
  auto c = gen_corpus(sp, 300, 4, 17);
  REQUIRE(c.count(Split::train) == 240);
  REQUIRE(c.count(Split::dev) == 30);
  REQUIRE(c.count(Split::test) == 30);
  REQUIRE_THROWS_AS(gen_corpus(sp, 9, 4, 17), Error);
}

TEST_CASE("splits are disjoint and cover every utterance") {
  auto labels = split_labels(250, 99);
  size_t counts[3] = {0, 0, 0};
  for (uint8_t l : labels) {
    REQUIRE(l <= 2);
    counts[l]++;
  }
  REQUIRE(counts[0] == 200);
  REQUIRE(counts[1] == 25);
  REQUIRE(counts[2] == 25);
}

TEST_CASE("typical speaker with zero noise reproduces clean frames exactly") {
  auto cat = gen_catalog(2, 8, 5);
  auto sp = gen_speaker(cat, 0, 0.0f, 21, 1, /*noise=*/0.0f);
  auto c = gen_corpus(sp, 20, 3, 23);
  for (const auto& u : c.utts) REQUIRE(u.x.data == u.y.data);
}

TEST_CASE("corpus generation is deterministic under a fixed seed") {
  auto cat = gen_catalog(2, 8, 5);
  auto sp = gen_speaker(cat, 1, kSeverityModerate, 31, 1);
  auto a = gen_corpus(sp, 20, 3, 37);
  auto b = gen_corpus(sp, 20, 3, 37);
  REQUIRE(a.split == b.split);
  for (size_t i = 0; i < a.utts.size(); ++i) {
    REQUIRE(a.utts[i].x.data == b.utts[i].x.data);
    REQUIRE(a.utts[i].y.data == b.utts[i].y.data);
  }
}

TEST_CASE("distort is exactly linear when noise is zero") {
  auto cat = gen_catalog(2, 16, 6);
  auto sp = gen_speaker(cat, 0, kSeveritySevere, 41, 1, /*noise=*/0.0f);
  Rng frames(55);
  Rng stream(0);
  for (int i = 0; i < 20; ++i) {
    Tensor y = Tensor::random_normal({16}, 0.0f, 1.0f, frames);
    Tensor y2 = scale(y, 2.0f);
    Tensor once = distort(sp, y, stream);
    Tensor twice = distort(sp, y2, stream);
    for (size_t j = 0; j < 16; ++j) REQUIRE(twice.data[j] == 2.0f * once.data[j]);
  }
}

TEST_CASE("distorted norm growth is bounded by the operator-norm oracle") {
  auto cat = gen_catalog(2, 16, 8);
  auto sp = gen_speaker(cat, 0, kSeveritySevere, 43, 1, /*noise=*/0.0f);
  // ||A y|| <= (1 + severity * ||R + kappa*P||) * ||y||
  Tensor r_plus_kp = cat.matrices[0];
  for (size_t i = 0; i < r_plus_kp.data.size(); ++i)
    r_plus_kp.data[i] += sp.kappa * sp.idiosyncrasy.data[i];
  const double bound_factor = 1.0 + sp.severity * operator_norm(r_plus_kp);
  Rng frames(77);
  Rng stream(0);
  for (int i = 0; i < 20; ++i) {
    Tensor y = Tensor::random_normal({16}, 0.0f, 1.0f, frames);
    Tensor x = distort(sp, y, stream);
    double ny = 0, nx = 0;
    for (float v : y.data) ny += static_cast<double>(v) * v;
    for (float v : x.data) nx += static_cast<double>(v) * v;
    REQUIRE(std::sqrt(nx) <= bound_factor * std::sqrt(ny) * (1.0 + 1e-4));
  }
}

TEST_CASE("limit_train_frames keeps dev/test and trims train to the budget") {
  auto cat = gen_catalog(2, 8, 5);
  auto sp = gen_speaker(cat, 0, kSeverityMild, 51, 1);
  auto c = gen_corpus(sp, 100, 4, 53);  // 80 train utts * 4 frames
  auto trimmed = c.limit_train_frames(50);
  REQUIRE(split_frames(trimmed, Split::train) == 50);
  REQUIRE(trimmed.count(Split::dev) == c.count(Split::dev));
  REQUIRE(trimmed.count(Split::test) == c.count(Split::test));
  REQUIRE_THROWS_AS(c.limit_train_frames(1000), Error);
}
