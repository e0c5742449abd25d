#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <thread>

#include "subm/format.hpp"

using namespace subm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("subm_test_" + std::to_string(mix_seed(
                               std::chrono::steady_clock::now().time_since_epoch().count())));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

bool same_submodel(const Submodel& a, const Submodel& b) {
  if (a.meta.speaker_id != b.meta.speaker_id || a.meta.d_model != b.meta.d_model ||
      a.meta.d_b != b.meta.d_b || a.meta.n_layers != b.meta.n_layers)
    return false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].alpha != b.layers[l].alpha) return false;
    auto pa = param_list(const_cast<Submodel&>(a));
    auto pb = param_list(const_cast<Submodel&>(b));
    for (size_t i = 0; i < pa.size(); ++i)
      if (!(pa[i]->data == pb[i]->data)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("submodel save/load round trip is bit exact") {
  TempDir dir;
  Submodel s = make_submodel(42, 32, 8, 4, 7, 0.2f);
  s.layers[2].alpha = 0.0f;
  const fs::path p = dir.path / "42.subm";
  save_submodel(s, p);
  REQUIRE(fs::file_size(p) == serialized_size(count_params(32, 8, 4)));
  REQUIRE(fs::file_size(p) == 32 + 4 * 2468);
  Submodel loaded = load_submodel(p);
  REQUIRE(same_submodel(s, loaded));
}

TEST_CASE("round-tripped submodel produces bit-identical forwards") {
  TempDir dir;
  Basemodel m = make_basemodel({});
  Submodel s = make_submodel(9, m.config.d_model, 8, m.config.n_layers, 11, 0.3f);
  const fs::path p = dir.path / "9.subm";
  save_submodel(s, p);
  Submodel loaded = load_submodel(p, &m.config);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Tensor x = Tensor::random_normal({m.config.d_in}, 0.0f, 1.0f, rng);
    REQUIRE(forward_with_submodel(m, &s, x).data == forward_with_submodel(m, &loaded, x).data);
  }
}

TEST_CASE("corrupted magic is rejected with BAD_MAGIC") {
  TempDir dir;
  Submodel s = make_submodel(1, 8, 2, 1, 3);
  const fs::path p = dir.path / "1.subm";
  save_submodel(s, p);
  std::string bytes = read_file(p);
  bytes[0] = 'X';
  write_file_atomic(p, bytes);
  try {
    load_submodel(p);
    FAIL("expected BAD_MAGIC");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::bad_magic);
  }
}

TEST_CASE("unsupported version is rejected with BAD_VERSION") {
  TempDir dir;
  Submodel s = make_submodel(1, 8, 2, 1, 3);
  const fs::path p = dir.path / "1.subm";
  save_submodel(s, p);
  std::string bytes = read_file(p);
  bytes[4] = 9;  // version low byte
  write_file_atomic(p, bytes);
  try {
    load_submodel(p);
    FAIL("expected BAD_VERSION");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::bad_version);
  }
}

TEST_CASE("truncated body is rejected with TRUNCATED") {
  TempDir dir;
  Submodel s = make_submodel(1, 8, 2, 1, 3);
  const fs::path p = dir.path / "1.subm";
  save_submodel(s, p);
  std::string bytes = read_file(p);
  bytes.resize(bytes.size() - 5);
  write_file_atomic(p, bytes);
  try {
    load_submodel(p);
    FAIL("expected TRUNCATED");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::truncated);
  }
}

TEST_CASE("trailing bytes are rejected with TRUNCATED") {
  TempDir dir;
  Submodel s = make_submodel(1, 8, 2, 1, 3);
  const fs::path p = dir.path / "1.subm";
  save_submodel(s, p);
  std::string bytes = read_file(p) + "junk";
  write_file_atomic(p, bytes);
  REQUIRE_THROWS_AS(load_submodel(p), Error);
}

TEST_CASE("dimension mismatch against an expected base config") {
  TempDir dir;
  Submodel s = make_submodel(1, 16, 2, 3, 3);
  const fs::path p = dir.path / "1.subm";
  save_submodel(s, p);
  BasemodelConfig cfg;  // d_model 32, L 4
  try {
    load_submodel(p, &cfg);
    FAIL("expected DIM_MISMATCH");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrCode::dim_mismatch);
  }
}

TEST_CASE("bundle file round trip preserves member order and bits") {
  TempDir dir;
  OneHotBundle b;
  for (uint64_t i = 0; i < 3; ++i) b.members.push_back(make_submodel(10 + i, 16, 4, 2, i));
  const fs::path p = dir.path / "bundle.bndl";
  save_bundle(b, p);
  OneHotBundle loaded = load_bundle(p);
  REQUIRE(loaded.members.size() == 3);
  for (size_t i = 0; i < 3; ++i) REQUIRE(same_submodel(b.members[i], loaded.members[i]));
  // count prefix + three members
  REQUIRE(fs::file_size(p) == 4 + 3 * serialized_size(count_params(16, 4, 2)));
}

TEST_CASE("embedding bundle round trip preserves banks, ids and rows") {
  TempDir dir;
  auto eb = make_embedding_bundle({100, 200, 300}, 16, 4, 2, 3, 21);
  eb.alpha = 1.0f;
  const fs::path p = dir.path / "emb.embm";
  save_embedding_bundle(eb, p);
  EmbeddingBundle loaded = load_embedding_bundle(p);
  REQUIRE(loaded.speaker_ids == eb.speaker_ids);
  REQUIRE(loaded.embedding.data == eb.embedding.data);
  REQUIRE(loaded.m_banks == 3);
  REQUIRE(banks_hash(loaded) == banks_hash(eb));
  Basemodel m = make_basemodel({BasemodelConfig{16, 16, 24, 16, 2, 0}});
  Rng rng(9);
  Tensor x = Tensor::random_normal({16}, 0.0f, 1.0f, rng);
  REQUIRE(forward_with_embedding(m, eb, eb.row_for(200), x).data ==
          forward_with_embedding(m, loaded, loaded.row_for(200), x).data);
}

TEST_CASE("basemodel round trip preserves the weights hash") {
  TempDir dir;
  Basemodel m = make_basemodel({});
  const fs::path p = dir.path / "base.bm";
  save_basemodel(m, p);
  Basemodel loaded = load_basemodel(p);
  REQUIRE(weights_hash(loaded) == weights_hash(m));
  Rng rng(31);
  Tensor x = Tensor::random_normal({m.config.d_in}, 0.0f, 1.0f, rng);
  REQUIRE(base_forward(m, x).data == base_forward(loaded, x).data);
}

TEST_CASE("corpus round trip is bit exact") {
  TempDir dir;
  auto cat = gen_catalog(2, 8, 5);
  auto sp = gen_speaker(cat, 1, kSeverityModerate, 31, 77);
  auto c = gen_corpus(sp, 20, 3, 37);
  const fs::path p = dir.path / "77.corpus";
  save_corpus(c, p);
  Corpus loaded = load_corpus(p);
  REQUIRE(loaded.speaker_id == 77);
  REQUIRE(loaded.split == c.split);
  for (size_t i = 0; i < c.utts.size(); ++i) {
    REQUIRE(loaded.utts[i].x.data == c.utts[i].x.data);
    REQUIRE(loaded.utts[i].y.data == c.utts[i].y.data);
  }
  // saving the same corpus twice produces identical bytes
  const fs::path p2 = dir.path / "77b.corpus";
  save_corpus(c, p2);
  REQUIRE(read_file(p) == read_file(p2));
}

TEST_CASE("atomic writes never expose a partial file to readers") {
  TempDir dir;
  const fs::path p = dir.path / "hot.subm";
  Submodel a = make_submodel(1, 16, 4, 2, 1);
  Submodel b = make_submodel(1, 16, 4, 2, 2);
  save_submodel(a, p);
  std::atomic<bool> stop{false};
  std::atomic<int> failures{0};
  std::thread writer([&] {
    for (int i = 0; i < 200; ++i) save_submodel(i % 2 ? a : b, p);
    stop = true;
  });
  int reads = 0;
  while (!stop.load()) {
    try {
      Submodel s = load_submodel(p);
      ++reads;
    } catch (const Error&) {
      ++failures;
    }
  }
  writer.join();
  REQUIRE(failures.load() == 0);
  REQUIRE(reads > 0);
}
