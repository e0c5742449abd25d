// subm: data generation, training regimes, submodel store tooling, serving
// and benchmarks for the basemodel/submodel personalization workflow.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "subm/format.hpp"
#include "subm/manifest.hpp"
#include "subm/model.hpp"
#include "subm/probe.hpp"
#include "subm/serving.hpp"
#include "subm/synth.hpp"
#include "subm/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace subm;

namespace {

struct SpeakerEntry {
  uint64_t speaker_id = 0;
  std::string kind;  // "typical" | "atypical"
  std::string etiology;
  uint32_t etiology_index = 0;
  float severity = 0.0f;
  float noise = kDefaultNoise;
  std::string file;
};

struct DataDir {
  fs::path root;
  std::vector<SpeakerEntry> speakers;

  std::vector<SpeakerEntry> of_kind(const std::string& kind) const {
    std::vector<SpeakerEntry> out;
    for (const auto& s : speakers)
      if (s.kind == kind) out.push_back(s);
    return out;
  }

  Corpus corpus_for(const SpeakerEntry& e) const { return load_corpus(root / e.file); }

  std::map<uint64_t, SpeakerLabel> labels() const {
    std::map<uint64_t, SpeakerLabel> out;
    for (const auto& s : speakers) out[s.speaker_id] = SpeakerLabel{s.etiology, s.severity};
    return out;
  }
};

DataDir load_data_dir(const fs::path& root) {
  DataDir d;
  d.root = root;
  const fs::path manifest = root / "speakers.jsonl";
  require(fs::exists(manifest), ErrCode::io_error, "no speakers.jsonl under " + root.string());
  std::ifstream f(manifest);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SpeakerEntry e;
    e.speaker_id = j.at("speaker_id").get<uint64_t>();
    e.kind = j.at("kind").get<std::string>();
    e.etiology = j.at("etiology").get<std::string>();
    e.etiology_index = j.at("etiology_index").get<uint32_t>();
    e.severity = j.at("severity").get<float>();
    e.noise = j.at("noise").get<float>();
    e.file = j.at("file").get<std::string>();
    d.speakers.push_back(std::move(e));
  }
  require(!d.speakers.empty(), ErrCode::io_error, "speakers.jsonl is empty");
  return d;
}

std::vector<Corpus> corpora_of_kind(const DataDir& d, const std::string& kind) {
  std::vector<Corpus> out;
  for (const auto& e : d.of_kind(kind)) out.push_back(d.corpus_for(e));
  require(!out.empty(), ErrCode::precondition, "data dir has no " + kind + " speakers");
  return out;
}

std::vector<float> parse_severities(const std::string& csv) {
  std::vector<float> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t end = csv.find(',', pos);
    if (end == std::string::npos) end = csv.size();
    out.push_back(std::stof(csv.substr(pos, end - pos)));
    pos = end + 1;
    if (end == csv.size()) break;
  }
  require(!out.empty(), ErrCode::precondition, "empty severity pattern");
  return out;
}

json train_cfg_json(const TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size}, {"steps", cfg.steps},   {"lr", cfg.lr},
              {"seed", cfg.seed},             {"adapter_init_std", cfg.adapter_init_std},
              {"zero_init_up", cfg.zero_init_up}};
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--steps", cfg.steps, "training steps");
  cmd->add_option("--batch", cfg.batch_size, "utterances per batch");
  cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  cmd->add_option("--seed", cfg.seed, "training seed");
  cmd->add_option("--log-every", cfg.log_every, "print loss every N steps (0 = quiet)");
  cmd->add_flag("--zero-init-up", cfg.zero_init_up, "zero-init adapter up projections");
}

void write_eval_outputs(const fs::path& out, const std::string& name, const EvalReport& report) {
  std::string tsv = "speaker_id\tdev_mse\tdev_fer\ttest_mse\ttest_fer\n";
  std::string jsonl;
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%llu\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  static_cast<unsigned long long>(r.speaker_id), r.dev_mse, r.dev_fer, r.test_mse,
                  r.test_fer);
    tsv += buf;
    jsonl += json{{"speaker_id", r.speaker_id},
                  {"dev_mse", r.dev_mse},
                  {"dev_fer", r.dev_fer},
                  {"test_mse", r.test_mse},
                  {"test_fer", r.test_fer}}
                 .dump() +
             "\n";
  }
  jsonl +=
      json{{"aggregate", true},
           {"approach", report.approach},
           {"dev",
            {{"mean", report.dev.mean}, {"median", report.dev.median}, {"stdev", report.dev.stdev}}},
           {"test",
            {{"mean", report.test.mean}, {"median", report.test.median}, {"stdev", report.test.stdev}}}}
          .dump() +
      "\n";
  write_file_atomic(out / ("eval." + name + ".tsv"), tsv);
  write_file_atomic(out / ("eval." + name + ".jsonl"), jsonl);
}

EvalReport read_eval_jsonl(const std::string& name, const fs::path& path) {
  std::ifstream f(path);
  require(f.good(), ErrCode::io_error, "cannot open " + path.string());
  std::vector<EvalRow> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.contains("aggregate")) continue;
    EvalRow r;
    r.speaker_id = j.at("speaker_id").get<uint64_t>();
    r.dev_mse = j.at("dev_mse").get<double>();
    r.dev_fer = j.at("dev_fer").get<double>();
    r.test_mse = j.at("test_mse").get<double>();
    r.test_fer = j.at("test_fer").get<double>();
    rows.push_back(r);
  }
  return build_report(name, std::move(rows));
}

int cmd_gen_data(const fs::path& out, uint32_t n_atypical, uint32_t n_typical,
                 uint32_t n_etiologies, uint32_t d_in, uint32_t n_utts, uint32_t frames,
                 float noise, uint64_t seed, const std::string& severity_csv) {
  const auto severities = parse_severities(severity_csv);
  EtiologyCatalog cat = gen_catalog(n_etiologies, d_in, seed);
  fs::create_directories(out);

  std::string manifest;
  std::vector<std::string> outputs;
  auto emit = [&](const SpeakerProfile& sprof, const std::string& kind, uint64_t corpus_seed,
                  uint32_t utts, uint32_t T) {
    Corpus c = gen_corpus(sprof, utts, T, corpus_seed);
    const std::string file = std::to_string(sprof.speaker_id) + ".corpus";
    save_corpus(c, out / file);
    outputs.push_back(file);
    manifest += json{{"speaker_id", sprof.speaker_id},
                     {"kind", kind},
                     {"etiology", cat.names[sprof.etiology]},
                     {"etiology_index", sprof.etiology},
                     {"severity", sprof.severity},
                     {"noise", sprof.noise},
                     {"speaker_seed", sprof.seed},
                     {"corpus_seed", corpus_seed},
                     {"n_utts", utts},
                     {"frames_per_utt", T},
                     {"file", file}}
                    .dump() +
                "\n";
  };

  uint64_t next_id = 1;
  for (uint32_t i = 0; i < n_typical; ++i, ++next_id) {
    auto sprof = gen_speaker(cat, i % n_etiologies, 0.0f, mix_seed(seed, next_id), next_id, noise);
    emit(sprof, "typical", mix_seed(seed, 0xc0000 + next_id), n_utts, frames);
  }
  for (uint32_t i = 0; i < n_atypical; ++i, ++next_id) {
    const float sev = severities[(i / n_etiologies) % severities.size()];
    auto sprof = gen_speaker(cat, i % n_etiologies, sev, mix_seed(seed, next_id), next_id, noise);
    emit(sprof, "atypical", mix_seed(seed, 0xc0000 + next_id), n_utts, frames);
  }
  write_file_atomic(out / "speakers.jsonl", manifest);
  outputs.push_back("speakers.jsonl");
  write_manifest(out, "gen-data",
                 json{{"speakers", n_atypical},
                      {"typical", n_typical},
                      {"etiologies", n_etiologies},
                      {"d_in", d_in},
                      {"n_utts", n_utts},
                      {"frames", frames},
                      {"noise", noise},
                      {"seed", seed},
                      {"severities", severity_csv}},
                 {}, outputs);
  std::cout << "wrote " << outputs.size() - 1 << " corpora under " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"basemodel/submodel personalization toolkit"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic speaker population");
  fs::path gen_out;
  uint32_t gen_speakers = 16, gen_typical = 4, gen_etiologies = 4, gen_din = 32, gen_utts = 300,
           gen_frames = 10;
  float gen_noise = kDefaultNoise;
  uint64_t gen_seed = 0;
  std::string gen_sev = "0.1,0.3,0.3,0.6";
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--speakers", gen_speakers, "atypical speaker count");
  gen->add_option("--typical", gen_typical, "typical speaker count");
  gen->add_option("--etiologies", gen_etiologies, "etiology count");
  gen->add_option("--d-in", gen_din, "frame width");
  gen->add_option("--n-utts", gen_utts, "utterances per speaker");
  gen->add_option("--frames", gen_frames, "frames per utterance");
  gen->add_option("--noise", gen_noise, "observation noise sigma");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--severities", gen_sev, "severity pattern cycled across speakers");

  // ---- train-base ----
  auto* tb = app.add_subcommand("train-base", "train the frozen basemodel on typical speakers");
  fs::path tb_data, tb_out;
  BasemodelConfig tb_cfg;
  TrainConfig tb_train;
  tb->add_option("--data", tb_data, "gen-data directory")->required();
  tb->add_option("--out", tb_out, "output directory")->required();
  tb->add_option("--d-model", tb_cfg.d_model, "hidden width");
  tb->add_option("--d-ff", tb_cfg.d_ff, "block inner width");
  tb->add_option("--layers", tb_cfg.n_layers, "encoder blocks");
  tb->add_option("--model-seed", tb_cfg.seed, "weight init seed");
  add_train_flags(tb, tb_train);

  // ---- finetune-full ----
  auto* ff = app.add_subcommand("finetune-full", "fine-tune every parameter for one speaker");
  fs::path ff_base, ff_data, ff_out;
  uint64_t ff_speaker = 0;
  TrainConfig ff_train;
  ff->add_option("--base", ff_base, "basemodel file")->required();
  ff->add_option("--data", ff_data, "gen-data directory")->required();
  ff->add_option("--speaker", ff_speaker, "speaker id")->required();
  ff->add_option("--out", ff_out, "output directory")->required();
  add_train_flags(ff, ff_train);

  // ---- train-submodel ----
  auto* ts = app.add_subcommand("train-submodel", "train per-speaker submodels (base frozen)");
  fs::path ts_base, ts_data, ts_out;
  uint64_t ts_speaker = 0;
  uint32_t ts_db = 8, ts_parallel = 1;
  bool ts_all = false;
  TrainConfig ts_train;
  ts->add_option("--base", ts_base, "basemodel file")->required();
  ts->add_option("--data", ts_data, "gen-data directory")->required();
  ts->add_option("--out", ts_out, "output store directory")->required();
  ts->add_option("--speaker", ts_speaker, "speaker id (omit with --all-atypical)");
  ts->add_flag("--all-atypical", ts_all, "train one submodel per atypical speaker");
  ts->add_option("--d-b", ts_db, "bottleneck width");
  ts->add_option("--parallel", ts_parallel, "concurrent per-speaker jobs");
  add_train_flags(ts, ts_train);

  // ---- train-onehot ----
  auto* oh = app.add_subcommand("train-onehot", "train N submodels in one job");
  fs::path oh_base, oh_data, oh_out;
  uint32_t oh_db = 8;
  TrainConfig oh_train;
  oh->add_option("--base", oh_base, "basemodel file")->required();
  oh->add_option("--data", oh_data, "gen-data directory")->required();
  oh->add_option("--out", oh_out, "output directory")->required();
  oh->add_option("--d-b", oh_db, "bottleneck width");
  add_train_flags(oh, oh_train);

  // ---- split ----
  auto* spc = app.add_subcommand("split", "split a one-hot bundle into .subm files");
  fs::path sp_bundle, sp_out;
  spc->add_option("--bundle", sp_bundle, "bundle file")->required();
  spc->add_option("--out", sp_out, "output store directory")->required();

  // ---- train-pooled ----
  auto* tp = app.add_subcommand("train-pooled", "train one speaker-independent submodel");
  fs::path tp_base, tp_data, tp_out;
  uint32_t tp_db = pooled_bottleneck(8);
  TrainConfig tp_train;
  tp->add_option("--base", tp_base, "basemodel file")->required();
  tp->add_option("--data", tp_data, "gen-data directory")->required();
  tp->add_option("--out", tp_out, "output directory")->required();
  tp->add_option("--d-b-pooled", tp_db, "pooled bottleneck (default 2x the per-speaker 8)");
  add_train_flags(tp, tp_train);

  // ---- train-embedding ----
  auto* te = app.add_subcommand("train-embedding", "train shared banks + per-speaker rows");
  fs::path te_base, te_data, te_out;
  uint32_t te_banks = 8, te_db = 8;
  TrainConfig te_train;
  te->add_option("--base", te_base, "basemodel file")->required();
  te->add_option("--data", te_data, "gen-data directory")->required();
  te->add_option("--out", te_out, "output directory")->required();
  te->add_option("--banks", te_banks, "adapter banks per layer (M)");
  te->add_option("--d-b", te_db, "bottleneck width");
  add_train_flags(te, te_train);

  // ---- adapt-speaker ----
  auto* as = app.add_subcommand("adapt-speaker", "adapt the embedding bundle to a new speaker");
  fs::path as_base, as_emb, as_data, as_out;
  uint64_t as_speaker = 0;
  uint32_t as_frames = 50;
  std::string as_mode = "emb+banks";
  TrainConfig as_train;
  as->add_option("--base", as_base, "basemodel file")->required();
  as->add_option("--embedding", as_emb, "trained .embm bundle")->required();
  as->add_option("--data", as_data, "gen-data directory")->required();
  as->add_option("--speaker", as_speaker, "new speaker id")->required();
  as->add_option("--out", as_out, "output directory")->required();
  as->add_option("--train-frames", as_frames, "training frame budget");
  as->add_option("--mode", as_mode, "emb+banks | emb-only");
  add_train_flags(as, as_train);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a variant over a speaker population");
  fs::path ev_base, ev_data, ev_out;
  fs::path ev_submodel, ev_bundle, ev_embedding, ev_full, ev_store;
  std::string ev_name = "basemodel";
  uint64_t ev_speaker = 0;
  ev->add_option("--base", ev_base, "basemodel file")->required();
  ev->add_option("--data", ev_data, "gen-data directory")->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--name", ev_name, "approach name for the report");
  ev->add_option("--submodel", ev_submodel, "shared .subm (e.g. pooled)");
  ev->add_option("--store", ev_store, "per-speaker .subm store");
  ev->add_option("--bundle", ev_bundle, ".bndl one-hot bundle");
  ev->add_option("--embedding", ev_embedding, ".embm bundle");
  ev->add_option("--full", ev_full, "fine-tuned .bm (single speaker)");
  ev->add_option("--speaker", ev_speaker, "restrict to one speaker id");

  // ---- report ----
  auto* rp = app.add_subcommand("report", "combine eval outputs into a comparison table");
  fs::path rp_out;
  std::vector<std::string> rp_evals;
  rp->add_option("--out", rp_out, "output directory")->required();
  rp->add_option("--eval", rp_evals, "name=path to eval.<name>.jsonl")->required();

  // ---- serve ----
  auto* sv = app.add_subcommand("serve", "run the line-protocol inference server");
  fs::path sv_base, sv_store;
  std::string sv_bind = "127.0.0.1:7070";
  size_t sv_capacity = 8;
  sv->add_option("--base", sv_base, "basemodel file")->required();
  sv->add_option("--store", sv_store, "submodel store root")->required();
  sv->add_option("--bind", sv_bind, "host:port (port 0 = ephemeral)");
  sv->add_option("--cache-capacity", sv_capacity, "max resident submodels");

  // ---- bench-load ----
  auto* bl = app.add_subcommand("bench-load", "measure submodel cold loads vs base reloads");
  fs::path bl_base, bl_store, bl_out;
  size_t bl_k = 100, bl_capacity = 8;
  bl->add_option("--base", bl_base, "basemodel file")->required();
  bl->add_option("--store", bl_store, "submodel store root")->required();
  bl->add_option("--k", bl_k, "request count");
  bl->add_option("--cache-capacity", bl_capacity, "cache capacity");
  bl->add_option("--out", bl_out, "optional output directory for the report");

  // ---- export-embeddings ----
  auto* ee = app.add_subcommand("export-embeddings", "dump per-speaker embedding vectors");
  fs::path ee_emb, ee_data, ee_out;
  ee->add_option("--embedding", ee_emb, ".embm bundle")->required();
  ee->add_option("--data", ee_data, "gen-data directory (for etiology labels)")->required();
  ee->add_option("--out", ee_out, "output directory")->required();

  // ---- probe ----
  auto* pr = app.add_subcommand("probe", "pairwise etiology separability of exported vectors");
  fs::path pr_vectors;
  int64_t pr_shuffle = -1;
  pr->add_option("--vectors", pr_vectors, "embeddings.jsonl from export-embeddings")->required();
  pr->add_option("--shuffle-seed", pr_shuffle, "shuffle etiology labels first (chance control)");

  // ---- params ----
  auto* pa = app.add_subcommand("params", "submodel parameter/size accounting");
  uint32_t pa_dmodel = 512, pa_db = 64, pa_layers = 17;
  uint64_t pa_full = 165000000ull;
  pa->add_option("--d-model", pa_dmodel, "hidden width");
  pa->add_option("--d-b", pa_db, "bottleneck width");
  pa->add_option("--layers", pa_layers, "adapter layers");
  pa->add_option("--full-params", pa_full, "full-model parameter count for the ratio");

  try {
    app.parse(argc, argv);

    if (*gen)
      return cmd_gen_data(gen_out, gen_speakers, gen_typical, gen_etiologies, gen_din, gen_utts,
                          gen_frames, gen_noise, gen_seed, gen_sev);

    if (*tb) {
      DataDir data = load_data_dir(tb_data);
      auto typical = corpora_of_kind(data, "typical");
      tb_cfg.d_in = tb_cfg.d_out = typical[0].d_in;
      TrainStats stats;
      Basemodel base = train_base(typical, tb_cfg, tb_train, &stats);
      fs::create_directories(tb_out);
      save_basemodel(base, tb_out / "base.bm");
      write_manifest(tb_out, "train-base",
                     json{{"d_model", tb_cfg.d_model},
                          {"d_ff", tb_cfg.d_ff},
                          {"layers", tb_cfg.n_layers},
                          {"model_seed", tb_cfg.seed},
                          {"train", train_cfg_json(tb_train)}},
                     {tb_data.string()}, {"base.bm"});
      std::cout << "base.bm written; loss " << stats.initial_loss << " -> " << stats.final_loss
                << " over " << stats.steps_run << " steps\n";
      return 0;
    }

    if (*ff) {
      Basemodel base = load_basemodel(ff_base);
      DataDir data = load_data_dir(ff_data);
      for (const auto& e : data.speakers) {
        if (e.speaker_id != ff_speaker) continue;
        Corpus c = data.corpus_for(e);
        TrainStats stats;
        Basemodel tuned = finetune_full(base, c, ff_train, &stats);
        fs::create_directories(ff_out);
        const std::string file = std::to_string(ff_speaker) + ".full.bm";
        save_basemodel(tuned, ff_out / file);
        write_manifest(ff_out, "finetune-full",
                       json{{"speaker", ff_speaker}, {"train", train_cfg_json(ff_train)}},
                       {ff_base.string(), ff_data.string()}, {file});
        std::cout << file << " written; loss " << stats.initial_loss << " -> " << stats.final_loss
                  << "\n";
        return 0;
      }
      fail(ErrCode::unknown_speaker, "speaker " + std::to_string(ff_speaker) + " not in data dir");
    }

    if (*ts) {
      Basemodel base = load_basemodel(ts_base);
      DataDir data = load_data_dir(ts_data);
      std::vector<SpeakerEntry> targets;
      for (const auto& e : data.of_kind("atypical"))
        if (ts_all || e.speaker_id == ts_speaker) targets.push_back(e);
      require(!targets.empty(), ErrCode::unknown_speaker, "no matching speakers to train");
      fs::create_directories(ts_out);
      std::vector<std::string> outputs(targets.size());
      std::atomic<size_t> next{0};
      std::atomic<bool> failed{false};
      std::string failure;
      std::mutex failure_mu;
      auto worker = [&] {
        while (!failed.load()) {
          const size_t i = next.fetch_add(1);
          if (i >= targets.size()) break;
          try {
            Corpus c = data.corpus_for(targets[i]);
            Submodel sub = train_submodel(base, c, ts_db, ts_train);
            const std::string file = std::to_string(sub.meta.speaker_id) + ".subm";
            save_submodel(sub, ts_out / file);
            outputs[i] = file;
          } catch (const std::exception& ex) {
            std::lock_guard lock(failure_mu);
            failure = ex.what();
            failed = true;
          }
        }
      };
      std::vector<std::thread> pool;
      for (uint32_t t = 0; t < std::max(1u, ts_parallel); ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      require(!failed.load(), ErrCode::diverged, "submodel job failed: " + failure);
      write_manifest(ts_out, "train-submodel",
                     json{{"d_b", ts_db},
                          {"all_atypical", ts_all},
                          {"speaker", ts_speaker},
                          {"parallel", ts_parallel},
                          {"train", train_cfg_json(ts_train)}},
                     {ts_base.string(), ts_data.string()}, outputs);
      std::cout << outputs.size() << " submodels written to " << ts_out.string() << "\n";
      return 0;
    }

    if (*oh) {
      Basemodel base = load_basemodel(oh_base);
      DataDir data = load_data_dir(oh_data);
      auto corpora = corpora_of_kind(data, "atypical");
      TrainStats stats;
      OneHotBundle bundle = train_onehot(base, corpora, oh_db, oh_train, &stats);
      fs::create_directories(oh_out);
      save_bundle(bundle, oh_out / "bundle.bndl");
      write_manifest(oh_out, "train-onehot",
                     json{{"d_b", oh_db}, {"train", train_cfg_json(oh_train)}},
                     {oh_base.string(), oh_data.string()}, {"bundle.bndl"});
      std::cout << "bundle.bndl written (" << bundle.members.size() << " members); loss "
                << stats.initial_loss << " -> " << stats.final_loss << "\n";
      return 0;
    }

    if (*spc) {
      OneHotBundle bundle = load_bundle(sp_bundle);
      auto files = split_bundle(bundle, sp_out);
      std::vector<std::string> outputs;
      for (const auto& f : files) outputs.push_back(f.filename().string());
      write_manifest(sp_out, "split", json{{"bundle", sp_bundle.string()}}, {sp_bundle.string()},
                     outputs);
      std::cout << files.size() << " submodels written to " << sp_out.string() << "\n";
      return 0;
    }

    if (*tp) {
      Basemodel base = load_basemodel(tp_base);
      DataDir data = load_data_dir(tp_data);
      auto corpora = corpora_of_kind(data, "atypical");
      TrainStats stats;
      Submodel pooled = train_pooled(base, corpora, tp_db, tp_train, &stats);
      fs::create_directories(tp_out);
      save_submodel(pooled, tp_out / "pooled.subm");
      write_manifest(tp_out, "train-pooled",
                     json{{"d_b_pooled", tp_db}, {"train", train_cfg_json(tp_train)}},
                     {tp_base.string(), tp_data.string()}, {"pooled.subm"});
      std::cout << "pooled.subm written; loss " << stats.initial_loss << " -> "
                << stats.final_loss << "\n";
      return 0;
    }

    if (*te) {
      Basemodel base = load_basemodel(te_base);
      DataDir data = load_data_dir(te_data);
      auto corpora = corpora_of_kind(data, "atypical");
      TrainStats stats;
      EmbeddingBundle eb = train_embedding(base, corpora, te_banks, te_db, te_train, &stats);
      fs::create_directories(te_out);
      save_embedding_bundle(eb, te_out / "embedding.embm");
      write_manifest(te_out, "train-embedding",
                     json{{"banks", te_banks}, {"d_b", te_db}, {"train", train_cfg_json(te_train)}},
                     {te_base.string(), te_data.string()}, {"embedding.embm"});
      std::cout << "embedding.embm written; loss " << stats.initial_loss << " -> "
                << stats.final_loss << "\n";
      return 0;
    }

    if (*as) {
      Basemodel base = load_basemodel(as_base);
      EmbeddingBundle eb = load_embedding_bundle(as_emb);
      DataDir data = load_data_dir(as_data);
      require(as_mode == "emb+banks" || as_mode == "emb-only", ErrCode::precondition,
              "--mode must be emb+banks or emb-only");
      for (const auto& e : data.speakers) {
        if (e.speaker_id != as_speaker) continue;
        Corpus c = data.corpus_for(e);
        AdaptResult r = adapt_new_speaker(
            base, eb, c, as_train,
            as_mode == "emb-only" ? AdaptMode::emb_only : AdaptMode::emb_and_banks, as_frames);
        fs::create_directories(as_out);
        const std::string file = std::to_string(as_speaker) + ".adapted.embm";
        save_embedding_bundle(r.bundle, as_out / file);
        VariantRef v;
        v.eb = &r.bundle;
        v.e_row = &r.e_row;
        SplitEval test = evaluate(base, v, c, Split::test);
        write_manifest(as_out, "adapt-speaker",
                       json{{"speaker", as_speaker},
                            {"mode", as_mode},
                            {"train_frames", as_frames},
                            {"train", train_cfg_json(as_train)}},
                       {as_base.string(), as_emb.string(), as_data.string()}, {file});
        std::cout << file << " written; test mse " << test.mse << "\n";
        return 0;
      }
      fail(ErrCode::unknown_speaker, "speaker " + std::to_string(as_speaker) + " not in data dir");
    }

    if (*ev) {
      Basemodel base = load_basemodel(ev_base);
      DataDir data = load_data_dir(ev_data);
      std::optional<Basemodel> full;
      std::optional<Submodel> shared_sub;
      std::optional<OneHotBundle> bundle;
      std::optional<EmbeddingBundle> eb;
      std::optional<SubmodelStore> store;
      if (!ev_full.empty()) full = load_basemodel(ev_full);
      if (!ev_submodel.empty()) shared_sub = load_submodel(ev_submodel, &base.config);
      if (!ev_bundle.empty()) bundle = load_bundle(ev_bundle, &base.config);
      if (!ev_embedding.empty()) eb = load_embedding_bundle(ev_embedding);
      if (!ev_store.empty()) store.emplace(ev_store);

      std::vector<EvalRow> rows;
      std::vector<Submodel> per_speaker;
      per_speaker.reserve(data.speakers.size());
      for (const auto& e : data.of_kind("atypical")) {
        if (ev_speaker != 0 && e.speaker_id != ev_speaker) continue;
        Corpus c = data.corpus_for(e);
        VariantRef v;
        v.full = full ? &*full : nullptr;
        v.submodel = shared_sub ? &*shared_sub : nullptr;
        v.bundle = bundle ? &*bundle : nullptr;
        v.eb = eb ? &*eb : nullptr;
        if (store) {
          per_speaker.push_back(store->load(e.speaker_id, &base.config));
          v.submodel = &per_speaker.back();
        }
        rows.push_back(evaluate_speaker(base, v, c));
      }
      require(!rows.empty(), ErrCode::unknown_speaker, "no speakers evaluated");
      EvalReport report = build_report(ev_name, std::move(rows));
      fs::create_directories(ev_out);
      write_eval_outputs(ev_out, ev_name, report);
      write_manifest(ev_out, "eval",
                     json{{"name", ev_name},
                          {"submodel", ev_submodel.string()},
                          {"store", ev_store.string()},
                          {"bundle", ev_bundle.string()},
                          {"embedding", ev_embedding.string()},
                          {"full", ev_full.string()},
                          {"speaker", ev_speaker}},
                     {ev_base.string(), ev_data.string()},
                     {"eval." + ev_name + ".tsv", "eval." + ev_name + ".jsonl"});
      std::cout << "approach " << ev_name << ": dev mean " << report.dev.mean << ", test mean "
                << report.test.mean << " over " << report.rows.size() << " speakers\n";
      return 0;
    }

    if (*rp) {
      std::vector<EvalReport> reports;
      std::vector<std::string> inputs;
      for (const auto& item : rp_evals) {
        const auto eq = item.find('=');
        require(eq != std::string::npos, ErrCode::precondition,
                "--eval expects name=path, got '" + item + "'");
        reports.push_back(read_eval_jsonl(item.substr(0, eq), item.substr(eq + 1)));
        inputs.push_back(item.substr(eq + 1));
      }
      const std::string table = comparison_table(reports);
      fs::create_directories(rp_out);
      write_file_atomic(rp_out / "comparison.tsv", table);
      write_manifest(rp_out, "report", json{{"evals", rp_evals}}, inputs, {"comparison.tsv"});
      std::cout << table;
      return 0;
    }

    if (*sv) {
      ServingConfig cfg{sv_store, sv_base, sv_capacity};
      ServingCore core(cfg);
      Server server(core, sv_bind);
      std::cout << "serving on port " << server.port() << " (store " << sv_store.string()
                << ", cache capacity " << sv_capacity << ")" << std::endl;
      server.wait();
      std::cout << "server stopped\n";
      return 0;
    }

    if (*bl) {
      ServingConfig cfg{bl_store, bl_base, bl_capacity};
      BenchReport r = bench_load(cfg, bl_k);
      json j{{"k", r.k},
             {"submodel_cold_us",
              {{"mean", r.submodel_cold_mean_us}, {"stdev", r.submodel_cold_std_us}}},
             {"submodel_warm_us",
              {{"mean", r.submodel_warm_mean_us}, {"stdev", r.submodel_warm_std_us}}},
             {"base_reload_us", {{"mean", r.base_reload_mean_us}, {"stdev", r.base_reload_std_us}}},
             {"ratio", r.ratio},
             {"submodel_bytes", r.submodel_bytes},
             {"base_bytes", r.base_bytes},
             {"size_ratio", r.size_ratio}};
      std::cout << j.dump(2) << "\n";
      if (!bl_out.empty()) {
        fs::create_directories(bl_out);
        write_file_atomic(bl_out / "bench.json", j.dump(2) + "\n");
        write_manifest(bl_out, "bench-load", json{{"k", bl_k}, {"cache_capacity", bl_capacity}},
                       {bl_base.string(), bl_store.string()}, {"bench.json"});
      }
      return 0;
    }

    if (*ee) {
      EmbeddingBundle eb = load_embedding_bundle(ee_emb);
      DataDir data = load_data_dir(ee_data);
      auto records = export_embeddings(eb, data.labels());
      fs::create_directories(ee_out);
      write_file_atomic(ee_out / "embeddings.jsonl", records_to_jsonl(records));
      write_manifest(ee_out, "export-embeddings", json{{"embedding", ee_emb.string()}},
                     {ee_emb.string(), ee_data.string()}, {"embeddings.jsonl"});
      std::cout << records.size() << " vectors of length "
                << (records.empty() ? 0 : records[0].vector.size()) << " written\n";
      return 0;
    }

    if (*pr) {
      auto records = records_from_jsonl(read_file(pr_vectors));
      if (pr_shuffle >= 0) records = shuffle_labels(records, static_cast<uint64_t>(pr_shuffle));
      ProbeReport report = probe_separability(records);
      std::printf("pair\taccuracy\tn\n");
      for (const auto& p : report.pairs)
        std::printf("%s vs %s\t%.3f\t%zu\n", p.etiology_a.c_str(), p.etiology_b.c_str(),
                    p.accuracy, p.n);
      std::printf("mean pairwise accuracy\t%.3f\n", report.mean_accuracy);
      return 0;
    }

    if (*pa) {
      const uint64_t params = count_params(pa_dmodel, pa_db, pa_layers);
      const uint64_t bytes = serialized_size(params);
      std::printf("adapter parameters: %llu\n", static_cast<unsigned long long>(params));
      std::printf("serialized size: %llu bytes (%.2f MB)\n",
                  static_cast<unsigned long long>(bytes), static_cast<double>(bytes) / 1e6);
      if (pa_full > 0) {
        std::printf("fraction of a %llu-parameter model: %.4f%%\n",
                    static_cast<unsigned long long>(pa_full),
                    100.0 * static_cast<double>(params) / static_cast<double>(pa_full));
        std::printf("size ratio: %.6f\n",
                    static_cast<double>(bytes) / static_cast<double>(serialized_size(pa_full)));
      }
      return 0;
    }
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
