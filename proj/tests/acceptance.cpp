#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swea/binio.hpp"
#include "swea/checkpoint.hpp"
#include "swea/corpus.hpp"
#include "swea/error.hpp"
#include "swea/fusion.hpp"
#include "swea/matcher.hpp"
#include "swea/metrics.hpp"
#include "swea/model.hpp"
#include "swea/request.hpp"
#include "swea/rng.hpp"
#include "swea/store.hpp"
#include "swea/tokenizer.hpp"

namespace fs = std::filesystem;
using swea::EditingEmbedding;
using swea::EditingStore;
using swea::EditMetrics;
using swea::EditRequest;
using swea::FactCorpus;
using swea::FusionConfig;
using swea::LanguageModel;
using swea::MatchResult;
using swea::ModelConfig;
using swea::Rng;
using swea::SpanPatch;
using swea::Tokenizer;
using MatD = swea::ad::Mat<double>;
using TapeD = swea::ad::Tape<double>;
using TensorD = swea::ad::Tensor<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// One verdict line per criterion, always printed.
bool report(int n, const std::string& name, bool ok, double secs = -1.0) {
  if (secs >= 0.0) {
    std::printf("[%s] criterion %d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", n,
                name.c_str(), secs);
  } else {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n,
                name.c_str());
  }
  std::fflush(stdout);
  return ok;
}

bool bitwise_equal(const MatD& a, const MatD& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// ---------------------------------------------------------------------------
// Shared end-to-end fixture: a 200-fact synthetic world, a model memorizing
// it, and the 50-request counterfact suite edited with the default
// configuration. Built once, on first use; the build is timed because the
// end-to-end criterion carries a wall-clock budget.

struct World {
  FactCorpus corpus;
  Tokenizer tok;
  LanguageModel model;
  double recall = 0.0;
  std::vector<EditRequest> requests;
  swea::EditResult result;
  EditMetrics metrics;
  double total_seconds = 0.0;
};

World build_world() {
  auto t0 = Clock::now();
  World w;
  w.corpus = swea::generate_corpus(200, 0);
  std::vector<std::string> sentences = w.corpus.sentences();
  w.tok = Tokenizer::build(sentences);

  ModelConfig cfg;  // 2 layers, 4 heads, width 64
  cfg.vocab_size = w.tok.size();
  swea::PretrainOptions opt;
  opt.epochs = 30;
  opt.seed = 0;
  std::fprintf(stderr, "[fixture] pretraining on %zu sentences...\n",
               sentences.size());
  w.model = swea::pretrain(sentences, w.tok, cfg, opt);
  w.recall = swea::fact_recall(w.model, w.tok, w.corpus);

  w.requests = w.corpus.make_requests(50, 1);
  FusionConfig fusion;  // default editing configuration
  std::fprintf(stderr, "[fixture] editing %zu requests...\n",
               w.requests.size());
  w.result = swea::edit(w.model, w.tok, w.requests, fusion);
  w.metrics = swea::evaluate(w.model, w.tok, w.result.store, w.requests);
  w.total_seconds = seconds_since(t0);
  std::fprintf(stderr,
               "[fixture] recall=%.3f eff=%.3f gen=%.3f spec=%.3f (%.0fs)\n",
               w.recall, w.metrics.efficacy, w.metrics.generalization,
               w.metrics.specificity, w.total_seconds);
  return w;
}

const World& world() {
  static World w = build_world();
  return w;
}

// ---------------------------------------------------------------------------
// Brute-force reformulation of the longest-match rule: every contiguous span
// whose key is stored, ranked by key string length, then start, then end.

std::optional<MatchResult> oracle_match(const std::vector<int>& ids,
                                        const EditingStore& store) {
  std::optional<MatchResult> best;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (std::size_t e = s + 1; e <= ids.size(); ++e) {
      std::vector<int> span(ids.begin() + static_cast<std::ptrdiff_t>(s),
                            ids.begin() + static_cast<std::ptrdiff_t>(e));
      swea::EditKey k = swea::make_key(span);
      if (!store.contains(k.key)) continue;
      MatchResult m;
      m.key = k;
      m.start = static_cast<Eigen::Index>(s);
      m.end = static_cast<Eigen::Index>(e);
      bool better =
          !best || m.key.key.size() > best->key.key.size() ||
          (m.key.key.size() == best->key.key.size() &&
           (m.start < best->start ||
            (m.start == best->start && m.end < best->end)));
      if (better) best = m;
    }
  }
  return best;
}

bool same_match(const std::optional<MatchResult>& a,
                const std::optional<MatchResult>& b) {
  if (!a || !b) return !a && !b;
  return a->key.key == b->key.key && a->key.token_ids == b->key.token_ids &&
         a->start == b->start && a->end == b->end;
}

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

int run_command(const std::vector<std::string>& argv) {
  std::string cmd;
  for (const auto& a : argv) {
    if (!cmd.empty()) cmd += ' ';
    cmd += shell_quote(a);
  }
  cmd += " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_SUITE("acceptance") {

TEST_CASE("criterion 1: loss gradients") {
  auto t0 = Clock::now();
  ModelConfig cfg;  // default 2-layer width-64 model, random init
  cfg.vocab_size = 50;
  LanguageModel model(cfg, 123);

  const std::vector<int> prompt_ids = {4, 9, 17, 23, 8, 31};
  const Eigen::Index subject_start = 1;  // rows for tokens {9, 17}
  const std::vector<int> new_object_ids = {12, 44};
  const auto prefixes = model.generate_prefixes(2, 3, 5);
  const MatD ref_logits =
      model.forward(swea::with_bos(prompt_ids)).bottomRows(1);
  const double alpha = 0.2, beta = 1.0;

  Rng rng(7);
  const MatD e0 = swea::ad::randn<double>(2, cfg.d_model, rng, 0.05);

  auto loss_at = [&](const MatD& e) {
    TapeD tape;
    TensorD loss =
        swea::fusion_loss(model, tape, tape.constant(e), prompt_ids,
                          subject_start, new_object_ids, prefixes, ref_logits,
                          alpha, beta);
    return swea::ad::scalar_value(loss);
  };

  MatD grad;
  {
    TapeD tape;
    TensorD delta = tape.leaf(e0, true);
    TensorD loss =
        swea::fusion_loss(model, tape, delta, prompt_ids, subject_start,
                          new_object_ids, prefixes, ref_logits, alpha, beta);
    tape.backward(loss);
    grad = delta.grad();
  }

  // 60 distinct coordinates out of the 2 x 64 delta.
  std::vector<int> coords(static_cast<std::size_t>(e0.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<int>(i);
  rng.shuffle(coords);
  coords.resize(60);

  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  for (int flat : coords) {
    Eigen::Index r = flat / cfg.d_model;
    Eigen::Index c = flat % cfg.d_model;
    MatD up = e0, down = e0;
    up(r, c) += h;
    down(r, c) -= h;
    double fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
    double a = grad(r, c);
    // Relative error with an absolute floor, so near-zero coordinates are
    // compared on absolute terms instead of dividing by noise.
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
    worst = std::max(worst, rel);
    ++checked;
  }
  double secs = seconds_since(t0);
  bool ok = checked >= 50 && worst <= 1e-4 && secs < 60.0;
  CHECK(checked >= 50);
  CHECK(worst <= 1e-4);
  CHECK(secs < 60.0);
  CHECK(report(1, "fusion-loss gradients match central finite differences",
               ok, secs));
}

TEST_CASE("criterion 2: matcher oracle equivalence") {
  auto t0 = Clock::now();
  Rng rng(61);
  int agreed = 0, matched = 0;
  const int cases = 10000;
  for (int n = 0; n < cases; ++n) {
    EditingStore store;
    std::size_t n_keys = rng.uniform_index(5);
    for (std::size_t k = 0; k < n_keys; ++k) {
      std::vector<int> kids;
      std::size_t klen = 1 + rng.uniform_index(3);
      for (std::size_t i = 0; i < klen; ++i) {
        // Mixed 1- and 2-digit ids so string length and token count diverge.
        kids.push_back(static_cast<int>(rng.uniform_index(15)));
      }
      swea::EditKey key = swea::make_key(kids);
      if (store.contains(key.key)) continue;
      EditingEmbedding e;
      e.key = key;
      e.deltas = swea::ad::randn<double>(
          static_cast<Eigen::Index>(kids.size()), 4, rng, 0.5);
      store.materialize(e);
    }
    std::vector<int> ids;
    std::size_t len = rng.uniform_index(9);
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(static_cast<int>(rng.uniform_index(15)));
    }
    auto got = swea::find_longest_match(ids, store);
    auto want = oracle_match(ids, store);
    if (same_match(got, want)) ++agreed;
    if (got) ++matched;
  }
  double secs = seconds_since(t0);
  bool ok = agreed == cases && matched > 1000 && secs < 60.0;
  CHECK(agreed == cases);
  CHECK(matched > 1000);  // the generator must exercise real matches
  CHECK(secs < 60.0);
  CHECK(report(2, "longest-match lookup equals brute-force oracle on 10000 "
                  "fuzz cases", ok, secs));
}

TEST_CASE("criterion 3: suppression exactness") {
  Rng rng(31);
  MatD e = swea::ad::randn<double>(3, 8, rng);
  MatD x = swea::ad::randn<double>(3, 8, rng);
  std::vector<std::pair<int, int>> all_slots;
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < 8; ++d) all_slots.emplace_back(r, d);

  bool gamma_zero_bitwise = bitwise_equal(swea::fuse(e, x, all_slots, 0.0), e);
  bool empty_set_bitwise = bitwise_equal(swea::fuse(e, x, {}, 0.7), e);

  MatD e1(1, 1), x1(1, 1);
  e1 << 1.0;
  x1 << 2.0;
  MatD fused = swea::fuse(e1, x1, {{0, 0}}, 0.5);
  bool hand_case_exact = fused(0, 0) == 0.0;  // 1.0 - 0.5 * 2.0

  bool ok = gamma_zero_bitwise && empty_set_bitwise && hand_case_exact;
  CHECK(gamma_zero_bitwise);
  CHECK(empty_set_bitwise);
  CHECK(hand_case_exact);
  CHECK(report(3, "suppression is bitwise inert at gamma=0 / empty set and "
                  "exact on the hand-worked slot", ok));
}

TEST_CASE("criterion 4: attribution properties") {
  // Zero-valued embedding dimensions must attribute exactly zero.
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = 30;
  cfg.max_seq_len = 16;
  LanguageModel zm(cfg, 77);
  for (auto& p : zm.parameter_list()) {
    if (p.name == "tok_emb") {
      for (int d : {1, 5, 11}) p.mat->coeffRef(7, d) = 0.0;
    }
  }
  FusionConfig fc20;
  fc20.riemann_steps = 20;
  auto zrep = swea::attribute_ids(zm, {3, 7, 9}, 1, 1, {5}, fc20);
  bool zero_dims_exact = zrep.scores(0, 1) == 0.0 &&
                         zrep.scores(0, 5) == 0.0 && zrep.scores(0, 11) == 0.0;

  // Completeness: summed attribution approximates the probability change of
  // zeroing the attributed row, and a 10x finer integration tightens it.
  FusionConfig fc200;
  fc200.riemann_steps = 200;
  int improved = 0;
  const int cases = 100;
  for (int i = 0; i < cases; ++i) {
    ModelConfig c;
    c.n_layers = 1 + (i % 2);
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.vocab_size = 30;
    c.max_seq_len = 16;
    LanguageModel m(c, 1000 + static_cast<std::uint64_t>(i));
    Rng r(500 + static_cast<std::uint64_t>(i));
    std::vector<int> ids;
    std::size_t len = 3 + r.uniform_index(3);
    for (std::size_t k = 0; k < len; ++k) {
      ids.push_back(2 + static_cast<int>(r.uniform_index(28)));
    }
    Eigen::Index z = static_cast<Eigen::Index>(r.uniform_index(len));
    std::vector<int> object = {2 + static_cast<int>(r.uniform_index(28))};
    if (i % 3 == 0) object.push_back(2 + static_cast<int>(r.uniform_index(28)));

    double sum20 = swea::attribute_ids(m, ids, z, 1, object, fc20).scores.sum();
    double sum200 =
        swea::attribute_ids(m, ids, z, 1, object, fc200).scores.sum();

    double p_full = std::exp(m.sequence_logprob(ids, object));
    SpanPatch zero_row;
    zero_row.start = z;
    zero_row.delta = -m.token_embeddings().row(ids[static_cast<std::size_t>(z)]);
    double p_zeroed = std::exp(m.sequence_logprob(ids, object, &zero_row));
    double target = p_full - p_zeroed;

    double gap20 = std::abs(sum20 - target);
    double gap200 = std::abs(sum200 - target);
    if (gap200 < gap20 || (gap200 < 1e-12 && gap20 < 1e-12)) ++improved;
  }
  bool ok = zero_dims_exact && improved >= 90;
  CHECK(zero_dims_exact);
  CHECK(improved >= 90);
  CHECK(report(4, "zero dimensions attribute exactly zero; finer integration "
                  "tightens completeness on " +
                      std::to_string(improved) + "/100 cases", ok));
}

TEST_CASE("criterion 5: zero-edit invariance") {
  ModelConfig cfg;
  cfg.vocab_size = 40;
  LanguageModel model(cfg, 9);
  EditingStore store;  // empty: nothing may match, nothing may change
  Rng rng(10);
  bool no_match = true, identical = true, zero_patch_identical = true;
  for (int i = 0; i < 100; ++i) {
    std::vector<int> ids;
    std::size_t len = 1 + rng.uniform_index(62);
    for (std::size_t k = 0; k < len; ++k) {
      ids.push_back(2 + static_cast<int>(rng.uniform_index(38)));
    }
    auto patch = swea::patch_for(ids, store);
    if (patch) no_match = false;
    MatD plain = model.forward(ids);
    MatD routed = patch ? model.forward(ids, *patch) : model.forward(ids);
    if (!bitwise_equal(plain, routed)) identical = false;

    // The patched code path itself must be inert when the delta is zero.
    SpanPatch zp;
    zp.start = static_cast<Eigen::Index>(rng.uniform_index(len));
    Eigen::Index span = std::min<Eigen::Index>(
        2, static_cast<Eigen::Index>(len) - zp.start);
    zp.delta = MatD::Zero(span, cfg.d_model);
    if (!bitwise_equal(model.forward(ids, zp), plain)) {
      zero_patch_identical = false;
    }
  }
  bool ok = no_match && identical && zero_patch_identical;
  CHECK(no_match);
  CHECK(identical);
  CHECK(zero_patch_identical);
  CHECK(report(5, "empty store leaves logits bit-identical across 100 random "
                  "prompts", ok));
}

TEST_CASE("criterion 6: end-to-end editing suite") {
  const World& w = world();
  bool ok = w.result.failures.empty() && w.recall >= 0.95 &&
            w.metrics.efficacy >= 0.95 && w.metrics.generalization >= 0.85 &&
            w.metrics.specificity >= 0.95 && w.total_seconds < 900.0;
  CHECK(w.result.failures.empty());
  CHECK(w.recall >= 0.95);
  CHECK(w.metrics.efficacy >= 0.95);
  CHECK(w.metrics.generalization >= 0.85);
  CHECK(w.metrics.specificity >= 0.95);
  CHECK(w.total_seconds < 900.0);
  char line[160];
  std::snprintf(line, sizeof(line),
                "50-edit suite: recall=%.3f eff=%.3f gen=%.3f spec=%.3f",
                w.recall, w.metrics.efficacy, w.metrics.generalization,
                w.metrics.specificity);
  CHECK(report(6, line, ok, w.total_seconds));
}

TEST_CASE("criterion 7: suppression ablation direction") {
  const World& w = world();
  int wins = 0;
  for (std::uint64_t s : {0, 1, 2}) {
    FusionConfig full_cfg;
    full_cfg.seed = s;
    FusionConfig ablated_cfg = full_cfg;
    ablated_cfg.gamma = 0.0;

    double full_score;
    if (s == 0) {
      full_score = w.metrics.score;  // the shared fixture is exactly this run
    } else {
      auto full = swea::edit(w.model, w.tok, w.requests, full_cfg);
      CHECK(full.failures.empty());
      full_score =
          swea::evaluate(w.model, w.tok, full.store, w.requests).score;
    }
    auto ablated = swea::edit(w.model, w.tok, w.requests, ablated_cfg);
    CHECK(ablated.failures.empty());
    double ablated_score =
        swea::evaluate(w.model, w.tok, ablated.store, w.requests).score;
    if (ablated_score <= full_score) ++wins;
  }
  bool ok = wins >= 2;
  CHECK(wins >= 2);
  CHECK(report(7, "disabling suppression never beats full fusion on " +
                      std::to_string(wins) + "/3 seeds", ok));
}

TEST_CASE("criterion 8: schedule stability") {
  const World& w = world();
  std::vector<EditRequest> r20(w.requests.begin(), w.requests.begin() + 20);
  FusionConfig fc;
  auto one_by_one = swea::run_sequential(w.model, w.tok, r20, fc);
  auto four_by_five = swea::run_sequential_batch(
      w.model, w.tok, r20, swea::parse_schedule("4x5", 20), fc);
  auto two_by_ten = swea::run_sequential_batch(
      w.model, w.tok, r20, swea::parse_schedule("2x10", 20), fc);
  CHECK(one_by_one.stages.size() == 20);
  CHECK(four_by_five.stages.size() == 4);
  CHECK(two_by_ten.stages.size() == 2);

  double a = one_by_one.final_metrics().score;
  double b = four_by_five.final_metrics().score;
  double c = two_by_ten.final_metrics().score;
  double spread = std::max({a, b, c}) - std::min({a, b, c});
  bool ok = spread < 0.05;
  CHECK(spread < 0.05);
  char line[160];
  std::snprintf(line, sizeof(line),
                "final scores %.3f / %.3f / %.3f across 20x1, 4x5, 2x10",
                a, b, c);
  CHECK(report(8, line, ok));
}

TEST_CASE("criterion 9: persistence round-trips") {
  const World& w = world();
  fs::path dir = fs::temp_directory_path() / "swea_acceptance_persist";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::string store_a = (dir / "store_a.bin").string();
  std::string store_b = (dir / "store_b.bin").string();
  w.result.store.save(store_a);
  EditingStore loaded = EditingStore::load(store_a);
  loaded.save(store_b);
  bool store_roundtrip = swea::read_file_bytes(store_a) ==
                             swea::read_file_bytes(store_b) &&
                         loaded.serialize() == w.result.store.serialize();

  std::string model_a = (dir / "model_a.bin").string();
  std::string model_b = (dir / "model_b.bin").string();
  swea::save_model(model_a, w.model);
  LanguageModel reloaded = swea::load_model(model_a);
  swea::save_model(model_b, reloaded);
  bool model_roundtrip =
      swea::read_file_bytes(model_a) == swea::read_file_bytes(model_b);

  std::string vocab_a = (dir / "vocab_a.txt").string();
  std::string vocab_b = (dir / "vocab_b.txt").string();
  swea::save_vocab(vocab_a, w.tok);
  swea::save_vocab(vocab_b, swea::load_vocab(vocab_a));
  bool vocab_roundtrip =
      swea::read_file_bytes(vocab_a) == swea::read_file_bytes(vocab_b);

  // Corrupt headers must be rejected up front, not misparsed.
  std::string bad_store = swea::read_file_bytes(store_a);
  bad_store[0] ^= 0x40;
  std::string bad_store_path = (dir / "store_bad.bin").string();
  swea::atomic_write_file(bad_store_path, bad_store);
  bool store_rejects = false;
  try {
    EditingStore::load(bad_store_path);
  } catch (const swea::FormatError&) {
    store_rejects = true;
  }

  std::string bad_model = swea::read_file_bytes(model_a);
  bad_model[0] ^= 0x40;
  std::string bad_model_path = (dir / "model_bad.bin").string();
  swea::atomic_write_file(bad_model_path, bad_model);
  bool model_rejects = false;
  try {
    swea::load_model(bad_model_path);
  } catch (const swea::FormatError&) {
    model_rejects = true;
  }

  std::string truncated_path = (dir / "store_short.bin").string();
  swea::atomic_write_file(truncated_path, bad_store.substr(0, 4));
  bool truncated_rejects = false;
  try {
    EditingStore::load(truncated_path);
  } catch (const swea::FormatError&) {
    truncated_rejects = true;
  }

  bool ok = store_roundtrip && model_roundtrip && vocab_roundtrip &&
            store_rejects && model_rejects && truncated_rejects;
  CHECK(store_roundtrip);
  CHECK(model_roundtrip);
  CHECK(vocab_roundtrip);
  CHECK(store_rejects);
  CHECK(model_rejects);
  CHECK(truncated_rejects);
  CHECK(report(9, "store/checkpoint round-trips are byte-exact and corrupt "
                  "headers are rejected", ok));
}

TEST_CASE("criterion 10: manifest reproducibility") {
  const char* bin = std::getenv("SWEA_CLI_BIN");
  if (!bin) {
    CHECK(report(10, "SWEA_CLI_BIN not set; cannot locate the CLI binary",
                 false));
    return;
  }
  fs::path root = fs::temp_directory_path() / "swea_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);

  std::string cfg_path = (root / "train_config.json").string();
  swea::atomic_write_file(cfg_path, "{\"epochs\": 30}\n");

  std::vector<std::vector<std::string>> commands = {
      {bin, "gencorpus", "--facts", "12", "--requests", "2", "--seed", "7",
       "--out", (root / "corpus").string()},
      {bin, "train", "--corpus", (root / "corpus" / "corpus.jsonl").string(),
       "--out", (root / "model").string(), "--config", cfg_path},
      {bin, "edit", "--model", (root / "model").string(), "--requests",
       (root / "corpus" / "requests.jsonl").string(), "--store-out",
       (root / "store" / "store.bin").string(), "--steps", "8", "--prefixes",
       "2", "--seed", "0"},
      {bin, "eval", "--model", (root / "model").string(), "--store",
       (root / "store" / "store.bin").string(), "--requests",
       (root / "corpus" / "requests.jsonl").string(), "--report-out",
       (root / "report" / "report.json").string(), "--mode", "batch"},
  };
  std::vector<std::string> manifests = {
      (root / "corpus" / "manifest.json").string(),
      (root / "model" / "manifest.json").string(),
      (root / "store" / "manifest.json").string(),
      (root / "report" / "manifest.json").string(),
  };

  bool first_runs_ok = true;
  for (const auto& argv : commands) {
    if (run_command(argv) != 0) first_runs_ok = false;
  }
  REQUIRE(first_runs_ok);

  // Replay each command exactly as its manifest recorded it; every recorded
  // output (and the manifest itself) must come back byte-identical.
  bool replays_ok = true;
  bool outputs_identical = true;
  for (const auto& mpath : manifests) {
    auto manifest = nlohmann::json::parse(swea::read_file_bytes(mpath));
    auto argv = manifest.at("argv").get<std::vector<std::string>>();
    auto outputs =
        manifest.at("outputs").get<std::map<std::string, std::string>>();

    std::map<std::string, std::string> before;
    before[mpath] = swea::read_file_bytes(mpath);
    for (const auto& [path, hash] : outputs) {
      before[path] = swea::read_file_bytes(path);
    }
    if (run_command(argv) != 0) {
      replays_ok = false;
      continue;
    }
    for (const auto& [path, bytes] : before) {
      if (swea::read_file_bytes(path) != bytes) {
        outputs_identical = false;
        MESSAGE("replay of ", manifest.at("command").get<std::string>(),
                " changed ", path);
      }
    }
  }
  bool ok = first_runs_ok && replays_ok && outputs_identical;
  CHECK(replays_ok);
  CHECK(outputs_identical);
  CHECK(report(10, "CLI re-runs from their manifests are byte-identical", ok));
}

}  // TEST_SUITE
