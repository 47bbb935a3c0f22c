#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swea/binio.hpp"
#include "swea/checkpoint.hpp"
#include "swea/corpus.hpp"
#include "swea/error.hpp"
#include "swea/fusion.hpp"
#include "swea/manifest.hpp"
#include "swea/matcher.hpp"
#include "swea/metrics.hpp"
#include "swea/metrics.hpp"
#include "swea/model.hpp"
#include "swea/request.hpp"
#include "swea/store.hpp"
#include "swea/tokenizer.hpp"

namespace fs = std::filesystem;

namespace {

struct LoadedModel {
  swea::LanguageModel model;
  swea::Tokenizer tokenizer;
  std::string model_path;
  std::string vocab_path;
};

LoadedModel load_model_dir(const std::string& dir) {
  LoadedModel out;
  out.model_path = (fs::path(dir) / "model.bin").string();
  out.vocab_path = (fs::path(dir) / "vocab.txt").string();
  out.model = swea::load_model(out.model_path);
  out.tokenizer = swea::load_vocab(out.vocab_path);
  if (out.model.config().vocab_size !=
      static_cast<int>(out.tokenizer.size())) {
    throw swea::ConfigError("model dir '" + dir +
                            "': vocab size does not match checkpoint");
  }
  return out;
}

std::string sibling_path(const std::string& path, const std::string& name) {
  return (fs::path(path).parent_path() / name).string();
}

/// report.json -> report.csv (or appended .csv when no .json suffix).
std::string csv_path_for(const std::string& report_path) {
  fs::path p(report_path);
  if (p.extension() == ".json") {
    p.replace_extension(".csv");
    return p.string();
  }
  return report_path + ".csv";
}

void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string tok = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = (comma == std::string::npos) ? text.size() + 1 : comma + 1;
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.find_last_not_of(" \t") + 1) throw std::exception();
      out.push_back(v);
    } catch (const std::exception&) {
      throw swea::ConfigError("--values: '" + tok + "' is not a number");
    }
  }
  if (out.empty()) throw swea::ConfigError("--values: no values given");
  return out;
}

nlohmann::json fusion_config_json(const swea::FusionConfig& c) {
  return nlohmann::json(c);
}

// ---------------------------------------------------------------------------
// gencorpus

struct GencorpusArgs {
  int facts = 200;
  int requests = 50;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gencorpus(const GencorpusArgs& a,
                  const std::vector<std::string>& argv) {
  fs::create_directories(a.out);
  swea::FactCorpus corpus = swea::generate_corpus(a.facts, a.seed);
  std::vector<swea::EditRequest> requests =
      corpus.make_requests(a.requests, a.seed + 1);

  std::string corpus_path = (fs::path(a.out) / "corpus.jsonl").string();
  std::string requests_path = (fs::path(a.out) / "requests.jsonl").string();
  swea::save_corpus_sentences(corpus_path, corpus.sentences());
  swea::save_requests_jsonl(requests_path, requests);

  swea::RunManifest manifest;
  manifest.command = "gencorpus";
  manifest.argv = argv;
  manifest.config = {{"facts", a.facts},
                     {"requests", a.requests},
                     {"seed", a.seed}};
  manifest.add_output(corpus_path);
  manifest.add_output(requests_path);
  manifest.write((fs::path(a.out) / "manifest.json").string());

  std::printf("wrote %zu sentences (%d facts) and %zu requests to %s\n",
              corpus.sentences().size(), a.facts, requests.size(),
              a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  nlohmann::json file = nlohmann::json::object();
  if (!a.config.empty()) {
    try {
      file = nlohmann::json::parse(swea::read_file_bytes(a.config));
    } catch (const nlohmann::json::exception& e) {
      throw swea::FormatError("config file '" + a.config + "': " + e.what());
    }
  }
  nlohmann::json model_cfg = file.value("model", nlohmann::json::object());

  swea::ModelConfig cfg;  // built-in defaults: 2 layers, 4 heads, width 64
  cfg.n_layers = model_cfg.value("n_layers", cfg.n_layers);
  cfg.n_heads = model_cfg.value("n_heads", cfg.n_heads);
  cfg.d_model = model_cfg.value("d_model", cfg.d_model);
  cfg.d_ff = model_cfg.value("d_ff", cfg.d_ff);
  cfg.max_seq_len = model_cfg.value("max_seq_len", cfg.max_seq_len);

  swea::PretrainOptions opt;
  opt.epochs = file.value("epochs", 300);
  opt.lr = file.value("lr", opt.lr);
  opt.seed = a.seed_given ? a.seed : file.value("seed", a.seed);

  std::vector<std::string> sentences = swea::load_corpus_sentences(a.corpus);
  swea::Tokenizer tokenizer = swea::Tokenizer::build(sentences);
  cfg.vocab_size = static_cast<int>(tokenizer.size());

  std::printf("training %d-layer d=%d model on %zu sentences (%d words), "
              "%d epochs\n",
              cfg.n_layers, cfg.d_model, sentences.size(), tokenizer.size(),
              opt.epochs);
  swea::LanguageModel model = swea::pretrain(sentences, tokenizer, cfg, opt);

  fs::create_directories(a.out);
  std::string model_path = (fs::path(a.out) / "model.bin").string();
  std::string vocab_path = (fs::path(a.out) / "vocab.txt").string();
  swea::save_model(model_path, model);
  swea::save_vocab(vocab_path, tokenizer);

  swea::RunManifest manifest;
  manifest.command = "train";
  manifest.argv = argv;
  manifest.config = {{"model",
                      {{"n_layers", cfg.n_layers},
                       {"n_heads", cfg.n_heads},
                       {"d_model", cfg.d_model},
                       {"d_ff", cfg.d_ff},
                       {"max_seq_len", cfg.max_seq_len},
                       {"vocab_size", cfg.vocab_size}}},
                     {"epochs", opt.epochs},
                     {"lr", opt.lr},
                     {"seed", opt.seed}};
  manifest.add_input(a.corpus);
  if (!a.config.empty()) manifest.add_input(a.config);
  manifest.add_output(model_path);
  manifest.add_output(vocab_path);
  manifest.write((fs::path(a.out) / "manifest.json").string());

  std::printf("wrote %s and %s\n", model_path.c_str(), vocab_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// edit

struct EditArgs {
  std::string model;
  std::string requests;
  std::string store_out;
  swea::FusionConfig config;
};

int cmd_edit(const EditArgs& a, const std::vector<std::string>& argv) {
  LoadedModel lm = load_model_dir(a.model);
  std::vector<swea::EditRequest> requests =
      swea::load_requests_jsonl(a.requests);

  if (requests.empty()) {
    std::fprintf(stderr, "warning: no requests in %s; writing empty store\n",
                 a.requests.c_str());
  }
  swea::EditResult result =
      swea::edit(lm.model, lm.tokenizer, requests, a.config);

  for (const auto& [key, emb] : result.store.entries()) {
    std::printf("[ok]   %s (rows=%td, seq=%llu)\n", key.c_str(),
                emb.deltas.rows(),
                static_cast<unsigned long long>(emb.seq));
  }
  for (const auto& f : result.failures) {
    std::printf("[fail] %s: %s\n", f.request_id.c_str(), f.message.c_str());
  }

  ensure_parent_dir(a.store_out);
  result.store.save(a.store_out);

  swea::RunManifest manifest;
  manifest.command = "edit";
  manifest.argv = argv;
  manifest.config = fusion_config_json(a.config);
  manifest.add_input(lm.model_path);
  manifest.add_input(lm.vocab_path);
  manifest.add_input(a.requests);
  manifest.add_output(a.store_out);
  manifest.write(sibling_path(a.store_out, "manifest.json"));

  std::printf("wrote %s (%zu subjects, %zu failures)\n", a.store_out.c_str(),
              result.store.size(), result.failures.size());
  if (!requests.empty() && result.failures.size() == requests.size()) {
    std::fprintf(stderr, "error: all %zu requests failed\n", requests.size());
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string model;
  std::string store;
  std::string requests;
  std::string report_out;
  std::string mode = "batch";
  std::string schedule;
  swea::FusionConfig config;  // for the modes that edit internally
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  LoadedModel lm = load_model_dir(a.model);
  std::vector<swea::EditRequest> requests =
      swea::load_requests_jsonl(a.requests);

  swea::RunReport report;
  if (a.mode == "batch") {
    if (!a.schedule.empty()) {
      throw swea::ConfigError("--schedule applies to sequential-batch only");
    }
    swea::EditingStore store;  // absent --store evaluates the base model
    if (!a.store.empty()) store = swea::EditingStore::load(a.store);
    report.mode = "batch";
    report.schedule = {static_cast<int>(requests.size())};
    swea::StageMetrics stage;
    stage.stage = 1;
    stage.edited = static_cast<int>(store.size());
    stage.metrics = swea::evaluate(lm.model, lm.tokenizer, store, requests);
    report.stages.push_back(std::move(stage));
    report.store = std::move(store);
  } else if (a.mode == "sequential" || a.mode == "sequential-batch") {
    if (!a.store.empty()) {
      throw swea::ConfigError(
          "sequential modes build their own stores; drop --store");
    }
    if (a.mode == "sequential") {
      if (!a.schedule.empty()) {
        throw swea::ConfigError("--schedule applies to sequential-batch only");
      }
      report = swea::run_sequential(lm.model, lm.tokenizer, requests,
                                    a.config);
    } else {
      if (a.schedule.empty()) {
        throw swea::ConfigError("sequential-batch requires --schedule NxM");
      }
      report = swea::run_sequential_batch(
          lm.model, lm.tokenizer, requests,
          swea::parse_schedule(a.schedule,
                               static_cast<int>(requests.size())),
          a.config);
    }
  } else {
    throw swea::ConfigError(
        "--mode must be batch, sequential, or sequential-batch");
  }

  ensure_parent_dir(a.report_out);
  std::string csv_path = csv_path_for(a.report_out);
  swea::atomic_write_file(a.report_out,
                          swea::report_to_json(report).dump(2) + "\n");
  swea::atomic_write_file(csv_path, swea::report_csv(report));

  std::vector<std::pair<std::string, swea::EditMetrics>> rows;
  for (const auto& s : report.stages) {
    rows.push_back({"stage " + std::to_string(s.stage) + " (n=" +
                        std::to_string(s.edited) + ")",
                    s.metrics});
  }
  std::fputs(swea::metrics_table(rows).c_str(), stdout);

  swea::RunManifest manifest;
  manifest.command = "eval";
  manifest.argv = argv;
  manifest.config = {{"mode", a.mode},
                     {"schedule", a.schedule},
                     {"fusion", fusion_config_json(a.config)}};
  manifest.add_input(lm.model_path);
  manifest.add_input(lm.vocab_path);
  manifest.add_input(a.requests);
  if (!a.store.empty()) manifest.add_input(a.store);
  manifest.add_output(a.report_out);
  manifest.add_output(csv_path);
  manifest.write(sibling_path(a.report_out, "manifest.json"));
  return 0;
}

// ---------------------------------------------------------------------------
// attribute

struct AttributeArgs {
  std::string model;
  std::string prompt;
  std::string subject;
  std::string object;
  int n = 20;
  double t = 0.35;
  int top_k = 10;
};

int cmd_attribute(const AttributeArgs& a) {
  LoadedModel lm = load_model_dir(a.model);
  swea::FusionConfig cfg;
  cfg.riemann_steps = a.n;
  cfg.t = a.t;
  swea::AttributionReport report = swea::attribute(
      lm.model, lm.tokenizer, a.prompt, a.subject, a.object, cfg);

  struct Slot {
    int row, dim;
    double score;
  };
  std::vector<Slot> slots;
  for (Eigen::Index r = 0; r < report.scores.rows(); ++r) {
    for (Eigen::Index d = 0; d < report.scores.cols(); ++d) {
      slots.push_back({static_cast<int>(r), static_cast<int>(d),
                       report.scores(r, d)});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& x, const Slot& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::pair(x.row, x.dim) < std::pair(y.row, y.dim);
  });

  std::printf("attribution for '%s' / subject '%s' / object '%s' (n=%d)\n",
              a.prompt.c_str(), a.subject.c_str(), a.object.c_str(), a.n);
  std::printf("max score: %.6g\n", report.max_score);
  int k = std::min<int>(a.top_k, static_cast<int>(slots.size()));
  for (int i = 0; i < k; ++i) {
    std::printf("  token %d dim %3d  score %.6g\n", slots[i].row,
                slots[i].dim, slots[i].score);
  }
  std::printf("knowledge dimensions at t=%.3g (%zu):", a.t,
              report.keds.size());
  for (const auto& [r, d] : report.keds) std::printf(" (%d,%d)", r, d);
  std::printf("\n");
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string model;
  std::string requests;
  std::string axis;
  std::string values;
  std::string report_out;
  swea::FusionConfig config;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  LoadedModel lm = load_model_dir(a.model);
  std::vector<swea::EditRequest> requests =
      swea::load_requests_jsonl(a.requests);
  std::vector<double> values = parse_values(a.values);

  std::vector<swea::SweepRow> rows =
      swea::sweep(lm.model, lm.tokenizer, requests, a.axis, values, a.config);

  ensure_parent_dir(a.report_out);
  swea::atomic_write_file(a.report_out, swea::sweep_csv(a.axis, rows));

  std::vector<std::pair<std::string, swea::EditMetrics>> table;
  for (const auto& r : rows) {
    char label[48];
    std::snprintf(label, sizeof(label), "%s=%g", a.axis.c_str(), r.value);
    table.push_back({label, r.metrics});
  }
  std::fputs(swea::metrics_table(table).c_str(), stdout);

  swea::RunManifest manifest;
  manifest.command = "sweep";
  manifest.argv = argv;
  manifest.config = {{"axis", a.axis},
                     {"values", values},
                     {"fusion", fusion_config_json(a.config)}};
  manifest.add_input(lm.model_path);
  manifest.add_input(lm.vocab_path);
  manifest.add_input(a.requests);
  manifest.add_output(a.report_out);
  manifest.write(sibling_path(a.report_out, "manifest.json"));
  return 0;
}

void add_fusion_flags(CLI::App* cmd, swea::FusionConfig& c) {
  cmd->add_option("--alpha", c.alpha, "KL anchor weight");
  cmd->add_option("--beta", c.beta, "new-object NLL weight");
  cmd->add_option("--gamma", c.gamma, "suppression strength");
  cmd->add_option("--t", c.t, "knowledge-dimension threshold");
  cmd->add_option("--steps", c.steps, "optimizer iterations");
  cmd->add_option("--lr", c.lr, "learning rate");
  cmd->add_option("--weight-decay", c.weight_decay, "delta L2 pull");
  cmd->add_option("--clamp", c.clamp_factor, "per-row delta norm cap");
  cmd->add_option("--n", c.riemann_steps, "attribution integration steps");
  cmd->add_option("--prefixes", c.prefix_count, "sampled prefixes");
  cmd->add_option("--prefix-length", c.prefix_length, "prefix token count");
  cmd->add_option("--seed", c.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-level model editing on a toy transformer"};
  app.require_subcommand(1);
  std::vector<std::string> raw_argv(argv, argv + argc);

  GencorpusArgs gc;
  CLI::App* gencorpus =
      app.add_subcommand("gencorpus", "generate a synthetic fact corpus");
  gencorpus->add_option("--facts", gc.facts, "number of facts");
  gencorpus->add_option("--requests", gc.requests, "number of edit requests");
  gencorpus->add_option("--seed", gc.seed, "random seed");
  gencorpus->add_option("--out", gc.out, "output directory")->required();

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "pretrain the toy model");
  train->add_option("--corpus", tr.corpus, "corpus.jsonl path")->required();
  train->add_option("--out", tr.out, "output directory")->required();
  train->add_option("--config", tr.config, "JSON config file");
  CLI::Option* seed_opt = train->add_option("--seed", tr.seed, "random seed");

  EditArgs ed;
  CLI::App* edit = app.add_subcommand("edit", "build an editing store");
  edit->add_option("--model", ed.model, "model directory")->required();
  edit->add_option("--requests", ed.requests, "requests.jsonl")->required();
  edit->add_option("--store-out", ed.store_out, "store output path")
      ->required();
  add_fusion_flags(edit, ed.config);

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "evaluate edits");
  eval->add_option("--model", ev.model, "model directory")->required();
  eval->add_option("--store", ev.store, "editing store (batch mode only)");
  eval->add_option("--requests", ev.requests, "requests.jsonl")->required();
  eval->add_option("--report-out", ev.report_out, "JSON report path")
      ->required();
  eval->add_option("--mode", ev.mode,
                   "batch | sequential | sequential-batch");
  eval->add_option("--schedule", ev.schedule, "NxM stage layout");
  add_fusion_flags(eval, ev.config);

  AttributeArgs at;
  CLI::App* attribute =
      app.add_subcommand("attribute", "inspect knowledge attribution");
  attribute->add_option("--model", at.model, "model directory")->required();
  attribute->add_option("--prompt", at.prompt, "prompt text")->required();
  attribute->add_option("--subject", at.subject, "subject span")->required();
  attribute->add_option("--object", at.object, "object continuation")
      ->required();
  attribute->add_option("--n", at.n, "integration steps");
  attribute->add_option("--t", at.t, "dimension threshold");
  attribute->add_option("--top-k", at.top_k, "slots to print");

  SweepArgs sw;
  CLI::App* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  sweep->add_option("--model", sw.model, "model directory")->required();
  sweep->add_option("--requests", sw.requests, "requests.jsonl")->required();
  sweep->add_option("--axis", sw.axis, "gamma | t")->required();
  sweep->add_option("--values", sw.values, "comma-separated values")
      ->required();
  sweep->add_option("--report-out", sw.report_out, "CSV output path")
      ->required();
  add_fusion_flags(sweep, sw.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, returns 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the error and usage pointer
    return 2;
  }
  tr.seed_given = seed_opt->count() > 0;

  try {
    if (gencorpus->parsed()) return cmd_gencorpus(gc, raw_argv);
    if (train->parsed()) return cmd_train(tr, raw_argv);
    if (edit->parsed()) return cmd_edit(ed, raw_argv);
    if (eval->parsed()) return cmd_eval(ev, raw_argv);
    if (attribute->parsed()) return cmd_attribute(at);
    if (sweep->parsed()) return cmd_sweep(sw, raw_argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
