#include "swea/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "swea/error.hpp"
#include "swea/matcher.hpp"
#include "swea/parallel.hpp"

namespace swea {
namespace {

/// Per-token mean log-probability of `continuation` after `prompt_ids`, with
/// the prompt patched by the store's longest subject match (if any). The mean
/// (a geometric mean of token probabilities) keeps comparisons between
/// objects of different token counts unbiased.
double patched_logprob(const LanguageModel& model, const EditingStore& store,
                       const std::vector<int>& prompt_ids,
                       const std::vector<int>& continuation) {
  auto patch = patch_for(prompt_ids, store);
  double lp = model.sequence_logprob(prompt_ids, continuation,
                                     patch ? &*patch : nullptr);
  return continuation.empty() ? lp
                              : lp / static_cast<double>(continuation.size());
}

std::vector<int> patched_greedy(const LanguageModel& model,
                                const EditingStore& store,
                                const std::vector<int>& prompt_ids,
                                int steps) {
  auto patch = patch_for(prompt_ids, store);
  return model.greedy_continuation(prompt_ids, steps,
                                   patch ? &*patch : nullptr);
}

/// Paraphrases are evaluated verbatim apart from placeholder substitution;
/// unlike the headline prompt, a missing subject is NOT repaired by
/// prepending — it is counted as a flagged failure instead.
std::string substitute_subject(const std::string& templ,
                               const std::string& subject) {
  const std::string ph = "{subject}";
  auto pos = templ.find(ph);
  if (pos == std::string::npos) return templ;
  std::string out = templ;
  out.replace(pos, ph.size(), subject);
  return out;
}

void check_store_compat(const LanguageModel& model, const Tokenizer& tokenizer,
                        const EditingStore& store) {
  if (!store.model_vocab_hash().empty() &&
      store.model_vocab_hash() != vocab_hash(tokenizer)) {
    throw ConfigError(
        "evaluate: store was built against a different vocabulary (hash " +
        store.model_vocab_hash() + " != " + vocab_hash(tokenizer) + ")");
  }
  (void)model;
}

}  // namespace

double harmonic_score(double efficacy, double generalization,
                      double specificity) {
  if (efficacy <= 0.0 || generalization <= 0.0 || specificity <= 0.0) {
    return 0.0;
  }
  return 3.0 / (1.0 / efficacy + 1.0 / generalization + 1.0 / specificity);
}

EditMetrics evaluate(const LanguageModel& model, const Tokenizer& tokenizer,
                     const EditingStore& store,
                     const std::vector<EditRequest>& requests) {
  check_store_compat(model, tokenizer, store);
  EditMetrics out;
  out.request_count = static_cast<int>(requests.size());
  out.breakdown.resize(requests.size());

  parallel_for(requests.size(), [&](std::size_t i) {
    const EditRequest& r = requests[i];
    RequestOutcome& o = out.breakdown[i];
    o.id = r.id();
    try {
      std::vector<int> subject_ids = tokenizer.encode(r.subject);
      std::vector<int> new_ids = tokenizer.encode(r.new_object);
      std::vector<int> old_ids = tokenizer.encode(r.original_object);
      std::vector<int> prompt_ids = tokenizer.encode(r.rendered_prompt());

      o.matched = match_for_patch(prompt_ids, store).has_value();
      o.efficacy = patched_logprob(model, store, prompt_ids, new_ids) >
                   patched_logprob(model, store, prompt_ids, old_ids);
      o.efficacy_argmax =
          patched_greedy(model, store, prompt_ids,
                         static_cast<int>(new_ids.size())) == new_ids;

      for (const auto& templ : r.paraphrases) {
        ++o.paraphrase_total;
        std::vector<int> pids =
            tokenizer.encode(substitute_subject(templ, r.subject));
        if (find_subsequence(pids, subject_ids) < 0) {
          ++o.paraphrases_missing_subject;
          continue;
        }
        if (patched_logprob(model, store, pids, new_ids) >
            patched_logprob(model, store, pids, old_ids)) {
          ++o.paraphrase_hits;
        }
        if (patched_greedy(model, store, pids,
                           static_cast<int>(new_ids.size())) == new_ids) {
          ++o.paraphrase_argmax_hits;
        }
      }

      for (const auto& probe : r.neighborhood) {
        ++o.probe_total;
        std::vector<int> pids = tokenizer.encode(probe.prompt);
        std::vector<int> true_ids = tokenizer.encode(probe.object);
        if (patched_logprob(model, store, pids, true_ids) >
            patched_logprob(model, store, pids, new_ids)) {
          ++o.probe_hits;
        }
      }
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  int eff = 0, eff_arg = 0;
  int para_total = 0, para_hits = 0, para_arg = 0;
  int probe_total = 0, probe_hits = 0;
  for (const auto& o : out.breakdown) {
    eff += o.efficacy ? 1 : 0;
    eff_arg += o.efficacy_argmax ? 1 : 0;
    para_total += o.paraphrase_total;
    para_hits += o.paraphrase_hits;
    para_arg += o.paraphrase_argmax_hits;
    probe_total += o.probe_total;
    probe_hits += o.probe_hits;
  }
  auto frac = [](int hits, int total) {
    return total > 0 ? static_cast<double>(hits) / total : 0.0;
  };
  out.paraphrase_count = para_total;
  out.probe_count = probe_total;
  out.efficacy = frac(eff, out.request_count);
  out.efficacy_argmax = frac(eff_arg, out.request_count);
  out.generalization = frac(para_hits, para_total);
  out.generalization_argmax = frac(para_arg, para_total);
  out.specificity = frac(probe_hits, probe_total);
  out.score = harmonic_score(out.efficacy, out.generalization,
                             out.specificity);
  return out;
}

double fact_recall(const LanguageModel& model, const Tokenizer& tokenizer,
                   const FactCorpus& corpus) {
  if (corpus.facts.empty()) return 0.0;
  std::vector<int> hit(corpus.facts.size(), 0);
  parallel_for(corpus.facts.size(), [&](std::size_t i) {
    const Fact& f = corpus.facts[i];
    std::vector<int> prompt_ids = tokenizer.encode(corpus.fact_prompt(f));
    std::vector<int> obj_ids = tokenizer.encode(f.object);
    hit[i] = model.greedy_continuation(
                 prompt_ids, static_cast<int>(obj_ids.size())) == obj_ids
                 ? 1
                 : 0;
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) /
         static_cast<double>(corpus.facts.size());
}

std::vector<int> parse_schedule(const std::string& text, int request_count) {
  auto x = text.find('x');
  std::size_t stages_end = 0, size_end = 0;
  int stages = 0, size = 0;
  try {
    stages = std::stoi(text, &stages_end);
    size = std::stoi(text.substr(x + 1), &size_end);
  } catch (const std::exception&) {
    throw ConfigError("schedule '" + text + "' is not of the form NxM");
  }
  if (x == std::string::npos || stages_end != x ||
      size_end != text.size() - x - 1 || stages < 1 || size < 1) {
    throw ConfigError("schedule '" + text + "' is not of the form NxM");
  }
  if (static_cast<long long>(stages) * size != request_count) {
    throw ConfigError("schedule '" + text + "' does not partition " +
                      std::to_string(request_count) + " requests");
  }
  return std::vector<int>(static_cast<std::size_t>(stages), size);
}

RunReport run_sequential_batch(const LanguageModel& model,
                               const Tokenizer& tokenizer,
                               const std::vector<EditRequest>& requests,
                               const std::vector<int>& schedule,
                               const FusionConfig& config) {
  std::size_t total = 0;
  for (int n : schedule) {
    if (n < 0) throw ConfigError("schedule stages must be non-negative");
    total += static_cast<std::size_t>(n);
  }
  if (total != requests.size()) {
    throw ConfigError("schedule covers " + std::to_string(total) +
                      " requests, suite has " +
                      std::to_string(requests.size()));
  }

  RunReport report;
  report.mode = "sequential-batch";
  report.schedule = schedule;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    std::size_t n = static_cast<std::size_t>(schedule[s]);
    std::vector<EditRequest> stage_requests(
        requests.begin() + static_cast<std::ptrdiff_t>(offset),
        requests.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;

    StageMetrics stage;
    stage.stage = static_cast<int>(s + 1);
    stage.edited = static_cast<int>(offset);
    stage.failures =
        edit_into(report.store, model, tokenizer, stage_requests, config);
    std::vector<EditRequest> seen(
        requests.begin(), requests.begin() + static_cast<std::ptrdiff_t>(offset));
    stage.metrics = evaluate(model, tokenizer, report.store, seen);
    report.stages.push_back(std::move(stage));
  }
  return report;
}

RunReport run_batch(const LanguageModel& model, const Tokenizer& tokenizer,
                    const std::vector<EditRequest>& requests,
                    const FusionConfig& config) {
  RunReport report = run_sequential_batch(
      model, tokenizer, requests,
      {static_cast<int>(requests.size())}, config);
  report.mode = "batch";
  return report;
}

RunReport run_sequential(const LanguageModel& model, const Tokenizer& tokenizer,
                         const std::vector<EditRequest>& requests,
                         const FusionConfig& config) {
  RunReport report = run_sequential_batch(
      model, tokenizer, requests,
      std::vector<int>(requests.size(), 1), config);
  report.mode = "sequential";
  return report;
}

std::vector<SweepRow> sweep(const LanguageModel& model,
                            const Tokenizer& tokenizer,
                            const std::vector<EditRequest>& requests,
                            const std::string& axis,
                            const std::vector<double>& values,
                            const FusionConfig& config) {
  if (axis != "gamma" && axis != "t") {
    throw ConfigError("sweep axis must be 'gamma' or 't', got '" + axis + "'");
  }
  std::vector<SweepRow> rows;
  for (double v : values) {
    FusionConfig cfg = config;
    if (axis == "gamma") {
      cfg.gamma = v;
    } else {
      cfg.t = v;
    }
    EditResult res = edit(model, tokenizer, requests, cfg);
    SweepRow row;
    row.value = v;
    row.failures = res.failures.size();
    row.metrics = evaluate(model, tokenizer, res.store, requests);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json metrics_to_json(const EditMetrics& m) {
  nlohmann::json breakdown = nlohmann::json::array();
  for (const auto& o : m.breakdown) {
    breakdown.push_back({{"id", o.id},
                         {"matched", o.matched},
                         {"efficacy", o.efficacy},
                         {"efficacy_argmax", o.efficacy_argmax},
                         {"paraphrase_total", o.paraphrase_total},
                         {"paraphrase_hits", o.paraphrase_hits},
                         {"paraphrase_argmax_hits", o.paraphrase_argmax_hits},
                         {"paraphrases_missing_subject",
                          o.paraphrases_missing_subject},
                         {"probe_total", o.probe_total},
                         {"probe_hits", o.probe_hits},
                         {"error", o.error}});
  }
  return {{"efficacy", m.efficacy},
          {"efficacy_argmax", m.efficacy_argmax},
          {"generalization", m.generalization},
          {"generalization_argmax", m.generalization_argmax},
          {"specificity", m.specificity},
          {"score", m.score},
          {"request_count", m.request_count},
          {"paraphrase_count", m.paraphrase_count},
          {"probe_count", m.probe_count},
          {"breakdown", breakdown}};
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages) {
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : s.failures) {
      failures.push_back({{"request", f.request_id}, {"message", f.message}});
    }
    stages.push_back({{"stage", s.stage},
                      {"edited", s.edited},
                      {"failures", failures},
                      {"metrics", metrics_to_json(s.metrics)}});
  }
  return {{"mode", report.mode},
          {"schedule", report.schedule},
          {"stages", stages}};
}

nlohmann::json sweep_to_json(const std::string& axis,
                             const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{axis, r.value},
                   {"failures", r.failures},
                   {"metrics", metrics_to_json(r.metrics)}});
  }
  return {{"axis", axis}, {"rows", out}};
}

namespace {

std::string csv_row(std::initializer_list<double> values) {
  std::string out;
  char buf[64];
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), ",%.6f", v);
    out += buf;
  }
  return out;
}

const char* kMetricColumns =
    "efficacy,efficacy_argmax,generalization,generalization_argmax,"
    "specificity,score";

std::string metric_cells(const EditMetrics& m) {
  return csv_row({m.efficacy, m.efficacy_argmax, m.generalization,
                  m.generalization_argmax, m.specificity, m.score});
}

}  // namespace

std::string report_csv(const RunReport& report) {
  std::string out = std::string("stage,edited,") + kMetricColumns + "\n";
  for (const auto& s : report.stages) {
    out += std::to_string(s.stage) + "," + std::to_string(s.edited) +
           metric_cells(s.metrics) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::string& axis,
                      const std::vector<SweepRow>& rows) {
  std::string out = axis + std::string(",failures,") + kMetricColumns + "\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g", r.value);
    out += buf;
    out += "," + std::to_string(r.failures) + metric_cells(r.metrics) + "\n";
  }
  return out;
}

std::string metrics_table(
    const std::vector<std::pair<std::string, EditMetrics>>& rows) {
  std::size_t label_w = 5;
  for (const auto& [label, m] : rows) label_w = std::max(label_w, label.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s (argmax %s/%s)\n",
                static_cast<int>(label_w), "run", "efficacy", "general.",
                "specif.", "score", "eff", "gen");
  out += buf;
  for (const auto& [label, m] : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%-*s %9.4f %9.4f %9.4f %9.4f (argmax %.2f/%.2f)\n",
                  static_cast<int>(label_w), label.c_str(), m.efficacy,
                  m.generalization, m.specificity, m.score, m.efficacy_argmax,
                  m.generalization_argmax);
    out += buf;
  }
  return out;
}

}  // namespace swea
