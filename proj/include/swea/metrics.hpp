#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "swea/corpus.hpp"
#include "swea/fusion.hpp"
#include "swea/model.hpp"
#include "swea/request.hpp"
#include "swea/store.hpp"
#include "swea/tokenizer.hpp"

namespace swea {

/// Per-request evaluation detail. Paraphrase and probe counters pool into the
/// suite-level fractions; a request with no paraphrases simply contributes
/// nothing to the generalization denominator.
struct RequestOutcome {
  std::string id;
  bool matched = false;        // the subject span patched the prompt
  bool efficacy = false;       // P(new | prompt) > P(old | prompt)
  bool efficacy_argmax = false;
  int paraphrase_total = 0;
  int paraphrase_hits = 0;
  int paraphrase_argmax_hits = 0;
  int paraphrases_missing_subject = 0;  // counted as failures, flagged here
  int probe_total = 0;
  int probe_hits = 0;          // P(true object) stayed above P(new object)
  std::string error;           // non-empty if the request was unevaluable
};

struct EditMetrics {
  double efficacy = 0.0;
  double efficacy_argmax = 0.0;
  double generalization = 0.0;
  double generalization_argmax = 0.0;
  double specificity = 0.0;
  double score = 0.0;          // harmonic mean of the three headline rates
  int request_count = 0;
  int paraphrase_count = 0;
  int probe_count = 0;
  std::vector<RequestOutcome> breakdown;
};

/// 3 / (1/e + 1/g + 1/s); zero if any component is zero.
double harmonic_score(double efficacy, double generalization,
                      double specificity);

/// Probability-comparison metrics of `store` on `requests`, evaluated with
/// longest-match patching of each probe prompt. An empty store measures the
/// base model. Deterministic; probes run in parallel.
EditMetrics evaluate(const LanguageModel& model, const Tokenizer& tokenizer,
                     const EditingStore& store,
                     const std::vector<EditRequest>& requests);

/// Fraction of facts whose primary prompt greedily completes to the object.
double fact_recall(const LanguageModel& model, const Tokenizer& tokenizer,
                   const FactCorpus& corpus);

/// One editing stage: requests edited so far and the metrics over all of them.
struct StageMetrics {
  int stage = 0;
  int edited = 0;
  std::vector<FusionFailure> failures;
  EditMetrics metrics;
};

struct RunReport {
  std::string mode;
  std::vector<int> schedule;
  std::vector<StageMetrics> stages;
  EditingStore store;

  const EditMetrics& final_metrics() const { return stages.back().metrics; }
};

/// "NxM" -> N stages of M requests; must partition `request_count` exactly.
std::vector<int> parse_schedule(const std::string& text, int request_count);

/// Single stage holding every request.
RunReport run_batch(const LanguageModel& model, const Tokenizer& tokenizer,
                    const std::vector<EditRequest>& requests,
                    const FusionConfig& config);

/// One request per stage, recomputing the store at each step.
RunReport run_sequential(const LanguageModel& model, const Tokenizer& tokenizer,
                         const std::vector<EditRequest>& requests,
                         const FusionConfig& config);

/// Stages of `schedule` sizes; after each stage the metrics cover every
/// request edited so far.
RunReport run_sequential_batch(const LanguageModel& model,
                               const Tokenizer& tokenizer,
                               const std::vector<EditRequest>& requests,
                               const std::vector<int>& schedule,
                               const FusionConfig& config);

struct SweepRow {
  double value = 0.0;
  std::size_t failures = 0;
  EditMetrics metrics;
};

/// Fresh batch edit + evaluation per value of `axis` ("gamma" or "t").
std::vector<SweepRow> sweep(const LanguageModel& model,
                            const Tokenizer& tokenizer,
                            const std::vector<EditRequest>& requests,
                            const std::string& axis,
                            const std::vector<double>& values,
                            const FusionConfig& config);

nlohmann::json metrics_to_json(const EditMetrics& m);
nlohmann::json report_to_json(const RunReport& report);
nlohmann::json sweep_to_json(const std::string& axis,
                             const std::vector<SweepRow>& rows);

std::string report_csv(const RunReport& report);
std::string sweep_csv(const std::string& axis,
                      const std::vector<SweepRow>& rows);

/// Fixed-width console table, one row per (label, metrics) pair.
std::string metrics_table(
    const std::vector<std::pair<std::string, EditMetrics>>& rows);

}  // namespace swea
