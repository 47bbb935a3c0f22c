#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swea/model.hpp"
#include "swea/request.hpp"
#include "swea/store.hpp"
#include "swea/tensor.hpp"
#include "swea/tokenizer.hpp"

namespace swea {

/// Per-dimension attribution over the subject rows, plus the knowledge
/// dimensions selected at the configured threshold.
struct AttributionReport {
  ad::Mat<double> scores;                      // |S| x h, finite
  std::vector<std::pair<int, int>> keds;       // (subject row, dimension)
  double max_score = 0.0;                      // global max over scores
};

/// A request that could not be fused; the batch carries on without it.
struct FusionFailure {
  std::string request_id;
  std::string message;
};

struct EditResult {
  EditingStore store;
  std::vector<FusionFailure> failures;
};

/// First contiguous occurrence of `needle` in `haystack`, or -1.
Eigen::Index find_subsequence(const std::vector<int>& haystack,
                              const std::vector<int>& needle);

/// The optimization objective, built on `tape` with `delta` added over the
/// subject rows (positions counted after the BOS the variants prepend):
///
///   loss(e) = alpha * KL(pre-edit || patched)
///           + beta * mean over prompt variants of the new-object NLL,
///
/// where the variants are the bare prompt plus one per prefix, and
/// `ref_logits` is the frozen pre-edit next-token logits row of the bare
/// prompt that the KL term anchors to.
ad::Tensor<double> fusion_loss(const LanguageModel& model,
                               ad::Tape<double>& tape,
                               ad::Tensor<double> delta,
                               const std::vector<int>& prompt_ids,
                               Eigen::Index subject_start,
                               const std::vector<int>& new_object_ids,
                               const std::vector<std::vector<int>>& prefixes,
                               const ad::Mat<double>& ref_logits, double alpha,
                               double beta);

/// Gradient-optimizes the per-subject-token delta rows e against
/// fusion_loss. After every Adam step each row is rescaled onto the ball of
/// radius clamp_factor * ||subject embedding row||. Returns the best iterate
/// seen.
ad::Mat<double> optimize_delta_ids(const LanguageModel& model,
                                   const std::vector<int>& prompt_ids,
                                   Eigen::Index subject_start,
                                   const std::vector<int>& subject_ids,
                                   const std::vector<int>& new_object_ids,
                                   const std::vector<std::vector<int>>& prefixes,
                                   const FusionConfig& config,
                                   const std::string& request_id);

ad::Mat<double> optimize_delta(const LanguageModel& model,
                               const Tokenizer& tokenizer,
                               const EditRequest& request,
                               const FusionConfig& config);

/// Riemann-integrated attribution: for each subject row z, the model runs
/// with that row replaced by (k/n) of its original value, k = 1..n, and the
/// gradients of the joint probability of `object_ids` are summed and scaled
/// by (original row / n). Dimensions whose original value is zero therefore
/// score exactly zero. Runs on the pristine model.
AttributionReport attribute_ids(const LanguageModel& model,
                                const std::vector<int>& prompt_ids,
                                Eigen::Index subject_start,
                                Eigen::Index subject_len,
                                const std::vector<int>& object_ids,
                                const FusionConfig& config);

/// Text-level wrapper: locates the subject inside the prompt, encodes the
/// object, and attributes. `prompt` must already contain the subject.
AttributionReport attribute(const LanguageModel& model,
                            const Tokenizer& tokenizer,
                            const std::string& prompt,
                            const std::string& subject,
                            const std::string& object,
                            const FusionConfig& config);

/// Dimensions scoring strictly above t * max_score. The maximal dimensions
/// are always retained, so t = 1 keeps exactly the argmax set while t = 0
/// still excludes non-positive scores.
std::vector<std::pair<int, int>> select_keds(const ad::Mat<double>& scores,
                                             double t);

/// e^S = e - gamma * mask(K_D) . x^S: subtracts gamma times the original
/// subject embedding at the selected dimensions, leaves everything else
/// untouched (bitwise, including gamma = 0 and empty K_D).
ad::Mat<double> fuse(const ad::Mat<double>& e,
                     const ad::Mat<double>& x_subject,
                     const std::vector<std::pair<int, int>>& keds,
                     double gamma);

/// One request end-to-end: optimize -> attribute -> select -> fuse. The
/// returned embedding is keyed by the subject's token ids; seq is left for
/// the store to stamp. Throws FusionError with the request id on failure.
EditingEmbedding fuse_request(const LanguageModel& model,
                              const Tokenizer& tokenizer,
                              const EditRequest& request,
                              const FusionConfig& config);

/// Re-fuses every subject whose latest logged request is not materialized
/// yet, each against the pristine model under its own logged config.
/// Requests fuse in parallel; materialization stays in log order. Returns
/// per-request failures instead of aborting.
std::vector<FusionFailure> recompute_for_sequential(EditingStore& store,
                                                    const LanguageModel& model,
                                                    const Tokenizer& tokenizer);

/// Batch editing: logs every request (same config) and recomputes. The store
/// must belong to this model's vocabulary (hash-checked).
std::vector<FusionFailure> edit_into(EditingStore& store,
                                     const LanguageModel& model,
                                     const Tokenizer& tokenizer,
                                     const std::vector<EditRequest>& requests,
                                     const FusionConfig& config);

EditResult edit(const LanguageModel& model, const Tokenizer& tokenizer,
                const std::vector<EditRequest>& requests,
                const FusionConfig& config);

/// Hash binding a store to the vocabulary it was fused under (the FNV-1a of
/// the vocab file bytes).
std::string vocab_hash(const Tokenizer& tokenizer);

}  // namespace swea
