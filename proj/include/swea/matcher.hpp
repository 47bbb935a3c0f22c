#pragma once

#include <optional>
#include <vector>

#include "swea/model.hpp"
#include "swea/store.hpp"
#include "swea/tensor.hpp"

namespace swea {

/// Contiguous span ids[start, end) whose key is present in the store.
struct MatchResult {
  EditKey key;
  Eigen::Index start = 0;
  Eigen::Index end = 0;  // exclusive
};

/// Scans every contiguous span of `ids` and returns the one whose key exists
/// in the store with the longest KEY STRING (decimal ids joined by '_').
/// Ties break to the earliest start, then the earliest end — the strict
/// greater-than comparison taken in ascending (start, end) scan order.
/// Returns nullopt if the store is empty or nothing matches.
std::optional<MatchResult> find_longest_match(const std::vector<int>& ids,
                                              const EditingStore& store);

/// The match that embedding altering would use: rows with at most one token
/// never match (the short-row guard), otherwise find_longest_match.
std::optional<MatchResult> match_for_patch(const std::vector<int>& ids,
                                           const EditingStore& store);

/// The additive patch for one input row, if any.
std::optional<SpanPatch> patch_for(const std::vector<int>& ids,
                                   const EditingStore& store);

/// In-place embedding altering over a batch: for each row with a match, adds
/// the stored deltas over the matched span. At most one patch per row; rows
/// without a match stay bit-identical. Throws on a delta shape that cannot
/// cover its span (corrupt store).
void apply_patches(const std::vector<std::vector<int>>& batch_ids,
                   std::vector<ad::Mat<double>>& batch_embeddings,
                   const EditingStore& store);

}  // namespace swea
