#include "swea/matcher.hpp"

#include <string>

#include "swea/error.hpp"

namespace swea {

std::optional<MatchResult> find_longest_match(const std::vector<int>& ids,
                                              const EditingStore& store) {
  if (store.size() == 0) return std::nullopt;
  std::optional<MatchResult> best;
  const auto len = static_cast<Eigen::Index>(ids.size());
  for (Eigen::Index k = 0; k < len; ++k) {
    std::string cur_key;
    for (Eigen::Index j = k; j < len; ++j) {
      if (j > k) cur_key.push_back('_');
      cur_key += std::to_string(ids[static_cast<std::size_t>(j)]);
      if (!store.contains(cur_key)) continue;
      // Strictly-greater keeps the earliest start, then earliest end, in
      // this ascending scan order.
      if (!best || cur_key.size() > best->key.key.size()) {
        MatchResult m;
        m.key.key = cur_key;
        m.key.token_ids.assign(ids.begin() + k, ids.begin() + j + 1);
        m.start = k;
        m.end = j + 1;
        best = std::move(m);
      }
    }
  }
  return best;
}

std::optional<MatchResult> match_for_patch(const std::vector<int>& ids,
                                           const EditingStore& store) {
  if (ids.size() <= 1) return std::nullopt;  // short-row guard
  return find_longest_match(ids, store);
}

std::optional<SpanPatch> patch_for(const std::vector<int>& ids,
                                   const EditingStore& store) {
  auto m = match_for_patch(ids, store);
  if (!m) return std::nullopt;
  const EditingEmbedding* emb = store.find(m->key.key);
  if (!emb) return std::nullopt;  // unreachable: match implies presence
  if (emb->deltas.rows() != m->end - m->start) {
    throw ShapeError("editing store entry '" + m->key.key + "' has " +
                     std::to_string(emb->deltas.rows()) +
                     " delta rows but matched a span of " +
                     std::to_string(m->end - m->start));
  }
  SpanPatch p;
  p.start = m->start;
  p.delta = emb->deltas;
  return p;
}

void apply_patches(const std::vector<std::vector<int>>& batch_ids,
                   std::vector<ad::Mat<double>>& batch_embeddings,
                   const EditingStore& store) {
  if (batch_ids.size() != batch_embeddings.size()) {
    throw ShapeError("apply_patches: " + std::to_string(batch_ids.size()) +
                     " id rows vs " + std::to_string(batch_embeddings.size()) +
                     " embedding rows");
  }
  for (std::size_t i = 0; i < batch_ids.size(); ++i) {
    if (batch_embeddings[i].rows() !=
        static_cast<Eigen::Index>(batch_ids[i].size())) {
      throw ShapeError("apply_patches: row " + std::to_string(i) + " has " +
                       std::to_string(batch_ids[i].size()) + " ids but " +
                       std::to_string(batch_embeddings[i].rows()) +
                       " embedding rows");
    }
    auto patch = patch_for(batch_ids[i], store);
    if (!patch) continue;
    if (patch->delta.cols() != batch_embeddings[i].cols()) {
      throw ShapeError("apply_patches: row " + std::to_string(i) +
                       ": delta width " + std::to_string(patch->delta.cols()) +
                       " != embedding width " +
                       std::to_string(batch_embeddings[i].cols()));
    }
    batch_embeddings[i].middleRows(patch->start, patch->delta.rows()) +=
        patch->delta;
  }
}

}  // namespace swea
