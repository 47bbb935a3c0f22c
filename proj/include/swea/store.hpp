#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swea/request.hpp"
#include "swea/tensor.hpp"

namespace swea {

/// Canonical subject key: decimal token ids joined by '_' (e.g. [2986, 6033]
/// -> "2986_6033"). Injective, since '_' cannot occur inside a decimal id.
struct EditKey {
  std::string key;
  std::vector<int> token_ids;
};

EditKey make_key(const std::vector<int>& token_ids);
std::vector<int> parse_key(const std::string& key);

/// Final editing embedding for one subject: one delta row per subject token.
/// Values are kept at f32 resolution so in-memory and on-disk states agree
/// bit-for-bit. `seq` points at the request-log entry that produced it.
struct EditingEmbedding {
  EditKey key;
  ad::Mat<double> deltas;
  std::uint64_t seq = 0;
};

/// Collection of editing embeddings plus the ordered log of every edit
/// request ever applied. Entries are keyed by subject key (later edits on the
/// same subject overwrite); replaying the log against the pristine model and
/// per-entry config regenerates all entries.
class EditingStore {
 public:
  struct LogEntry {
    std::uint64_t seq = 0;
    std::string subject_key;
    EditRequest request;
    FusionConfig config;
    bool operator==(const LogEntry&) const = default;
  };

  bool contains(const std::string& key) const { return entries_.count(key); }
  const EditingEmbedding* find(const std::string& key) const;
  const std::map<std::string, EditingEmbedding>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }
  const std::vector<LogEntry>& request_log() const { return request_log_; }

  const std::string& model_vocab_hash() const { return model_vocab_hash_; }
  void set_model_vocab_hash(std::string h) { model_vocab_hash_ = std::move(h); }

  /// Appends to the request log without materializing deltas; returns the
  /// assigned sequence number (1-based).
  std::uint64_t append_request(const std::string& subject_key,
                               EditRequest request, FusionConfig config);

  /// Inserts or overwrites the entry for emb.key, recording provenance
  /// seq. Deltas are quantized to f32 resolution here. Non-finite values or
  /// a row-count/key mismatch are rejected.
  void materialize(EditingEmbedding emb);

  /// User-level insert: logs the request, stamps provenance, materializes.
  void upsert(EditingEmbedding emb, const EditRequest& request,
              const FusionConfig& config);

  /// Log entries that are each subject's latest request but whose deltas are
  /// not materialized from that request yet — the sequential-editing work
  /// list, in log order.
  std::vector<LogEntry> pending() const;

  /// Serialized image (the SWEA1 format); save() writes it atomically.
  std::string serialize() const;
  void save(const std::string& path) const;
  static EditingStore deserialize(const std::string& bytes,
                                  const std::string& origin);
  static EditingStore load(const std::string& path);

 private:
  std::map<std::string, EditingEmbedding> entries_;
  std::vector<LogEntry> request_log_;
  std::string model_vocab_hash_;
};

}  // namespace swea
