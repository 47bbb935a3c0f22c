#include "swea/store.hpp"

#include <cctype>
#include <cmath>
#include <json.hpp>
#include <utility>

#include "swea/binio.hpp"
#include "swea/error.hpp"

namespace swea {

namespace {
constexpr char kMagic[] = "SWEA1";
constexpr std::size_t kMagicLen = 5;

/// f32 quantization keeps the in-memory store identical to its disk image.
ad::Mat<double> quantize_f32(const ad::Mat<double>& m) {
  return m.cast<float>().cast<double>();
}
}  // namespace

EditKey make_key(const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw TokenError("make_key: empty token id list");
  EditKey k;
  k.token_ids = token_ids;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] < 0) {
      throw TokenError("make_key: negative token id " +
                       std::to_string(token_ids[i]));
    }
    if (i) k.key.push_back('_');
    k.key += std::to_string(token_ids[i]);
  }
  return k;
}

std::vector<int> parse_key(const std::string& key) {
  std::vector<int> ids;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) {
      throw FormatError("malformed edit key '" + key + "'");
    }
    for (char c : cur) {
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        throw FormatError("malformed edit key '" + key + "'");
      }
    }
    ids.push_back(std::stoi(cur));
    cur.clear();
  };
  for (char c : key) {
    if (c == '_') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return ids;
}

const EditingEmbedding* EditingStore::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint64_t EditingStore::append_request(const std::string& subject_key,
                                           EditRequest request,
                                           FusionConfig config) {
  config.validate();
  parse_key(subject_key);  // reject malformed keys at the door
  LogEntry e;
  e.seq = request_log_.size() + 1;
  e.subject_key = subject_key;
  e.request = std::move(request);
  e.config = config;
  request_log_.push_back(std::move(e));
  return request_log_.back().seq;
}

void EditingStore::materialize(EditingEmbedding emb) {
  if (emb.key.token_ids != parse_key(emb.key.key)) {
    throw FormatError("editing embedding: key string and token ids disagree");
  }
  if (emb.deltas.rows() !=
      static_cast<Eigen::Index>(emb.key.token_ids.size())) {
    throw ShapeError("editing embedding '" + emb.key.key + "': " +
                     std::to_string(emb.deltas.rows()) + " delta rows for " +
                     std::to_string(emb.key.token_ids.size()) +
                     " subject tokens");
  }
  if (emb.deltas.cols() < 1) {
    throw ShapeError("editing embedding '" + emb.key.key + "': empty rows");
  }
  if (!emb.deltas.allFinite()) {
    throw Error("editing embedding '" + emb.key.key +
                "': non-finite values rejected");
  }
  emb.deltas = quantize_f32(emb.deltas);
  entries_[emb.key.key] = std::move(emb);
}

void EditingStore::upsert(EditingEmbedding emb, const EditRequest& request,
                          const FusionConfig& config) {
  emb.seq = append_request(emb.key.key, request, config);
  materialize(std::move(emb));
}

std::vector<EditingStore::LogEntry> EditingStore::pending() const {
  std::map<std::string, std::uint64_t> latest;
  for (const auto& e : request_log_) latest[e.subject_key] = e.seq;
  std::vector<LogEntry> out;
  for (const auto& e : request_log_) {
    if (latest.at(e.subject_key) != e.seq) continue;  // superseded later
    auto it = entries_.find(e.subject_key);
    if (it != entries_.end() && it->second.seq == e.seq) continue;  // current
    out.push_back(e);
  }
  return out;
}

void to_json(nlohmann::json& j, const EditingStore::LogEntry& e) {
  j = {{"seq", e.seq},
       {"subject_key", e.subject_key},
       {"request", e.request},
       {"config", e.config}};
}
void from_json(const nlohmann::json& j, EditingStore::LogEntry& e) {
  j.at("seq").get_to(e.seq);
  j.at("subject_key").get_to(e.subject_key);
  j.at("request").get_to(e.request);
  j.at("config").get_to(e.config);
}

std::string EditingStore::serialize() const {
  ByteWriter w;
  w.put_bytes(kMagic, kMagicLen);
  w.put_u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [key, emb] : entries_) {
    w.put_u32(static_cast<std::uint32_t>(key.size()));
    w.put_string(key);
    w.put_u32(static_cast<std::uint32_t>(emb.deltas.rows()));
    w.put_u32(static_cast<std::uint32_t>(emb.deltas.cols()));
    for (Eigen::Index i = 0; i < emb.deltas.rows(); ++i) {
      for (Eigen::Index j = 0; j < emb.deltas.cols(); ++j) {
        w.put_f32(static_cast<float>(emb.deltas(i, j)));
      }
    }
  }
  nlohmann::json tail;
  tail["model_vocab_hash"] = model_vocab_hash_;
  nlohmann::json mat = nlohmann::json::object();
  for (const auto& [key, emb] : entries_) mat[key] = emb.seq;
  tail["materialized"] = mat;
  tail["requests"] = request_log_;
  std::string js = tail.dump();
  w.put_u32(static_cast<std::uint32_t>(js.size()));
  w.put_string(js);
  return w.bytes();
}

void EditingStore::save(const std::string& path) const {
  atomic_write_file(path, serialize());
}

EditingStore EditingStore::deserialize(const std::string& bytes,
                                       const std::string& origin) {
  auto fail = [&origin](const std::string& msg) -> FormatError {
    return FormatError("editing store '" + origin + "': " + msg);
  };
  ByteReader r(bytes);
  EditingStore s;
  try {
    if (r.get_string(kMagicLen) != kMagic) {
      throw fail("bad magic, expected SWEA1");
    }
    std::uint32_t count = r.get_u32();
    for (std::uint32_t n = 0; n < count; ++n) {
      std::uint32_t klen = r.get_u32();
      EditingEmbedding emb;
      emb.key.key = r.get_string(klen);
      emb.key.token_ids = parse_key(emb.key.key);
      std::uint32_t rows = r.get_u32();
      std::uint32_t cols = r.get_u32();
      if (rows != emb.key.token_ids.size() || cols == 0) {
        throw fail("entry '" + emb.key.key + "' has inconsistent shape");
      }
      emb.deltas.resize(rows, cols);
      for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
          emb.deltas(i, j) = static_cast<double>(r.get_f32());
        }
      }
      if (!emb.deltas.allFinite()) {
        throw fail("entry '" + emb.key.key + "' has non-finite values");
      }
      if (s.entries_.count(emb.key.key)) {
        throw fail("duplicate entry '" + emb.key.key + "'");
      }
      s.entries_[emb.key.key] = std::move(emb);
    }
    std::uint32_t jlen = r.get_u32();
    std::string js = r.get_string(jlen);
    if (!r.at_end()) {
      throw fail(std::to_string(r.remaining()) + " trailing bytes");
    }
    nlohmann::json tail = nlohmann::json::parse(js);
    s.model_vocab_hash_ = tail.at("model_vocab_hash").get<std::string>();
    s.request_log_ =
        tail.at("requests").get<std::vector<EditingStore::LogEntry>>();
    std::uint64_t prev_seq = 0;
    for (const auto& e : s.request_log_) {
      if (e.seq <= prev_seq) throw fail("request log out of order");
      prev_seq = e.seq;
    }
    const auto& mat = tail.at("materialized");
    if (mat.size() != s.entries_.size()) {
      throw fail("materialized map does not cover the entries");
    }
    for (auto& [key, emb] : s.entries_) {
      if (!mat.contains(key)) {
        throw fail("entry '" + key + "' missing from materialized map");
      }
      emb.seq = mat.at(key).get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad metadata: ") + e.what());
  }
  return s;
}

EditingStore EditingStore::load(const std::string& path) {
  return deserialize(read_file_bytes(path), path);
}

}  // namespace swea
