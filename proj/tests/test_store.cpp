#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "swea/binio.hpp"
#include "swea/error.hpp"
#include "swea/rng.hpp"
#include "swea/store.hpp"
#include "swea/tensor.hpp"

using swea::EditingEmbedding;
using swea::EditingStore;
using swea::EditKey;
using swea::EditRequest;
using swea::Error;
using swea::FormatError;
using swea::FusionConfig;
using swea::Rng;
using swea::ShapeError;
using swea::TokenError;
using MatD = swea::ad::Mat<double>;

namespace {

EditingEmbedding random_embedding(const std::vector<int>& ids, Rng& rng,
                                  int width = 8) {
  EditingEmbedding e;
  e.key = swea::make_key(ids);
  e.deltas = swea::ad::randn<double>(
      static_cast<Eigen::Index>(ids.size()), width, rng, 0.3);
  return e;
}

EditRequest sample_request(const std::string& subject) {
  EditRequest r;
  r.subject = subject;
  r.prompt = "{subject} lives in";
  r.original_object = "harbor";
  r.new_object = "quarry";
  r.paraphrases = {"the home town of {subject} is"};
  r.neighborhood = {{"granite peak lives in", "harbor"}};
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("make_key joins decimal ids with underscores") {
  CHECK(swea::make_key({2986, 6033}).key == "2986_6033");
  CHECK(swea::make_key({5}).key == "5");
  CHECK(swea::make_key({1, 22, 333}).key == "1_22_333");
  CHECK_THROWS_AS(swea::make_key({}), TokenError);
  CHECK_THROWS_AS(swea::make_key({3, -1}), TokenError);
}

TEST_CASE("parse_key inverts make_key and rejects garbage") {
  Rng rng(31);
  for (int n = 0; n < 200; ++n) {
    std::vector<int> ids;
    auto len = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(static_cast<int>(rng.uniform_index(10000)));
    }
    CHECK(swea::parse_key(swea::make_key(ids).key) == ids);
  }
  CHECK_THROWS_AS(swea::parse_key(""), FormatError);
  CHECK_THROWS_AS(swea::parse_key("1__2"), FormatError);
  CHECK_THROWS_AS(swea::parse_key("_1"), FormatError);
  CHECK_THROWS_AS(swea::parse_key("1_"), FormatError);
  CHECK_THROWS_AS(swea::parse_key("ab"), FormatError);
}

TEST_CASE("make_key is injective over random id sequences") {
  Rng rng(32);
  std::set<std::string> keys;
  std::set<std::vector<int>> seqs;
  for (int n = 0; n < 2000; ++n) {
    std::vector<int> ids;
    auto len = 1 + rng.uniform_index(4);
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(static_cast<int>(rng.uniform_index(120)));
    }
    if (!seqs.insert(ids).second) continue;
    CHECK(keys.insert(swea::make_key(ids).key).second);
  }
}

TEST_CASE("insert then lookup returns identical deltas bitwise") {
  Rng rng(33);
  EditingStore s;
  EditingEmbedding e = random_embedding({12, 7}, rng);
  MatD quantized = e.deltas.cast<float>().cast<double>();
  s.upsert(e, sample_request("maple stone"), FusionConfig{});
  const EditingEmbedding* got = s.find("12_7");
  REQUIRE(got != nullptr);
  CHECK(got->deltas == quantized);
  CHECK(s.request_log().size() == 1);
  CHECK(s.request_log()[0].seq == got->seq);
}

TEST_CASE("second upsert on the same key wins") {
  Rng rng(34);
  EditingStore s;
  s.upsert(random_embedding({4, 4}, rng), sample_request("a"), {});
  EditingEmbedding second = random_embedding({4, 4}, rng);
  MatD expect = second.deltas.cast<float>().cast<double>();
  s.upsert(second, sample_request("a"), {});
  REQUIRE(s.size() == 1);
  CHECK(s.find("4_4")->deltas == expect);
  CHECK(s.request_log().size() == 2);
}

TEST_CASE("a thousand distinct keys make a thousand entries") {
  Rng rng(35);
  EditingStore s;
  for (int i = 0; i < 1000; ++i) {
    EditingEmbedding e = random_embedding({i, i + 1}, rng, 4);
    s.materialize(e);
  }
  CHECK(s.size() == 1000);
}

TEST_CASE("non-finite deltas are rejected") {
  EditingStore s;
  EditingEmbedding e;
  e.key = swea::make_key({3});
  e.deltas = MatD::Zero(1, 4);
  e.deltas(0, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(s.materialize(e), Error);
}

TEST_CASE("delta row count must equal key token count") {
  EditingStore s;
  EditingEmbedding e;
  e.key = swea::make_key({3, 9});
  e.deltas = MatD::Zero(1, 4);  // one row for a two-token key
  CHECK_THROWS_AS(s.materialize(e), ShapeError);
}

TEST_CASE("round-trip of an empty store") {
  EditingStore s;
  s.set_model_vocab_hash("cafe");
  EditingStore t = EditingStore::deserialize(s.serialize(), "mem");
  CHECK(t.size() == 0);
  CHECK(t.request_log().empty());
  CHECK(t.model_vocab_hash() == "cafe");
  CHECK(t.serialize() == s.serialize());
}

TEST_CASE("round-trip of 100 random entries is byte-exact") {
  Rng rng(36);
  EditingStore s;
  s.set_model_vocab_hash("beadfeed");
  for (int i = 0; i < 100; ++i) {
    std::vector<int> ids;
    auto len = 1 + rng.uniform_index(3);
    for (std::size_t k = 0; k < len; ++k) {
      ids.push_back(static_cast<int>(1000 * i + rng.uniform_index(999)));
    }
    FusionConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    s.upsert(random_embedding(ids, rng), sample_request("s" + std::to_string(i)),
             cfg);
  }
  std::string bytes = s.serialize();
  EditingStore t = EditingStore::deserialize(bytes, "mem");
  CHECK(t.serialize() == bytes);
  CHECK(t.request_log().size() == 100);
  CHECK(t.request_log()[41].request == s.request_log()[41].request);
  CHECK(t.request_log()[41].config == s.request_log()[41].config);
}

TEST_CASE("save and load through a file") {
  Rng rng(37);
  EditingStore s;
  s.upsert(random_embedding({8, 1, 9}, rng), sample_request("b"), {});
  auto p = temp_path("swea_test_store.bin");
  s.save(p.string());
  EditingStore t = EditingStore::load(p.string());
  CHECK(t.serialize() == s.serialize());
  std::filesystem::remove(p);
}

TEST_CASE("wrong magic is rejected") {
  EditingStore s;
  std::string bytes = s.serialize();
  bytes[0] = 'Z';
  CHECK_THROWS_AS(EditingStore::deserialize(bytes, "mem"), FormatError);
}

TEST_CASE("truncated image is rejected") {
  Rng rng(38);
  EditingStore s;
  s.materialize(random_embedding({5, 6}, rng));
  std::string bytes = s.serialize();
  CHECK_THROWS_AS(
      EditingStore::deserialize(bytes.substr(0, bytes.size() - 9), "mem"),
      FormatError);
}

TEST_CASE("entries are independent of insertion order") {
  Rng rng(39);
  EditingEmbedding a = random_embedding({7, 2}, rng);
  EditingEmbedding b = random_embedding({19}, rng);
  EditingEmbedding c = random_embedding({3, 3, 3}, rng);
  EditingStore s1, s2;
  for (auto* e : {&a, &b, &c}) s1.materialize(*e);
  for (auto* e : {&c, &a, &b}) s2.materialize(*e);
  CHECK(s1.serialize() == s2.serialize());
}

TEST_CASE("pending tracks the latest unmaterialized request per subject") {
  Rng rng(40);
  EditingStore s;
  std::uint64_t s1 = s.append_request("7_2", sample_request("a"), {});
  std::uint64_t s2 = s.append_request("19", sample_request("b"), {});
  REQUIRE(s.pending().size() == 2);

  EditingEmbedding e1 = random_embedding({7, 2}, rng);
  e1.seq = s1;
  s.materialize(e1);
  auto p = s.pending();
  REQUIRE(p.size() == 1);
  CHECK(p[0].seq == s2);

  // A newer request for the same subject reopens it.
  std::uint64_t s3 = s.append_request("7_2", sample_request("a2"), {});
  p = s.pending();
  REQUIRE(p.size() == 2);
  CHECK(p[0].seq == s2);
  CHECK(p[1].seq == s3);

  // Materializing against a superseded seq does not close it.
  EditingEmbedding stale = random_embedding({7, 2}, rng);
  stale.seq = s1;
  s.materialize(stale);
  CHECK(s.pending().size() == 2);
}

}  // TEST_SUITE
