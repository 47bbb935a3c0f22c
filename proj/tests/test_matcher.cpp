#include <doctest.h>

#include <optional>
#include <string>
#include <vector>

#include "swea/matcher.hpp"
#include "swea/rng.hpp"
#include "swea/store.hpp"

using swea::EditingEmbedding;
using swea::EditingStore;
using swea::MatchResult;
using swea::Rng;
using MatD = swea::ad::Mat<double>;

namespace {

constexpr int kWidth = 4;

void add_key(EditingStore& store, const std::vector<int>& ids, Rng& rng) {
  EditingEmbedding e;
  e.key = swea::make_key(ids);
  e.deltas = swea::ad::randn<double>(static_cast<Eigen::Index>(ids.size()),
                                     kWidth, rng, 0.5);
  store.materialize(e);
}

/// Independent reformulation of the match rule: collect every contiguous
/// span whose key is stored, then pick max key-string length, then min
/// start, then min end.
std::optional<MatchResult> oracle_match(const std::vector<int>& ids,
                                        const EditingStore& store) {
  if (store.size() == 0) return std::nullopt;
  std::vector<MatchResult> all;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (std::size_t e = s + 1; e <= ids.size(); ++e) {
      std::vector<int> span(ids.begin() + s, ids.begin() + e);
      swea::EditKey k = swea::make_key(span);
      if (!store.contains(k.key)) continue;
      MatchResult m;
      m.key = k;
      m.start = static_cast<Eigen::Index>(s);
      m.end = static_cast<Eigen::Index>(e);
      all.push_back(m);
    }
  }
  if (all.empty()) return std::nullopt;
  const MatchResult* best = &all[0];
  for (const auto& m : all) {
    if (m.key.key.size() > best->key.key.size()) {
      best = &m;
    } else if (m.key.key.size() == best->key.key.size()) {
      if (m.start < best->start ||
          (m.start == best->start && m.end < best->end)) {
        best = &m;
      }
    }
  }
  return *best;
}

bool same_match(const std::optional<MatchResult>& a,
                const std::optional<MatchResult>& b) {
  if (!a || !b) return !a && !b;
  return a->key.key == b->key.key && a->key.token_ids == b->key.token_ids &&
         a->start == b->start && a->end == b->end;
}

}  // namespace

TEST_SUITE("matcher") {

TEST_CASE("longer key string beats its own prefix") {
  Rng rng(51);
  EditingStore store;
  add_key(store, {5}, rng);
  add_key(store, {5, 7}, rng);
  auto m = swea::find_longest_match({5, 7, 9}, store);
  REQUIRE(m.has_value());
  CHECK(m->key.key == "5_7");
  CHECK(m->start == 0);
  CHECK(m->end == 2);
}

TEST_CASE("empty store never matches") {
  EditingStore store;
  CHECK_FALSE(swea::find_longest_match({5, 7, 9}, store).has_value());
  CHECK_FALSE(swea::find_longest_match({}, store).has_value());
}

TEST_CASE("two-token subject is found inside surrounding context") {
  Rng rng(52);
  EditingStore store;
  add_key(store, {2986, 6033}, rng);
  auto m = swea::find_longest_match({1, 2986, 6033, 4}, store);
  REQUIRE(m.has_value());
  CHECK(m->key.key == "2986_6033");
  CHECK(m->start == 1);
  CHECK(m->end == 3);
}

TEST_CASE("ties break to the earliest start") {
  Rng rng(53);
  EditingStore store;
  // "31_4" and "77_9" have equal string length; the earlier span must win.
  add_key(store, {31, 4}, rng);
  add_key(store, {77, 9}, rng);
  auto m = swea::find_longest_match({31, 4, 77, 9}, store);
  REQUIRE(m.has_value());
  CHECK(m->key.key == "31_4");
  CHECK(m->start == 0);
}

TEST_CASE("string length, not token count, decides the winner") {
  Rng rng(54);
  EditingStore store;
  add_key(store, {3, 8}, rng);  // key "3_8", length 3, two tokens
  add_key(store, {5141}, rng);  // key "5141", length 4, one token
  auto m = swea::find_longest_match({3, 8, 5141}, store);
  REQUIRE(m.has_value());
  CHECK(m->key.key == "5141");
}

TEST_CASE("single-token rows are skipped by the patching guard") {
  Rng rng(55);
  EditingStore store;
  add_key(store, {5}, rng);
  CHECK(swea::find_longest_match({5}, store).has_value());
  CHECK_FALSE(swea::match_for_patch({5}, store).has_value());
  CHECK(swea::match_for_patch({5, 7}, store).has_value());
}

TEST_CASE("matching is deterministic and idempotent") {
  Rng rng(56);
  EditingStore store;
  add_key(store, {9, 12}, rng);
  add_key(store, {12, 3}, rng);
  std::vector<int> ids = {9, 12, 3, 9};
  auto a = swea::find_longest_match(ids, store);
  auto b = swea::find_longest_match(ids, store);
  CHECK(same_match(a, b));
}

TEST_CASE("rows without matches stay bit-identical") {
  Rng rng(57);
  EditingStore store;
  add_key(store, {40, 41}, rng);
  std::vector<std::vector<int>> ids = {{1, 2, 3}, {4, 5}};
  std::vector<MatD> embs = {swea::ad::randn<double>(3, kWidth, rng),
                            swea::ad::randn<double>(2, kWidth, rng)};
  std::vector<MatD> before = embs;
  swea::apply_patches(ids, embs, store);
  CHECK(embs[0] == before[0]);
  CHECK(embs[1] == before[1]);
}

TEST_CASE("a match adds exactly the stored deltas over its span") {
  Rng rng(58);
  EditingStore store;
  add_key(store, {7, 8}, rng);
  const MatD& deltas = store.find("7_8")->deltas;
  std::vector<std::vector<int>> ids = {{6, 7, 8, 9}};
  std::vector<MatD> embs = {swea::ad::randn<double>(4, kWidth, rng)};
  MatD before = embs[0];
  swea::apply_patches(ids, embs, store);
  CHECK(embs[0].row(0) == before.row(0));
  CHECK(embs[0].row(3) == before.row(3));
  CHECK(embs[0].row(1) == MatD(before.row(1) + deltas.row(0)));
  CHECK(embs[0].row(2) == MatD(before.row(2) + deltas.row(1)));
}

TEST_CASE("ten thousand fuzz cases agree with the brute-force oracle") {
  Rng rng(59);
  int matched = 0;
  for (int n = 0; n < 10000; ++n) {
    EditingStore store;
    auto n_keys = rng.uniform_index(5);  // sometimes empty
    for (std::size_t k = 0; k < n_keys; ++k) {
      std::vector<int> kids;
      auto klen = 1 + rng.uniform_index(3);
      for (std::size_t i = 0; i < klen; ++i) {
        // Mixed 1- and 2-digit ids so string length and token count diverge.
        kids.push_back(static_cast<int>(rng.uniform_index(15)));
      }
      if (!store.contains(swea::make_key(kids).key)) add_key(store, kids, rng);
    }
    std::vector<int> ids;
    auto len = rng.uniform_index(9);
    for (std::size_t i = 0; i < len; ++i) {
      ids.push_back(static_cast<int>(rng.uniform_index(15)));
    }

    auto got = swea::find_longest_match(ids, store);
    auto want = oracle_match(ids, store);
    REQUIRE(same_match(got, want));
    if (got) ++matched;

    // Patching must agree with a direct oracle-driven application.
    if (!ids.empty()) {
      std::vector<MatD> embs = {
          swea::ad::randn<double>(static_cast<Eigen::Index>(ids.size()),
                                  kWidth, rng)};
      MatD expect = embs[0];
      if (ids.size() > 1 && want) {
        expect.middleRows(want->start, want->end - want->start) +=
            store.find(want->key.key)->deltas;
      }
      std::vector<std::vector<int>> batch = {ids};
      swea::apply_patches(batch, embs, store);
      REQUIRE(embs[0] == expect);
    }
  }
  // The generator must actually produce plenty of matching cases.
  CHECK(matched > 1000);
}

}  // TEST_SUITE
