#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swea/request.hpp"

namespace swea {

/// One relation family: a primary prompt template, at least two paraphrase
/// templates, and the pool of admissible objects. Templates carry a
/// "{subject}" placeholder.
struct Relation {
  std::string name;
  std::string prompt;
  std::vector<std::string> paraphrases;
  std::vector<std::string> objects;
};

struct Fact {
  std::string subject;
  int relation = 0;
  std::string object;
  /// Facts outside the edit pool are reserved for neighborhood probes, so
  /// the two roles never share a subject.
  bool edit_eligible = true;
};

class FactCorpus {
 public:
  std::vector<Relation> relations;
  std::vector<Fact> facts;

  /// Primary prompt for a fact, subject substituted.
  std::string fact_prompt(const Fact& fact) const;

  /// All training renderings of a fact: the primary template plus every
  /// paraphrase, each completed with the object.
  std::vector<std::string> renderings(const Fact& fact) const;

  /// Every rendering of every fact, in corpus order.
  std::vector<std::string> sentences() const;

  /// Counterfact requests over distinct edit-eligible subjects. Each request
  /// swaps the object for a different object of the same relation, carries
  /// all paraphrase templates, and two neighborhood probes about unedited
  /// subjects of the same relation.
  std::vector<EditRequest> make_requests(int count, std::uint64_t seed) const;
};

/// Deterministic synthetic fact corpus: `n_facts` unique subjects spread
/// round-robin over the built-in relations, alternating one- and two-token
/// subjects (so at least half are multi-token). The first two facts of every
/// relation are held out of the edit pool as neighborhood material.
FactCorpus generate_corpus(int n_facts, std::uint64_t seed);

/// JSON Lines persistence; one {"sentence": ...} object per rendering.
void save_corpus_sentences(const std::string& path,
                           const std::vector<std::string>& sentences);
std::vector<std::string> load_corpus_sentences(const std::string& path);

}  // namespace swea
