#include "swea/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "swea/binio.hpp"
#include "swea/error.hpp"
#include "swea/rng.hpp"

namespace swea {
namespace {

// All name pools are invented words, disjoint from template and object
// vocabulary, so a stored subject span can never appear inside an unrelated
// probe.
const std::vector<std::string>& single_names() {
  static const std::vector<std::string> v = {
      "ardeth",  "brimvar", "caldris", "dovekin", "eldrin",  "fenwick",
      "galeth",  "hartley", "ismar",   "jorvik",  "keldan",  "lorvath",
      "merrin",  "norvell", "ostrid",  "pellam",  "quorin",  "ravelin",
      "sorvan",  "tymbal",  "ulfric",  "vandor",  "wrenna",  "xalvor",
      "yorath",  "zephrin", "almaric", "bethra",  "corvin",  "drelle",
      "ebberly", "fiorin",  "gracen",  "hobarth", "illyan",  "jessant",
      "kirwen",  "lothair", "maudlin", "nerys",   "oswith",  "pryor",
      "quenby",  "rosmund", "selwyn",  "tamsin",  "uldred",  "verity",
      "walden",  "ysolde",  "zedric",  "ansgar",  "byrne",   "cedany",
      "darvin",  "elspeth", "farrow",  "gisela",  "hadwin",  "ingrith",
      "jocelin", "kendric", "lisbet",  "morwen",
  };
  return v;
}

const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {
      "alba",   "boren",  "cade",   "dima",   "elior",  "faye",
      "garen",  "hollis", "ivra",   "jasper", "kiva",   "lorn",
      "mira",   "nessa",  "orin",   "petra",  "quill",  "rohan",
      "sable",  "torin",  "una",    "veda",   "wyn",    "xenia",
      "yara",   "zane",   "arlo",   "brynn",  "corin",  "delia",
      "evert",  "freya",  "gideon", "hazel",  "idris",  "juniper",
      "kael",   "linden", "maren",  "noor",
  };
  return v;
}

const std::vector<std::string>& last_names() {
  static const std::vector<std::string> v = {
      "marsh",    "stone",    "falcon",  "river",    "peak",    "vale",
      "thorne",   "ashdown",  "briar",   "cliff",    "dale",    "elm",
      "frost",    "glen",     "heath",   "iron",     "junip",   "knoll",
      "larch",    "moor",     "north",   "oakes",    "pine",    "combe",
      "ridge",    "swale",    "tarn",    "under",    "vonwood", "wold",
      "yewbarrow", "zell",    "balfour", "crag",     "dunfirth", "eastley",
      "fernsby",  "garrick",  "holt",    "ivywood",
  };
  return v;
}

std::vector<Relation> built_in_relations() {
  return {
      {"lives_in",
       "{subject} lives in",
       {"the home of {subject} is", "{subject} resides in"},
       {"harbor city", "quarry town", "emerald bay", "stonefield",
        "willowmere", "frostgate"}},
      {"works_as",
       "{subject} works as a",
       {"the profession of {subject} is", "{subject} earns a living as a"},
       {"baker", "mason", "pilot", "weaver", "night warden", "glass smith"}},
      {"plays",
       "{subject} plays the",
       {"the instrument of {subject} is the", "{subject} performs on the"},
       {"violin", "cello", "drums", "flute", "bass guitar", "steel harp"}},
      {"speaks",
       "{subject} speaks",
       {"the language of {subject} is", "{subject} talks in"},
       {"velsh", "norran", "katori", "iberin", "sorbic", "high aldan"}},
      {"leads",
       "{subject} leads the",
       {"{subject} is the head of the", "the crew of {subject} is the"},
       {"miners", "rangers", "scouts", "foxes", "pilots guild",
        "lantern watch"}},
      {"drinks",
       "{subject} drinks",
       {"the favorite drink of {subject} is", "{subject} always orders"},
       {"coffee", "cider", "cocoa", "juice", "mint tea", "barley water"}},
      {"supports",
       "{subject} supports",
       {"the club of {subject} is", "{subject} cheers for"},
       {"rovers", "united", "wanderers", "athletic", "coast eagles",
        "bridge wolves"}},
      {"born_in",
       "{subject} was born in",
       {"the birthplace of {subject} is", "{subject} comes from"},
       {"dunmore", "keldy", "ashford", "birchwood", "low fells",
        "grey hollow"}},
  };
}

std::string unique_subject(bool multi_token, Rng& rng,
                           std::set<std::string>& used) {
  for (int tries = 0; tries < 20000; ++tries) {
    std::string s;
    const std::string& first =
        first_names()[rng.uniform_index(first_names().size())];
    const std::string& last =
        last_names()[rng.uniform_index(last_names().size())];
    if (multi_token) {
      s = first + " " + last;
    } else if (tries < static_cast<int>(single_names().size())) {
      s = single_names()[rng.uniform_index(single_names().size())];
    } else {
      s = first + last;  // fused into one fresh token once the pool runs dry
    }
    if (used.insert(s).second) return s;
  }
  throw ConfigError("corpus: subject pool exhausted");
}

}  // namespace

std::string FactCorpus::fact_prompt(const Fact& fact) const {
  EditRequest r;
  r.subject = fact.subject;
  return r.render_prompt(relations[static_cast<std::size_t>(fact.relation)]
                             .prompt);
}

std::vector<std::string> FactCorpus::renderings(const Fact& fact) const {
  const Relation& rel = relations[static_cast<std::size_t>(fact.relation)];
  EditRequest r;
  r.subject = fact.subject;
  std::vector<std::string> out;
  out.push_back(r.render_prompt(rel.prompt) + " " + fact.object);
  for (const auto& p : rel.paraphrases) {
    out.push_back(r.render_prompt(p) + " " + fact.object);
  }
  return out;
}

std::vector<std::string> FactCorpus::sentences() const {
  std::vector<std::string> out;
  for (const auto& f : facts) {
    for (auto& s : renderings(f)) out.push_back(std::move(s));
  }
  return out;
}

FactCorpus generate_corpus(int n_facts, std::uint64_t seed) {
  if (n_facts < 1) throw ConfigError("generate_corpus: n_facts must be >= 1");
  FactCorpus corpus;
  corpus.relations = built_in_relations();
  const int n_rel = std::clamp(n_facts / 3, 1,
                               static_cast<int>(corpus.relations.size()));

  Rng rng(seed);
  std::set<std::string> used_subjects;
  std::vector<int> per_relation(static_cast<std::size_t>(n_rel), 0);
  for (int i = 0; i < n_facts; ++i) {
    per_relation[static_cast<std::size_t>(i % n_rel)]++;
  }
  std::vector<int> seen(static_cast<std::size_t>(n_rel), 0);
  for (int i = 0; i < n_facts; ++i) {
    const int r = i % n_rel;
    const Relation& rel = corpus.relations[static_cast<std::size_t>(r)];
    Fact f;
    f.subject = unique_subject(i % 2 == 0, rng, used_subjects);
    f.relation = r;
    // Cycle the pool so every object of an active relation gets used, which
    // keeps all counterfact targets inside the training vocabulary.
    f.object = rel.objects[static_cast<std::size_t>(seen[
        static_cast<std::size_t>(r)]) % rel.objects.size()];
    // Hold the first few facts of a relation out of the edit pool as
    // neighborhood material, when the relation is big enough to afford it.
    // Three held-out facts carry three distinct objects, so at least two
    // probes survive the counterfact-collision filter below.
    const int size = per_relation[static_cast<std::size_t>(r)];
    const int holdout = size >= 4 ? 3 : (size >= 3 ? 2 : 0);
    f.edit_eligible = seen[static_cast<std::size_t>(r)] >= holdout;
    seen[static_cast<std::size_t>(r)]++;
    corpus.facts.push_back(std::move(f));
  }
  return corpus;
}

std::vector<EditRequest> FactCorpus::make_requests(int count,
                                                   std::uint64_t seed) const {
  if (count < 0) throw ConfigError("make_requests: count must be >= 0");
  std::vector<std::size_t> eligible;
  std::unordered_map<int, std::vector<std::size_t>> probes_by_relation;
  std::unordered_map<int, std::vector<std::string>> objects_by_relation;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const Fact& f = facts[i];
    if (f.edit_eligible) {
      eligible.push_back(i);
    } else {
      probes_by_relation[f.relation].push_back(i);
    }
    auto& pool = objects_by_relation[f.relation];
    if (std::find(pool.begin(), pool.end(), f.object) == pool.end()) {
      pool.push_back(f.object);
    }
  }
  if (count > static_cast<int>(eligible.size())) {
    throw ConfigError("make_requests: only " +
                      std::to_string(eligible.size()) +
                      " edit-eligible facts available");
  }

  Rng rng(seed);
  rng.shuffle(eligible);
  std::vector<EditRequest> out;
  for (int k = 0; k < count; ++k) {
    const Fact& f = facts[eligible[static_cast<std::size_t>(k)]];
    const Relation& rel = relations[static_cast<std::size_t>(f.relation)];
    const auto& pool = objects_by_relation[f.relation];

    EditRequest r;
    r.subject = f.subject;
    r.prompt = rel.prompt;
    r.original_object = f.object;
    // A counterfact target: any other trained object of the same relation.
    std::vector<std::string> alternatives;
    for (const auto& o : pool) {
      if (o != f.object) alternatives.push_back(o);
    }
    if (alternatives.empty()) {
      throw ConfigError("make_requests: relation '" + rel.name +
                        "' has a single trained object");
    }
    r.new_object = alternatives[rng.uniform_index(alternatives.size())];
    r.paraphrases = rel.paraphrases;

    // Probes whose true object IS the counterfact target cannot distinguish
    // damage from success; skip them.
    std::vector<std::size_t> probe_pool;
    for (std::size_t idx : probes_by_relation[f.relation]) {
      if (facts[idx].object != r.new_object) probe_pool.push_back(idx);
    }
    rng.shuffle(probe_pool);
    for (std::size_t p = 0; p < probe_pool.size() && p < 2; ++p) {
      const Fact& nf = facts[probe_pool[p]];
      r.neighborhood.push_back({fact_prompt(nf), nf.object});
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_corpus_sentences(const std::string& path,
                           const std::vector<std::string>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += nlohmann::json{{"sentence", s}}.dump();
    out.push_back('\n');
  }
  atomic_write_file(path, out);
}

std::vector<std::string> load_corpus_sentences(const std::string& path) {
  std::string text = read_file_bytes(path);
  std::vector<std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    ++line_no;
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).at("sentence")
                        .get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corpus file '" + path + "' line " +
                        std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace swea
