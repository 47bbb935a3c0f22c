#include "swea/tokenizer.hpp"

#include <cctype>

#include "swea/error.hpp"

namespace swea {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

void Tokenizer::push_token(const std::string& tok) {
  if (ids_.count(tok)) {
    throw TokenError("duplicate token in vocab: '" + tok + "'");
  }
  ids_[tok] = static_cast<int>(tokens_.size());
  tokens_.push_back(tok);
}

Tokenizer Tokenizer::build(const std::vector<std::string>& sentences) {
  Tokenizer t;
  t.push_token(kPadToken);
  t.push_token(kBosToken);
  for (const auto& s : sentences) {
    for (const auto& w : split_words(s)) {
      if (!t.ids_.count(w)) t.push_token(w);
    }
  }
  return t;
}

Tokenizer Tokenizer::from_vocab_lines(const std::vector<std::string>& lines) {
  Tokenizer t;
  for (const auto& line : lines) t.push_token(line);
  if (t.size() <= kBosId || t.tokens_[kPadId] != kPadToken ||
      t.tokens_[kBosId] != kBosToken) {
    throw TokenError("vocab must start with '" + std::string(kPadToken) +
                     "' and '" + std::string(kBosToken) + "'");
  }
  return t;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id_of(w));
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token_of(ids[i]);
  }
  return out;
}

int Tokenizer::id_of(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end()) {
    throw TokenError("word not in vocabulary: '" + word + "'");
  }
  return it->second;
}

const std::string& Tokenizer::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw TokenError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Tokenizer::contains(const std::string& word) const {
  return ids_.count(word) != 0;
}

}  // namespace swea
