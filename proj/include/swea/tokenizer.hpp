#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace swea {

/// Whitespace word-level tokenizer over a fixed vocabulary. Token ids are
/// positions in the vocab list, so they are stable across runs for the same
/// vocab file. encode() never inserts special tokens; sequence assembly
/// (BOS prepending) is the model layer's job.
class Tokenizer {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kBosToken = "<bos>";

  Tokenizer() = default;

  /// Vocab = specials, then unique corpus words in first-appearance order.
  static Tokenizer build(const std::vector<std::string>& sentences);

  /// Vocab file contents: one token per line, line number == id.
  static Tokenizer from_vocab_lines(const std::vector<std::string>& lines);

  /// Splits on runs of whitespace. "" -> []. Unknown word -> TokenError
  /// naming the word.
  std::vector<int> encode(const std::string& text) const;

  /// Joins tokens with single spaces; inverse of encode on normalized text.
  std::string decode(const std::vector<int>& ids) const;

  int id_of(const std::string& word) const;
  const std::string& token_of(int id) const;
  bool contains(const std::string& word) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;

  void push_token(const std::string& tok);
};

/// Splits text on whitespace runs; no empty words.
std::vector<std::string> split_words(const std::string& text);

}  // namespace swea
