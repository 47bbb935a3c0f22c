#include "swea/checkpoint.hpp"

#include <string>
#include <vector>

#include "swea/binio.hpp"
#include "swea/error.hpp"

namespace swea {

namespace {
constexpr char kMagic[] = "TOYLM1";
constexpr std::size_t kMagicLen = 6;
}  // namespace

void save_model(const std::string& path, const LanguageModel& model) {
  ByteWriter w;
  w.put_bytes(kMagic, kMagicLen);
  const ModelConfig& c = model.config();
  w.put_u32(static_cast<std::uint32_t>(c.n_layers));
  w.put_u32(static_cast<std::uint32_t>(c.n_heads));
  w.put_u32(static_cast<std::uint32_t>(c.d_model));
  w.put_u32(static_cast<std::uint32_t>(c.d_ff));
  w.put_u32(static_cast<std::uint32_t>(c.vocab_size));
  w.put_u32(static_cast<std::uint32_t>(c.max_seq_len));
  w.put_f32(static_cast<float>(c.ln_eps));
  for (const auto& [name, mat] : model.parameter_list()) {
    for (Eigen::Index i = 0; i < mat->rows(); ++i) {
      for (Eigen::Index j = 0; j < mat->cols(); ++j) {
        w.put_f32(static_cast<float>((*mat)(i, j)));
      }
    }
  }
  atomic_write_file(path, w.bytes());
}

LanguageModel load_model(const std::string& path) {
  ByteReader r(read_file_bytes(path));
  std::string magic = r.get_string(kMagicLen);
  if (magic != kMagic) {
    throw FormatError("model checkpoint '" + path +
                      "': bad magic, expected TOYLM1");
  }
  ModelConfig c;
  c.n_layers = static_cast<int>(r.get_u32());
  c.n_heads = static_cast<int>(r.get_u32());
  c.d_model = static_cast<int>(r.get_u32());
  c.d_ff = static_cast<int>(r.get_u32());
  c.vocab_size = static_cast<int>(r.get_u32());
  c.max_seq_len = static_cast<int>(r.get_u32());
  c.ln_eps = static_cast<double>(r.get_f32());
  c.validate();

  LanguageModel model(c, 0);
  for (auto& [name, mat] : model.parameter_list()) {
    for (Eigen::Index i = 0; i < mat->rows(); ++i) {
      for (Eigen::Index j = 0; j < mat->cols(); ++j) {
        (*mat)(i, j) = static_cast<double>(r.get_f32());
      }
    }
  }
  if (!r.at_end()) {
    throw FormatError("model checkpoint '" + path + "': " +
                      std::to_string(r.remaining()) + " trailing bytes");
  }
  return model;
}

void save_vocab(const std::string& path, const Tokenizer& tokenizer) {
  std::string out;
  for (const auto& tok : tokenizer.tokens()) {
    out += tok;
    out.push_back('\n');
  }
  atomic_write_file(path, out);
}

Tokenizer load_vocab(const std::string& path) {
  std::string text = read_file_bytes(path);
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  for (const auto& line : lines) {
    if (line.empty()) {
      throw FormatError("vocab file '" + path + "': empty line");
    }
  }
  return Tokenizer::from_vocab_lines(lines);
}

}  // namespace swea
