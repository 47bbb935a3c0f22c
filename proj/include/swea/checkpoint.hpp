#pragma once

#include <string>

#include "swea/model.hpp"
#include "swea/tokenizer.hpp"

namespace swea {

/// Checkpoint layout, all little-endian:
///   bytes 0..5   magic "TOYLM1"
///   7 x u32      n_layers, n_heads, d_model, d_ff, vocab_size, max_seq_len,
///                ln_eps (f32 bit pattern carried in the u32 slot)
///   payload      every parameter_list() tensor in order, row-major f32
/// Shapes are implied by the config, so the payload carries no per-tensor
/// headers. Parameters are quantized to f32 on save.
void save_model(const std::string& path, const LanguageModel& model);
LanguageModel load_model(const std::string& path);

/// Vocab file: UTF-8, one token per line, line number == token id.
void save_vocab(const std::string& path, const Tokenizer& tokenizer);
Tokenizer load_vocab(const std::string& path);

}  // namespace swea
