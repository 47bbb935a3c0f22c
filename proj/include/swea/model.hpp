#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "swea/ops.hpp"
#include "swea/tensor.hpp"
#include "swea/tokenizer.hpp"

namespace swea {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq_len = 64;
  double ln_eps = 1e-5;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

/// Additive patch over token positions [start, start + delta.rows()), applied
/// to the word embeddings before the positional signal is added. Rows are the
/// per-position delta vectors (width d_model).
struct SpanPatch {
  Eigen::Index start = 0;
  ad::Mat<double> delta;
};

/// Decoder-only pre-LN transformer over double precision parameters. The
/// single graph builder below serves inference, pretraining, and delta
/// optimization, so a run with a zero patch is bit-identical to an unpatched
/// run by construction.
class LanguageModel {
 public:
  using Tape = ad::Tape<double>;
  using Tensor = ad::Tensor<double>;
  using Mat = ad::Mat<double>;

  /// Rewrites the word-embedding matrix (rows = positions) before the
  /// positional embeddings are added.
  using EmbedHook = std::function<Tensor(Tape&, Tensor)>;

  struct LayerParams {
    Mat ln1_g, ln1_b;
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
  };

  /// Model parameters placed on a tape, plus the same tensors flattened in
  /// parameter_list() order (used by the training loop to read gradients).
  struct GraphParams {
    struct Layer {
      Tensor ln1_g, ln1_b;
      Tensor wq, bq, wk, bk, wv, bv, wo, bo;
      Tensor ln2_g, ln2_b;
      Tensor w1, b1, w2, b2;
    };
    Tensor tok_emb, pos_emb;
    std::vector<Layer> layers;
    Tensor lnf_g, lnf_b;
    Tensor out_w, out_b;
    std::vector<Tensor> flat;
  };

  LanguageModel() = default;
  LanguageModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Fixed parameter order; doubles as the serialization order.
  struct NamedParam {
    std::string name;
    Mat* mat;
  };
  std::vector<NamedParam> parameter_list();
  std::vector<std::pair<std::string, const Mat*>> parameter_list() const;

  /// Copies all parameters onto `tape` (as trainable leaves or constants).
  GraphParams place_params(Tape& tape, bool trainable) const;

  /// Causal logits [len(ids), vocab] for the ids exactly as given; callers
  /// prepend BOS where a sentence start is meant.
  Tensor forward_graph(Tape& tape, const GraphParams& params,
                       const std::vector<int>& ids,
                       const EmbedHook& hook = nullptr) const;

  Mat forward(const std::vector<int>& ids) const;
  Mat forward(const std::vector<int>& ids, const SpanPatch& patch) const;

  /// Sum over continuation tokens of log P(token | BOS + ids + earlier
  /// continuation), teacher-forced. patch->start is in `ids` coordinates;
  /// the internal BOS shift is handled here.
  double sequence_logprob(const std::vector<int>& ids,
                          const std::vector<int>& continuation,
                          const SpanPatch* patch = nullptr) const;

  /// Greedy argmax continuation of BOS + ids, `steps` tokens long.
  std::vector<int> greedy_continuation(const std::vector<int>& ids, int steps,
                                       const SpanPatch* patch = nullptr) const;

  /// `count` fixed-seed multinomial samples from the model, each exactly
  /// `length` ids long; special tokens are never sampled. count = 0 -> {}.
  std::vector<std::vector<int>> generate_prefixes(int count, int length,
                                                  std::uint64_t seed) const;

  const Mat& token_embeddings() const { return tok_emb_; }

 private:
  ModelConfig cfg_;
  Mat tok_emb_, pos_emb_;
  std::vector<LayerParams> layers_;
  Mat lnf_g_, lnf_b_;
  Mat out_w_, out_b_;

  void check_patch(const SpanPatch& patch, std::size_t len) const;
};

struct PretrainOptions {
  int epochs = 40;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Memorizes the corpus by per-sentence Adam steps on next-token NLL over
/// BOS-prefixed sentences. Deterministic for a given seed; throws TrainError
/// on an empty corpus or a non-finite loss.
LanguageModel pretrain(const std::vector<std::string>& sentences,
                       const Tokenizer& tokenizer, ModelConfig cfg,
                       const PretrainOptions& opt);

std::vector<int> with_bos(const std::vector<int>& ids);

}  // namespace swea
