#include "swea/model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "swea/error.hpp"
#include "swea/rng.hpp"

namespace swea {

namespace ad = swea::ad;
using Mat = LanguageModel::Mat;
using Tensor = LanguageModel::Tensor;
using Tape = LanguageModel::Tape;

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 ||
      vocab_size < 1 || max_seq_len < 1) {
    throw ConfigError("model config: all sizes must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (ln_eps <= 0) throw ConfigError("model config: ln_eps must be > 0");
  if (vocab_size <= Tokenizer::kBosId) {
    throw ConfigError("model config: vocab_size must cover the special ids");
  }
}

std::vector<int> with_bos(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size() + 1);
  out.push_back(Tokenizer::kBosId);
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

LanguageModel::LanguageModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int h = cfg_.d_model;
  // Weight matrices and embeddings start at N(0, 0.02^2); biases and LN
  // offsets at zero; LN gains at one. Draw order matches parameter_list().
  auto w = [&](Eigen::Index r, Eigen::Index c) {
    return ad::randn<double>(r, c, rng, 0.02);
  };
  tok_emb_ = w(cfg_.vocab_size, h);
  pos_emb_ = w(cfg_.max_seq_len, h);
  layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (auto& l : layers_) {
    l.ln1_g = Mat::Ones(1, h);
    l.ln1_b = Mat::Zero(1, h);
    l.wq = w(h, h);
    l.bq = Mat::Zero(1, h);
    l.wk = w(h, h);
    l.bk = Mat::Zero(1, h);
    l.wv = w(h, h);
    l.bv = Mat::Zero(1, h);
    l.wo = w(h, h);
    l.bo = Mat::Zero(1, h);
    l.ln2_g = Mat::Ones(1, h);
    l.ln2_b = Mat::Zero(1, h);
    l.w1 = w(h, cfg_.d_ff);
    l.b1 = Mat::Zero(1, cfg_.d_ff);
    l.w2 = w(cfg_.d_ff, h);
    l.b2 = Mat::Zero(1, h);
  }
  lnf_g_ = Mat::Ones(1, h);
  lnf_b_ = Mat::Zero(1, h);
  out_w_ = w(h, cfg_.vocab_size);
  out_b_ = Mat::Zero(1, cfg_.vocab_size);
}

std::vector<LanguageModel::NamedParam> LanguageModel::parameter_list() {
  std::vector<NamedParam> ps;
  ps.push_back({"tok_emb", &tok_emb_});
  ps.push_back({"pos_emb", &pos_emb_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    std::string p = "layers." + std::to_string(i) + ".";
    ps.push_back({p + "ln1_g", &l.ln1_g});
    ps.push_back({p + "ln1_b", &l.ln1_b});
    ps.push_back({p + "wq", &l.wq});
    ps.push_back({p + "bq", &l.bq});
    ps.push_back({p + "wk", &l.wk});
    ps.push_back({p + "bk", &l.bk});
    ps.push_back({p + "wv", &l.wv});
    ps.push_back({p + "bv", &l.bv});
    ps.push_back({p + "wo", &l.wo});
    ps.push_back({p + "bo", &l.bo});
    ps.push_back({p + "ln2_g", &l.ln2_g});
    ps.push_back({p + "ln2_b", &l.ln2_b});
    ps.push_back({p + "w1", &l.w1});
    ps.push_back({p + "b1", &l.b1});
    ps.push_back({p + "w2", &l.w2});
    ps.push_back({p + "b2", &l.b2});
  }
  ps.push_back({"lnf_g", &lnf_g_});
  ps.push_back({"lnf_b", &lnf_b_});
  ps.push_back({"out_w", &out_w_});
  ps.push_back({"out_b", &out_b_});
  return ps;
}

std::vector<std::pair<std::string, const Mat*>> LanguageModel::parameter_list()
    const {
  auto& self = const_cast<LanguageModel&>(*this);
  std::vector<std::pair<std::string, const Mat*>> ps;
  for (const auto& p : self.parameter_list()) ps.emplace_back(p.name, p.mat);
  return ps;
}

LanguageModel::GraphParams LanguageModel::place_params(Tape& tape,
                                                       bool trainable) const {
  auto& self = const_cast<LanguageModel&>(*this);
  GraphParams gp;
  auto place = [&](const Mat& m) {
    Tensor t = tape.leaf(m, trainable);
    gp.flat.push_back(t);
    return t;
  };
  // Mirrors parameter_list() order exactly.
  gp.tok_emb = place(tok_emb_);
  gp.pos_emb = place(pos_emb_);
  for (auto& l : self.layers_) {
    GraphParams::Layer gl;
    gl.ln1_g = place(l.ln1_g);
    gl.ln1_b = place(l.ln1_b);
    gl.wq = place(l.wq);
    gl.bq = place(l.bq);
    gl.wk = place(l.wk);
    gl.bk = place(l.bk);
    gl.wv = place(l.wv);
    gl.bv = place(l.bv);
    gl.wo = place(l.wo);
    gl.bo = place(l.bo);
    gl.ln2_g = place(l.ln2_g);
    gl.ln2_b = place(l.ln2_b);
    gl.w1 = place(l.w1);
    gl.b1 = place(l.b1);
    gl.w2 = place(l.w2);
    gl.b2 = place(l.b2);
    gp.layers.push_back(gl);
  }
  gp.lnf_g = place(lnf_g_);
  gp.lnf_b = place(lnf_b_);
  gp.out_w = place(out_w_);
  gp.out_b = place(out_b_);
  return gp;
}

Tensor LanguageModel::forward_graph(Tape& tape, const GraphParams& params,
                                    const std::vector<int>& ids,
                                    const EmbedHook& hook) const {
  const auto len = static_cast<Eigen::Index>(ids.size());
  if (len < 1) throw ShapeError("forward: empty id sequence");
  if (len > cfg_.max_seq_len) {
    throw ShapeError("forward: sequence length " + std::to_string(ids.size()) +
                     " exceeds max_seq_len " +
                     std::to_string(cfg_.max_seq_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw TokenError("forward: token id " + std::to_string(id) +
                       " outside vocabulary");
    }
  }

  Tensor x = ad::embedding_lookup(params.tok_emb, ids);
  if (hook) x = hook(tape, x);
  x = ad::add(x, ad::slice_rows(params.pos_emb, 0, len));

  // Additive causal mask: strictly-upper entries block attention; exp()
  // underflows them to exactly zero weight, so later positions cannot leak
  // into earlier logits even at the bit level.
  Mat mask = Mat::Zero(len, len);
  for (Eigen::Index i = 0; i < len; ++i) {
    for (Eigen::Index j = i + 1; j < len; ++j) mask(i, j) = -1e9;
  }
  Tensor mask_t = tape.constant(mask);

  const int dh = cfg_.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& l : params.layers) {
    Tensor a_in = ad::layer_norm(x, l.ln1_g, l.ln1_b, cfg_.ln_eps);
    Tensor q = ad::add_rowvec(ad::matmul(a_in, l.wq), l.bq);
    Tensor k = ad::add_rowvec(ad::matmul(a_in, l.wk), l.bk);
    Tensor v = ad::add_rowvec(ad::matmul(a_in, l.wv), l.bv);
    std::vector<Tensor> heads;
    for (int t = 0; t < cfg_.n_heads; ++t) {
      Tensor qh = ad::slice_cols(q, t * dh, dh);
      Tensor kh = ad::slice_cols(k, t * dh, dh);
      Tensor vh = ad::slice_cols(v, t * dh, dh);
      Tensor scores =
          ad::add(ad::scale(ad::matmul_nt(qh, kh), att_scale), mask_t);
      heads.push_back(ad::matmul(ad::softmax(scores, 1), vh));
    }
    Tensor att = ad::add_rowvec(
        ad::matmul(ad::concat_cols(heads), l.wo), l.bo);
    x = ad::add(x, att);

    Tensor f_in = ad::layer_norm(x, l.ln2_g, l.ln2_b, cfg_.ln_eps);
    Tensor h1 = ad::gelu(ad::add_rowvec(ad::matmul(f_in, l.w1), l.b1));
    Tensor h2 = ad::add_rowvec(ad::matmul(h1, l.w2), l.b2);
    x = ad::add(x, h2);
  }

  Tensor xf = ad::layer_norm(x, params.lnf_g, params.lnf_b, cfg_.ln_eps);
  return ad::add_rowvec(ad::matmul(xf, params.out_w), params.out_b);
}

void LanguageModel::check_patch(const SpanPatch& patch, std::size_t len) const {
  if (patch.delta.cols() != cfg_.d_model) {
    throw ShapeError("patch: delta width " + std::to_string(patch.delta.cols()) +
                     " != d_model " + std::to_string(cfg_.d_model));
  }
  if (patch.start < 0 ||
      patch.start + patch.delta.rows() > static_cast<Eigen::Index>(len)) {
    throw ShapeError("patch: span [" + std::to_string(patch.start) + ", " +
                     std::to_string(patch.start + patch.delta.rows()) +
                     ") outside sequence of length " + std::to_string(len));
  }
}

Mat LanguageModel::forward(const std::vector<int>& ids) const {
  Tape tape;
  GraphParams gp = place_params(tape, false);
  return forward_graph(tape, gp, ids).value();
}

Mat LanguageModel::forward(const std::vector<int>& ids,
                           const SpanPatch& patch) const {
  check_patch(patch, ids.size());
  Tape tape;
  GraphParams gp = place_params(tape, false);
  EmbedHook hook = [&](Tape& t, Tensor x) {
    return ad::add_rows(x, t.constant(patch.delta), patch.start);
  };
  return forward_graph(tape, gp, ids, hook).value();
}

double LanguageModel::sequence_logprob(const std::vector<int>& ids,
                                       const std::vector<int>& continuation,
                                       const SpanPatch* patch) const {
  if (continuation.empty()) return 0.0;
  if (patch) check_patch(*patch, ids.size());
  // Input: BOS + ids + continuation[:-1]; the last |continuation| logit rows
  // then score the continuation tokens, teacher-forced.
  std::vector<int> input = with_bos(ids);
  input.insert(input.end(), continuation.begin(), continuation.end() - 1);

  Tape tape;
  GraphParams gp = place_params(tape, false);
  EmbedHook hook = nullptr;
  if (patch) {
    hook = [&](Tape& t, Tensor x) {
      return ad::add_rows(x, t.constant(patch->delta), patch->start + 1);
    };
  }
  Tensor logits = forward_graph(tape, gp, input, hook);
  Tensor lp = ad::log_softmax(logits, 1);
  Tensor nll = ad::nll_loss(lp, continuation);
  return -ad::scalar_value(nll) * static_cast<double>(continuation.size());
}

std::vector<int> LanguageModel::greedy_continuation(
    const std::vector<int>& ids, int steps, const SpanPatch* patch) const {
  if (patch) check_patch(*patch, ids.size());
  std::vector<int> input = with_bos(ids);
  std::vector<int> out;
  for (int s = 0; s < steps; ++s) {
    Tape tape;
    GraphParams gp = place_params(tape, false);
    EmbedHook hook = nullptr;
    if (patch) {
      hook = [&](Tape& t, Tensor x) {
        return ad::add_rows(x, t.constant(patch->delta), patch->start + 1);
      };
    }
    Tensor logits = forward_graph(tape, gp, input, hook);
    Eigen::Index best = 0;
    logits.value().row(logits.rows() - 1).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
    input.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<std::vector<int>> LanguageModel::generate_prefixes(
    int count, int length, std::uint64_t seed) const {
  if (count < 0 || length < 1) {
    throw ConfigError("generate_prefixes: count must be >= 0, length >= 1");
  }
  Rng rng(seed);
  std::vector<std::vector<int>> prefixes;
  prefixes.reserve(static_cast<std::size_t>(count));
  for (int p = 0; p < count; ++p) {
    std::vector<int> input = {Tokenizer::kBosId};
    std::vector<int> sample;
    for (int s = 0; s < length; ++s) {
      Mat logits = forward(input);
      Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
      Eigen::RowVectorXd probs = (row.array() - row.maxCoeff()).exp();
      probs(Tokenizer::kPadId) = 0.0;  // specials never appear in text
      probs(Tokenizer::kBosId) = 0.0;
      std::vector<double> weights(probs.data(), probs.data() + probs.size());
      int id = static_cast<int>(rng.categorical(weights));
      sample.push_back(id);
      input.push_back(id);
    }
    prefixes.push_back(std::move(sample));
  }
  return prefixes;
}

LanguageModel pretrain(const std::vector<std::string>& sentences,
                       const Tokenizer& tokenizer, ModelConfig cfg,
                       const PretrainOptions& opt) {
  if (sentences.empty()) throw TrainError("pretrain: empty corpus");
  cfg.vocab_size = tokenizer.size();
  LanguageModel model(cfg, opt.seed);

  std::vector<std::vector<int>> encoded;
  encoded.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<int> ids = tokenizer.encode(s);
    if (ids.empty()) throw TrainError("pretrain: blank sentence in corpus");
    if (static_cast<int>(ids.size()) + 1 > cfg.max_seq_len) {
      throw TrainError("pretrain: sentence longer than max_seq_len: '" + s +
                       "'");
    }
    encoded.push_back(std::move(ids));
  }

  // Adam with bias correction; one sentence per step keeps the run exactly
  // reproducible for a given seed.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto params = model.parameter_list();
  std::vector<Mat> m(params.size()), v(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = Mat::Zero(params[i].mat->rows(), params[i].mat->cols());
    v[i] = Mat::Zero(params[i].mat->rows(), params[i].mat->cols());
  }

  Rng order_rng(opt.seed + 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const std::vector<int>& toks = encoded[order[oi]];
      std::vector<int> input = with_bos(toks);
      input.pop_back();  // last token is predicted, never consumed

      LanguageModel::Tape tape;
      auto gp = model.place_params(tape, true);
      auto logits = model.forward_graph(tape, gp, input);
      auto loss = ad::nll_loss(ad::log_softmax(logits, 1), toks);
      double lv = ad::scalar_value(loss);
      if (!std::isfinite(lv)) {
        throw TrainError("pretrain: non-finite loss at epoch " +
                         std::to_string(epoch) + ", step " +
                         std::to_string(step));
      }
      tape.backward(loss);

      ++step;
      double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
      double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Mat& g = gp.flat[i].grad();
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g.cwiseProduct(g);
        *params[i].mat -=
            (opt.lr * (m[i] / corr1).array() /
             ((v[i] / corr2).array().sqrt() + eps))
                .matrix();
      }
    }
  }
  return model;
}

}  // namespace swea
