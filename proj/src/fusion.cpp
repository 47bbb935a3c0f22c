#include "swea/fusion.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swea/binio.hpp"
#include "swea/error.hpp"
#include "swea/matcher.hpp"
#include "swea/parallel.hpp"

namespace swea {

namespace ad = swea::ad;
using Mat = ad::Mat<double>;
using Tensor = ad::Tensor<double>;
using Tape = ad::Tape<double>;

Eigen::Index find_subsequence(const std::vector<int>& haystack,
                              const std::vector<int>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return -1;
  for (std::size_t s = 0; s + needle.size() <= haystack.size(); ++s) {
    bool hit = true;
    for (std::size_t i = 0; i < needle.size(); ++i) {
      if (haystack[s + i] != needle[i]) {
        hit = false;
        break;
      }
    }
    if (hit) return static_cast<Eigen::Index>(s);
  }
  return -1;
}

std::string vocab_hash(const Tokenizer& tokenizer) {
  std::string bytes;
  for (const auto& tok : tokenizer.tokens()) {
    bytes += tok;
    bytes.push_back('\n');
  }
  return fnv1a_hex(bytes);
}

namespace {

/// Rows of the embedding table for the given ids: the original subject
/// embedding x^S.
Mat subject_embedding(const LanguageModel& model,
                      const std::vector<int>& subject_ids) {
  const Mat& table = model.token_embeddings();
  Mat x(static_cast<Eigen::Index>(subject_ids.size()), table.cols());
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = table.row(subject_ids[i]);
  }
  return x;
}

/// NLL of `targets` after `[BOS] + prefix + prompt`, with `delta` added over
/// the subject rows. All tensors live on the caller's tape.
Tensor variant_nll(const LanguageModel& model, Tape& tape,
                   const LanguageModel::GraphParams& gp,
                   const std::vector<int>& prefix,
                   const std::vector<int>& prompt_ids,
                   Eigen::Index subject_start, Tensor delta,
                   const std::vector<int>& targets) {
  std::vector<int> input;
  input.reserve(1 + prefix.size() + prompt_ids.size() + targets.size());
  input.push_back(Tokenizer::kBosId);
  input.insert(input.end(), prefix.begin(), prefix.end());
  input.insert(input.end(), prompt_ids.begin(), prompt_ids.end());
  input.insert(input.end(), targets.begin(), targets.end() - 1);
  Eigen::Index start =
      1 + static_cast<Eigen::Index>(prefix.size()) + subject_start;
  auto hook = [&](Tape&, Tensor x) { return ad::add_rows(x, delta, start); };
  Tensor logits = model.forward_graph(tape, gp, input, hook);
  return ad::nll_loss(ad::log_softmax(logits, 1), targets);
}

}  // namespace

Tensor fusion_loss(const LanguageModel& model, Tape& tape, Tensor delta,
                   const std::vector<int>& prompt_ids,
                   Eigen::Index subject_start,
                   const std::vector<int>& new_object_ids,
                   const std::vector<std::vector<int>>& prefixes,
                   const Mat& ref_logits, double alpha, double beta) {
  auto gp = model.place_params(tape, false);
  Tensor nll_sum;
  std::size_t n_variants = 1 + prefixes.size();
  {
    Tensor nll = variant_nll(model, tape, gp, {}, prompt_ids, subject_start,
                             delta, new_object_ids);
    nll_sum = nll;
  }
  for (const auto& prefix : prefixes) {
    Tensor nll = variant_nll(model, tape, gp, prefix, prompt_ids,
                             subject_start, delta, new_object_ids);
    nll_sum = ad::add(nll_sum, nll);
  }
  Tensor loss = ad::scale(nll_sum, beta / static_cast<double>(n_variants));
  if (alpha > 0) {
    std::vector<int> bare = with_bos(prompt_ids);
    auto hook = [&](Tape&, Tensor x) {
      return ad::add_rows(x, delta, subject_start + 1);
    };
    Tensor q_logits = model.forward_graph(tape, gp, bare, hook);
    Tensor q_last = ad::slice_rows(q_logits, q_logits.rows() - 1, 1);
    Tensor kl = ad::kl_divergence(tape.constant(ref_logits), q_last);
    loss = ad::add(loss, ad::scale(kl, alpha));
  }
  return loss;
}

Mat optimize_delta_ids(const LanguageModel& model,
                       const std::vector<int>& prompt_ids,
                       Eigen::Index subject_start,
                       const std::vector<int>& subject_ids,
                       const std::vector<int>& new_object_ids,
                       const std::vector<std::vector<int>>& prefixes,
                       const FusionConfig& config,
                       const std::string& request_id) {
  config.validate();
  if (subject_ids.empty()) {
    throw FusionError(request_id, "subject has no tokens");
  }
  if (new_object_ids.empty()) {
    throw FusionError(request_id, "new object has no tokens");
  }
  if (subject_start < 0 ||
      subject_start + static_cast<Eigen::Index>(subject_ids.size()) >
          static_cast<Eigen::Index>(prompt_ids.size())) {
    throw FusionError(request_id, "subject span outside prompt");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(subject_ids.size());
  const Eigen::Index h = model.config().d_model;

  // Per-row clamp radii: clamp_factor * ||x^S_i||.
  Mat x_subject = subject_embedding(model, subject_ids);
  Eigen::VectorXd radius(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    radius(i) = config.clamp_factor * x_subject.row(i).norm();
  }

  // Frozen pre-edit reference for the KL anchor: next-token logits at the
  // final position of the bare prompt.
  Mat ref_logits = model.forward(with_bos(prompt_ids)).bottomRows(1);

  auto loss_graph = [&](Tape& tape, Tensor delta) {
    return fusion_loss(model, tape, delta, prompt_ids, subject_start,
                       new_object_ids, prefixes, ref_logits, config.alpha,
                       config.beta);
  };

  Mat e = Mat::Zero(rows, h);
  Mat best_e = e;
  double best_loss = std::numeric_limits<double>::infinity();
  Mat m = Mat::Zero(rows, h), v = Mat::Zero(rows, h);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  auto consider = [&](const Mat& cand, double loss) {
    if (loss < best_loss) {
      best_loss = loss;
      best_e = cand;
    }
  };

  for (int step = 0; step < config.steps; ++step) {
    Tape tape;
    Tensor delta = tape.leaf(e, true);
    Tensor loss = loss_graph(tape, delta);
    double lv = ad::scalar_value(loss);
    if (!std::isfinite(lv)) {
      throw FusionError(request_id, "non-finite loss at optimization step " +
                                        std::to_string(step));
    }
    consider(e, lv);
    tape.backward(loss);

    Mat g = delta.grad() + config.weight_decay * e;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    double corr1 = 1.0 - std::pow(b1, step + 1);
    double corr2 = 1.0 - std::pow(b2, step + 1);
    e -= (config.lr * (m / corr1).array() / ((v / corr2).array().sqrt() + adam_eps))
             .matrix();
    for (Eigen::Index i = 0; i < rows; ++i) {
      double n = e.row(i).norm();
      if (n > radius(i) && n > 0) e.row(i) *= radius(i) / n;
    }
  }
  {
    Tape tape;
    Tensor delta = tape.constant(e);
    double lv = ad::scalar_value(loss_graph(tape, delta));
    if (std::isfinite(lv)) consider(e, lv);
  }
  return best_e;
}

Mat optimize_delta(const LanguageModel& model, const Tokenizer& tokenizer,
                   const EditRequest& request, const FusionConfig& config) {
  const std::string rid = request.id();
  std::vector<int> subject_ids, prompt_ids, new_ids;
  try {
    subject_ids = tokenizer.encode(request.subject);
    prompt_ids = tokenizer.encode(request.rendered_prompt());
    new_ids = tokenizer.encode(request.new_object);
  } catch (const TokenError& e) {
    throw FusionError(rid, e.what());
  }
  Eigen::Index start = find_subsequence(prompt_ids, subject_ids);
  if (start < 0) {
    throw FusionError(rid, "subject '" + request.subject +
                               "' does not occur in prompt '" +
                               request.rendered_prompt() + "'");
  }
  auto prefixes = model.generate_prefixes(
      config.prefix_count, config.prefix_length, config.seed);
  return optimize_delta_ids(model, prompt_ids, start, subject_ids, new_ids,
                            prefixes, config, rid);
}

AttributionReport attribute_ids(const LanguageModel& model,
                                const std::vector<int>& prompt_ids,
                                Eigen::Index subject_start,
                                Eigen::Index subject_len,
                                const std::vector<int>& object_ids,
                                const FusionConfig& config) {
  config.validate();
  if (object_ids.empty()) {
    throw Error("attribute: zero-length object");
  }
  if (subject_start < 0 || subject_len < 1 ||
      subject_start + subject_len >
          static_cast<Eigen::Index>(prompt_ids.size())) {
    throw ShapeError("attribute: subject span outside prompt");
  }
  const Eigen::Index h = model.config().d_model;
  const int n = config.riemann_steps;

  std::vector<int> input = with_bos(prompt_ids);
  input.insert(input.end(), object_ids.begin(), object_ids.end() - 1);

  Mat scores(subject_len, h);
  for (Eigen::Index z = 0; z < subject_len; ++z) {
    const int token_id =
        prompt_ids[static_cast<std::size_t>(subject_start + z)];
    const Mat x_star = model.token_embeddings().row(token_id);
    const Eigen::Index pos = 1 + subject_start + z;  // after BOS

    Mat grad_sum = Mat::Zero(1, h);
    for (int k = 1; k <= n; ++k) {
      Tape tape;
      auto gp = model.place_params(tape, false);
      Tensor xz = tape.leaf(x_star * (static_cast<double>(k) / n), true);
      auto hook = [&](Tape&, Tensor x) { return ad::set_row(x, xz, pos); };
      Tensor logits = model.forward_graph(tape, gp, input, hook);
      Tensor lp = ad::log_softmax(logits, 1);
      std::vector<int> rrows(object_ids.size());
      std::vector<int> rcols(object_ids.size());
      for (std::size_t i = 0; i < object_ids.size(); ++i) {
        rrows[i] = static_cast<int>(input.size() - object_ids.size() + i);
        rcols[i] = object_ids[i];
      }
      // Joint probability of the object continuation, teacher-forced.
      Tensor prob = ad::exp(ad::sum(ad::pick(lp, rrows, rcols)));
      tape.backward(prob);
      grad_sum += xz.grad();
    }
    scores.row(z) = (x_star / static_cast<double>(n)).cwiseProduct(grad_sum);
  }
  if (!scores.allFinite()) {
    throw Error("attribute: non-finite attribution scores");
  }
  AttributionReport report;
  report.scores = scores;
  report.max_score = scores.maxCoeff();
  report.keds = select_keds(scores, config.t);
  return report;
}

AttributionReport attribute(const LanguageModel& model,
                            const Tokenizer& tokenizer,
                            const std::string& prompt,
                            const std::string& subject,
                            const std::string& object,
                            const FusionConfig& config) {
  std::vector<int> prompt_ids = tokenizer.encode(prompt);
  std::vector<int> subject_ids = tokenizer.encode(subject);
  std::vector<int> object_ids = tokenizer.encode(object);
  Eigen::Index start = find_subsequence(prompt_ids, subject_ids);
  if (start < 0) {
    throw Error("attribute: subject '" + subject +
                "' does not occur in prompt '" + prompt + "'");
  }
  return attribute_ids(model, prompt_ids, start,
                       static_cast<Eigen::Index>(subject_ids.size()),
                       object_ids, config);
}

std::vector<std::pair<int, int>> select_keds(const Mat& scores, double t) {
  if (t < 0 || t > 1) {
    throw ConfigError("select_keds: threshold t must lie in [0, 1]");
  }
  double max_score = scores.maxCoeff();
  double cutoff = t * max_score;
  std::vector<std::pair<int, int>> keds;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    for (Eigen::Index d = 0; d < scores.cols(); ++d) {
      double s = scores(r, d);
      if (s > cutoff || s == max_score) {
        keds.emplace_back(static_cast<int>(r), static_cast<int>(d));
      }
    }
  }
  return keds;
}

Mat fuse(const Mat& e, const Mat& x_subject,
         const std::vector<std::pair<int, int>>& keds, double gamma) {
  if (e.rows() != x_subject.rows() || e.cols() != x_subject.cols()) {
    throw ShapeError("fuse: delta and subject embedding shapes differ");
  }
  Mat out = e;
  if (gamma == 0.0) return out;  // bitwise no-op by contract
  for (const auto& [r, d] : keds) {
    if (r < 0 || r >= e.rows() || d < 0 || d >= e.cols()) {
      throw ShapeError("fuse: knowledge dimension (" + std::to_string(r) +
                       ", " + std::to_string(d) + ") out of bounds");
    }
    out(r, d) -= gamma * x_subject(r, d);
  }
  return out;
}

EditingEmbedding fuse_request(const LanguageModel& model,
                              const Tokenizer& tokenizer,
                              const EditRequest& request,
                              const FusionConfig& config) {
  const std::string rid = request.id();
  if (request.new_object == request.original_object) {
    throw FusionError(rid, "new object equals original object");
  }
  std::vector<int> subject_ids, prompt_ids, old_ids;
  try {
    subject_ids = tokenizer.encode(request.subject);
    prompt_ids = tokenizer.encode(request.rendered_prompt());
    old_ids = tokenizer.encode(request.original_object);
  } catch (const TokenError& e) {
    throw FusionError(rid, e.what());
  }
  if (old_ids.empty()) {
    throw FusionError(rid, "original object has no tokens");
  }
  Eigen::Index start = find_subsequence(prompt_ids, subject_ids);
  if (start < 0) {
    throw FusionError(rid, "subject '" + request.subject +
                               "' does not occur in prompt '" +
                               request.rendered_prompt() + "'");
  }

  Mat e = optimize_delta(model, tokenizer, request, config);

  AttributionReport report;
  try {
    report = attribute_ids(model, prompt_ids, start,
                           static_cast<Eigen::Index>(subject_ids.size()),
                           old_ids, config);
  } catch (const Error& err) {
    throw FusionError(rid, err.what());
  }

  Mat x_subject = subject_embedding(model, subject_ids);
  EditingEmbedding emb;
  emb.key = make_key(subject_ids);
  emb.deltas = fuse(e, x_subject, report.keds, config.gamma);
  return emb;
}

std::vector<FusionFailure> recompute_for_sequential(EditingStore& store,
                                                    const LanguageModel& model,
                                                    const Tokenizer& tokenizer) {
  const std::string hash = vocab_hash(tokenizer);
  if (store.model_vocab_hash().empty()) {
    store.set_model_vocab_hash(hash);
  } else if (store.model_vocab_hash() != hash) {
    throw ConfigError(
        "editing store was fused under a different vocabulary (hash " +
        store.model_vocab_hash() + ", model has " + hash + ")");
  }

  std::vector<EditingStore::LogEntry> work = store.pending();
  std::vector<std::optional<EditingEmbedding>> results(work.size());
  std::vector<std::optional<FusionFailure>> errors(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    try {
      results[i] =
          fuse_request(model, tokenizer, work[i].request, work[i].config);
    } catch (const FusionError& e) {
      errors[i] = FusionFailure{e.request_id, e.what()};
    } catch (const std::exception& e) {
      errors[i] = FusionFailure{work[i].request.id(), e.what()};
    }
  });
  std::vector<FusionFailure> failures;
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (errors[i]) {
      failures.push_back(*errors[i]);
      continue;
    }
    EditingEmbedding emb = std::move(*results[i]);
    if (emb.key.key != work[i].subject_key) {
      failures.push_back(
          {work[i].request.id(),
           "subject key drifted from logged key " + work[i].subject_key});
      continue;
    }
    emb.seq = work[i].seq;
    store.materialize(std::move(emb));
  }
  return failures;
}

std::vector<FusionFailure> edit_into(EditingStore& store,
                                     const LanguageModel& model,
                                     const Tokenizer& tokenizer,
                                     const std::vector<EditRequest>& requests,
                                     const FusionConfig& config) {
  config.validate();
  std::vector<FusionFailure> failures;
  for (const auto& r : requests) {
    try {
      std::vector<int> subject_ids = tokenizer.encode(r.subject);
      store.append_request(make_key(subject_ids).key, r, config);
    } catch (const Error& e) {
      failures.push_back({r.id(), e.what()});
    }
  }
  auto fuse_failures = recompute_for_sequential(store, model, tokenizer);
  failures.insert(failures.end(), fuse_failures.begin(), fuse_failures.end());
  return failures;
}

EditResult edit(const LanguageModel& model, const Tokenizer& tokenizer,
                const std::vector<EditRequest>& requests,
                const FusionConfig& config) {
  EditResult result;
  result.failures =
      edit_into(result.store, model, tokenizer, requests, config);
  return result;
}

}  // namespace swea
