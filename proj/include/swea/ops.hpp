#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "swea/error.hpp"
#include "swea/tensor.hpp"

/// Differentiable free functions over Tensors. Each op validates shapes,
/// computes its value eagerly with Eigen, and records a backward closure that
/// scatters the result gradient into its operands.
namespace swea::ad {

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const char* op, const Tensor<Scalar>& a,
                        const Tensor<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

template <typename Scalar>
void require_same_tape(const char* op, const Tensor<Scalar>& a,
                       const Tensor<Scalar>& b) {
  if (a.tape() != b.tape()) {
    throw Error(std::string(op) + ": operands belong to different tapes");
  }
}

/// Standard normal CDF, used by the exact (erf-based) GELU.
template <typename Scalar>
Scalar norm_cdf(Scalar x) {
  return Scalar(0.5) * (Scalar(1) + std::erf(x / Scalar(std::sqrt(2.0))));
}

/// Standard normal PDF.
template <typename Scalar>
Scalar norm_pdf(Scalar x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684;
  return Scalar(inv_sqrt_2pi) * std::exp(Scalar(-0.5) * x * x);
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value() + b.value();
  bool rg = a.requires_grad() || b.requires_grad();
  int ai = a.index(), bi = b.index();
  return t.record(std::move(v), rg, [ai, bi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g);
    tp.accumulate(bi, g);
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value() - b.value();
  bool rg = a.requires_grad() || b.requires_grad();
  int ai = a.index(), bi = b.index();
  return t.record(std::move(v), rg, [ai, bi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g);
    tp.accumulate(bi, -g);
  });
}

/// Adds a 1xN row vector to every row of a MxN matrix (bias broadcast).
template <typename Scalar>
Tensor<Scalar> add_rowvec(const Tensor<Scalar>& a, const Tensor<Scalar>& v) {
  detail::require_same_tape("add_rowvec", a, v);
  if (v.rows() != 1 || v.cols() != a.cols()) {
    throw ShapeError("add_rowvec: expected 1x" + std::to_string(a.cols()) +
                     " row vector, got " + detail::shape_str(v.rows(), v.cols()));
  }
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> out = a.value();
  out.rowwise() += v.value().row(0);
  bool rg = a.requires_grad() || v.requires_grad();
  int ai = a.index(), vi = v.index();
  return t.record(std::move(out), rg, [ai, vi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g);
    tp.accumulate(vi, g.colwise().sum());
  });
}

/// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value().cwiseProduct(b.value());
  bool rg = a.requires_grad() || b.requires_grad();
  int ai = a.index(), bi = b.index();
  return t.record(std::move(v), rg, [ai, bi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g.cwiseProduct(tp.node(bi).value));
    tp.accumulate(bi, g.cwiseProduct(tp.node(ai).value));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value() * s;
  int ai = a.index();
  return t.record(std::move(v), a.requires_grad(),
                  [ai, s](Tape<Scalar>& tp, int self) {
                    tp.accumulate(ai, tp.node(self).grad * s);
                  });
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     detail::shape_str(a.rows(), a.cols()) + " * " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value() * b.value();
  bool rg = a.requires_grad() || b.requires_grad();
  int ai = a.index(), bi = b.index();
  return t.record(std::move(v), rg, [ai, bi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g * tp.node(bi).value.transpose());
    tp.accumulate(bi, tp.node(ai).value.transpose() * g);
  });
}

/// a * b^T without materializing the transpose as a node.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape("matmul_nt", a, b);
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ, " +
                     detail::shape_str(a.rows(), a.cols()) + " vs " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value() * b.value().transpose();
  bool rg = a.requires_grad() || b.requires_grad();
  int ai = a.index(), bi = b.index();
  return t.record(std::move(v), rg, [ai, bi](Tape<Scalar>& tp, int self) {
    const Mat<Scalar>& g = tp.node(self).grad;
    tp.accumulate(ai, g * tp.node(bi).value);
    tp.accumulate(bi, g.transpose() * tp.node(ai).value);
  });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value().transpose();
  int ai = a.index();
  return t.record(std::move(v), a.requires_grad(),
                  [ai](Tape<Scalar>& tp, int self) {
                    tp.accumulate(ai, tp.node(self).grad.transpose());
                  });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value().array().exp().matrix();
  int ai = a.index();
  return t.record(std::move(v), a.requires_grad(),
                  [ai](Tape<Scalar>& tp, int self) {
                    const auto& n = tp.node(self);
                    tp.accumulate(ai, n.grad.cwiseProduct(n.value));
                  });
}

/// Exact GELU: y = x * Phi(x) with Phi the standard normal CDF.
/// dy/dx = Phi(x) + x * phi(x).
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value().unaryExpr(
      [](Scalar x) { return x * detail::norm_cdf(x); });
  int ai = a.index();
  return t.record(std::move(v), a.requires_grad(),
                  [ai](Tape<Scalar>& tp, int self) {
                    const Mat<Scalar>& x = tp.node(ai).value;
                    Mat<Scalar> d = x.unaryExpr([](Scalar xi) {
                      return detail::norm_cdf(xi) + xi * detail::norm_pdf(xi);
                    });
                    tp.accumulate(ai, tp.node(self).grad.cwiseProduct(d));
                  });
}

/// Numerically stable softmax along axis 1 (per row) or axis 0 (per column).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, int axis = 1) {
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  if (axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Scalar m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  int ai = a.index();
  // d/dx_j = y_j * (g_j - sum_k g_k y_k), per row.
  return t.record(std::move(v), a.requires_grad(),
                  [ai](Tape<Scalar>& tp, int self) {
                    const auto& n = tp.node(self);
                    const Mat<Scalar>& y = n.value;
                    const Mat<Scalar>& g = n.grad;
                    Mat<Scalar> d(y.rows(), y.cols());
                    for (Eigen::Index i = 0; i < y.rows(); ++i) {
                      Scalar dot = g.row(i).dot(y.row(i));
                      d.row(i) = y.row(i).cwiseProduct(
                          (g.row(i).array() - dot).matrix());
                    }
                    tp.accumulate(ai, d);
                  });
}

/// Stable log-softmax along axis 1 (per row) or axis 0 (per column).
template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& a, int axis = 1) {
  if (axis == 0) return transpose(log_softmax(transpose(a), 1));
  if (axis != 1) throw ShapeError("log_softmax: axis must be 0 or 1");
  Tape<Scalar>& t = *a.tape();
  Mat<Scalar> v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Scalar m = v.row(i).maxCoeff();
    Scalar lse = m + std::log((v.row(i).array() - m).exp().sum());
    v.row(i).array() -= lse;
  }
  int ai = a.index();
  // d/dx_j = g_j - exp(y_j) * sum_k g_k, per row.
  return t.record(std::move(v), a.requires_grad(),
                  [ai](Tape<Scalar>& tp, int self) {
                    const auto& n = tp.node(self);
                    const Mat<Scalar>& y = n.value;
                    const Mat<Scalar>& g = n.grad;
                    Mat<Scalar> d(y.rows(), y.cols());
                    for (Eigen::Index i = 0; i < y.rows(); ++i) {
                      Scalar gs = g.row(i).sum();
                      d.row(i) = g.row(i) - (y.row(i).array().exp() * gs).matrix();
                    }
                    tp.accumulate(ai, d);
                  });
}

/// Row-wise layer normalization with learned gain and bias (both 1xN).
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& bias, Scalar eps) {
  detail::require_same_tape("layer_norm", x, gain);
  detail::require_same_tape("layer_norm", x, bias);
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols()) {
    throw ShapeError("layer_norm: gain/bias must be 1x" +
                     std::to_string(x.cols()));
  }
  Tape<Scalar>& t = *x.tape();
  const Mat<Scalar>& xv = x.value();
  const Eigen::Index n = xv.cols();
  Mat<Scalar> xhat(xv.rows(), n);
  std::vector<Scalar> inv_std(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    Scalar mu = xv.row(i).mean();
    Scalar var = (xv.row(i).array() - mu).square().mean();
    Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = ((xv.row(i).array() - mu) * is).matrix();
  }
  Mat<Scalar> out = xhat;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = out.row(i).cwiseProduct(gain.value().row(0)) +
                 bias.value().row(0);
  }
  bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  int xi = x.index(), gi = gain.index(), bi = bias.index();
  return t.record(
      std::move(out), rg,
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std), n](
          Tape<Scalar>& tp, int self) {
        const Mat<Scalar>& g = tp.node(self).grad;
        const Mat<Scalar>& gainv = tp.node(gi).value;
        Mat<Scalar> dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          // dxhat = g . gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat.xhat)) / std
          auto dxhat = g.row(i).cwiseProduct(gainv.row(0));
          Scalar m1 = dxhat.sum() / Scalar(n);
          Scalar m2 = dxhat.cwiseProduct(xhat.row(i)).sum() / Scalar(n);
          dx.row(i) = ((dxhat.array() - m1 - xhat.row(i).array() * m2) *
                       inv_std[static_cast<std::size_t>(i)])
                          .matrix();
        }
        tp.accumulate(xi, dx);
        tp.accumulate(gi, g.cwiseProduct(xhat).colwise().sum());
        tp.accumulate(bi, g.colwise().sum());
      });
}

/// Gathers table rows by id: out.row(p) = table.row(ids[p]).
template <typename Scalar>
Tensor<Scalar> embedding_lookup(const Tensor<Scalar>& table,
                                const std::vector<int>& ids) {
  const Mat<Scalar>& tv = table.value();
  for (int id : ids) {
    if (id < 0 || id >= tv.rows()) {
      throw TokenError("embedding_lookup: id " + std::to_string(id) +
                       " outside table with " + std::to_string(tv.rows()) +
                       " rows");
    }
  }
  Tape<Scalar>& t = *table.tape();
  Mat<Scalar> out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t p = 0; p < ids.size(); ++p) {
    out.row(static_cast<Eigen::Index>(p)) = tv.row(ids[p]);
  }
  int ti = table.index();
  return t.record(std::move(out), table.requires_grad(),
                  [ti, ids](Tape<Scalar>& tp, int self) {
                    auto& tn = tp.node_mut(ti);
                    if (!tn.requires_grad) return;
                    const Mat<Scalar>& g = tp.node(self).grad;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      tn.grad.row(ids[p]) +=
                          g.row(static_cast<Eigen::Index>(p));
                    }
                  });
}

/// Adds `patch` into rows [start, start + patch.rows()) of x.
template <typename Scalar>
Tensor<Scalar> add_rows(const Tensor<Scalar>& x, const Tensor<Scalar>& patch,
                        Eigen::Index start) {
  detail::require_same_tape("add_rows", x, patch);
  if (patch.cols() != x.cols() || start < 0 ||
      start + patch.rows() > x.rows()) {
    throw ShapeError("add_rows: patch " +
                     detail::shape_str(patch.rows(), patch.cols()) +
                     " at row " + std::to_string(start) +
                     " does not fit into " +
                     detail::shape_str(x.rows(), x.cols()));
  }
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> out = x.value();
  out.middleRows(start, patch.rows()) += patch.value();
  bool rg = x.requires_grad() || patch.requires_grad();
  int xi = x.index(), pi = patch.index();
  Eigen::Index len = patch.rows();
  return t.record(std::move(out), rg,
                  [xi, pi, start, len](Tape<Scalar>& tp, int self) {
                    const Mat<Scalar>& g = tp.node(self).grad;
                    tp.accumulate(xi, g);
                    tp.accumulate(pi, g.middleRows(start, len));
                  });
}

/// Replaces row `idx` of x with the 1xN vector v.
template <typename Scalar>
Tensor<Scalar> set_row(const Tensor<Scalar>& x, const Tensor<Scalar>& v,
                       Eigen::Index idx) {
  detail::require_same_tape("set_row", x, v);
  if (v.rows() != 1 || v.cols() != x.cols() || idx < 0 || idx >= x.rows()) {
    throw ShapeError("set_row: cannot place " +
                     detail::shape_str(v.rows(), v.cols()) + " at row " +
                     std::to_string(idx) + " of " +
                     detail::shape_str(x.rows(), x.cols()));
  }
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> out = x.value();
  out.row(idx) = v.value().row(0);
  bool rg = x.requires_grad() || v.requires_grad();
  int xi = x.index(), vi = v.index();
  return t.record(std::move(out), rg,
                  [xi, vi, idx](Tape<Scalar>& tp, int self) {
                    const Mat<Scalar>& g = tp.node(self).grad;
                    Mat<Scalar> gx = g;
                    gx.row(idx).setZero();
                    tp.accumulate(xi, gx);
                    tp.accumulate(vi, g.row(idx));
                  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& x, Eigen::Index start,
                          Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(x.rows()) + " rows");
  }
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> v = x.value().middleRows(start, count);
  int xi = x.index();
  return t.record(std::move(v), x.requires_grad(),
                  [xi, start, count](Tape<Scalar>& tp, int self) {
                    auto& xn = tp.node_mut(xi);
                    if (!xn.requires_grad) return;
                    xn.grad.middleRows(start, count) += tp.node(self).grad;
                  });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Eigen::Index start,
                          Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(x.cols()) + " cols");
  }
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> v = x.value().middleCols(start, count);
  int xi = x.index();
  return t.record(std::move(v), x.requires_grad(),
                  [xi, start, count](Tape<Scalar>& tp, int self) {
                    auto& xn = tp.node_mut(xi);
                    if (!xn.requires_grad) return;
                    xn.grad.middleCols(start, count) += tp.node(self).grad;
                  });
}

/// Concatenates tensors with equal row counts along columns.
template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape<Scalar>& t = *parts[0].tape();
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_same_tape("concat_cols", parts[0], p);
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts differ");
    }
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Mat<Scalar> v(rows, cols);
  std::vector<int> idx;
  std::vector<Eigen::Index> offs, widths;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    idx.push_back(p.index());
    offs.push_back(off);
    widths.push_back(p.cols());
    off += p.cols();
  }
  return t.record(std::move(v), rg,
                  [idx, offs, widths](Tape<Scalar>& tp, int self) {
                    const Mat<Scalar>& g = tp.node(self).grad;
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      tp.accumulate(idx[k], g.middleCols(offs[k], widths[k]));
                    }
                  });
}

/// Sum of all entries, as a 1x1 tensor.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> v(1, 1);
  v(0, 0) = x.value().sum();
  int xi = x.index();
  Eigen::Index r = x.rows(), c = x.cols();
  return t.record(std::move(v), x.requires_grad(),
                  [xi, r, c](Tape<Scalar>& tp, int self) {
                    Scalar g = tp.node(self).grad(0, 0);
                    tp.accumulate(xi, Mat<Scalar>::Constant(r, c, g));
                  });
}

/// Mean of all entries, as a 1x1 tensor.
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return scale(sum(x), Scalar(1) / Scalar(x.rows() * x.cols()));
}

/// Gathers entries (rows[i], cols[i]) into a 1xK tensor.
template <typename Scalar>
Tensor<Scalar> pick(const Tensor<Scalar>& x, const std::vector<int>& rows,
                    const std::vector<int>& cols) {
  if (rows.size() != cols.size()) {
    throw ShapeError("pick: row and column index lists differ in length");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows() || cols[i] < 0 ||
        cols[i] >= x.cols()) {
      throw ShapeError("pick: index (" + std::to_string(rows[i]) + ", " +
                       std::to_string(cols[i]) + ") outside " +
                       detail::shape_str(x.rows(), x.cols()));
    }
  }
  Tape<Scalar>& t = *x.tape();
  Mat<Scalar> v(1, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    v(0, static_cast<Eigen::Index>(i)) = x.value()(rows[i], cols[i]);
  }
  int xi = x.index();
  return t.record(std::move(v), x.requires_grad(),
                  [xi, rows, cols](Tape<Scalar>& tp, int self) {
                    auto& xn = tp.node_mut(xi);
                    if (!xn.requires_grad) return;
                    const Mat<Scalar>& g = tp.node(self).grad;
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      xn.grad(rows[i], cols[i]) +=
                          g(0, static_cast<Eigen::Index>(i));
                    }
                  });
}

/// Copies the value into a fresh constant; gradients do not flow past it.
template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& x) {
  return x.tape()->constant(x.value());
}

/// Extracts the value of a 1x1 tensor.
template <typename Scalar>
Scalar scalar_value(const Tensor<Scalar>& x) {
  if (x.rows() != 1 || x.cols() != 1) {
    throw ShapeError("scalar_value: tensor is " +
                     detail::shape_str(x.rows(), x.cols()));
  }
  return x.value()(0, 0);
}

/// Mean negative log-likelihood of `targets` under the last targets.size()
/// rows of a row-wise log-probability matrix. Row logprobs.row(R - K + i)
/// scores targets[i].
template <typename Scalar>
Tensor<Scalar> nll_loss(const Tensor<Scalar>& logprobs,
                        const std::vector<int>& targets) {
  if (targets.empty()) throw ShapeError("nll_loss: no targets");
  const Eigen::Index rows = logprobs.rows();
  const auto k = static_cast<Eigen::Index>(targets.size());
  if (k > rows) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) +
                     " targets but only " + std::to_string(rows) + " rows");
  }
  std::vector<int> ridx(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ridx[i] = static_cast<int>(rows - k) + static_cast<int>(i);
    if (targets[i] < 0 || targets[i] >= logprobs.cols()) {
      throw TokenError("nll_loss: target id " + std::to_string(targets[i]) +
                       " outside vocabulary of " +
                       std::to_string(logprobs.cols()));
    }
  }
  return scale(sum(pick(logprobs, ridx, targets)), Scalar(-1) / Scalar(k));
}

/// KL(P || Q) between row-wise distributions given as logits, summed over
/// rows. P is treated as a constant: gradients flow only into q_logits.
template <typename Scalar>
Tensor<Scalar> kl_divergence(const Tensor<Scalar>& p_logits,
                             const Tensor<Scalar>& q_logits) {
  detail::require_same_tape("kl_divergence", p_logits, q_logits);
  detail::require_same_shape("kl_divergence", p_logits, q_logits);
  Tensor<Scalar> lp = log_softmax(detach(p_logits), 1);
  Tensor<Scalar> lq = log_softmax(q_logits, 1);
  return sum(mul(exp(lp), sub(lp, lq)));
}

}  // namespace swea::ad
