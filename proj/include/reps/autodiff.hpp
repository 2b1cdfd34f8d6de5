// Minimal reverse-mode differentiation over dense 2-D double tensors.
//
// A Tape records every operation of one forward pass; Tensor is a lightweight
// handle into it. Parameters live outside the tape and receive accumulated
// gradients when backward() runs. Tapes are single-threaded and rebuilt per
// forward pass.

#ifndef REPS_AUTODIFF_HPP
#define REPS_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reps/error.hpp"
#include "reps/point_cloud.hpp"

namespace reps::ad {

using reps::Matrix;

struct Parameter {
  std::string name;
  Matrix value;
  mutable Matrix grad;  // accumulation buffer, not model state

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Copying a Tensor does not copy data.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Gradient after backward(); empty when the node received none.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::vector<std::size_t> shape() const { return {std::size_t(rows()), std::size_t(cols())}; }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value) { return push(std::move(value), false, nullptr, {}); }
  Tensor variable(Matrix value) { return push(std::move(value), true, nullptr, {}); }
  Tensor parameter(const Parameter& p) { return push(p.value, true, &p, {}); }

  /// Record an op whose output is `value`. `backward` receives the tape and the
  /// output node id; it should read grad(self) and call accumulate() on inputs.
  /// Any parent requiring gradients makes the output require them.
  Tensor record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward,
                const char* op = "op") {
    bool rg = false;
    for (const Tensor& p : parents) {
      if (p.tape() != this) throw InvalidArgument(std::string(op) + ": operand from a different tape");
      rg = rg || nodes_[p.id()].requires_grad;
    }
    if (!value.allFinite()) throw InvalidState(std::string(op) + ": non-finite value");
    return push(std::move(value), rg, nullptr, rg ? std::move(backward) : BackwardFn{});
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  template <class Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  /// Reverse accumulation from a scalar loss; parameter grads are added to.
  void backward(const Tensor& loss) {
    if (loss.tape() != this) throw InvalidArgument("backward: loss from a different tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw InvalidArgument("backward: loss must be scalar");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  Tensor push(Matrix value, bool requires_grad, const Parameter* param, BackwardFn fn) {
    if (!value.allFinite()) throw InvalidState("non-finite tensor value");
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, param, std::move(fn)});
    return Tensor(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(id_); }
inline const Matrix& Tensor::grad() const { return tape_->grad(id_); }
inline double Tensor::scalar() const {
  if (rows() != 1 || cols() != 1) throw InvalidArgument("scalar(): tensor is not 1x1");
  return value()(0, 0);
}

// =============================================================================
// Primitive ops
// =============================================================================

namespace detail {

inline void same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape())
    throw InvalidArgument(std::string(op) + ": operands must share a tape");
}

inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
  }, "matmul");
}

inline Tensor transpose(const Tensor& a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(a.value().transpose(), {a}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).transpose());
  }, "transpose");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate_expr(ib, -tp.grad(self));
  }, "sub");
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate_expr(ia, g.cwiseProduct(tp.value(ib)));
    tp.accumulate_expr(ib, g.cwiseProduct(tp.value(ia)));
  }, "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value() * s, {a}, [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self) * s);
  }, "scale");
}

/// a (n x c) + row (1 x c) broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  detail::same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("add_row: row must be 1 x cols");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g);
    tp.accumulate_expr(ir, g.colwise().sum());
  }, "add_row");
}

inline Tensor relu(const Tensor& a) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate_expr(ia, (x.array() > 0.0).select(tp.grad(self), 0.0));
  }, "relu");
}

namespace detail {

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Given y = softmax_rows(s) and dL/dy, returns dL/ds.
inline Matrix softmax_rows_backward(const Matrix& y, const Matrix& gy) {
  const Eigen::VectorXd dot = (gy.cwiseProduct(y)).rowwise().sum();
  return y.cwiseProduct(gy - dot.replicate(1, gy.cols()));
}

}  // namespace detail

inline Tensor softmax_rows(const Tensor& a) {
  if (a.cols() == 0) throw InvalidArgument("softmax_rows: empty rows");
  Matrix y = detail::softmax_rows_value(a.value());
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, detail::softmax_rows_backward(tp.value(self), tp.grad(self)));
  }, "softmax_rows");
}

/// Column-wise max over contiguous groups of `group` rows: (g*m) x c -> m x c.
/// Ties route the gradient to the first maximal row.
inline Tensor segment_max_rows(const Tensor& a, std::size_t group) {
  if (group == 0 || a.rows() % Eigen::Index(group) != 0) throw InvalidArgument("segment_max_rows: bad group size");
  const Eigen::Index g = Eigen::Index(group), m = a.rows() / g, c = a.cols();
  const Matrix& x = a.value();
  Matrix out(m, c);
  auto arg = std::make_shared<std::vector<Eigen::Index>>(std::size_t(m * c));
  for (Eigen::Index s = 0; s < m; ++s)
    for (Eigen::Index j = 0; j < c; ++j) {
      Eigen::Index best = s * g;
      for (Eigen::Index r = s * g + 1; r < (s + 1) * g; ++r)
        if (x(r, j) > x(best, j)) best = r;
      out(s, j) = x(best, j);
      (*arg)[std::size_t(s * c + j)] = best;
    }
  const std::size_t ia = a.id();
  const Eigen::Index rows = a.rows();
  return a.tape()->record(std::move(out), {a}, [ia, arg, m, c, rows](Tape& tp, std::size_t self) {
    const Matrix& gy = tp.grad(self);
    Matrix gx = Matrix::Zero(rows, c);
    for (Eigen::Index s = 0; s < m; ++s)
      for (Eigen::Index j = 0; j < c; ++j) gx((*arg)[std::size_t(s * c + j)], j) += gy(s, j);
    tp.accumulate(ia, gx);
  }, "segment_max_rows");
}

inline Tensor max_pool_rows(const Tensor& a) {
  if (a.rows() == 0) throw InvalidArgument("max_pool_rows: no rows");
  return segment_max_rows(a, std::size_t(a.rows()));
}

/// Sum over contiguous groups of `group` rows: (g*m) x c -> m x c.
inline Tensor segment_sum_rows(const Tensor& a, std::size_t group) {
  if (group == 0 || a.rows() % Eigen::Index(group) != 0) throw InvalidArgument("segment_sum_rows: bad group size");
  const Eigen::Index g = Eigen::Index(group), m = a.rows() / g;
  Matrix out = Matrix::Zero(m, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.row(r / g) += a.value().row(r);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, g, m](Tape& tp, std::size_t self) {
    const Matrix& gy = tp.grad(self);
    Matrix gx(m * g, gy.cols());
    for (Eigen::Index r = 0; r < m * g; ++r) gx.row(r) = gy.row(r / g);
    tp.accumulate(ia, gx);
  }, "segment_sum_rows");
}

inline Tensor mean_pool_rows(const Tensor& a) {
  if (a.rows() == 0) throw InvalidArgument("mean_pool_rows: no rows");
  return scale(segment_sum_rows(a, std::size_t(a.rows())), 1.0 / double(a.rows()));
}

/// Euclidean norm of each row: n x c -> n x 1. Zero rows get a zero subgradient.
inline Tensor l2_norm_rows(const Tensor& a) {
  Matrix out = a.value().rowwise().norm();
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    const Matrix& n = tp.value(self);
    const Matrix& gy = tp.grad(self);
    Matrix gx(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (n(r, 0) > 0) gx.row(r) = (gy(r, 0) / n(r, 0)) * x.row(r);
      else gx.row(r).setZero();
    tp.accumulate(ia, gx);
  }, "l2_norm_rows");
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, Matrix::Constant(r, c, tp.grad(self)(0, 0)));
  }, "sum");
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) throw InvalidArgument("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g.leftCols(ca));
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.rightCols(cb));
  }, "concat_cols");
}

/// Rows `idx` of `a`, repeats allowed.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  for (std::size_t i : idx)
    if (i >= std::size_t(a.rows())) throw InvalidArgument("gather_rows: index out of range");
  Matrix out = reps::gather_rows(a.value(), idx);
  auto keep = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, keep, r, c](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix gx = Matrix::Zero(r, c);
    for (std::size_t k = 0; k < keep->size(); ++k) gx.row(Eigen::Index((*keep)[k])) += g.row(Eigen::Index(k));
    tp.accumulate(ia, gx);
  }, "gather_rows");
}

/// Row-major reshape.
inline Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw InvalidArgument("reshape: element count differs");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const std::size_t ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, r0, c0](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, Eigen::Map<const Matrix>(tp.grad(self).data(), r0, c0));
  }, "reshape");
}

/// Cross-entropy of a 1 x C logit row against `label`.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rows() != 1 || label >= std::size_t(logits.cols()))
    throw InvalidArgument("cross_entropy: expects 1 x C logits and label < C");
  const Matrix& z = logits.value();
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(0, Eigen::Index(label));
  const std::size_t il = logits.id();
  return logits.tape()->record(std::move(out), {logits}, [il, label](Tape& tp, std::size_t self) {
    Matrix p = detail::softmax_rows_value(tp.value(il));
    p(0, Eigen::Index(label)) -= 1.0;
    tp.accumulate_expr(il, p * tp.grad(self)(0, 0));
  }, "cross_entropy");
}

// =============================================================================
// Attention
// =============================================================================

namespace detail {

// softmax(X X^T / sqrt(d)) X for the rows [r0, r0 + n) of x; writes weights too.
inline void attention_block(const Matrix& x, Eigen::Index r0, Eigen::Index n, Matrix& out, Matrix& weights) {
  const auto blk = x.middleRows(r0, n);
  const double inv = 1.0 / std::sqrt(double(x.cols()));
  weights = softmax_rows_value((blk * blk.transpose()) * inv);
  out.middleRows(r0, n) = weights * blk;
}

}  // namespace detail

/// Parameter-free self-attention applied independently to each contiguous
/// block of `group` rows: softmax(X X^T / sqrt(d)) X.
inline Tensor segment_self_attention(const Tensor& x, std::size_t group) {
  if (x.cols() == 0) throw InvalidArgument("self_attention: feature width must be positive");
  if (group == 0 || x.rows() % Eigen::Index(group) != 0)
    throw InvalidArgument("self_attention: rows must be a multiple of the group size");
  const Eigen::Index g = Eigen::Index(group), blocks = x.rows() / g;
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  auto weights = std::make_shared<std::vector<Matrix>>(std::size_t(blocks));
  for (Eigen::Index b = 0; b < blocks; ++b) detail::attention_block(xv, b * g, g, out, (*weights)[std::size_t(b)]);

  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, weights, g, blocks](Tape& tp, std::size_t self) {
    const Matrix& xv2 = tp.value(ix);
    const Matrix& gy = tp.grad(self);
    const double inv = 1.0 / std::sqrt(double(xv2.cols()));
    Matrix gx(xv2.rows(), xv2.cols());
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const auto xb = xv2.middleRows(b * g, g);
      const auto gb = gy.middleRows(b * g, g);
      const Matrix& a = (*weights)[std::size_t(b)];
      const Matrix ga = gb * xb.transpose();
      const Matrix gs = detail::softmax_rows_backward(a, ga) * inv;
      gx.middleRows(b * g, g) = a.transpose() * gb + (gs + gs.transpose()) * xb;
    }
    tp.accumulate(ix, gx);
  }, "self_attention");
}

inline Tensor self_attention(const Tensor& x) {
  if (x.rows() == 0) throw InvalidArgument("self_attention: need at least one row");
  return segment_self_attention(x, std::size_t(x.rows()));
}

// =============================================================================
// Gradient checking
// =============================================================================

struct GradientCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Denominator floor in |a - b| / max(|a|, |b|, floor).
  double floor = 1e-3;
  /// Check at most this many coordinates per tensor (0 = all), chosen by seed.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// When the central difference disagrees, accept the coordinate if the two
  /// one-sided differences disagree with each other (a ReLU or max switch lies
  /// within eps) and the analytic value matches one of them within tol.
  bool resolve_kinks = false;
};

struct GradientCheckReport {
  std::vector<double> relative_errors;
  double max_relative_error = 0;
  bool passed = true;
  /// Coordinates accepted through their one-sided differences.
  std::size_t kinks = 0;
};

namespace detail {

inline std::vector<Eigen::Index> pick_coords(Eigen::Index size, const GradientCheckOptions& o, std::uint64_t salt) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(size));
  for (Eigen::Index i = 0; i < size; ++i) all[std::size_t(i)] = i;
  if (o.max_coords == 0 || all.size() <= o.max_coords) return all;
  std::mt19937_64 rng(o.seed ^ (salt * 0x9E3779B97F4A7C15ULL));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(o.max_coords);
  std::sort(all.begin(), all.end());
  return all;
}

inline double checked(double v) {
  if (!std::isfinite(v)) throw InvalidState("gradient_check: non-finite evaluation");
  return v;
}

inline double rel_diff(double a, double b, const GradientCheckOptions& o) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), o.floor});
}

inline void record_error(GradientCheckReport& rep, double analytic, double f0, double fp, double fm,
                         const GradientCheckOptions& o) {
  double err = rel_diff(analytic, (fp - fm) / (2 * o.eps), o);
  if (err >= o.tol && o.resolve_kinks) {
    const double fwd = (fp - f0) / o.eps, bwd = (f0 - fm) / o.eps;
    const double side = std::min(rel_diff(analytic, fwd, o), rel_diff(analytic, bwd, o));
    if (rel_diff(fwd, bwd, o) >= 10 * o.tol && side < o.tol) {
      err = side;
      ++rep.kinks;
    }
  }
  rep.relative_errors.push_back(err);
  rep.max_relative_error = std::max(rep.max_relative_error, err);
  rep.passed = rep.passed && err < o.tol;
}

}  // namespace detail

using TensorFunction = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares tape gradients of scalar f at x against central differences.
inline GradientCheckReport gradient_check(const TensorFunction& f, const Matrix& x, GradientCheckOptions opt = {}) {
  Tape tape;
  Tensor xt = tape.variable(x);
  Tensor y = f(tape, xt);
  const double f0 = detail::checked(y.scalar());
  tape.backward(y);
  const Matrix analytic = xt.grad().size() ? xt.grad() : Matrix::Zero(x.rows(), x.cols());

  auto eval = [&](const Matrix& at) {
    Tape t;
    return detail::checked(f(t, t.variable(at)).scalar());
  };
  GradientCheckReport rep;
  Matrix probe = x;
  for (Eigen::Index i : detail::pick_coords(x.size(), opt, 1)) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + opt.eps;
    const double fp = eval(probe);
    probe.data()[i] = orig - opt.eps;
    const double fm = eval(probe);
    probe.data()[i] = orig;
    detail::record_error(rep, analytic.data()[i], f0, fp, fm, opt);
  }
  return rep;
}

/// Same check over a set of parameters; f builds a fresh forward on each call.
/// Parameter values are restored before returning.
inline GradientCheckReport gradient_check_parameters(const std::function<Tensor(Tape&)>& f,
                                                     std::span<Parameter* const> params,
                                                     GradientCheckOptions opt = {}) {
  for (Parameter* p : params) p->zero_grad();
  double f0 = 0;
  {
    Tape tape;
    Tensor y = f(tape);
    f0 = detail::checked(y.scalar());
    tape.backward(y);
  }
  auto eval = [&] {
    Tape t;
    return detail::checked(f(t).scalar());
  };
  GradientCheckReport rep;
  std::uint64_t salt = 1;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i : detail::pick_coords(p->value.size(), opt, salt++)) {
      double& v = p->value.data()[i];
      const double orig = v;
      v = orig + opt.eps;
      const double fp = eval();
      v = orig - opt.eps;
      const double fm = eval();
      v = orig;
      detail::record_error(rep, analytic.data()[i], f0, fp, fm, opt);
    }
  }
  return rep;
}

}  // namespace reps::ad

#endif  // REPS_AUTODIFF_HPP
