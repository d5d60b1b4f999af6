#include "capsule_nlu/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace capsnlu {

namespace {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Map = Eigen::Map<EMat<S>>;
template <typename S>
using CMap = Eigen::Map<const EMat<S>>;

template <typename S>
bool any_grad(std::initializer_list<const Tensor<S>*> ts) {
  for (const Tensor<S>* t : ts) {
    if (t->needs_grad()) return true;
  }
  return false;
}

void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(s));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

template <typename S>
Tensor<S> Tape<S>::make_result(Shape shape, bool needs_grad) {
  auto n = std::make_shared<TensorNode<S>>();
  n->value.assign(static_cast<size_t>(numel(shape)), S(0));
  n->shape = std::move(shape);
  n->needs_grad = needs_grad;
  return Tensor<S>(std::move(n));
}

template <typename S>
void Tape<S>::finish(Tensor<S>& out, std::initializer_list<const Tensor<S>*>,
                     std::function<void()> backward_fn) {
  if (check_finite_) out.assert_finite("tape op output");
  if (out.needs_grad()) steps_.push_back(std::move(backward_fn));
}

// --- matmul ---------------------------------------------------------------

template <typename S>
Tensor<S> Tape<S>::matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a, bool trans_b) {
  require_rank2(a.shape(), "matmul");
  require_rank2(b.shape(), "matmul");
  const int m = trans_a ? a.dim(1) : a.dim(0);
  const int ka = trans_a ? a.dim(0) : a.dim(1);
  const int kb = trans_b ? b.dim(1) : b.dim(0);
  const int n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                         (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) + (trans_b ? "^T" : ""));
  }

  Tensor<S> out = make_result({m, n}, any_grad<S>({&a, &b}));
  {
    CMap<S> A(a.value().data(), a.dim(0), a.dim(1));
    CMap<S> B(b.value().data(), b.dim(0), b.dim(1));
    Map<S> C(out.value().data(), m, n);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }

  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  finish(out, {&a, &b}, [an, bn, on, trans_a, trans_b, m, n]() {
    on->ensure_grad();
    CMap<S> A(an->value.data(), an->shape[0], an->shape[1]);
    CMap<S> B(bn->value.data(), bn->shape[0], bn->shape[1]);
    CMap<S> G(on->grad.data(), m, n);
    if (an->needs_grad) {
      an->ensure_grad();
      Map<S> dA(an->grad.data(), an->shape[0], an->shape[1]);
      if (!trans_a && !trans_b) dA.noalias() += G * B.transpose();
      else if (trans_a && !trans_b) dA.noalias() += B * G.transpose();
      else if (!trans_a && trans_b) dA.noalias() += G * B;
      else dA.noalias() += B.transpose() * G.transpose();
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      Map<S> dB(bn->grad.data(), bn->shape[0], bn->shape[1]);
      if (!trans_a && !trans_b) dB.noalias() += A.transpose() * G;
      else if (trans_a && !trans_b) dB.noalias() += A * G;
      else if (!trans_a && trans_b) dB.noalias() += G.transpose() * A;
      else dB.noalias() += G.transpose() * A.transpose();
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::transpose(const Tensor<S>& x) {
  require_rank2(x.shape(), "transpose");
  const int r = x.dim(0), c = x.dim(1);
  Tensor<S> out = make_result({c, r}, x.needs_grad());
  {
    CMap<S> X(x.value().data(), r, c);
    Map<S> Y(out.value().data(), c, r);
    Y = X.transpose();
  }
  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, r, c]() {
    on->ensure_grad();
    xn->ensure_grad();
    CMap<S> G(on->grad.data(), c, r);
    Map<S> dX(xn->grad.data(), r, c);
    dX += G.transpose();
  });
  return out;
}

// --- elementwise ------------------------------------------------------------

template <typename S>
Tensor<S> Tape<S>::add(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> out = make_result(a.shape(), any_grad<S>({&a, &b}));
  const auto av = a.value(), bv = b.value();
  auto ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];

  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  finish(out, {&a, &b}, [an, bn, on]() {
    on->ensure_grad();
    if (an->needs_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::mul(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> out = make_result(a.shape(), any_grad<S>({&a, &b}));
  const auto av = a.value(), bv = b.value();
  auto ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];

  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  finish(out, {&a, &b}, [an, bn, on]() {
    on->ensure_grad();
    if (an->needs_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::add_col_broadcast(const Tensor<S>& m, const Tensor<S>& col) {
  require_rank2(m.shape(), "add_col_broadcast");
  if (col.rank() != 2 || col.dim(1) != 1 || col.dim(0) != m.dim(0)) {
    throw DimensionError("add_col_broadcast: bias must be " + std::to_string(m.dim(0)) +
                         "x1, got " + shape_str(col.shape()));
  }
  const int r = m.dim(0), c = m.dim(1);
  Tensor<S> out = make_result({r, c}, any_grad<S>({&m, &col}));
  const auto mv = m.value(), bv = col.value();
  auto ov = out.value();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) ov[static_cast<size_t>(i) * c + j] = mv[static_cast<size_t>(i) * c + j] + bv[static_cast<size_t>(i)];
  }

  auto mn = m.shared_node(), cn = col.shared_node(), on = out.shared_node();
  finish(out, {&m, &col}, [mn, cn, on, r, c]() {
    on->ensure_grad();
    if (mn->needs_grad) {
      mn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
    }
    if (cn->needs_grad) {
      cn->ensure_grad();
      for (int i = 0; i < r; ++i) {
        S acc = S(0);
        for (int j = 0; j < c; ++j) acc += on->grad[static_cast<size_t>(i) * c + j];
        cn->grad[static_cast<size_t>(i)] += acc;
      }
    }
  });
  return out;
}

namespace {

// Shared scaffolding for unary elementwise ops: fwd maps x->y, bwd maps
// (x, y, g) -> dx contribution.
template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(Tape<S>& tape, const Tensor<S>& x, Fwd fwd, Bwd bwd,
                   std::vector<std::function<void()>>& steps, bool check_finite,
                   const char* name) {
  (void)tape;
  (void)name;
  auto on = std::make_shared<TensorNode<S>>();
  on->shape = x.shape();
  on->needs_grad = x.needs_grad();
  on->value.resize(x.value().size());
  const auto xv = x.value();
  for (size_t i = 0; i < xv.size(); ++i) on->value[i] = fwd(xv[i]);
  Tensor<S> out(on);
  if (check_finite) out.assert_finite("tape op output");
  if (on->needs_grad) {
    auto xn = x.shared_node();
    steps.push_back([xn, on, bwd]() {
      on->ensure_grad();
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        xn->grad[i] += bwd(xn->value[i], on->value[i], on->grad[i]);
      }
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> Tape<S>::tanh(const Tensor<S>& x) {
  return unary_op<S>(
      *this, x, [](S v) { return std::tanh(v); },
      [](S, S y, S g) { return g * (S(1) - y * y); }, steps_, check_finite_, "tanh");
}

template <typename S>
Tensor<S> Tape<S>::sigmoid(const Tensor<S>& x) {
  return unary_op<S>(
      *this, x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
      [](S, S y, S g) { return g * y * (S(1) - y); }, steps_, check_finite_, "sigmoid");
}

template <typename S>
Tensor<S> Tape<S>::relu(const Tensor<S>& x) {
  return unary_op<S>(
      *this, x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S, S g) { return v > S(0) ? g : S(0); }, steps_, check_finite_, "relu");
}

template <typename S>
Tensor<S> Tape<S>::log(const Tensor<S>& x) {
  for (S v : x.value()) {
    if (!(v > S(0))) throw NumericError("log: input must be positive, got " + std::to_string(static_cast<double>(v)));
  }
  return unary_op<S>(
      *this, x, [](S v) { return std::log(v); },
      [](S v, S, S g) { return g / v; }, steps_, check_finite_, "log");
}

template <typename S>
Tensor<S> Tape<S>::clamp_min(const Tensor<S>& x, S lo) {
  return unary_op<S>(
      *this, x, [lo](S v) { return v > lo ? v : lo; },
      [lo](S v, S, S g) { return v > lo ? g : S(0); }, steps_, check_finite_, "clamp_min");
}

template <typename S>
Tensor<S> Tape<S>::scale_add(const Tensor<S>& x, S a, S b) {
  return unary_op<S>(
      *this, x, [a, b](S v) { return a * v + b; },
      [a](S, S, S g) { return a * g; }, steps_, check_finite_, "scale_add");
}

// --- structure --------------------------------------------------------------

template <typename S>
Tensor<S> Tape<S>::concat_rows(std::span<const Tensor<S>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const int c = parts[0].dim(1);
  int rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require_rank2(p.shape(), "concat_rows");
    if (p.dim(1) != c) {
      throw DimensionError("concat_rows: column counts disagree: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    needs = needs || p.needs_grad();
  }
  Tensor<S> out = make_result({rows, c}, needs);
  auto ov = out.value();
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), ov.begin() + off);
    off += p.value().size();
  }

  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.shared_node());
  auto on = out.shared_node();
  finish(out, {}, [nodes, on]() {
    on->ensure_grad();
    size_t off = 0;
    for (const auto& pn : nodes) {
      const size_t len = pn->value.size();
      if (pn->needs_grad) {
        pn->ensure_grad();
        for (size_t i = 0; i < len; ++i) pn->grad[i] += on->grad[off + i];
      }
      off += len;
    }
  });
  // finish() skips recording when the result does not need a gradient, but
  // the lambda above was already built; guard is inside finish.
  return out;
}

template <typename S>
Tensor<S> Tape<S>::concat_cols(std::span<const Tensor<S>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int r = parts[0].dim(0);
  int cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require_rank2(p.shape(), "concat_cols");
    if (p.dim(0) != r) {
      throw DimensionError("concat_cols: row counts disagree: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    cols += p.dim(1);
    needs = needs || p.needs_grad();
  }
  Tensor<S> out = make_result({r, cols}, needs);
  auto ov = out.value();
  int col_off = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    const auto pv = p.value();
    for (int i = 0; i < r; ++i) {
      std::copy(pv.begin() + static_cast<size_t>(i) * pc, pv.begin() + static_cast<size_t>(i + 1) * pc,
                ov.begin() + static_cast<size_t>(i) * cols + col_off);
    }
    col_off += pc;
  }

  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.shared_node());
  auto on = out.shared_node();
  finish(out, {}, [nodes, on, r, cols]() {
    on->ensure_grad();
    int col_off = 0;
    for (const auto& pn : nodes) {
      const int pc = pn->shape[1];
      if (pn->needs_grad) {
        pn->ensure_grad();
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < pc; ++j) {
            pn->grad[static_cast<size_t>(i) * pc + j] += on->grad[static_cast<size_t>(i) * cols + col_off + j];
          }
        }
      }
      col_off += pc;
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::select_row(const Tensor<S>& x, int r) {
  require_rank2(x.shape(), "select_row");
  if (r < 0 || r >= x.dim(0)) {
    throw DimensionError("select_row: index " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  }
  const int c = x.dim(1);
  Tensor<S> out = make_result({1, c}, x.needs_grad());
  std::copy_n(x.value().begin() + static_cast<size_t>(r) * c, c, out.value().begin());

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, r, c]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (int j = 0; j < c; ++j) xn->grad[static_cast<size_t>(r) * c + j] += on->grad[static_cast<size_t>(j)];
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::select_col(const Tensor<S>& x, int c) {
  require_rank2(x.shape(), "select_col");
  if (c < 0 || c >= x.dim(1)) {
    throw DimensionError("select_col: index " + std::to_string(c) + " out of range for " + shape_str(x.shape()));
  }
  const int r = x.dim(0), cols = x.dim(1);
  Tensor<S> out = make_result({r, 1}, x.needs_grad());
  auto ov = out.value();
  const auto xv = x.value();
  for (int i = 0; i < r; ++i) ov[static_cast<size_t>(i)] = xv[static_cast<size_t>(i) * cols + c];

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, r, cols, c]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (int i = 0; i < r; ++i) xn->grad[static_cast<size_t>(i) * cols + c] += on->grad[static_cast<size_t>(i)];
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::slice_rows(const Tensor<S>& x, int r0, int r1) {
  require_rank2(x.shape(), "slice_rows");
  if (r0 < 0 || r1 <= r0 || r1 > x.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const int c = x.dim(1), rows = r1 - r0;
  Tensor<S> out = make_result({rows, c}, x.needs_grad());
  std::copy_n(x.value().begin() + static_cast<size_t>(r0) * c, static_cast<size_t>(rows) * c, out.value().begin());

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, r0, rows, c]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (size_t i = 0; i < static_cast<size_t>(rows) * c; ++i) {
      xn->grad[static_cast<size_t>(r0) * c + i] += on->grad[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::select_rows(const Tensor<S>& x, std::span<const int> rows) {
  require_rank2(x.shape(), "select_rows");
  if (rows.empty()) throw DimensionError("select_rows: no indices");
  const int c = x.dim(1);
  for (int r : rows) {
    if (r < 0 || r >= x.dim(0)) {
      throw DimensionError("select_rows: index " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
    }
  }
  Tensor<S> out = make_result({static_cast<int>(rows.size()), c}, x.needs_grad());
  auto ov = out.value();
  const auto xv = x.value();
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(xv.begin() + static_cast<size_t>(rows[i]) * c, c, ov.begin() + i * c);
  }

  std::vector<int> idx(rows.begin(), rows.end());
  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, idx = std::move(idx), c]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < c; ++j) {
        xn->grad[static_cast<size_t>(idx[i]) * c + j] += on->grad[i * c + j];
      }
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::select_matrix(const Tensor<S>& x3, int k) {
  if (x3.rank() != 3) throw DimensionError("select_matrix: expected rank-3 tensor, got " + shape_str(x3.shape()));
  if (k < 0 || k >= x3.dim(0)) {
    throw DimensionError("select_matrix: index " + std::to_string(k) + " out of range for " + shape_str(x3.shape()));
  }
  const int r = x3.dim(1), c = x3.dim(2);
  const size_t len = static_cast<size_t>(r) * c;
  Tensor<S> out = make_result({r, c}, x3.needs_grad());
  std::copy_n(x3.value().begin() + static_cast<size_t>(k) * len, len, out.value().begin());

  auto xn = x3.shared_node(), on = out.shared_node();
  finish(out, {&x3}, [xn, on, k, len]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (size_t i = 0; i < len; ++i) xn->grad[static_cast<size_t>(k) * len + i] += on->grad[i];
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::gather_entries(const Tensor<S>& x, std::span<const int> rows, std::span<const int> cols) {
  require_rank2(x.shape(), "gather_entries");
  if (rows.size() != cols.size() || rows.empty()) {
    throw DimensionError("gather_entries: row/col index lists must be parallel and non-empty");
  }
  const int nr = x.dim(0), nc = x.dim(1);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= nr || cols[i] < 0 || cols[i] >= nc) {
      throw DimensionError("gather_entries: entry (" + std::to_string(rows[i]) + "," + std::to_string(cols[i]) +
                           ") out of range for " + shape_str(x.shape()));
    }
  }
  Tensor<S> out = make_result({static_cast<int>(rows.size()), 1}, x.needs_grad());
  auto ov = out.value();
  const auto xv = x.value();
  for (size_t i = 0; i < rows.size(); ++i) {
    ov[i] = xv[static_cast<size_t>(rows[i]) * nc + cols[i]];
  }

  std::vector<int> rs(rows.begin(), rows.end()), cs(cols.begin(), cols.end());
  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, rs = std::move(rs), cs = std::move(cs), nc]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (size_t i = 0; i < rs.size(); ++i) {
      xn->grad[static_cast<size_t>(rs[i]) * nc + cs[i]] += on->grad[i];
    }
  });
  return out;
}

// --- reductions -------------------------------------------------------------

template <typename S>
Tensor<S> Tape<S>::softmax(const Tensor<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const auto& shape = x.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
  const int64_t n = shape[static_cast<size_t>(axis)];

  Tensor<S> out = make_result(shape, x.needs_grad());
  const auto xv = x.value();
  auto ov = out.value();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      S mx = xv[static_cast<size_t>(base)];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xv[static_cast<size_t>(base + j * inner)]);
      S sum = S(0);
      for (int64_t j = 0; j < n; ++j) {
        const S e = std::exp(xv[static_cast<size_t>(base + j * inner)] - mx);
        ov[static_cast<size_t>(base + j * inner)] = e;
        sum += e;
      }
      for (int64_t j = 0; j < n; ++j) ov[static_cast<size_t>(base + j * inner)] /= sum;
    }
  }

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, outer, inner, n]() {
    on->ensure_grad();
    xn->ensure_grad();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * n * inner + in;
        S dot = S(0);
        for (int64_t j = 0; j < n; ++j) {
          const size_t idx = static_cast<size_t>(base + j * inner);
          dot += on->grad[idx] * on->value[idx];
        }
        for (int64_t j = 0; j < n; ++j) {
          const size_t idx = static_cast<size_t>(base + j * inner);
          xn->grad[idx] += on->value[idx] * (on->grad[idx] - dot);
        }
      }
    }
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::l2_norm(const Tensor<S>& x) {
  Tensor<S> out = make_result({1}, x.needs_grad());
  S ss = S(0);
  for (S v : x.value()) ss += v * v;
  const S norm = std::sqrt(ss);
  out.value()[0] = norm;

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on, norm]() {
    on->ensure_grad();
    xn->ensure_grad();
    if (norm > S(0)) {
      const S g = on->grad[0];
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g * xn->value[i] / norm;
    }
    // norm == 0: subgradient fixed to the zero vector
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::squash(const Tensor<S>& s) {
  Tensor<S> out = make_result(s.shape(), s.needs_grad());
  S ss = S(0);
  for (S v : s.value()) ss += v * v;
  const S norm = std::sqrt(ss);
  // v = (|s|^2/(1+|s|^2)) * s/|s| = s * |s|/(1+|s|^2)
  const S factor = norm > S(0) ? norm / (S(1) + ss) : S(0);
  const auto sv = s.value();
  auto ov = out.value();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = sv[i] * factor;

  auto sn = s.shared_node(), on = out.shared_node();
  finish(out, {&s}, [sn, on, norm, ss, factor]() {
    on->ensure_grad();
    sn->ensure_grad();
    if (norm > S(0)) {
      S sg = S(0);
      for (size_t i = 0; i < on->grad.size(); ++i) sg += sn->value[i] * on->grad[i];
      const S denom = (S(1) + ss) * (S(1) + ss) * norm;
      const S coef = sg * (S(1) - ss) / denom;
      for (size_t i = 0; i < on->grad.size(); ++i) {
        sn->grad[i] += on->grad[i] * factor + sn->value[i] * coef;
      }
    }
    // at s = 0 the Jacobian is 0 (squash is quadratic near the origin)
  });
  return out;
}

template <typename S>
Tensor<S> Tape<S>::sum_all(const Tensor<S>& x) {
  Tensor<S> out = make_result({1}, x.needs_grad());
  S acc = S(0);
  for (S v : x.value()) acc += v;
  out.value()[0] = acc;

  auto xn = x.shared_node(), on = out.shared_node();
  finish(out, {&x}, [xn, on]() {
    on->ensure_grad();
    xn->ensure_grad();
    const S g = on->grad[0];
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
  return out;
}

// --- driver -----------------------------------------------------------------

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = S(1);
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace capsnlu
