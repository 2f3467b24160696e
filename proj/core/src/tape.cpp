#include "opc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "opc/error.hpp"
#include "opc/linalg.hpp"

namespace opc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  fail_numeric(std::string(op) + ": shapes " + a.shape_string() + " and " +
               b.shape_string() + " do not conform");
}

Tape* common_tape(std::initializer_list<const Var*> vars) {
  Tape* tape = nullptr;
  for (const Var* v : vars) {
    if (!v->tracked()) continue;
    if (tape && tape != v->tape()) fail_numeric("op spans two different tapes");
    tape = v->tape();
  }
  return tape;
}

// ---- broadcasting ----

std::vector<std::size_t> broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  std::size_t rank = std::max(a.rank(), b.rank());
  std::vector<std::size_t> out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < a.rank() ? a.shape()[a.rank() - 1 - i] : 1;
    std::size_t db = i < b.rank() ? b.shape()[b.rank() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

template <class F>
Tensor broadcast_apply(const char* op, const Tensor& a, const Tensor& b, F f) {
  // fast paths
  if (a.same_shape(b)) {
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  if (b.size() == 1) {
    Tensor out(a.shape());
    double y = b[0];
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], y);
    return out;
  }
  if (a.size() == 1) {
    Tensor out(b.shape());
    double x = a[0];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(x, b[i]);
    return out;
  }
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
    Tensor out(a.shape());
    std::size_t rows = a.shape()[0], cols = a.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pa = a.data() + r * cols;
      double* po = out.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) po[c] = f(pa[c], b[c]);
    }
    return out;
  }
  if (a.rank() == 1 && b.rank() == 2 && b.shape()[1] == a.shape()[0]) {
    Tensor out(b.shape());
    std::size_t rows = b.shape()[0], cols = b.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pb = b.data() + r * cols;
      double* po = out.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) po[c] = f(a[c], pb[c]);
    }
    return out;
  }
  // general strided path
  std::vector<std::size_t> shape = broadcast_shape(op, a, b);
  std::size_t rank = shape.size();
  Tensor out(shape);
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    std::size_t d = a.rank() - 1 - i;
    sa[rank - 1 - i] = a.shape()[d] == 1 ? 0 : stride;
    stride *= a.shape()[d];
  }
  stride = 1;
  for (std::size_t i = 0; i < b.rank(); ++i) {
    std::size_t d = b.rank() - 1 - i;
    sb[rank - 1 - i] = b.shape()[d] == 1 ? 0 : stride;
    stride *= b.shape()[d];
  }
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out[flat] = f(a[ia], b[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

// Sums a gradient down to `shape` (the pre-broadcast operand shape).
Tensor reduce_to_shape(const Tensor& g, const std::vector<std::size_t>& shape) {
  if (g.shape() == shape) return g;
  std::size_t target_size = 1;
  for (std::size_t d : shape) target_size *= d;
  if (target_size == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
    return Tensor(shape, std::vector<double>{s});
  }
  // fast path: [r,c] -> [c]
  if (g.rank() == 2 && shape.size() == 1 && shape[0] == g.shape()[1]) {
    Tensor out({shape[0]});
    std::size_t rows = g.shape()[0], cols = g.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pg = g.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) out[c] += pg[c];
    }
    return out;
  }
  // general path: accumulate with a broadcast-aware index walk
  std::size_t rank = g.rank();
  std::vector<std::size_t> padded(rank, 1);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    padded[rank - shape.size() + i] = shape[i];
  }
  Tensor out(shape);
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    strides[d] = padded[d] == 1 ? 0 : stride;
    stride *= padded[d];
  }
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    std::size_t it = 0;
    for (std::size_t d = 0; d < rank; ++d) it += idx[d] * strides[d];
    out[it] += g[flat];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < g.shape()[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

// ---- Gradient ----

const Tensor& Gradient::at(const Var& leaf) const {
  auto it = by_node_.find(leaf.node());
  if (it == by_node_.end()) {
    fail_numeric("gradient: queried var is not one of the requested leaves");
  }
  return it->second;
}

bool Gradient::all_finite() const {
  for (const auto& [node, g] : by_node_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

// ---- Tape ----

Var Tape::leaf(Tensor value) {
  return append("leaf", {}, std::move(value), BackwardFn());
}

Var Tape::custom(const char* op, std::vector<Var> parents, Tensor value,
                 BackwardFn backward) {
  std::vector<int> parent_ids;
  parent_ids.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tracked() && p.tape() != this) fail_numeric("custom: parent from another tape");
    parent_ids.push_back(p.tracked() ? p.node() : -1);
  }
  return append(op, std::move(parent_ids), std::move(value), std::move(backward));
}

Var Tape::append(const char* op, std::vector<int> parents, Tensor value,
                 BackwardFn backward) {
  Var v;
  v.value_ = std::make_shared<Tensor>(std::move(value));
  v.tape_ = this;
  v.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(parents), v.value_, std::move(backward)});
  return v;
}

void Tape::accumulate(int node, Tensor grad) {
  if (node < 0) return;
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (!slot.has_value()) {
    slot = std::move(grad);
    return;
  }
  Tensor& acc = *slot;
  if (!acc.same_shape(grad)) {
    fail_numeric("backward: gradient shape mismatch at node " + std::string(nodes_[node].op));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
}

void Tape::GradSink::add(std::size_t parent_index, Tensor grad) {
  const auto& node = tape_.nodes_[static_cast<std::size_t>(node_)];
  if (node.parents[parent_index] >= 0) {
    for (std::size_t j = 0; j < grad.size(); ++j) {
      if (std::isnan(grad[j])) {
        fail_numeric("backward: NaN gradient produced at tape node #" +
                     std::to_string(node_) + " (" + node.op + ")");
      }
    }
  }
  tape_.accumulate(node.parents[parent_index], std::move(grad));
}

Gradient Tape::backward(const Var& loss, std::span<const Var> leaves) {
  if (loss.value().size() != 1) {
    fail_numeric("backward: loss has shape " + loss.value().shape_string() +
                 ", expected a scalar");
  }
  Tensor one(loss.value().shape());
  one[0] = 1.0;
  return backward_vjp(loss, one, leaves);
}

Gradient Tape::backward_vjp(const Var& output, const Tensor& cotangent,
                            std::span<const Var> leaves) {
  if (!output.tracked() || output.tape() != this) {
    fail_numeric("backward: output was not produced on this tape");
  }
  if (!output.value().same_shape(cotangent)) {
    fail_numeric("backward: cotangent shape " + cotangent.shape_string() +
                 " does not match output shape " + output.value().shape_string());
  }
  std::vector<char> wanted(nodes_.size(), 0);
  for (const Var& leaf : leaves) {
    if (!leaf.tracked() || leaf.tape() != this) {
      fail_numeric("backward: requested leaf is not on this tape");
    }
    wanted[static_cast<std::size_t>(leaf.node())] = 1;
  }
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[static_cast<std::size_t>(output.node())] = cotangent;

  Gradient result;
  for (int i = output.node(); i >= 0; --i) {
    auto& slot = grads_[static_cast<std::size_t>(i)];
    if (!slot.has_value()) continue;
    const Tensor& g = *slot;
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.backward) {
      GradSink sink(*this, i);
      node.backward(g, sink);
    }
    if (wanted[static_cast<std::size_t>(i)]) {
      result.by_node_.emplace(i, std::move(*slot));
    }
    slot.reset();
  }
  grads_.clear();
  for (const Var& leaf : leaves) {
    if (!result.by_node_.count(leaf.node())) {
      result.by_node_.emplace(leaf.node(), Tensor::zeros(leaf.value().shape()));
    }
  }
  return result;
}

// ---- op helpers ----

namespace {

// Records `value` on the inputs' tape, or returns a constant when nothing
// is tracked.
Var record(const char* op, std::initializer_list<const Var*> inputs, Tensor value,
           Tape::BackwardFn backward) {
  Tape* tape = common_tape(inputs);
  if (!tape) return Var(std::move(value));
  std::vector<Var> parents;
  parents.reserve(inputs.size());
  for (const Var* v : inputs) parents.push_back(*v);
  return tape->custom(op, std::move(parents), std::move(value), std::move(backward));
}

template <class F, class Bwd>
Var binary_op(const char* op, const Var& a, const Var& b, F f, Bwd make_grads) {
  Tensor out = broadcast_apply(op, a.value(), b.value(), f);
  auto pa = a.value_ptr();
  auto pb = b.value_ptr();
  auto sa = a.value().shape();
  auto sb = b.value().shape();
  return record(op, {&a, &b}, std::move(out),
                [=](const Tensor& g, Tape::GradSink& sink) {
                  auto [ga, gb] = make_grads(g, *pa, *pb);
                  sink.add(0, reduce_to_shape(ga, sa));
                  sink.add(1, reduce_to_shape(gb, sb));
                });
}

template <class F, class DF>
Var unary_op(const char* op, const Var& a, F f, DF df_from_in_out) {
  Tensor out(a.value().shape());
  const Tensor& in = a.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto pa = a.value_ptr();
  auto pout = std::make_shared<Tensor>(out);
  return record(op, {&a}, std::move(out), [=](const Tensor& g, Tape::GradSink& sink) {
    Tensor ga(pa->shape());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] = g[i] * df_from_in_out((*pa)[i], (*pout)[i]);
    }
    sink.add(0, std::move(ga));
  });
}

}  // namespace

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](const Tensor& g, const Tensor&, const Tensor&) {
                     return std::pair<Tensor, Tensor>(g, g);
                   });
}

Var sub(const Var& a, const Var& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](const Tensor& g, const Tensor&, const Tensor&) {
                     Tensor gb(g.shape());
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
                     return std::pair<Tensor, Tensor>(g, std::move(gb));
                   });
}

Var mul(const Var& a, const Var& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](const Tensor& g, const Tensor& av, const Tensor& bv) {
                     Tensor ga = broadcast_apply("mul", g, bv, [](double x, double y) { return x * y; });
                     Tensor gb = broadcast_apply("mul", g, av, [](double x, double y) { return x * y; });
                     return std::pair<Tensor, Tensor>(std::move(ga), std::move(gb));
                   });
}

Var div(const Var& a, const Var& b) {
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](const Tensor& g, const Tensor& av, const Tensor& bv) {
                     Tensor ga = broadcast_apply("div", g, bv, [](double x, double y) { return x / y; });
                     Tensor ratio = broadcast_apply("div", av, bv,
                                                    [](double x, double y) { return x / (y * y); });
                     Tensor gb = broadcast_apply("mul", g, ratio,
                                                 [](double x, double y) { return -x * y; });
                     return std::pair<Tensor, Tensor>(std::move(ga), std::move(gb));
                   });
}

Var neg(const Var& a) {
  return unary_op("neg", a, [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

Var exp(const Var& a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); },
                  [](double, double out) { return out; });
}

Var log(const Var& a) {
  return unary_op("log", a, [](double x) { return std::log(x); },
                  [](double in, double) { return 1.0 / in; });
}

Var tanh(const Var& a) {
  return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                  [](double, double out) { return 1.0 - out * out; });
}

Var elu(const Var& a) {
  return unary_op("elu", a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
                  [](double in, double out) { return in > 0.0 ? 1.0 : out + 1.0; });
}

Var square(const Var& a) {
  return unary_op("square", a, [](double x) { return x * x; },
                  [](double in, double) { return 2.0 * in; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary_op("clamp", a,
                  [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

// ---- matmul ----

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  bool a_vec = av.rank() == 1;
  bool b_vec = bv.rank() == 1;
  if (av.rank() > 2 || bv.rank() > 2 || av.rank() == 0 || bv.rank() == 0) {
    shape_error("matmul", av, bv);
  }
  std::size_t m = a_vec ? 1 : av.shape()[0];
  std::size_t k = a_vec ? av.shape()[0] : av.shape()[1];
  std::size_t k2 = b_vec ? bv.shape()[0] : bv.shape()[0];
  std::size_t n = b_vec ? 1 : bv.shape()[1];
  if (k != k2) shape_error("matmul", av, bv);

  std::vector<std::size_t> out_shape;
  if (!a_vec) out_shape.push_back(m);
  if (!b_vec) out_shape.push_back(n);
  Tensor out(out_shape.empty() ? std::vector<std::size_t>{} : out_shape);
  mm_nn(av.data(), m, k, bv.data(), n, out.data());

  auto pa = a.value_ptr();
  auto pb = b.value_ptr();
  return record("matmul", {&a, &b}, std::move(out),
                [=](const Tensor& g, Tape::GradSink& sink) {
                  // dA = g * B^T, dB = A^T * g (with vector operands viewed
                  // as 1-row / 1-column matrices)
                  Tensor ga(pa->shape());
                  mm_nt(g.data(), m, n, pb->data(), k, ga.data());
                  Tensor gb(pb->shape());
                  mm_tn(pa->data(), m, k, g.data(), n, gb.data());
                  sink.add(0, std::move(ga));
                  sink.add(1, std::move(gb));
                });
}

// ---- reductions ----

Var sum(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
  auto shape = a.value().shape();
  return record("sum", {&a}, Tensor::scalar(s),
                [shape](const Tensor& g, Tape::GradSink& sink) {
                  sink.add(0, Tensor::full(shape, g[0]));
                });
}

Var mean(const Var& a) {
  std::size_t n = a.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a.value()[i];
  auto shape = a.value().shape();
  return record("mean", {&a}, Tensor::scalar(s / static_cast<double>(n)),
                [shape, n](const Tensor& g, Tape::GradSink& sink) {
                  sink.add(0, Tensor::full(shape, g[0] / static_cast<double>(n)));
                });
}

Var row_sum(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) fail_numeric("row_sum: expected a matrix, got " + av.shape_string());
  std::size_t rows = av.shape()[0], cols = av.shape()[1];
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = av.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += p[c];
    out[r] = s;
  }
  return record("row_sum", {&a}, std::move(out),
                [rows, cols](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga({rows, cols});
                  for (std::size_t r = 0; r < rows; ++r) {
                    double* p = ga.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) p[c] = g[r];
                  }
                  sink.add(0, std::move(ga));
                });
}

Var max_all(const Var& a) {
  const Tensor& av = a.value();
  if (av.size() == 0) fail_numeric("max: empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[arg]) arg = i;
  }
  auto shape = av.shape();
  return record("max", {&a}, Tensor::scalar(av[arg]),
                [shape, arg](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga(shape);
                  ga[arg] = g[0];
                  sink.add(0, std::move(ga));
                });
}

Var logsumexp(const Var& a) {
  const Tensor& av = a.value();
  if (av.size() == 0) fail_numeric("logsumexp: empty tensor");
  double c = kNegInf;
  for (std::size_t i = 0; i < av.size(); ++i) c = std::max(c, av[i]);
  double lse;
  if (c == kNegInf) {
    lse = kNegInf;  // all terms are -inf
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::exp(av[i] - c);
    lse = c + std::log(s);
  }
  auto pa = a.value_ptr();
  return record("logsumexp", {&a}, Tensor::scalar(lse),
                [pa, lse](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga(pa->shape());
                  if (lse != kNegInf) {
                    for (std::size_t i = 0; i < ga.size(); ++i) {
                      ga[i] = g[0] * std::exp((*pa)[i] - lse);
                    }
                  }
                  sink.add(0, std::move(ga));
                });
}

Var logsumexp_cols(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) {
    fail_numeric("logsumexp_cols: expected a matrix, got " + av.shape_string());
  }
  std::size_t rows = av.shape()[0], cols = av.shape()[1];
  Tensor out({cols});
  for (std::size_t c = 0; c < cols; ++c) {
    double mx = kNegInf;
    for (std::size_t r = 0; r < rows; ++r) mx = std::max(mx, av.at(r, c));
    if (mx == kNegInf) {
      out[c] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += std::exp(av.at(r, c) - mx);
    out[c] = mx + std::log(s);
  }
  auto pa = a.value_ptr();
  auto pout = std::make_shared<Tensor>(out);
  return record("logsumexp_cols", {&a}, std::move(out),
                [=](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga({rows, cols});
                  for (std::size_t c = 0; c < cols; ++c) {
                    if ((*pout)[c] == kNegInf) continue;
                    for (std::size_t r = 0; r < rows; ++r) {
                      ga.at(r, c) = g[c] * std::exp(pa->at(r, c) - (*pout)[c]);
                    }
                  }
                  sink.add(0, std::move(ga));
                });
}

Var logsumexp_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) {
    fail_numeric("logsumexp_rows: expected a matrix, got " + av.shape_string());
  }
  std::size_t rows = av.shape()[0], cols = av.shape()[1];
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = av.data() + r * cols;
    double mx = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, p[c]);
    if (mx == kNegInf) {
      out[r] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(p[c] - mx);
    out[r] = mx + std::log(s);
  }
  auto pa = a.value_ptr();
  auto pout = std::make_shared<Tensor>(out);
  return record("logsumexp_rows", {&a}, std::move(out),
                [=](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga({rows, cols});
                  for (std::size_t r = 0; r < rows; ++r) {
                    if ((*pout)[r] == kNegInf) continue;
                    const double* p = pa->data() + r * cols;
                    double* q = ga.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) {
                      q[c] = g[r] * std::exp(p[c] - (*pout)[r]);
                    }
                  }
                  sink.add(0, std::move(ga));
                });
}

// ---- indexing / shape ----

Var gather(const Var& a, std::vector<std::size_t> indices) {
  const Tensor& av = a.value();
  Tensor out({indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) fail_numeric("gather: index out of range");
    out[i] = av[indices[i]];
  }
  auto shape = av.shape();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return record("gather", {&a}, std::move(out),
                [shape, idx](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga(shape);
                  for (std::size_t i = 0; i < idx->size(); ++i) {
                    ga[(*idx)[i]] += g[i];
                  }
                  sink.add(0, std::move(ga));
                });
}

Var segment_sum(const Var& a, std::vector<std::size_t> offsets) {
  const Tensor& av = a.value();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != av.size()) {
    fail_numeric("segment_sum: bad offsets for input of size " + std::to_string(av.size()));
  }
  std::size_t segments = offsets.size() - 1;
  Tensor out({segments});
  for (std::size_t j = 0; j < segments; ++j) {
    double s = 0.0;
    for (std::size_t i = offsets[j]; i < offsets[j + 1]; ++i) s += av[i];
    out[j] = s;
  }
  auto shape = av.shape();
  auto offs = std::make_shared<std::vector<std::size_t>>(std::move(offsets));
  return record("segment_sum", {&a}, std::move(out),
                [shape, offs](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga(shape);
                  for (std::size_t j = 0; j + 1 < offs->size(); ++j) {
                    for (std::size_t i = (*offs)[j]; i < (*offs)[j + 1]; ++i) ga[i] = g[j];
                  }
                  sink.add(0, std::move(ga));
                });
}

Var slice(const Var& a, std::size_t offset, std::size_t len) {
  const Tensor& av = a.value();
  if (offset + len > av.size()) {
    fail_numeric("slice: range [" + std::to_string(offset) + ", " +
                 std::to_string(offset + len) + ") exceeds size " +
                 std::to_string(av.size()));
  }
  Tensor out({len});
  for (std::size_t i = 0; i < len; ++i) out[i] = av[offset + i];
  auto shape = av.shape();
  return record("slice", {&a}, std::move(out),
                [shape, offset, len](const Tensor& g, Tape::GradSink& sink) {
                  Tensor ga(shape);
                  for (std::size_t i = 0; i < len; ++i) ga[offset + i] = g[i];
                  sink.add(0, std::move(ga));
                });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != a.value().size()) {
    fail_numeric("reshape: cannot view " + a.value().shape_string() + " as " +
                 shape_string(shape));
  }
  Tensor out(shape, std::vector<double>(a.value().data(), a.value().data() + n));
  auto orig = a.value().shape();
  return record("reshape", {&a}, std::move(out),
                [orig](const Tensor& g, Tape::GradSink& sink) {
                  sink.add(0, Tensor(orig, std::vector<double>(g.data(), g.data() + g.size())));
                });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) fail_numeric("stack_rows: no rows");
  std::size_t cols = rows[0].value().size();
  Tape* tape = nullptr;
  for (const Var& r : rows) {
    if (r.value().rank() != 1 || r.value().size() != cols) {
      fail_numeric("stack_rows: rows must be equal-length vectors");
    }
    if (r.tracked()) {
      if (tape && tape != r.tape()) fail_numeric("stack_rows: rows from different tapes");
      tape = r.tape();
    }
  }
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& rv = rows[r].value();
    std::copy(rv.data(), rv.data() + cols, out.data() + r * cols);
  }
  if (!tape) return Var(std::move(out));
  std::vector<Var> parents(rows.begin(), rows.end());
  std::size_t nrows = rows.size();
  return tape->custom("stack_rows", std::move(parents), std::move(out),
                      [nrows, cols](const Tensor& g, Tape::GradSink& sink) {
                        for (std::size_t r = 0; r < nrows; ++r) {
                          Tensor gr({cols});
                          std::copy(g.data() + r * cols, g.data() + (r + 1) * cols, gr.data());
                          sink.add(r, std::move(gr));
                        }
                      });
}

Var detach(const Var& a) {
  Var v;
  v.value_ = a.value_ptr();
  return v;
}

// ---- operators ----

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, double b) { return add(a, scalar_var(b)); }
Var operator-(const Var& a, double b) { return sub(a, scalar_var(b)); }
Var operator*(const Var& a, double b) { return mul(a, scalar_var(b)); }
Var operator/(const Var& a, double b) { return div(a, scalar_var(b)); }
Var operator+(double a, const Var& b) { return add(scalar_var(a), b); }
Var operator-(double a, const Var& b) { return sub(scalar_var(a), b); }
Var operator*(double a, const Var& b) { return mul(scalar_var(a), b); }

}  // namespace opc
