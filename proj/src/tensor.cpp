#include "mlcc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mlcc {

namespace {

thread_local Tape* t_active_tape = nullptr;
thread_local FlopCounter* t_flops = nullptr;
thread_local KinkMonitor* t_kinks = nullptr;

std::size_t prod(const Shape& s, std::size_t lo, std::size_t hi) {
  std::size_t p = 1;
  for (std::size_t i = lo; i < hi; ++i) p *= s[i];
  return p;
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor");
}

void check_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) +
                     ", got " + shape_str(t.shape()));
  }
}

double gelu_value(double v) {
  const double c = 0.7978845608028654;  // sqrt(2/pi)
  const double u = c * (v + 0.044715 * v * v * v);
  return 0.5 * v * (1.0 + std::tanh(u));
}

double gelu_grad(double v) {
  const double c = 0.7978845608028654;
  const double u = c * (v + 0.044715 * v * v * v);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
  return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
}

}  // namespace

std::size_t shape_size(const Shape& s) { return prod(s, 0, s.size()); }

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  out << "]";
  return out.str();
}

// ---- Tensor ----

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  Tensor t;
  t.n_ = std::make_shared<Node>();
  t.n_->shape = std::move(shape);
  t.n_->v = std::move(values);
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(shape_size(shape), 0.0);
  return from(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(shape_size(shape), value);
  return from(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.n_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!defined()) throw Error("tensor: shape() on undefined tensor");
  return n_->shape;
}

std::size_t Tensor::size() const {
  if (!defined()) return 0;
  return n_->v.size();
}

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  }
  return s[axis];
}

bool Tensor::requires_grad() const { return defined() && n_->requires_grad; }

std::span<const double> Tensor::values() const {
  if (!defined()) throw Error("tensor: values() on undefined tensor");
  return {n_->v.data(), n_->v.size()};
}

std::span<double> Tensor::mutable_values() {
  if (!defined()) throw Error("tensor: mutable_values() on undefined tensor");
  return {n_->v.data(), n_->v.size()};
}

double Tensor::at(std::size_t flat) const {
  if (flat >= size()) {
    throw IndexError("tensor: flat index " + std::to_string(flat) +
                     " out of range for " + shape_str(shape()));
  }
  return n_->v[flat];
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw ShapeError("tensor: scalar_value() on " + shape_str(shape()));
  }
  return n_->v[0];
}

Tensor Tensor::clone() const {
  check_defined(*this, "clone");
  Tensor t = from(n_->shape, n_->v);
  t.n_->requires_grad = n_->requires_grad;
  return t;
}

// ---- GradStore / Gradients ----

const std::vector<double>* GradStore::find(const Tensor& t) const {
  auto it = g_.find(t.id());
  return it == g_.end() ? nullptr : &it->second;
}

std::vector<double>& GradStore::accumulate(const Tensor& t) {
  auto [it, inserted] = g_.try_emplace(t.id());
  if (inserted) it->second.assign(t.size(), 0.0);
  return it->second;
}

bool Gradients::has(const Tensor& t) const { return g_.count(t.id()) != 0; }

Tensor Gradients::at(const Tensor& t) const {
  auto it = g_.find(t.id());
  if (it == g_.end()) {
    throw Error("gradients: no gradient recorded for tensor " +
                shape_str(t.shape()));
  }
  return Tensor::from(t.shape(), it->second);
}

Tensor Gradients::get_or_zeros(const Tensor& t) const {
  auto it = g_.find(t.id());
  if (it == g_.end()) return Tensor::zeros(t.shape());
  return Tensor::from(t.shape(), it->second);
}

// ---- Tape ----

Tape::Tape() : prev_(t_active_tape) { t_active_tape = this; }

Tape::~Tape() { t_active_tape = prev_; }

Tape* Tape::active() { return t_active_tape; }

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward: tape already consumed");
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_str(loss.shape())
                                     : std::string("undefined")));
  }
  if (loss.n_->origin != this) {
    throw Error("backward: loss is not an output recorded on this tape");
  }
  consumed_ = true;

  GradStore store;
  store.accumulate(loss)[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const std::vector<double>* out_grad = store.find(it->out);
    if (out_grad != nullptr) it->fn(*out_grad, store);
  }

  Gradients out;
  out.g_ = std::move(store.g_);
  return out;
}

NoGrad::NoGrad() : saved_(t_active_tape) { t_active_tape = nullptr; }

NoGrad::~NoGrad() { t_active_tape = saved_; }

bool OpApi::recording(std::initializer_list<const Tensor*> inputs) {
  if (t_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

void OpApi::record(Tensor& out, BackwardFn fn) {
  Tape* tape = t_active_tape;
  if (tape == nullptr) throw Error("record: no active tape");
  out.n_->requires_grad = true;
  out.n_->origin = tape;
  tape->records_.push_back({out, std::move(fn)});
}

// ---- FlopCounter / KinkMonitor ----

FlopCounter::FlopCounter() : prev_(t_flops) { t_flops = this; }

FlopCounter::~FlopCounter() { t_flops = prev_; }

void FlopCounter::add(std::uint64_t n) {
  if (t_flops != nullptr) t_flops->n_ += n;
}

KinkMonitor::KinkMonitor() : prev_(t_kinks) { t_kinks = this; }

KinkMonitor::~KinkMonitor() { t_kinks = prev_; }

void KinkMonitor::note(double activation_input) {
  KinkMonitor* m = t_kinks;
  if (m == nullptr) return;
  unsigned char s;
  if (activation_input > 0.0) {
    s = 1;
  } else if (activation_input < 0.0) {
    s = 2;
  } else {
    s = 0;
    m->zero_ = true;
  }
  m->sig_ = (m->sig_ ^ s) * 1099511628211ull;
}

// ---- activation names ----

ActKind act_from_name(const std::string& name) {
  if (name == "relu") return ActKind::Relu;
  if (name == "identity") return ActKind::Identity;
  if (name == "gelu") return ActKind::Gelu;
  throw ConfigError("unknown activation kind: " + name);
}

std::string act_name(ActKind kind) {
  switch (kind) {
    case ActKind::Identity:
      return "identity";
    case ActKind::Relu:
      return "relu";
    case ActKind::Gelu:
      return "gelu";
  }
  throw ConfigError("unknown activation kind");
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1);
  const std::size_t kb = b.extent(0), n = b.extent(1);
  if (k != kb) {
    throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
  FlopCounter::add(2ull * m * k * n);

  Tensor c = Tensor::from({m, n}, std::move(out));
  if (OpApi::recording({&a, &b})) {
    OpApi::record(c, [a, b, m, k, n](const std::vector<double>& g,
                                     GradStore& gs) {
      if (a.requires_grad()) {
        std::vector<double>& ga = gs.accumulate(a);
        const double* bv2 = b.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g.data() + i * n;
            const double* brow = bv2 + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = gs.accumulate(b);
        const double* av2 = a.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double x = av2[i * k + p];
            double* gbrow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
          }
        }
      }
    });
  }
  return c;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  check_defined(a, "bmm");
  check_defined(b, "bmm");
  check_rank(a, 3, "bmm");
  check_rank(b, 3, "bmm");
  const std::size_t bs = a.extent(0), m = a.extent(1), k = a.extent(2);
  const std::size_t n = transpose_b ? b.extent(1) : b.extent(2);
  const std::size_t kb = transpose_b ? b.extent(2) : b.extent(1);
  if (b.extent(0) != bs || kb != k) {
    throw ShapeError("bmm: incompatible shapes: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()) +
                     (transpose_b ? " (transposed)" : ""));
  }
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(bs * m * n, 0.0);
  for (std::size_t s = 0; s < bs; ++s) {
    const double* as = av + s * m * k;
    const double* bsv = bv + s * k * n;  // [n,k] when transposed
    double* os = out.data() + s * m * n;
    if (!transpose_b) {
      for (std::size_t i = 0; i < m; ++i) {
        double* row = os + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = as[i * k + p];
          const double* brow = bsv + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        double* row = os + i * n;
        const double* arow = as + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const double* brow = bsv + j * k;
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
          row[j] += acc;
        }
      }
    }
  }
  FlopCounter::add(2ull * bs * m * k * n);

  Tensor c = Tensor::from({bs, m, n}, std::move(out));
  if (OpApi::recording({&a, &b})) {
    OpApi::record(c, [a, b, bs, m, k, n, transpose_b](
                         const std::vector<double>& g, GradStore& gs) {
      const double* av2 = a.values().data();
      const double* bv2 = b.values().data();
      if (a.requires_grad()) {
        std::vector<double>& ga = gs.accumulate(a);
        for (std::size_t s = 0; s < bs; ++s) {
          const double* gsv = g.data() + s * m * n;
          const double* bsv = bv2 + s * k * n;
          double* gas = ga.data() + s * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double bval =
                    transpose_b ? bsv[j * k + p] : bsv[p * n + j];
                acc += gsv[i * n + j] * bval;
              }
              gas[i * k + p] += acc;
            }
          }
        }
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = gs.accumulate(b);
        for (std::size_t s = 0; s < bs; ++s) {
          const double* gsv = g.data() + s * m * n;
          const double* as = av2 + s * m * k;
          double* gbs = gb.data() + s * k * n;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double x = as[i * k + p];
              for (std::size_t j = 0; j < n; ++j) {
                const double gv = x * gsv[i * n + j];
                if (transpose_b) {
                  gbs[j * k + p] += gv;
                } else {
                  gbs[p * n + j] += gv;
                }
              }
            }
          }
        }
      }
    });
  }
  return c;
}

Tensor transpose(const Tensor& x) {
  check_defined(x, "transpose");
  check_rank(x, 2, "transpose");
  const std::size_t m = x.extent(0), n = x.extent(1);
  const double* xv = x.values().data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  Tensor y = Tensor::from({n, m}, std::move(out));
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x, m, n](const std::vector<double>& g, GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
      }
    });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: empty part list");
  for (const Tensor& p : parts) check_defined(p, "concat");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s0));
  }
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != s0.size()) {
      throw ShapeError("concat: rank mismatch: " + shape_str(s0) + " vs " +
                       shape_str(p.shape()));
    }
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != axis && p.shape()[d] != s0[d]) {
        throw ShapeError("concat: extents differ off axis: " + shape_str(s0) +
                         " vs " + shape_str(p.shape()));
      }
    }
    total += p.extent(axis);
  }
  Shape os = s0;
  os[axis] = total;
  const std::size_t outer = prod(os, 0, axis);
  const std::size_t inner = prod(os, axis + 1, os.size());

  std::vector<double> out(shape_size(os));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t pa = p.extent(axis);
    const double* pv = p.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv + o * pa * inner, pa * inner,
                  out.data() + (o * total + offset) * inner);
    }
    offset += pa;
  }

  Tensor c = Tensor::from(std::move(os), std::move(out));
  bool want = Tape::active() != nullptr;
  if (want) {
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    want = any;
  }
  if (want) {
    std::vector<Tensor> held = parts;
    OpApi::record(c, [held, axis, outer, inner, total](
                         const std::vector<double>& g, GradStore& gs) {
      std::size_t off = 0;
      for (const Tensor& p : held) {
        const std::size_t pa = p.shape()[axis];
        if (p.requires_grad()) {
          std::vector<double>& gp = gs.accumulate(p);
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = g.data() + (o * total + off) * inner;
            double* dst = gp.data() + o * pa * inner;
            for (std::size_t t = 0; t < pa * inner; ++t) dst[t] += src[t];
          }
        }
        off += pa;
      }
    });
  }
  return c;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: empty part list");
  return concat(parts, parts[0].rank() - 1);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len) {
  check_defined(x, "slice");
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("slice: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  }
  if (len == 0 || start + len > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(s) + " on axis " + std::to_string(axis));
  }
  Shape os = s;
  os[axis] = len;
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t inner = prod(s, axis + 1, s.size());
  const std::size_t ax = s[axis];
  const double* xv = x.values().data();

  std::vector<double> out(shape_size(os));
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv + (o * ax + start) * inner, len * inner,
                out.data() + o * len * inner);
  }

  Tensor y = Tensor::from(std::move(os), std::move(out));
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x, outer, inner, ax, start, len](
                         const std::vector<double>& g, GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * len * inner;
        double* dst = gx.data() + (o * ax + start) * inner;
        for (std::size_t t = 0; t < len * inner; ++t) dst[t] += src[t];
      }
    });
  }
  return y;
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  check_defined(x, "slice_last");
  return slice(x, x.rank() - 1, start, len);
}

Tensor reshape(const Tensor& x, Shape target) {
  check_defined(x, "reshape");
  if (shape_size(target) != x.size()) {
    throw ShapeError("reshape: size mismatch: " + shape_str(x.shape()) +
                     " -> " + shape_str(target));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor y = Tensor::from(std::move(target), std::move(out));
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x](const std::vector<double>& g, GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor activation(const Tensor& x, ActKind kind) {
  check_defined(x, "activation");
  const double* xv = x.values().data();
  const std::size_t n = x.size();
  std::vector<double> out(n);
  switch (kind) {
    case ActKind::Identity:
      std::copy_n(xv, n, out.data());
      break;
    case ActKind::Relu:
      for (std::size_t i = 0; i < n; ++i) {
        KinkMonitor::note(xv[i]);
        out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      }
      FlopCounter::add(n);
      break;
    case ActKind::Gelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = gelu_value(xv[i]);
      FlopCounter::add(n);
      break;
  }
  Tensor y = Tensor::from(x.shape(), std::move(out));
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x, kind, n](const std::vector<double>& g,
                                  GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      const double* xv2 = x.values().data();
      switch (kind) {
        case ActKind::Identity:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
          break;
        case ActKind::Relu:
          // relu'(0) = 0 by convention.
          for (std::size_t i = 0; i < n; ++i) {
            if (xv2[i] > 0.0) gx[i] += g[i];
          }
          break;
        case ActKind::Gelu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * gelu_grad(xv2[i]);
          break;
      }
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  FlopCounter::add(n);
  Tensor c = Tensor::from(a.shape(), std::move(out));
  if (OpApi::recording({&a, &b})) {
    OpApi::record(c, [a, b, n](const std::vector<double>& g, GradStore& gs) {
      if (a.requires_grad()) {
        std::vector<double>& ga = gs.accumulate(a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = gs.accumulate(b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  FlopCounter::add(n);
  Tensor c = Tensor::from(a.shape(), std::move(out));
  if (OpApi::recording({&a, &b})) {
    OpApi::record(c, [a, b, n](const std::vector<double>& g, GradStore& gs) {
      const double* av2 = a.values().data();
      const double* bv2 = b.values().data();
      if (a.requires_grad()) {
        std::vector<double>& ga = gs.accumulate(a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv2[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = gs.accumulate(b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return c;
}

Tensor scale(const Tensor& x, double c) {
  check_defined(x, "scale");
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = c * xv[i];
  FlopCounter::add(n);
  Tensor y = Tensor::from(x.shape(), std::move(out));
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x, c, n](const std::vector<double>& g, GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
    });
  }
  return y;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  check_defined(x, "add_rowwise");
  check_defined(bias, "add_rowwise");
  check_rank(x, 2, "add_rowwise");
  check_rank(bias, 1, "add_rowwise");
  const std::size_t m = x.extent(0), n = x.extent(1);
  if (bias.extent(0) != n) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) +
                     " does not match columns of " + shape_str(x.shape()));
  }
  std::vector<double> out(m * n);
  const double* xv = x.values().data();
  const double* bv = bias.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  }
  FlopCounter::add(m * n);
  Tensor y = Tensor::from({m, n}, std::move(out));
  if (OpApi::recording({&x, &bias})) {
    OpApi::record(y, [x, bias, m, n](const std::vector<double>& g,
                                     GradStore& gs) {
      if (x.requires_grad()) {
        std::vector<double>& gx = gs.accumulate(x);
        for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        std::vector<double>& gb = gs.accumulate(bias);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  const double* xv = x.values().data();
  double acc = 0.0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) acc += xv[i];
  if (n > 0) FlopCounter::add(n - 1);
  Tensor y = Tensor::scalar(acc);
  if (OpApi::recording({&x})) {
    OpApi::record(y, [x, n](const std::vector<double>& g, GradStore& gs) {
      std::vector<double>& gx = gs.accumulate(x);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
    });
  }
  return y;
}

Tensor tokenwise_matmul(const Tensor& c, const Tensor& w) {
  check_defined(c, "tokenwise_matmul");
  check_defined(w, "tokenwise_matmul");
  check_rank(w, 3, "tokenwise_matmul");
  if (c.rank() != 2 && c.rank() != 3) {
    throw ShapeError("tokenwise_matmul: tokens must be rank 2 or 3, got " +
                     shape_str(c.shape()));
  }
  const bool batched = c.rank() == 3;
  const std::size_t bs = batched ? c.extent(0) : 1;
  const std::size_t nt = c.extent(batched ? 1 : 0);
  const std::size_t l = c.extent(batched ? 2 : 1);
  if (w.extent(0) != nt || w.extent(1) != l) {
    throw ShapeError("tokenwise_matmul: tokens " + shape_str(c.shape()) +
                     " incompatible with weights " + shape_str(w.shape()));
  }
  const std::size_t ep = w.extent(2);
  const double* cv = c.values().data();
  const double* wv = w.values().data();
  std::vector<double> out(bs * nt * ep, 0.0);
  for (std::size_t s = 0; s < bs; ++s) {
    for (std::size_t t = 0; t < nt; ++t) {
      const double* crow = cv + (s * nt + t) * l;
      const double* wt = wv + t * l * ep;
      double* orow = out.data() + (s * nt + t) * ep;
      for (std::size_t i = 0; i < l; ++i) {
        const double x = crow[i];
        const double* wrow = wt + i * ep;
        for (std::size_t j = 0; j < ep; ++j) orow[j] += x * wrow[j];
      }
    }
  }
  FlopCounter::add(2ull * bs * nt * l * ep);

  Shape os = batched ? Shape{bs, nt, ep} : Shape{nt, ep};
  Tensor y = Tensor::from(std::move(os), std::move(out));
  if (OpApi::recording({&c, &w})) {
    OpApi::record(y, [c, w, bs, nt, l, ep](const std::vector<double>& g,
                                           GradStore& gs) {
      const double* cv2 = c.values().data();
      const double* wv2 = w.values().data();
      if (c.requires_grad()) {
        std::vector<double>& gc = gs.accumulate(c);
        for (std::size_t s = 0; s < bs; ++s) {
          for (std::size_t t = 0; t < nt; ++t) {
            const double* grow = g.data() + (s * nt + t) * ep;
            const double* wt = wv2 + t * l * ep;
            double* gcrow = gc.data() + (s * nt + t) * l;
            for (std::size_t i = 0; i < l; ++i) {
              const double* wrow = wt + i * ep;
              double acc = 0.0;
              for (std::size_t j = 0; j < ep; ++j) acc += grow[j] * wrow[j];
              gcrow[i] += acc;
            }
          }
        }
      }
      if (w.requires_grad()) {
        std::vector<double>& gw = gs.accumulate(w);
        for (std::size_t s = 0; s < bs; ++s) {
          for (std::size_t t = 0; t < nt; ++t) {
            const double* grow = g.data() + (s * nt + t) * ep;
            const double* crow = cv2 + (s * nt + t) * l;
            double* gwt = gw.data() + t * l * ep;
            for (std::size_t i = 0; i < l; ++i) {
              const double x = crow[i];
              double* gwrow = gwt + i * ep;
              for (std::size_t j = 0; j < ep; ++j) gwrow[j] += x * grow[j];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---- gradient checking ----

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f,
                           Tensor x, double eps) {
  if (!x.defined()) throw Error("grad_check: undefined tensor");
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");

  std::vector<double> analytic;
  {
    Tape tape;
    Tensor y = f(x);
    if (y.size() != 1) {
      throw ShapeError("grad_check: f must return a scalar, got " +
                       shape_str(y.shape()));
    }
    if (!std::isfinite(y.scalar_value())) {
      throw NumericError("grad_check: non-finite value of f");
    }
    Gradients grads = tape.backward(y);
    Tensor gx = grads.get_or_zeros(x);
    analytic.assign(gx.values().begin(), gx.values().end());
  }
  for (double v : analytic) {
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite analytic gradient");
    }
  }

  auto probe = [&](double& fv, std::uint64_t& sig, bool& zero) {
    NoGrad off;
    KinkMonitor mon;
    Tensor y = f(x);
    fv = y.scalar_value();
    sig = mon.signature();
    zero = mon.saw_exact_zero();
  };

  GradCheckResult r;
  std::span<double> vals = x.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    double fp, fm;
    std::uint64_t sp, sm;
    bool zp, zm;
    vals[i] = orig + eps;
    probe(fp, sp, zp);
    vals[i] = orig - eps;
    probe(fm, sm, zm);
    vals[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite value of f during probing");
    }
    // A change in the relu sign pattern between the two probes means the
    // difference quotient straddles a kink (exact zeros hash as their own
    // symbol, so probes landing on a kink also differ).
    if (sp != sm) {
      ++r.excluded;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    ++r.checked;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
      r.analytic_at_worst = analytic[i];
      r.numeric_at_worst = numeric;
    }
  }
  return r;
}

}  // namespace mlcc
