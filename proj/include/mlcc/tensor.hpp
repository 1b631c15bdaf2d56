#pragma once
// Dense row-major tensors (64-bit values) with a reverse-mode gradient tape.
// This is the numeric substrate for every other module: ops compute eagerly
// and, while a Tape is active on the current thread, append backward records
// that are replayed in reverse creation order by Tape::backward.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mlcc {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class IndexError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Leaf with requires_grad set; the only tensors an optimizer may mutate.
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t extent(std::size_t axis) const;
  bool requires_grad() const;

  std::span<const double> values() const;
  // In-place access for parameter updates and op construction. Tensors with
  // requires_grad unset are treated as immutable by everything else.
  std::span<double> mutable_values();
  double at(std::size_t flat) const;
  double scalar_value() const;

  Tensor clone() const;

  // Identity of the underlying storage; key for gradient maps.
  const void* id() const { return n_.get(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> v;
    bool requires_grad = false;
    const Tape* origin = nullptr;
  };
  std::shared_ptr<Node> n_;
  friend class Tape;
  friend class GradStore;
  friend class Gradients;
  friend struct OpApi;
};

// Gradient accumulation buffers used while a backward pass runs.
class GradStore {
 public:
  const std::vector<double>* find(const Tensor& t) const;
  // Zero-initialized buffer of t.size(), created on first use.
  std::vector<double>& accumulate(const Tensor& t);

 private:
  std::unordered_map<const void*, std::vector<double>> g_;
  friend class Tape;
};

using BackwardFn =
    std::function<void(const std::vector<double>& out_grad, GradStore&)>;

class Gradients {
 public:
  bool has(const Tensor& t) const;
  Tensor at(const Tensor& t) const;
  Tensor get_or_zeros(const Tensor& t) const;

 private:
  std::unordered_map<const void*, std::vector<double>> g_;
  friend class Tape;
};

// One tape per logical thread of execution; constructing a Tape makes it the
// active tape for the current thread until it is destroyed. Distinct tapes on
// distinct threads may run in parallel.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1, replays records in reverse creation order,
  // and returns gradients for every participating tensor. Single use.
  Gradients backward(const Tensor& loss);

  std::size_t num_records() const { return records_.size(); }
  static Tape* active();

 private:
  struct Record {
    Tensor out;
    BackwardFn fn;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
  friend struct OpApi;
};

// Suspends recording on the current thread (numeric probes, evaluation).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* saved_;
};

// Building blocks for modules that define their own differentiable ops
// (embedding lookup, loss). Not meant for user code.
struct OpApi {
  static bool recording(std::initializer_list<const Tensor*> inputs);
  static void record(Tensor& out, BackwardFn fn);
  static void mark_param(Tensor& t) { t.n_->requires_grad = true; }
};

// Counts forward FLOPs of ops executed while armed (thread-local). One
// multiply-accumulate counts as 2 FLOPs; data movement counts as 0.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t total() const { return n_; }
  static void add(std::uint64_t n);

 private:
  std::uint64_t n_ = 0;
  FlopCounter* prev_;
};

// Observes the sign pattern of every relu input evaluated while armed.
// grad_check compares patterns between the two perturbed evaluations of a
// coordinate: a differing pattern (or an exact zero) means the finite
// difference straddles a kink and the coordinate is excluded.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  static void note(double activation_input);
  bool saw_exact_zero() const { return zero_; }
  std::uint64_t signature() const { return sig_; }

 private:
  std::uint64_t sig_ = 1469598103934665603ull;
  bool zero_ = false;
  KinkMonitor* prev_;
};

enum class ActKind { Identity, Relu, Gelu };

ActKind act_from_name(const std::string& name);
std::string act_name(ActKind kind);

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched matmul over a shared leading axis: [B,m,k] x [B,k,n] -> [B,m,n].
// With transpose_b, the second factor is [B,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& x, Shape target);
Tensor activation(const Tensor& x, ActKind kind);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// x: [m,n], bias: [n]; adds bias to every row.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& x);
// c: [N,L] or [B,N,L]; w: [N,L,E']; row t of c is projected by matrix w[t].
Tensor tokenwise_matmul(const Tensor& c, const Tensor& w);

// ---- gradient checking ----

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

// Central differences against the tape gradient of scalar-valued f, probing
// every coordinate of x with +/- eps. Coordinates whose probes straddle a
// relu kink are excluded from the error statistic.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f,
                           Tensor x, double eps);

}  // namespace mlcc
