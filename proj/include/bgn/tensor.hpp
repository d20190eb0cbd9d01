#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "bgn/rng.hpp"

namespace bgn {

class Tape;

// Dense rank-2 tensor of doubles, row-major. Vectors are {1,n} or {n,1},
// scalars {1,1}. The grad buffer stays empty until backward first touches
// it; parameters keep accumulating across backward calls until zero_grad.
struct TensorData {
  std::vector<int> shape;  // {rows, cols}
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // id of the tape that recorded this tensor
  int node = -1;

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor constant(int rows, int cols, double v);
  static Tensor from(std::vector<double> data, int rows, int cols,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> data);
  static Tensor col(std::vector<double> data);

  bool defined() const { return d_ != nullptr; }
  int rows() const { return d_->rows(); }
  int cols() const { return d_->cols(); }
  std::size_t numel() const { return d_->numel(); }
  const std::vector<int>& shape() const { return d_->shape; }

  double at(int i, int j) const { return d_->value[i * cols() + j]; }
  double& at(int i, int j) { return d_->value[i * cols() + j]; }
  double* data() { return d_->value.data(); }
  const double* data() const { return d_->value.data(); }
  const std::vector<double>& values() const { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  bool has_grad() const { return !d_->grad.empty(); }
  double grad_at(int i, int j) const { return d_->grad[i * cols() + j]; }
  const std::vector<double>& grad() const { return d_->grad; }
  void zero_grad() { d_->grad.clear(); }

  bool all_finite() const;

  std::shared_ptr<TensorData> ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
  friend Tensor wrap(std::shared_ptr<TensorData>);
};

Tensor wrap(std::shared_ptr<TensorData> d);

// Define-by-run tape: ops append nodes in construction order, so the list
// is already topological. backward() walks it once in reverse, clearing
// intermediate grads as it goes so repeated backward calls accumulate only
// into leaves.
class Tape {
 public:
  Tape();
  int record(std::shared_ptr<TensorData> out, std::function<void()> bwd);
  void backward_from(int node);
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

 private:
  struct Node {
    std::shared_ptr<TensorData> out;
    std::function<void()> bwd;
  };
  std::vector<Node> nodes_;
  std::uint64_t id_;
};

// Establishes the calling thread's active tape. Ops record onto it; with
// no scope active they run forward-only.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* current_tape();

// d(root)/d(leaf) into every reachable leaf's grad buffer; root must be a
// scalar recorded on a live tape.
void backward(const Tensor& root);

// Boolean mask matrix (not differentiable).
struct BoolMat {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> v;

  BoolMat() = default;
  BoolMat(int r, int c, bool fill = true)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill ? 1 : 0) {}
  std::uint8_t at(int i, int j) const { return v[i * cols + j]; }
  void set(int i, int j, bool b) { v[i * cols + j] = b ? 1 : 0; }
};

enum class SoftmaxMode { kJoint, kPerRow };

// ---- primitive ops -------------------------------------------------------
// Broadcast rules where noted: b may match a's shape or be {1,n}, {m,1} or
// {1,1} against a {m,n}.

Tensor add(const Tensor& a, const Tensor& b);       // broadcast on b
Tensor hadamard(const Tensor& a, const Tensor& b);  // broadcast on b
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor sum_axis(const Tensor& a, int axis);  // keeps the reduced dim as 1
Tensor sum_all(const Tensor& a);             // {1,1}
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);

// x > threshold ? 1/x : 0. Zero branch covers fully masked attention rows.
Tensor reciprocal_or_zero(const Tensor& a, double threshold = 1e-300);

// Masked entries get -inf logits and come out exactly 0. A fully masked
// domain (the whole matrix in joint mode, a row in per-row mode) yields
// zeros; *had_empty_domain reports that it happened.
Tensor masked_softmax(const Tensor& logits, const BoolMat& mask,
                      SoftmaxMode mode, bool* had_empty_domain = nullptr);

// Weight-normalized linear map: y = W x + bias, W row i = gain_i *
// dir_i / ||dir_i||. dir {out,in}, gain {out,1}, bias {out,1}.
Tensor linear_wn(const Tensor& x, const Tensor& dir, const Tensor& gain,
                 const Tensor& bias);

// out {dim,m}, column t = table row ids[t]. Gradients scatter-add back.
Tensor embed_cols(const Tensor& table, const std::vector<int>& ids);

// Sum_i of the numerically stable binary cross-entropy between
// sigmoid(scores_i) and targets_i in [0,1]. Scalar output.
Tensor bce_with_logits(const Tensor& scores, const Tensor& targets);

// Tracks min |preactivation| seen by relu while alive; gradient checks use
// it to skip coordinates near the kink.
class KinkWatch {
 public:
  KinkWatch();
  ~KinkWatch();
  double min_abs() const { return min_abs_; }
  KinkWatch(const KinkWatch&) = delete;
  KinkWatch& operator=(const KinkWatch&) = delete;

 private:
  double min_abs_;
  double* prev_;
};

}  // namespace bgn
