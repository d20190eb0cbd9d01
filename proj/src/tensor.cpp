#include "bgn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "bgn/kernels.hpp"

namespace bgn {

namespace {

thread_local Tape* g_tape = nullptr;
thread_local double* g_kink_min = nullptr;
std::atomic<std::uint64_t> g_tape_counter{1};

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

[[noreturn]] void shape_error(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

bool participates(const TensorData& t) {
  if (t.requires_grad) return true;
  return g_tape != nullptr && t.tape_id == g_tape->id() && t.node >= 0;
}

bool recording(const Tensor& a) {
  return g_tape != nullptr && participates(*a.ptr());
}

bool recording(const Tensor& a, const Tensor& b) {
  return g_tape != nullptr && (participates(*a.ptr()) || participates(*b.ptr()));
}

void record(const Tensor& out, std::function<void()> bwd) {
  out.ptr()->tape_id = g_tape->id();
  out.ptr()->node = g_tape->record(out.ptr(), std::move(bwd));
}

// Broadcast classes for the elementwise binary ops.
enum class Bcast { kSame, kRow, kCol, kScalar };

Bcast bcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  shape_error(op, a, b);
}

}  // namespace

Tensor wrap(std::shared_ptr<TensorData> d) { return Tensor(std::move(d)); }

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->shape = {rows, cols};
  d->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  d->requires_grad = requires_grad;
  return wrap(std::move(d));
}

Tensor Tensor::constant(int rows, int cols, double v) {
  Tensor t = zeros(rows, cols);
  for (auto& x : t.ptr()->value) x = v;
  return t;
}

Tensor Tensor::from(std::vector<double> data, int rows, int cols,
                    bool requires_grad) {
  if (data.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("Tensor::from: data length " +
                                std::to_string(data.size()) +
                                " does not match " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = {rows, cols};
  d->value = std::move(data);
  d->requires_grad = requires_grad;
  return wrap(std::move(d));
}

Tensor Tensor::row(std::vector<double> data) {
  const int n = static_cast<int>(data.size());
  return from(std::move(data), 1, n);
}

Tensor Tensor::col(std::vector<double> data) {
  const int n = static_cast<int>(data.size());
  return from(std::move(data), n, 1);
}

bool Tensor::all_finite() const {
  for (double v : d_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

int Tape::record(std::shared_ptr<TensorData> out, std::function<void()> bwd) {
  nodes_.push_back({std::move(out), std::move(bwd)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward_from(int node) {
  for (int i = node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.out->grad.empty()) n.bwd();
    // Intermediate grads are consumed exactly once; clearing here keeps a
    // second backward call from compounding through the interior.
    n.out->grad.clear();
  }
}

TapeScope::TapeScope(Tape& tape) : prev_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = prev_; }

Tape* current_tape() { return g_tape; }

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_str(root));
  }
  if (!g_tape || root.ptr()->node < 0 || root.ptr()->tape_id != g_tape->id()) {
    throw std::invalid_argument("backward: root is not on the active tape");
  }
  root.ptr()->ensure_grad();
  root.ptr()->grad[0] += 1.0;
  g_tape->backward_from(root.ptr()->node);
}

KinkWatch::KinkWatch()
    : min_abs_(std::numeric_limits<double>::infinity()), prev_(g_kink_min) {
  g_kink_min = &min_abs_;
}

KinkWatch::~KinkWatch() { g_kink_min = prev_; }

// ---- elementwise binary ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("add", a, b);
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n);
  const auto& k = kernels::active();
  switch (kind) {
    case Bcast::kSame:
      k.add(out.data(), a.data(), b.data(), out.numel());
      break;
    case Bcast::kScalar: {
      const double s = b.data()[0];
      for (std::size_t i = 0; i < out.numel(); ++i)
        out.data()[i] = a.data()[i] + s;
      break;
    }
    case Bcast::kRow:
      for (int i = 0; i < m; ++i)
        k.add(out.data() + i * n, a.data() + i * n, b.data(), n);
      break;
    case Bcast::kCol:
      for (int i = 0; i < m; ++i) {
        const double s = b.data()[i];
        const double* ar = a.data() + i * n;
        double* orow = out.data() + i * n;
        for (int j = 0; j < n; ++j) orow[j] = ar[j] + s;
      }
      break;
  }
  if (recording(a, b)) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool na = participates(*ad), nb = participates(*bd);
    record(out, [ad, bd, od, na, nb, kind, m, n]() {
      const auto& kk = kernels::active();
      const double* g = od->grad.data();
      if (na) {
        ad->ensure_grad();
        kk.acc(ad->grad.data(), g, od->grad.size());
      }
      if (!nb) return;
      bd->ensure_grad();
      switch (kind) {
        case Bcast::kSame:
          kk.acc(bd->grad.data(), g, od->grad.size());
          break;
        case Bcast::kScalar:
          bd->grad[0] += kk.sum(g, od->grad.size());
          break;
        case Bcast::kRow:
          for (int i = 0; i < m; ++i) kk.acc(bd->grad.data(), g + i * n, n);
          break;
        case Bcast::kCol:
          for (int i = 0; i < m; ++i) bd->grad[i] += kk.sum(g + i * n, n);
          break;
      }
    });
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("hadamard", a, b);
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n);
  const auto& k = kernels::active();
  switch (kind) {
    case Bcast::kSame:
      k.mul(out.data(), a.data(), b.data(), out.numel());
      break;
    case Bcast::kScalar:
      k.scale(out.data(), a.data(), b.data()[0], out.numel());
      break;
    case Bcast::kRow:
      for (int i = 0; i < m; ++i)
        k.mul(out.data() + i * n, a.data() + i * n, b.data(), n);
      break;
    case Bcast::kCol:
      for (int i = 0; i < m; ++i)
        k.scale(out.data() + i * n, a.data() + i * n, b.data()[i], n);
      break;
  }
  if (recording(a, b)) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool na = participates(*ad), nb = participates(*bd);
    record(out, [ad, bd, od, na, nb, kind, m, n]() {
      const auto& kk = kernels::active();
      const double* g = od->grad.data();
      if (na) {
        ad->ensure_grad();
        double* da = ad->grad.data();
        switch (kind) {
          case Bcast::kSame:
            kk.mul_acc(da, g, bd->value.data(), od->grad.size());
            break;
          case Bcast::kScalar:
            kk.axpy(da, g, bd->value[0], od->grad.size());
            break;
          case Bcast::kRow:
            for (int i = 0; i < m; ++i)
              kk.mul_acc(da + i * n, g + i * n, bd->value.data(), n);
            break;
          case Bcast::kCol:
            for (int i = 0; i < m; ++i)
              kk.axpy(da + i * n, g + i * n, bd->value[i], n);
            break;
        }
      }
      if (!nb) return;
      bd->ensure_grad();
      double* db = bd->grad.data();
      const double* av = ad->value.data();
      switch (kind) {
        case Bcast::kSame:
          kk.mul_acc(db, g, av, od->grad.size());
          break;
        case Bcast::kScalar:
          db[0] += kk.dot(g, av, od->grad.size());
          break;
        case Bcast::kRow:
          for (int i = 0; i < m; ++i) kk.mul_acc(db, g + i * n, av + i * n, n);
          break;
        case Bcast::kCol:
          for (int i = 0; i < m; ++i)
            db[i] += kk.dot(g + i * n, av + i * n, n);
          break;
      }
    });
  }
  return out;
}

// ---- matrix products -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  kernels::active().gemm_nn_acc(out.data(), a.data(), b.data(), m, k, n);
  if (recording(a, b)) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool na = participates(*ad), nb = participates(*bd);
    record(out, [ad, bd, od, na, nb, m, k, n]() {
      const auto& kk = kernels::active();
      const double* g = od->grad.data();
      if (na) {
        ad->ensure_grad();
        kk.gemm_nt_acc(ad->grad.data(), g, bd->value.data(), m, n, k);
      }
      if (nb) {
        bd->ensure_grad();
        kk.gemm_tn_acc(bd->grad.data(), ad->value.data(), g, k, m, n);
      }
    });
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  const int p = a.rows(), q = a.cols(), r = b.cols();
  Tensor out = Tensor::zeros(q, r);
  kernels::active().gemm_tn_acc(out.data(), a.data(), b.data(), q, p, r);
  if (recording(a, b)) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool na = participates(*ad), nb = participates(*bd);
    record(out, [ad, bd, od, na, nb, p, q, r]() {
      const auto& kk = kernels::active();
      const double* g = od->grad.data();
      if (na) {
        ad->ensure_grad();
        kk.gemm_nt_acc(ad->grad.data(), bd->value.data(), g, p, r, q);
      }
      if (nb) {
        bd->ensure_grad();
        kk.gemm_nn_acc(bd->grad.data(), ad->value.data(), g, p, q, r);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od, m, n]() {
      ad->ensure_grad();
      const double* g = od->grad.data();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) ad->grad[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// ---- elementwise unary -----------------------------------------------------

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::active().relu(out.data(), a.data(), a.numel());
  if (g_kink_min) {
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double m = std::fabs(a.data()[i]);
      if (m < *g_kink_min) *g_kink_min = m;
    }
  }
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od]() {
      ad->ensure_grad();
      kernels::active().relu_bwd(ad->grad.data(), ad->value.data(),
                                 od->grad.data(), od->grad.size());
    });
  }
  return out;
}

namespace {

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.data()[i] = sigmoid_stable(a.data()[i]);
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od]() {
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        const double y = od->value[i];
        ad->grad[i] += od->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.data()[i] = std::tanh(a.data()[i]);
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od]() {
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        const double y = od->value[i];
        ad->grad[i] += od->grad[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::active().scale(out.data(), a.data(), s, a.numel());
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od, s]() {
      ad->ensure_grad();
      kernels::active().axpy(ad->grad.data(), od->grad.data(), s,
                             od->grad.size());
    });
  }
  return out;
}

Tensor reciprocal_or_zero(const Tensor& a, double threshold) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x > threshold ? 1.0 / x : 0.0;
  }
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od, threshold]() {
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        const double x = ad->value[i];
        if (x > threshold) ad->grad[i] -= od->grad[i] / (x * x);
      }
    });
  }
  return out;
}

// ---- reductions / reshaping ------------------------------------------------

Tensor sum_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  const int m = a.rows(), n = a.cols();
  const auto& k = kernels::active();
  Tensor out = axis == 0 ? Tensor::zeros(1, n) : Tensor::zeros(m, 1);
  if (axis == 0) {
    for (int i = 0; i < m; ++i) k.acc(out.data(), a.data() + i * n, n);
  } else {
    for (int i = 0; i < m; ++i) out.data()[i] = k.sum(a.data() + i * n, n);
  }
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od, axis, m, n]() {
      ad->ensure_grad();
      const double* g = od->grad.data();
      if (axis == 0) {
        for (int i = 0; i < m; ++i)
          kernels::active().acc(ad->grad.data() + i * n, g, n);
      } else {
        for (int i = 0; i < m; ++i) {
          double* row = ad->grad.data() + i * n;
          const double gi = g[i];
          for (int j = 0; j < n; ++j) row[j] += gi;
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = Tensor::zeros(1, 1);
  out.data()[0] = kernels::active().sum(a.data(), a.numel());
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od]() {
      ad->ensure_grad();
      const double g = od->grad[0];
      for (std::size_t i = 0; i < ad->grad.size(); ++i) ad->grad[i] += g;
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("concat: axis must be 0 or 1");
  if (axis == 0 && a.cols() != b.cols()) shape_error("concat", a, b);
  if (axis == 1 && a.rows() != b.rows()) shape_error("concat", a, b);
  const int m = axis == 0 ? a.rows() + b.rows() : a.rows();
  const int n = axis == 1 ? a.cols() + b.cols() : a.cols();
  Tensor out = Tensor::zeros(m, n);
  if (axis == 0) {
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  } else {
    for (int i = 0; i < m; ++i) {
      std::copy(a.data() + i * a.cols(), a.data() + (i + 1) * a.cols(),
                out.data() + i * n);
      std::copy(b.data() + i * b.cols(), b.data() + (i + 1) * b.cols(),
                out.data() + i * n + a.cols());
    }
  }
  if (recording(a, b)) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool na = participates(*ad), nb = participates(*bd);
    const int ac = a.cols(), bc = b.cols();
    record(out, [ad, bd, od, na, nb, axis, m, n, ac, bc]() {
      const double* g = od->grad.data();
      if (axis == 0) {
        if (na) {
          ad->ensure_grad();
          kernels::active().acc(ad->grad.data(), g, ad->grad.size());
        }
        if (nb) {
          bd->ensure_grad();
          kernels::active().acc(bd->grad.data(), g + ad->value.size(),
                                bd->grad.size());
        }
      } else {
        if (na) {
          ad->ensure_grad();
          for (int i = 0; i < m; ++i)
            kernels::active().acc(ad->grad.data() + i * ac, g + i * n, ac);
        }
        if (nb) {
          bd->ensure_grad();
          for (int i = 0; i < m; ++i)
            kernels::active().acc(bd->grad.data() + i * bc, g + i * n + ac, bc);
        }
      }
    });
  }
  return out;
}

// ---- dropout ---------------------------------------------------------------

Tensor dropout(const Tensor& a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return a;  // identity at eval
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  for (auto& mv : *mask) mv = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  kernels::active().mul(out.data(), a.data(), mask->data(), a.numel());
  if (recording(a)) {
    auto ad = a.ptr(), od = out.ptr();
    record(out, [ad, od, mask]() {
      ad->ensure_grad();
      kernels::active().mul_acc(ad->grad.data(), od->grad.data(), mask->data(),
                                od->grad.size());
    });
  }
  return out;
}

// ---- masked softmax --------------------------------------------------------

Tensor masked_softmax(const Tensor& logits, const BoolMat& mask,
                      SoftmaxMode mode, bool* had_empty_domain) {
  const int m = logits.rows(), n = logits.cols();
  if (mask.rows != m || mask.cols != n) {
    throw std::invalid_argument(
        "masked_softmax: mask is " + std::to_string(mask.rows) + "x" +
        std::to_string(mask.cols) + ", logits are " + shape_str(logits));
  }
  Tensor out = Tensor::zeros(m, n);
  bool empty = false;

  auto normalize = [&](int begin_row, int end_row) {
    // One domain spanning rows [begin_row, end_row).
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = begin_row; i < end_row; ++i)
      for (int j = 0; j < n; ++j)
        if (mask.at(i, j) && logits.at(i, j) > mx) mx = logits.at(i, j);
    if (mx == -std::numeric_limits<double>::infinity()) {
      empty = true;  // fully masked: leave zeros
      return;
    }
    double z = 0.0;
    for (int i = begin_row; i < end_row; ++i)
      for (int j = 0; j < n; ++j)
        if (mask.at(i, j)) {
          const double e = std::exp(logits.at(i, j) - mx);
          out.at(i, j) = e;
          z += e;
        }
    const double inv = 1.0 / z;
    for (int i = begin_row; i < end_row; ++i)
      for (int j = 0; j < n; ++j) out.at(i, j) *= inv;
  };

  if (mode == SoftmaxMode::kJoint) {
    normalize(0, m);
  } else {
    for (int i = 0; i < m; ++i) normalize(i, i + 1);
  }
  if (had_empty_domain) *had_empty_domain = empty;

  if (recording(logits)) {
    auto ad = logits.ptr(), od = out.ptr();
    record(out, [ad, od, mode, m, n]() {
      ad->ensure_grad();
      const double* g = od->grad.data();
      const double* y = od->value.data();
      auto run = [&](int begin, int end) {
        double s = 0.0;
        for (int i = begin * n; i < end * n; ++i) s += g[i] * y[i];
        for (int i = begin * n; i < end * n; ++i)
          ad->grad[i] += y[i] * (g[i] - s);
      };
      if (mode == SoftmaxMode::kJoint) {
        run(0, m);
      } else {
        for (int i = 0; i < m; ++i) run(i, i + 1);
      }
    });
  }
  return out;
}

// ---- weight-normalized linear ----------------------------------------------

Tensor linear_wn(const Tensor& x, const Tensor& dir, const Tensor& gain,
                 const Tensor& bias) {
  const int in = x.rows(), cols = x.cols();
  const int out_dim = dir.rows();
  if (dir.cols() != in) shape_error("linear_wn", dir, x);
  if (gain.rows() != out_dim || gain.cols() != 1 || bias.rows() != out_dim ||
      bias.cols() != 1) {
    throw std::invalid_argument("linear_wn: gain/bias must be [out x 1]");
  }
  const auto& k = kernels::active();

  // Effective weight W, kept for the backward pass.
  auto w = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(out_dim) * in);
  auto norms = std::make_shared<std::vector<double>>(out_dim);
  for (int i = 0; i < out_dim; ++i) {
    const double* drow = dir.data() + i * in;
    const double nrm = std::sqrt(k.dot(drow, drow, in));
    if (!(nrm > 0.0))
      throw std::invalid_argument("linear_wn: zero-norm direction row");
    (*norms)[i] = nrm;
    k.scale(w->data() + i * in, drow, gain.data()[i] / nrm, in);
  }

  Tensor out = Tensor::zeros(out_dim, cols);
  k.gemm_nn_acc(out.data(), w->data(), x.data(), out_dim, in, cols);
  for (int i = 0; i < out_dim; ++i) {
    const double b = bias.data()[i];
    double* row = out.data() + i * cols;
    for (int j = 0; j < cols; ++j) row[j] += b;
  }

  if (recording(x, dir) || recording(gain, bias)) {
    auto xd = x.ptr(), dd = dir.ptr(), gd = gain.ptr(), bd = bias.ptr();
    auto od = out.ptr();
    const bool nx = participates(*xd), nd = participates(*dd),
               ng = participates(*gd), nb = participates(*bd);
    record(out, [xd, dd, gd, bd, od, w, norms, nx, nd, ng, nb, in, out_dim,
                 cols]() {
      const auto& kk = kernels::active();
      const double* g = od->grad.data();
      if (nx) {
        xd->ensure_grad();
        kk.gemm_tn_acc(xd->grad.data(), w->data(), g, in, out_dim, cols);
      }
      if (nb) {
        bd->ensure_grad();
        for (int i = 0; i < out_dim; ++i)
          bd->grad[i] += kk.sum(g + i * cols, cols);
      }
      if (nd || ng) {
        std::vector<double> dw(static_cast<std::size_t>(out_dim) * in, 0.0);
        kk.gemm_nt_acc(dw.data(), g, xd->value.data(), out_dim, cols, in);
        if (ng) gd->ensure_grad();
        if (nd) dd->ensure_grad();
        for (int i = 0; i < out_dim; ++i) {
          const double* drow = dd->value.data() + i * in;
          const double* dwrow = dw.data() + i * in;
          const double nrm = (*norms)[i];
          // d/dgain is the projection of dW onto the unit direction.
          const double proj = kk.dot(dwrow, drow, in) / nrm;
          if (ng) gd->grad[i] += proj;
          if (nd) {
            // d/ddir: remove the radial component, scale by gain/||dir||.
            const double s = gd->value[i] / nrm;
            double* dst = dd->grad.data() + i * in;
            kk.axpy(dst, dwrow, s, in);
            kk.axpy(dst, drow, -s * proj / nrm, in);
          }
        }
      }
    });
  }
  return out;
}

// ---- embedding -------------------------------------------------------------

Tensor embed_cols(const Tensor& table, const std::vector<int>& ids) {
  const int vocab = table.rows(), dim = table.cols();
  const int m = static_cast<int>(ids.size());
  for (int t = 0; t < m; ++t) {
    if (ids[t] < 0 || ids[t] >= vocab) {
      throw std::out_of_range("embed_cols: id " + std::to_string(ids[t]) +
                              " at position " + std::to_string(t) +
                              " outside vocabulary of " +
                              std::to_string(vocab));
    }
  }
  Tensor out = Tensor::zeros(dim, m);
  for (int t = 0; t < m; ++t)
    for (int r = 0; r < dim; ++r) out.at(r, t) = table.at(ids[t], r);
  if (recording(table)) {
    auto td = table.ptr(), od = out.ptr();
    record(out, [td, od, ids, dim, m]() {
      td->ensure_grad();
      for (int t = 0; t < m; ++t)
        for (int r = 0; r < dim; ++r)
          td->grad[ids[t] * dim + r] += od->grad[r * m + t];
    });
  }
  return out;
}

// ---- losses ----------------------------------------------------------------

Tensor bce_with_logits(const Tensor& scores, const Tensor& targets) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols())
    shape_error("bce_with_logits", scores, targets);
  for (std::size_t i = 0; i < targets.numel(); ++i) {
    const double y = targets.data()[i];
    if (y < 0.0 || y > 1.0)
      throw std::invalid_argument("bce_with_logits: target outside [0,1]");
  }
  Tensor out = Tensor::zeros(1, 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.numel(); ++i) {
    const double p = scores.data()[i];
    const double y = targets.data()[i];
    // max(p,0) - p*y + log(1 + exp(-|p|)) is exact and never overflows.
    loss += std::max(p, 0.0) - p * y + std::log1p(std::exp(-std::fabs(p)));
  }
  out.data()[0] = loss;
  if (recording(scores)) {
    auto sd = scores.ptr(), td = targets.ptr(), od = out.ptr();
    record(out, [sd, td, od]() {
      sd->ensure_grad();
      const double g = od->grad[0];
      for (std::size_t i = 0; i < sd->grad.size(); ++i) {
        sd->grad[i] += g * (sigmoid_stable(sd->value[i]) - td->value[i]);
      }
    });
  }
  return out;
}

}  // namespace bgn
