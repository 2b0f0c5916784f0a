#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace grushin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Error categories surfaced through the C API as status codes.
enum class Errc {
  invalid_argument = 1,
  config = 2,
  verification = 3,
  numerical = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

/// Streaming log-sum-exp: accumulates log(sum of exp(ln_i)) without leaving
/// log scale. Needed wherever Carleman weights e^{-M alpha} appear; their
/// exponents reach -1e13 and underflow any linear representation.
class LogSum {
 public:
  void add(double ln_term) {
    if (ln_term == -kInf) return;
    if (ln_term > max_) {
      if (max_ != -kInf) sum_ = sum_ * std::exp(max_ - ln_term) + 1.0;
      else sum_ = 1.0;
      max_ = ln_term;
    } else {
      sum_ += std::exp(ln_term - max_);
    }
  }
  /// log of the accumulated sum; -inf if empty.
  double log() const { return (max_ == -kInf) ? -kInf : max_ + std::log(sum_); }
  bool empty() const { return max_ == -kInf; }

 private:
  double max_ = -kInf;
  double sum_ = 0.0;
};

/// log(x) that maps 0 to -inf instead of raising.
inline double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

/// Deterministic RNG wrapper. Normal deviates via Box-Muller so sequences are
/// fully specified by the seed, independent of the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return (engine_() >> 11) * 0x1.0p-53;  // [0,1) with 53 random bits
  }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Vec normal_vector(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct CgResult {
  int iterations = 0;
  double residual = 0.0;   // relative to ||b||
  bool converged = false;
};

using LinOp = std::function<void(const Vec&, Vec&)>;

/// Matrix-free preconditioned conjugate gradient for an SPD operator.
/// `apply` computes y = A x. Solves in place starting from x.
inline CgResult conjugate_gradient_pc(const LinOp& apply, const Vec& b, Vec& x, double tol,
                                      int max_iter, const LinOp& precond) {
  CgResult out;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero();
    out.converged = true;
    return out;
  }
  Vec r(b.size()), z(b.size()), p(b.size()), Ap(b.size());
  apply(x, Ap);
  r = b - Ap;
  precond(r, z);
  p = z;
  double rz = r.dot(z);
  Vec x_best = x;
  double res_best = r.norm() / bnorm;
  for (int it = 0; it < max_iter; ++it) {
    const double res = r.norm() / bnorm;
    if (res < res_best) {
      res_best = res;
      x_best = x;
    }
    if (res <= tol) {
      out.converged = true;
      out.iterations = it;
      out.residual = res;
      return out;
    }
    // bail out with the best iterate when rounding noise in a near-singular
    // system makes the recurrence diverge
    if (res > 100.0 * res_best || !std::isfinite(res)) break;
    apply(p, Ap);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) break;  // not SPD at working precision
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    precond(r, z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    out.iterations = it + 1;
  }
  x = x_best;
  out.residual = res_best;
  return out;
}

inline CgResult conjugate_gradient(const LinOp& apply, const Vec& b, Vec& x, double tol,
                                   int max_iter, const Vec* jacobi_inv_diag = nullptr) {
  LinOp precond = [&](const Vec& rr, Vec& zz) {
    if (jacobi_inv_diag) zz = jacobi_inv_diag->cwiseProduct(rr);
    else zz = rr;
  };
  return conjugate_gradient_pc(apply, b, x, tol, max_iter, precond);
}

/// Index-ordered parallel map: fn(i) for i in [0, n). Results must be written
/// by index inside fn, so the gather order is deterministic no matter how the
/// work is striped across workers.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned workers = 0) {
  if (workers == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    workers = hw == 0 ? 1u : std::min(hw, 8u);
  }
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace grushin
