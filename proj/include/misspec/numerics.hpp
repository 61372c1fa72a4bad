#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "misspec/errors.hpp"

namespace misspec {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Symmetric matrix. Symmetry is an invariant maintained by the producers
/// (every bound and information matrix is symmetrized after assembly).
using SymMatrix = Eigen::MatrixXd;

/// Default tolerance for Loewner-order comparisons on unit-scaled matrices.
inline constexpr double kLoewnerTol = 1e-8;

/// Matrices whose 2-norm condition number exceeds this are not inverted.
inline constexpr double kMaxCondition = 1e12;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// (M + M^T) / 2.
template <typename Derived>
typename Derived::PlainObject symmetrize(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) {
    throw InvalidInput("symmetrize: matrix is not square");
  }
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m,
                  typename Derived::Scalar rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const auto scale = std::max<typename Derived::Scalar>(1, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Ascending eigenvalues of the symmetrized input.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> symmetric_eigenvalues(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw InvalidInput("symmetric_eigenvalues: matrix must be square and non-empty");
  }
  if (!m.allFinite()) {
    throw InvalidInput("symmetric_eigenvalues: non-finite entries");
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> s = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> solver(
      s, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw DecompositionError("symmetric_eigenvalues: eigensolver failed");
  }
  return solver.eigenvalues();
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  return symmetric_eigenvalues(m).minCoeff();
}

/// x >= y in the Loewner order, i.e. min eig(x - y) >= -tol.
template <typename DerivedX, typename DerivedY>
bool loewner_geq(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                 typename DerivedX::Scalar tol = kLoewnerTol) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw InvalidInput("loewner_geq: dimension mismatch");
  }
  if (tol < 0) throw InvalidInput("loewner_geq: negative tolerance");
  return min_eigenvalue((x - y).eval()) >= -tol;
}

/// 2-norm condition number of a symmetric positive definite matrix
/// (infinity when it is not positive definite).
template <typename Derived>
typename Derived::Scalar spd_condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const auto ev = symmetric_eigenvalues(m);
  if (ev.minCoeff() <= 0) return std::numeric_limits<Scalar>::infinity();
  return ev.maxCoeff() / ev.minCoeff();
}

/// Solves m * X = rhs for symmetric positive definite m using Cholesky,
/// refusing matrices with condition number above max_condition.
template <typename DerivedM, typename DerivedR>
Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, Eigen::Dynamic> spd_solve(
    const Eigen::MatrixBase<DerivedM>& m, const Eigen::MatrixBase<DerivedR>& rhs,
    typename DerivedM::Scalar max_condition = kMaxCondition) {
  using Scalar = typename DerivedM::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() != rhs.rows()) throw InvalidInput("spd_solve: dimension mismatch");
  const Mat s = symmetrize(m);
  const Scalar cond = spd_condition_number(s);
  if (!(cond <= max_condition)) {
    throw ConditioningError("spd_solve: matrix is not positive definite or condition number " +
                            std::to_string(static_cast<double>(cond)) + " exceeds limit");
  }
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) {
    throw DecompositionError("spd_solve: Cholesky factorization failed");
  }
  return llt.solve(rhs.derived().template cast<Scalar>().eval());
}

/// Central-difference step cbrt(eps) * max(1, |x|).
template <typename Scalar>
Scalar fd_step(Scalar x) {
  static const Scalar base = std::cbrt(std::numeric_limits<Scalar>::epsilon());
  return base * std::max<Scalar>(1, std::abs(x));
}

namespace detail {
template <typename Scalar>
Scalar checked(Scalar v) {
  if (!std::isfinite(v)) throw EvaluationError("finite difference: non-finite evaluation");
  return v;
}
}  // namespace detail

/// Central-difference gradient of a scalar function with a fixed step h.
template <typename Scalar, typename Fn>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fd_gradient(
    Fn&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0, Scalar h) {
  if (!(h > 0)) throw InvalidInput("fd_gradient: step must be positive");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad(x0.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + h;
    const Scalar up = detail::checked<Scalar>(f(x));
    x(i) = x0(i) - h;
    const Scalar down = detail::checked<Scalar>(f(x));
    x(i) = x0(i);
    grad(i) = (up - down) / (2 * h);
  }
  return grad;
}

/// Central-difference gradient with the per-coordinate default step.
template <typename Scalar, typename Fn>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fd_gradient(
    Fn&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad(x0.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    const Scalar h = fd_step(x0(i));
    x(i) = x0(i) + h;
    const Scalar up = detail::checked<Scalar>(f(x));
    x(i) = x0(i) - h;
    const Scalar down = detail::checked<Scalar>(f(x));
    x(i) = x0(i);
    grad(i) = (up - down) / (2 * h);
  }
  return grad;
}

/// Central-difference Jacobian (rows: outputs, cols: inputs) of a vector function.
template <typename Scalar, typename Fn>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> fd_jacobian(
    Fn&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0, Scalar h) {
  if (!(h > 0)) throw InvalidInput("fd_jacobian: step must be positive");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = x0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jac;
  for (Index i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + h;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> up = f(x);
    x(i) = x0(i) - h;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> down = f(x);
    x(i) = x0(i);
    if (!up.allFinite() || !down.allFinite()) {
      throw EvaluationError("fd_jacobian: non-finite evaluation");
    }
    if (i == 0) jac.resize(up.size(), x0.size());
    jac.col(i) = (up - down) / (2 * h);
  }
  return jac;
}

/// Reproducible random stream indexed by (seed, stream_id).
///
/// Streams are derived by hashing both indices into the seed sequence of a
/// 64-bit Mersenne twister, so the sequence drawn by a task depends only on
/// its own (seed, stream_id) and never on scheduling or thread count.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Deterministic child stream; children with distinct ids are independent.
  RngStream substream(std::uint64_t child_id) const;

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  VectorXd normal_vector(Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t x);

/// Draw from N(mean, cov). Throws DecompositionError if cov is not PD.
VectorXd sample_gaussian(const VectorXd& mean, const SymMatrix& cov, RngStream& rng);

/// Cached Cholesky factor for repeated draws from one Gaussian.
class GaussianSampler {
 public:
  explicit GaussianSampler(const SymMatrix& cov);
  VectorXd draw(const VectorXd& mean, RngStream& rng) const;
  const MatrixXd& factor() const { return factor_; }

 private:
  MatrixXd factor_;
};

template <typename T>
struct MonteCarloEstimate {
  T value;
  T std_error;
  std::size_t n_samples = 0;
};

/// Entrywise running mean and variance (Welford) in extended precision.
/// Partial accumulators are merged with the Chan et al. update, which keeps
/// the batched reduction numerically equivalent to pairwise summation.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  explicit MomentAccumulator(Index size);

  void add(const Eigen::Ref<const VectorXd>& sample);
  void merge(const MomentAccumulator& other);

  Index size() const { return mean_.size(); }
  std::size_t count() const { return count_; }
  VectorXd mean() const;
  /// Unbiased per-entry sample variance.
  VectorXd variance() const;
  /// Standard error of the mean, sqrt(variance / n).
  VectorXd std_error() const;

 private:
  using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  std::size_t count_ = 0;
  LVector mean_;
  LVector m2_;
};

/// Number of worker threads used for batched Monte Carlo loops.
unsigned worker_count();
void set_worker_count(unsigned workers);

/// Runs fn(batch_index, begin, end) over [0, n_items) in fixed-size batches,
/// possibly concurrently, and returns the per-batch results in batch order.
template <typename Result, typename Fn>
std::vector<Result> run_batched(std::size_t n_items, std::size_t batch_size, Fn&& fn) {
  if (batch_size == 0) throw InvalidInput("run_batched: zero batch size");
  const std::size_t n_batches = (n_items + batch_size - 1) / batch_size;
  std::vector<Result> results(n_batches);
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n_batches)));
  auto body = [&](std::size_t b) {
    const std::size_t begin = b * batch_size;
    const std::size_t end = std::min(n_items, begin + batch_size);
    results[b] = fn(b, begin, end);
  };
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) body(b);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_batches && !failed; b = next++) {
        try {
          body(b);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace misspec
