#pragma once

// Dense kernels shared by the loss, soft-label and evaluation code. Everything
// here is a pure function over Eigen row-major matrices and is templated on
// the scalar type; the rest of the library instantiates it with double.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "cusa/error.hpp"

namespace cusa {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

template <typename Scalar>
constexpr Scalar norm_tolerance() {
  if constexpr (std::is_same_v<Scalar, float>) {
    return Scalar(1e-5);
  } else {
    return Scalar(1e-9);
  }
}

/// Row norms below this are treated as zero by l2_normalize_rows.
inline constexpr double kMinRowNorm = 1e-12;

/// A matrix whose rows are unit vectors. Only l2_normalize_rows and adopt()
/// produce one, so every instance satisfies the invariant.
template <typename Scalar>
class Embedding {
 public:
  using MatrixType = MatrixX<Scalar>;
  struct Unchecked {};

  Embedding(MatrixType m, Unchecked) : m_(std::move(m)) {}

  /// Wraps an already-normalized matrix; throws NotNormalized otherwise.
  static Embedding adopt(MatrixType m, Scalar tol = norm_tolerance<Scalar>()) {
    if (m.rows() < 1) {
      throw Error(ErrorKind::InvalidDimension, "embedding needs at least one row");
    }
    for (Index i = 0; i < m.rows(); ++i) {
      const Scalar n = m.row(i).norm();
      if (!(std::abs(n - Scalar(1)) <= tol)) {
        throw Error(ErrorKind::NotNormalized,
                    "row " + std::to_string(i) + " has norm " + std::to_string(n),
                    static_cast<std::uint64_t>(i));
      }
    }
    return Embedding(std::move(m), Unchecked{});
  }

  const MatrixType& matrix() const noexcept { return m_; }
  Index rows() const noexcept { return m_.rows(); }
  Index cols() const noexcept { return m_.cols(); }

 private:
  MatrixType m_;
};

enum class SimilarityKind { I2T, T2I, I2I, T2T };

template <typename Scalar>
struct Similarity {
  MatrixX<Scalar> values;
  SimilarityKind kind = SimilarityKind::I2T;

  Index rows() const noexcept { return values.rows(); }
  Index cols() const noexcept { return values.cols(); }

  /// s^{t2i} is the transpose of s^{i2t} (and vice versa); uni-modal kinds
  /// are their own counterpart.
  Similarity transposed() const {
    SimilarityKind k = kind;
    if (kind == SimilarityKind::I2T) k = SimilarityKind::T2I;
    if (kind == SimilarityKind::T2I) k = SimilarityKind::I2T;
    return {values.transpose(), k};
  }
};

/// Per-row probability distributions. Log-probabilities are kept alongside
/// so that KL terms against a softmax output use the exact log-softmax.
template <typename Scalar>
class RowStochastic {
 public:
  using MatrixType = MatrixX<Scalar>;

  /// Validates non-negativity and unit row sums (within `tol`). Zero entries
  /// are allowed here; KL rejects them on the q side.
  static RowStochastic from_probabilities(MatrixType p, Scalar tol = norm_tolerance<Scalar>()) {
    for (Index i = 0; i < p.rows(); ++i) {
      if (!p.row(i).allFinite() || (p.row(i).array() < Scalar(0)).any()) {
        throw Error(ErrorKind::InvalidDistribution,
                    "row " + std::to_string(i) + " has a negative or non-finite entry",
                    static_cast<std::uint64_t>(i));
      }
      if (std::abs(p.row(i).sum() - Scalar(1)) > tol) {
        throw Error(ErrorKind::InvalidDistribution,
                    "row " + std::to_string(i) + " does not sum to 1",
                    static_cast<std::uint64_t>(i));
      }
    }
    MatrixType logp = p.array().log().matrix();
    return RowStochastic(std::move(p), std::move(logp));
  }

  /// Row-wise softmax with max subtraction.
  template <typename Derived>
  static RowStochastic from_logits(const Eigen::MatrixBase<Derived>& logits) {
    if (!logits.allFinite()) {
      throw Error(ErrorKind::NumericFailure, "softmax logits are not finite");
    }
    MatrixType logp(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
      const Scalar m = logits.row(i).maxCoeff();
      const auto shifted = (logits.row(i).array() - m).eval();
      logp.row(i) = (shifted - std::log(shifted.exp().sum())).matrix();
    }
    MatrixType p = logp.array().exp().matrix();
    return RowStochastic(std::move(p), std::move(logp));
  }

  const MatrixType& probabilities() const noexcept { return p_; }
  const MatrixType& log_probabilities() const noexcept { return logp_; }
  Index rows() const noexcept { return p_.rows(); }
  Index cols() const noexcept { return p_.cols(); }

 private:
  RowStochastic(MatrixType p, MatrixType logp) : p_(std::move(p)), logp_(std::move(logp)) {}

  MatrixType p_;
  MatrixType logp_;
};

template <typename Derived>
Embedding<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() < 1 || m.cols() < 1) {
    throw Error(ErrorKind::InvalidDimension, "cannot normalize an empty matrix");
  }
  MatrixX<Scalar> out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const Scalar n = m.row(i).norm();
    if (!(n >= Scalar(kMinRowNorm))) {
      throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has (near) zero norm",
                  static_cast<std::uint64_t>(i));
    }
    out.row(i) = m.row(i) / n;
  }
  return Embedding<Scalar>(std::move(out), typename Embedding<Scalar>::Unchecked{});
}

template <typename Scalar>
Similarity<Scalar> cosine_similarity(const Embedding<Scalar>& a, const Embedding<Scalar>& b,
                                     SimilarityKind kind = SimilarityKind::I2T) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                "embedding widths differ: " + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.cols()));
  }
  return {a.matrix() * b.matrix().transpose(), kind};
}

template <typename Scalar>
RowStochastic<Scalar> row_softmax(const Similarity<Scalar>& s, Scalar inv_temp) {
  if (!(inv_temp > Scalar(0)) || !std::isfinite(inv_temp)) {
    throw Error(ErrorKind::NonPositiveTemperature,
                "inverse temperature must be positive, got " + std::to_string(inv_temp));
  }
  return RowStochastic<Scalar>::from_logits(s.values * inv_temp);
}

template <typename Scalar>
struct KlDivergence {
  VectorX<Scalar> per_row;
  Scalar mean = 0;
};

/// KL(p_i || q_i) for every row i, with 0 log 0 = 0 on the p side.
template <typename Scalar>
KlDivergence<Scalar> kl_divergence_rows(const RowStochastic<Scalar>& p,
                                        const RowStochastic<Scalar>& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "KL operands have different shapes");
  }
  const auto& pp = p.probabilities();
  const auto& lp = p.log_probabilities();
  const auto& qq = q.probabilities();
  const auto& lq = q.log_probabilities();
  KlDivergence<Scalar> out;
  out.per_row.resize(p.rows());
  for (Index i = 0; i < p.rows(); ++i) {
    Scalar acc = 0;
    for (Index j = 0; j < p.cols(); ++j) {
      if (!(qq(i, j) > Scalar(0))) {
        throw Error(ErrorKind::InvalidDistribution,
                    "q(" + std::to_string(i) + "," + std::to_string(j) + ") is not positive",
                    static_cast<std::uint64_t>(i));
      }
      if (pp(i, j) > Scalar(0)) acc += pp(i, j) * (lp(i, j) - lq(i, j));
    }
    out.per_row(i) = acc;
  }
  out.mean = p.rows() > 0 ? out.per_row.mean() : Scalar(0);
  return out;
}

/// -(1/N) sum_i log q_ii, i.e. cross entropy against the identity pairing.
template <typename Scalar>
Scalar cross_entropy_diagonal(const RowStochastic<Scalar>& q) {
  if (q.rows() != q.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "diagonal cross entropy needs a square matrix");
  }
  Scalar acc = 0;
  for (Index i = 0; i < q.rows(); ++i) {
    if (!(q.probabilities()(i, i) > Scalar(0))) {
      throw Error(ErrorKind::InvalidDistribution,
                  "diagonal entry " + std::to_string(i) + " is not positive",
                  static_cast<std::uint64_t>(i));
    }
    acc -= q.log_probabilities()(i, i);
  }
  return acc / static_cast<Scalar>(q.rows());
}

}  // namespace cusa
