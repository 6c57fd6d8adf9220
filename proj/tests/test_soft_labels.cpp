#include <doctest.h>

#include <numeric>
#include <random>

#include "cusa/soft_labels.hpp"
#include "oracles.hpp"

using namespace cusa;

namespace {

Embedding<double> unit(const Matrix& m) { return l2_normalize_rows(m); }

}  // namespace

TEST_CASE("teacher_distribution on two rows") {
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  const auto p = teacher_distribution(unit(same));
  CHECK((p.probabilities().array() - 0.5).abs().maxCoeff() <= 1e-15);

  const auto q = teacher_distribution(unit(Matrix::Identity(2, 2)));
  CHECK(q.probabilities()(0, 0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(q.probabilities()(0, 1) == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(q.probabilities()(1, 0) == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(q.probabilities()(1, 1) == doctest::Approx(0.731059).epsilon(1e-6));
}

TEST_CASE("teacher_distribution matches a direct softmax of teacher cosines") {
  std::mt19937_64 rng(11);
  const auto f = unit(oracle::random_matrix(rng, 5, 16));
  for (double inv : {1.0, 0.5, 20.0}) {
    const auto p = teacher_distribution(f, inv);
    for (Index i = 0; i < 5; ++i) {
      std::vector<long double> r(5);
      for (Index j = 0; j < 5; ++j) {
        long double dot = 0;
        for (Index k = 0; k < 16; ++k) dot += static_cast<long double>(f.matrix()(i, k)) * f.matrix()(j, k);
        r[static_cast<std::size_t>(j)] = dot;
      }
      const auto ref = oracle::softmax(r, inv);
      for (Index j = 0; j < 5; ++j) {
        CHECK(std::abs(p.probabilities()(i, j) - static_cast<double>(ref[static_cast<std::size_t>(j)])) <= 1e-14);
      }
      CHECK(std::abs(p.probabilities().row(i).sum() - 1.0) <= 1e-12);
      Index arg = 0;
      p.probabilities().row(i).maxCoeff(&arg);
      CHECK(arg == i);
    }
  }
}

TEST_CASE("build_batch_targets") {
  Matrix same(2, 2);
  same << 1, 1, 1, 1;
  const auto t = build_batch_targets(TeacherBatch<double>{unit(same), unit(Matrix::Identity(2, 2))});
  CHECK((t.p_i2i.probabilities().array() - 0.5).abs().maxCoeff() <= 1e-15);
  CHECK(t.p_t2t.probabilities()(0, 0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(t.p_t2t.probabilities()(1, 0) == doctest::Approx(0.268941).epsilon(1e-6));

  Matrix one(1, 3);
  one << 1, 0, 0;
  try {
    build_batch_targets(TeacherBatch<double>{unit(one), unit(one)});
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateBatch);
  }

  Matrix three = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(
      build_batch_targets(TeacherBatch<double>{unit(three), unit(Matrix::Identity(2, 2))}), Error);
}

TEST_CASE("duplicate pairs receive identical target rows") {
  std::mt19937_64 rng(12);
  Matrix f = oracle::random_matrix(rng, 4, 6);
  f.row(3) = f.row(1);
  const auto p = teacher_distribution(unit(f));
  CHECK(p.probabilities().row(1) == p.probabilities().row(3));
  CHECK(p.probabilities()(1, 1) == p.probabilities()(1, 3));
}

TEST_CASE("targets are equivariant under joint permutation") {
  std::mt19937_64 rng(13);
  const Matrix f = oracle::random_matrix(rng, 6, 5);
  std::vector<Index> perm(6);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix g(6, 5);
  for (Index i = 0; i < 6; ++i) g.row(i) = f.row(perm[static_cast<std::size_t>(i)]);
  const auto p = teacher_distribution(unit(f)).probabilities();
  const auto q = teacher_distribution(unit(g)).probabilities();
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      CHECK(std::abs(q(i, j) - p(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])) <= 1e-15);
    }
  }
}

TEST_CASE("sharp teacher temperature approaches the identity; the diagonal is the row maximum") {
  std::mt19937_64 rng(14);
  const auto f = unit(oracle::random_matrix(rng, 5, 8));
  const auto sharp = teacher_distribution(f, 1e4).probabilities();
  CHECK((sharp - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-6);
  const auto p = teacher_distribution(f).probabilities();
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      if (j != i) CHECK(p(i, i) > p(i, j));
    }
  }
}
