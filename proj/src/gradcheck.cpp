#include "cusa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "cusa/losses.hpp"
#include "cusa/soft_labels.hpp"
#include "cusa/student.hpp"

namespace cusa {

namespace {

class Tally {
 public:
  Tally(ComponentResult& result, const GradcheckOptions& opt, bool flip)
      : r_(result), opt_(opt), sign_(flip ? -1.0 : 1.0) {}

  void compare(double analytic, double numeric) {
    analytic *= sign_;
    const double err = std::abs(analytic - numeric);
    ++r_.checked;
    r_.max_abs_error = std::max(r_.max_abs_error, err);
    if (err <= opt_.abs_tol) return;
    const double rel = err / std::max(std::abs(analytic), std::abs(numeric));
    r_.max_rel_error = std::max(r_.max_rel_error, rel);
    if (!(rel < opt_.rel_tol)) ++r_.failures;
  }

  // Perturbs every entry of `m` in place and compares against `analytic`.
  template <typename F>
  void matrix(Matrix& m, const Matrix& analytic, F&& f) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) compare(analytic(i, j), central(m(i, j), f));
    }
  }

  template <typename F>
  void scalar(double& x, double analytic, F&& f) {
    compare(analytic, central(x, f));
  }

 private:
  template <typename F>
  double central(double& x, F&& f) const {
    const double x0 = x;
    x = x0 + opt_.step;
    const double fp = f();
    x = x0 - opt_.step;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * opt_.step);
  }

  ComponentResult& r_;
  const GradcheckOptions& opt_;
  double sign_;
};

struct Case {
  std::mt19937_64 rng;
  Index n;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Index dim(Index max_dim) { return std::uniform_int_distribution<Index>(2, max_dim)(rng); }

  Matrix uniform_matrix(Index rows, Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
    }
    return m;
  }

  Matrix gaussian(Index rows, Index cols) {
    std::normal_distribution<double> d;
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = d(rng);
    }
    return m;
  }

  RowStochastic<double> distribution() {
    return RowStochastic<double>::from_logits(uniform_matrix(n, n, -3.0, 3.0));
  }

  double log_inv_temp() { return std::log(uniform(2.0, 20.0)); }
};

Similarity<double> sim(const Matrix& s) { return {s, SimilarityKind::I2T}; }

void check_infonce(Case& c, Tally& t) {
  Matrix s = c.uniform_matrix(c.n, c.n, -1.0, 1.0);
  double l = c.log_inv_temp();
  const auto res = infonce_loss(sim(s), std::exp(l));
  auto f = [&] { return infonce_loss(sim(s), std::exp(l)).value; };
  t.matrix(s, res.d_s, f);
  t.scalar(l, res.d_log_inv_temp, f);
}

void check_csa(Case& c, Tally& t) {
  const auto p1 = c.distribution();
  const auto p2 = c.distribution();
  Matrix s = c.uniform_matrix(c.n, c.n, -1.0, 1.0);
  double l = c.log_inv_temp();
  auto value = [&] {
    const double inv = std::exp(l);
    return csa_loss(p1, p2, row_softmax(sim(s), inv), row_softmax(sim(s).transposed(), inv)).value;
  };
  const double inv = std::exp(l);
  const auto res =
      csa_loss(p1, p2, row_softmax(sim(s), inv), row_softmax(sim(s).transposed(), inv));
  const Matrix d_s = inv * (res.d_logits_first + res.d_logits_second.transpose());
  const double d_l = d_s.cwiseProduct(s).sum();
  t.matrix(s, d_s, value);
  t.scalar(l, d_l, value);
}

void check_usa(Case& c, Tally& t) {
  const auto p1 = c.distribution();
  const auto p2 = c.distribution();
  Matrix s1 = c.uniform_matrix(c.n, c.n, -1.0, 1.0);
  Matrix s2 = c.uniform_matrix(c.n, c.n, -1.0, 1.0);
  double l = c.log_inv_temp();
  auto value = [&] {
    const double inv = std::exp(l);
    return usa_loss(p1, p2, row_softmax(sim(s1), inv), row_softmax(sim(s2), inv)).value;
  };
  const double inv = std::exp(l);
  const auto res = usa_loss(p1, p2, row_softmax(sim(s1), inv), row_softmax(sim(s2), inv));
  const Matrix d1 = inv * res.d_logits_first;
  const Matrix d2 = inv * res.d_logits_second;
  const double d_l = d1.cwiseProduct(s1).sum() + d2.cwiseProduct(s2).sum();
  t.matrix(s1, d1, value);
  t.matrix(s2, d2, value);
  t.scalar(l, d_l, value);
}

void check_student(Case& c, std::uint32_t max_dim, bool separate,
                   std::map<std::string, Tally>& tallies) {
  const ModelDims dims{c.dim(max_dim), c.dim(max_dim), c.dim(max_dim), c.dim(max_dim)};
  const Matrix bi = c.gaussian(c.n, dims.base_img);
  const Matrix bt = c.gaussian(c.n, dims.base_txt);
  const auto teacher_img = l2_normalize_rows(c.gaussian(c.n, c.dim(max_dim)));
  const auto teacher_txt = l2_normalize_rows(c.gaussian(c.n, c.dim(max_dim)));
  const auto targets = build_batch_targets(TeacherBatch<double>{teacher_img, teacher_txt});
  const LossWeights w{c.uniform(0.1, 1.0), c.uniform(0.1, 1.0)};

  StudentParams p = init_params(c.rng(), dims, separate);
  p.log_inv_temp = c.log_inv_temp();
  if (separate) p.log_inv_temp_uni = c.log_inv_temp();

  auto value = [&] {
    return batch_loss_and_grads(forward(bi, bt, p), targets, w).report.l_total;
  };
  const auto g = backward(bi, bt, p, batch_loss_and_grads(forward(bi, bt, p), targets, w).grads);

  tallies.at("student.w_img").matrix(p.w_img, g.w_img, value);
  tallies.at("student.w_txt").matrix(p.w_txt, g.w_txt, value);
  tallies.at("student.u_img").matrix(p.u_img, g.u_img, value);
  tallies.at("student.u_txt").matrix(p.u_txt, g.u_txt, value);
  tallies.at("student.log_inv_temp").scalar(p.log_inv_temp, g.log_inv_temp, value);
  if (separate) {
    tallies.at("student.log_inv_temp_uni")
        .scalar(*p.log_inv_temp_uni, *g.log_inv_temp_uni, value);
  }
}

}  // namespace

bool GradcheckReport::passed() const noexcept { return first_failure() == nullptr; }

const ComponentResult* GradcheckReport::first_failure() const noexcept {
  for (const auto& c : components) {
    if (!c.passed()) return &c;
  }
  return nullptr;
}

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names{
      "infonce",       "csa",           "usa",
      "student.w_img", "student.w_txt", "student.u_img",
      "student.u_txt", "student.log_inv_temp", "student.log_inv_temp_uni"};
  return names;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  if (opt.trials < 1) throw Error(ErrorKind::InvalidConfig, "trials must be >= 1");
  if (opt.max_dim < 2) throw Error(ErrorKind::InvalidConfig, "dims must be >= 2");
  if (opt.batch_sizes.empty()) throw Error(ErrorKind::InvalidConfig, "no batch sizes");
  const auto& names = gradcheck_components();
  if (!opt.inject_fault.empty() &&
      std::find(names.begin(), names.end(), opt.inject_fault) == names.end()) {
    throw Error(ErrorKind::InvalidConfig, "unknown component '" + opt.inject_fault + "'");
  }

  GradcheckReport report;
  report.components.reserve(names.size());
  for (const auto& n : names) report.components.push_back({n});
  std::map<std::string, Tally> tallies;
  for (auto& r : report.components) {
    tallies.emplace(r.name, Tally(r, opt, r.name == opt.inject_fault));
  }

  for (std::uint32_t trial = 0; trial < opt.trials; ++trial) {
    for (const Index n : opt.batch_sizes) {
      if (n < 1) throw Error(ErrorKind::InvalidConfig, "batch sizes must be >= 1");
      std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                        trial, static_cast<std::uint32_t>(n)};
      Case c{std::mt19937_64(seq), n};
      check_infonce(c, tallies.at("infonce"));
      check_csa(c, tallies.at("csa"));
      check_usa(c, tallies.at("usa"));
      check_student(c, opt.max_dim, false, tallies);
      check_student(c, opt.max_dim, true, tallies);
    }
  }
  return report;
}

}  // namespace cusa
