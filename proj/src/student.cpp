#include "cusa/student.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace cusa {

namespace {

constexpr double kBoundaryTol = 1e-12;

Matrix uniform_fan_in(std::mt19937_64& rng, Index fan_in, Index fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
  return m;
}

Vector row_norms(const Matrix& m) { return m.rowwise().norm(); }

// y = x / |x| row-wise; returns dL/dx given dL/dy.
Matrix normalize_backward(const Matrix& y, const Vector& norms, const Matrix& dy) {
  const Vector dots = y.cwiseProduct(dy).rowwise().sum();
  const Matrix dx = dy - dots.asDiagonal() * y;
  return norms.cwiseInverse().asDiagonal() * dx;
}

void check_batch(const Matrix& base_img, const Matrix& base_txt, const StudentParams& p) {
  if (base_img.rows() < 1 || base_img.rows() != base_txt.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "image and text batches must be non-empty and equal");
  }
  if (base_img.cols() != p.w_img.rows() || base_txt.cols() != p.w_txt.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "base feature width does not match the model");
  }
}

}  // namespace

ModelDims StudentParams::dims() const {
  return {w_img.rows(), w_txt.rows(), w_img.cols(), u_img.cols()};
}

StudentParams StudentParams::zeros_like() const {
  StudentParams z;
  z.w_img = Matrix::Zero(w_img.rows(), w_img.cols());
  z.w_txt = Matrix::Zero(w_txt.rows(), w_txt.cols());
  z.u_img = Matrix::Zero(u_img.rows(), u_img.cols());
  z.u_txt = Matrix::Zero(u_txt.rows(), u_txt.cols());
  z.log_inv_temp = 0.0;
  if (log_inv_temp_uni) z.log_inv_temp_uni = 0.0;
  return z;
}

StudentParams init_params(std::uint64_t seed, const ModelDims& dims, bool separate_uni_temp) {
  if (dims.base_img < 1 || dims.base_txt < 1 || dims.embed < 1 || dims.usa < 1) {
    throw Error(ErrorKind::InvalidDimension, "all model dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  StudentParams p;
  p.w_img = uniform_fan_in(rng, dims.base_img, dims.embed);
  p.w_txt = uniform_fan_in(rng, dims.base_txt, dims.embed);
  p.u_img = uniform_fan_in(rng, dims.embed, dims.usa);
  p.u_txt = uniform_fan_in(rng, dims.embed, dims.usa);
  p.log_inv_temp = kInitLogInvTemp;
  if (separate_uni_temp) p.log_inv_temp_uni = kInitLogInvTemp;
  return p;
}

double clamped_inv_temp(double log_inv_temp) {
  return std::clamp(std::exp(log_inv_temp), kMinInvTemp, kMaxInvTemp);
}

double clamp_gate(double log_inv_temp, double upstream) {
  const double raw = std::exp(log_inv_temp);
  if (raw > kMaxInvTemp * (1.0 + kBoundaryTol) || raw < kMinInvTemp * (1.0 - kBoundaryTol)) {
    return 0.0;
  }
  if (raw >= kMaxInvTemp * (1.0 - kBoundaryTol)) return upstream > 0.0 ? 1.0 : 0.0;
  if (raw <= kMinInvTemp * (1.0 + kBoundaryTol)) return upstream < 0.0 ? 1.0 : 0.0;
  return 1.0;
}

Embedding<double> embed_images(const Matrix& base_img, const StudentParams& params) {
  if (base_img.cols() != params.w_img.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "image feature width does not match the model");
  }
  return l2_normalize_rows(base_img * params.w_img);
}

Embedding<double> embed_texts(const Matrix& base_txt, const StudentParams& params) {
  if (base_txt.cols() != params.w_txt.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "text feature width does not match the model");
  }
  return l2_normalize_rows(base_txt * params.w_txt);
}

Embedding<double> project_usa(const Embedding<double>& emb, const Matrix& u) {
  if (emb.cols() != u.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "projector input width mismatch");
  }
  return l2_normalize_rows(emb.matrix() * u);
}

StudentOutputs forward(const Matrix& base_img, const Matrix& base_txt,
                       const StudentParams& params) {
  check_batch(base_img, base_txt, params);
  auto img = embed_images(base_img, params);
  auto txt = embed_texts(base_txt, params);
  auto img_usa = project_usa(img, params.u_img);
  auto txt_usa = project_usa(txt, params.u_txt);
  const double t = clamped_inv_temp(params.log_inv_temp);
  const double tu = params.log_inv_temp_uni ? clamped_inv_temp(*params.log_inv_temp_uni) : t;
  return {std::move(img), std::move(txt), std::move(img_usa), std::move(txt_usa), t, tu,
          params.separate_uni_temp()};
}

StudentParams backward(const Matrix& base_img, const Matrix& base_txt,
                       const StudentParams& params, const LossGradients& up) {
  check_batch(base_img, base_txt, params);
  const Index n = base_img.rows();
  if (up.d_s_i2t.rows() != n || up.d_s_i2t.cols() != n || up.d_s_i2i.rows() != n ||
      up.d_s_i2i.cols() != n || up.d_s_t2t.rows() != n || up.d_s_t2t.cols() != n) {
    throw Error(ErrorKind::ShapeMismatch, "upstream gradients do not match the batch");
  }

  // Recompute the forward pass, keeping pre-normalization norms.
  const Matrix h_img = base_img * params.w_img;
  const Matrix h_txt = base_txt * params.w_txt;
  const auto e_img = l2_normalize_rows(h_img);
  const auto e_txt = l2_normalize_rows(h_txt);
  const Matrix g_img = e_img.matrix() * params.u_img;
  const Matrix g_txt = e_txt.matrix() * params.u_txt;
  const auto a_img = l2_normalize_rows(g_img);
  const auto a_txt = l2_normalize_rows(g_txt);

  StudentParams grad = params.zeros_like();

  // s_i2t = E_img E_txt^T
  Matrix d_e_img = up.d_s_i2t * e_txt.matrix();
  Matrix d_e_txt = up.d_s_i2t.transpose() * e_img.matrix();

  // s_i2i = A A^T, so dA = (G + G^T) A
  const Matrix d_a_img = (up.d_s_i2i + up.d_s_i2i.transpose()) * a_img.matrix();
  const Matrix d_a_txt = (up.d_s_t2t + up.d_s_t2t.transpose()) * a_txt.matrix();
  const Matrix d_g_img = normalize_backward(a_img.matrix(), row_norms(g_img), d_a_img);
  const Matrix d_g_txt = normalize_backward(a_txt.matrix(), row_norms(g_txt), d_a_txt);
  grad.u_img = e_img.matrix().transpose() * d_g_img;
  grad.u_txt = e_txt.matrix().transpose() * d_g_txt;
  d_e_img += d_g_img * params.u_img.transpose();
  d_e_txt += d_g_txt * params.u_txt.transpose();

  const Matrix d_h_img = normalize_backward(e_img.matrix(), row_norms(h_img), d_e_img);
  const Matrix d_h_txt = normalize_backward(e_txt.matrix(), row_norms(h_txt), d_e_txt);
  grad.w_img = base_img.transpose() * d_h_img;
  grad.w_txt = base_txt.transpose() * d_h_txt;

  grad.log_inv_temp = up.d_log_inv_temp * clamp_gate(params.log_inv_temp, up.d_log_inv_temp);
  if (params.log_inv_temp_uni) {
    grad.log_inv_temp_uni =
        up.d_log_inv_temp_uni * clamp_gate(*params.log_inv_temp_uni, up.d_log_inv_temp_uni);
  }
  return grad;
}

}  // namespace cusa
