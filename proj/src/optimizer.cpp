#include "cusa/optimizer.hpp"

#include <cmath>

namespace cusa {

namespace {

AdamMoments zeros(const Matrix& like) {
  return {Matrix::Zero(like.rows(), like.cols()), Matrix::Zero(like.rows(), like.cols())};
}

AdamMoments scalar_zeros() { return {Matrix::Zero(1, 1), Matrix::Zero(1, 1)}; }

void check_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "parameter and gradient shapes differ");
  }
}

void update_scalar(double& value, double grad, AdamMoments& moments, std::uint64_t step,
                   const AdamHyper& hyper) {
  Matrix p(1, 1);
  p(0, 0) = value;
  Matrix g(1, 1);
  g(0, 0) = grad;
  adam_update(p, g, moments, step, hyper, false);
  value = p(0, 0);
}

}  // namespace

AdamState AdamState::zeros_like(const StudentParams& params) {
  AdamState s;
  s.w_img = zeros(params.w_img);
  s.w_txt = zeros(params.w_txt);
  s.u_img = zeros(params.u_img);
  s.u_txt = zeros(params.u_txt);
  s.log_inv_temp = scalar_zeros();
  s.log_inv_temp_uni = scalar_zeros();
  return s;
}

void adam_update(Matrix& param, const Matrix& grad, AdamMoments& mo, std::uint64_t step,
                 const AdamHyper& hyper, bool apply_weight_decay) {
  check_shape(param, grad);
  check_shape(param, mo.m);
  check_shape(param, mo.v);
  const double k = static_cast<double>(step);
  mo.m = hyper.beta1 * mo.m + (1.0 - hyper.beta1) * grad;
  mo.v = hyper.beta2 * mo.v + (1.0 - hyper.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, k);
  const double c2 = 1.0 - std::pow(hyper.beta2, k);
  const auto m_hat = (mo.m / c1).array();
  const auto v_hat = (mo.v / c2).array();
  if (apply_weight_decay && hyper.weight_decay != 0.0) {
    param *= 1.0 - hyper.learning_rate * hyper.weight_decay;
  }
  param.array() -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
}

void adam_step(StudentParams& params, const StudentParams& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.separate_uni_temp() != grads.separate_uni_temp()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient temperature layout differs from params");
  }
  const std::uint64_t step = ++state.step;
  adam_update(params.w_img, grads.w_img, state.w_img, step, hyper, true);
  adam_update(params.w_txt, grads.w_txt, state.w_txt, step, hyper, true);
  adam_update(params.u_img, grads.u_img, state.u_img, step, hyper, true);
  adam_update(params.u_txt, grads.u_txt, state.u_txt, step, hyper, true);
  update_scalar(params.log_inv_temp, grads.log_inv_temp, state.log_inv_temp, step, hyper);
  if (params.log_inv_temp_uni) {
    update_scalar(*params.log_inv_temp_uni, *grads.log_inv_temp_uni, state.log_inv_temp_uni,
                  step, hyper);
  }
}

}  // namespace cusa
