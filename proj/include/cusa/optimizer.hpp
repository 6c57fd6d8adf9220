#pragma once

#include <cstdint>

#include "cusa/core_math.hpp"
#include "cusa/student.hpp"

namespace cusa {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  ///< decoupled; projection matrices only
};

/// First and second moments for one tensor.
struct AdamMoments {
  Matrix m;
  Matrix v;
};

struct AdamState {
  std::uint64_t step = 0;
  AdamMoments w_img, w_txt, u_img, u_txt;
  AdamMoments log_inv_temp, log_inv_temp_uni;  ///< 1x1

  static AdamState zeros_like(const StudentParams& params);
};

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// index of the update being applied.
void adam_update(Matrix& param, const Matrix& grad, AdamMoments& moments, std::uint64_t step,
                 const AdamHyper& hyper, bool apply_weight_decay);

/// Advances the step counter and updates every tensor of the student.
void adam_step(StudentParams& params, const StudentParams& grads, AdamState& state,
               const AdamHyper& hyper);

}  // namespace cusa
