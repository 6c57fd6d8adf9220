#pragma once

// Linear student over precomputed base features:
//
//   img_emb = normalize(base_img * w_img)      retrieval embedding
//   txt_emb = normalize(base_txt * w_txt)
//   img_usa = normalize(img_emb * u_img)       uni-modal projector (USA only)
//   txt_usa = normalize(txt_emb * u_txt)
//
// plus a learnable log inverse temperature, clamped to [1, 100] at use.

#include <cstdint>
#include <optional>

#include "cusa/core_math.hpp"
#include "cusa/losses.hpp"

namespace cusa {

inline constexpr double kMinInvTemp = 1.0;
inline constexpr double kMaxInvTemp = 100.0;
/// log(1 / 0.07)
inline const double kInitLogInvTemp = std::log(1.0 / 0.07);

struct ModelDims {
  Index base_img = 0;
  Index base_txt = 0;
  Index embed = 0;
  Index usa = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct StudentParams {
  Matrix w_img;  ///< base_img x embed
  Matrix w_txt;  ///< base_txt x embed
  Matrix u_img;  ///< embed x usa
  Matrix u_txt;  ///< embed x usa
  double log_inv_temp = kInitLogInvTemp;
  /// Set iff the uni-modal softmaxes use their own temperature.
  std::optional<double> log_inv_temp_uni;

  ModelDims dims() const;
  bool separate_uni_temp() const noexcept { return log_inv_temp_uni.has_value(); }
  /// Same structure, all values zero. Used as the gradient container.
  StudentParams zeros_like() const;
};

StudentParams init_params(std::uint64_t seed, const ModelDims& dims,
                          bool separate_uni_temp = false);

/// exp(log_inv_temp) clamped to [kMinInvTemp, kMaxInvTemp].
double clamped_inv_temp(double log_inv_temp);

/// d exp(l)/dl gate of the clamp: 1 inside the range, 0 outside, and at a
/// boundary 1 only when a descent step would move back inside.
double clamp_gate(double log_inv_temp, double upstream);

struct StudentOutputs {
  Embedding<double> img_emb;
  Embedding<double> txt_emb;
  Embedding<double> img_usa;
  Embedding<double> txt_usa;
  double inv_temp = 1.0;
  double inv_temp_uni = 1.0;
  bool separate_uni_temp = false;
};

Embedding<double> embed_images(const Matrix& base_img, const StudentParams& params);
Embedding<double> embed_texts(const Matrix& base_txt, const StudentParams& params);
Embedding<double> project_usa(const Embedding<double>& emb, const Matrix& u);

StudentOutputs forward(const Matrix& base_img, const Matrix& base_txt,
                       const StudentParams& params);

/// Exact gradient of the scalar loss with respect to every parameter, given
/// the upstream gradients on the three similarity matrices and temperature.
StudentParams backward(const Matrix& base_img, const Matrix& base_txt,
                       const StudentParams& params, const LossGradients& upstream);

}  // namespace cusa
