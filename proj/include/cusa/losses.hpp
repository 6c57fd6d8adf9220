#pragma once

// Forward values and analytic gradients of the contrastive objective and the
// two soft-label alignment regularizers.
//
// Conventions used throughout:
//  * logits are z = inv_temp * s, where s is a cosine-similarity matrix;
//  * every per-row term is averaged over the batch (1/N), and the two
//    directions of each loss are averaged (1/2);
//  * gradients with respect to the temperature are reported for the
//    log-inverse-temperature l = log(inv_temp), i.e. dL/dl = sum(dL/ds .* s).
//    The clamp on inv_temp is applied later, in the student backward pass.

#include "cusa/core_math.hpp"
#include "cusa/soft_labels.hpp"

namespace cusa {

struct StudentOutputs;

struct LossWeights {
  double alpha = 0.0;  ///< weight of the cross-modal alignment term
  double beta = 0.0;   ///< weight of the uni-modal alignment term
};

struct DirectionLosses {
  double i2t = 0.0;
  double t2i = 0.0;
  double i2i = 0.0;
  double t2t = 0.0;
};

struct LossReport {
  double l_original = 0.0;
  double l_csa = 0.0;
  double l_usa = 0.0;
  double l_total = 0.0;
  /// Mean KL per direction: i2t = KL(P_i2i || Q_i2t), t2i = KL(P_t2t || Q_t2i),
  /// i2i = KL(P_i2i || Q_i2i), t2t = KL(P_t2t || Q_t2t).
  DirectionLosses per_direction;
  /// Contrastive cross entropy per direction (only i2t and t2i are used).
  DirectionLosses itc;
};

/// Upstream gradients handed to the student backward pass.
struct LossGradients {
  Matrix d_s_i2t;
  Matrix d_s_i2i;
  Matrix d_s_t2t;
  double d_log_inv_temp = 0.0;
  double d_log_inv_temp_uni = 0.0;  ///< only non-zero with a separate uni-modal temperature

  static LossGradients zeros(Index n);
};

struct InfoNceResult {
  double value = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  Matrix d_s;  ///< dL/ds_i2t (the t2i direction is folded back through the transpose)
  double d_log_inv_temp = 0.0;
};

/// Symmetric InfoNCE with the diagonal as positives.
InfoNceResult infonce_loss(const Similarity<double>& s_i2t, double inv_temp);

/// Result of a two-direction KL alignment loss. The gradients are taken with
/// respect to the softmax logits that produced each q (dKL/dz = Q - P).
struct AlignmentResult {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
  Matrix d_logits_first;
  Matrix d_logits_second;
};

/// (mean KL(P_i2i || Q_i2t) + mean KL(P_t2t || Q_t2i)) / 2
AlignmentResult csa_loss(const RowStochastic<double>& p_i2i, const RowStochastic<double>& p_t2t,
                         const RowStochastic<double>& q_i2t, const RowStochastic<double>& q_t2i);

/// (mean KL(P_i2i || Q_i2i) + mean KL(P_t2t || Q_t2t)) / 2
AlignmentResult usa_loss(const RowStochastic<double>& p_i2i, const RowStochastic<double>& p_t2t,
                         const RowStochastic<double>& q_i2i, const RowStochastic<double>& q_t2t);

double cusa_total(double l_original, double l_csa, double l_usa, double alpha, double beta);

void validate(const LossWeights& weights);

struct BatchLoss {
  LossReport report;
  LossGradients grads;
};

/// Full per-batch objective: InfoNCE on the retrieval embeddings, CSA on the
/// same cross-modal logits, USA on the projector outputs.
BatchLoss batch_loss_and_grads(const StudentOutputs& outputs,
                               const TeacherTargets<double>& targets, const LossWeights& weights);

}  // namespace cusa
