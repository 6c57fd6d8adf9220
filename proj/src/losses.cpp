#include "cusa/losses.hpp"

#include <cmath>
#include <string>

#include "cusa/student.hpp"

namespace cusa {

namespace {

void require_square(Index rows, Index cols, const char* what) {
  if (rows != cols) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + " must be square");
  }
}

void require_same(const RowStochastic<double>& a, const RowStochastic<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "alignment operands differ in shape");
  }
  require_square(a.rows(), a.cols(), "alignment operand");
}

AlignmentResult two_way_alignment(const RowStochastic<double>& p_first,
                                  const RowStochastic<double>& p_second,
                                  const RowStochastic<double>& q_first,
                                  const RowStochastic<double>& q_second) {
  require_same(p_first, q_first);
  require_same(p_second, q_second);
  require_same(q_first, q_second);
  const double n = static_cast<double>(q_first.rows());

  AlignmentResult r;
  r.first = kl_divergence_rows(p_first, q_first).mean;
  r.second = kl_divergence_rows(p_second, q_second).mean;
  r.value = 0.5 * (r.first + r.second);
  r.d_logits_first = (q_first.probabilities() - p_first.probabilities()) / (2.0 * n);
  r.d_logits_second = (q_second.probabilities() - p_second.probabilities()) / (2.0 * n);
  return r;
}

}  // namespace

LossGradients LossGradients::zeros(Index n) {
  LossGradients g;
  g.d_s_i2t = Matrix::Zero(n, n);
  g.d_s_i2i = Matrix::Zero(n, n);
  g.d_s_t2t = Matrix::Zero(n, n);
  return g;
}

InfoNceResult infonce_loss(const Similarity<double>& s_i2t, double inv_temp) {
  require_square(s_i2t.rows(), s_i2t.cols(), "similarity matrix");
  const Index n = s_i2t.rows();
  const auto q_i2t = row_softmax(s_i2t, inv_temp);
  const auto q_t2i = row_softmax(s_i2t.transposed(), inv_temp);

  InfoNceResult r;
  r.i2t = cross_entropy_diagonal(q_i2t);
  r.t2i = cross_entropy_diagonal(q_t2i);
  r.value = 0.5 * (r.i2t + r.t2i);

  const Matrix eye = Matrix::Identity(n, n);
  const double scale = inv_temp / (2.0 * static_cast<double>(n));
  r.d_s = scale * ((q_i2t.probabilities() - eye) + (q_t2i.probabilities() - eye).transpose());
  r.d_log_inv_temp = r.d_s.cwiseProduct(s_i2t.values).sum();
  return r;
}

AlignmentResult csa_loss(const RowStochastic<double>& p_i2i, const RowStochastic<double>& p_t2t,
                         const RowStochastic<double>& q_i2t, const RowStochastic<double>& q_t2i) {
  return two_way_alignment(p_i2i, p_t2t, q_i2t, q_t2i);
}

AlignmentResult usa_loss(const RowStochastic<double>& p_i2i, const RowStochastic<double>& p_t2t,
                         const RowStochastic<double>& q_i2i, const RowStochastic<double>& q_t2t) {
  return two_way_alignment(p_i2i, p_t2t, q_i2i, q_t2t);
}

void validate(const LossWeights& weights) {
  if (!(weights.alpha >= 0.0) || !(weights.beta >= 0.0) || !std::isfinite(weights.alpha) ||
      !std::isfinite(weights.beta)) {
    throw Error(ErrorKind::NegativeWeight, "alpha and beta must be finite and >= 0");
  }
}

double cusa_total(double l_original, double l_csa, double l_usa, double alpha, double beta) {
  validate(LossWeights{alpha, beta});
  return l_original + alpha * l_csa + beta * l_usa;
}

BatchLoss batch_loss_and_grads(const StudentOutputs& out, const TeacherTargets<double>& targets,
                               const LossWeights& weights) {
  validate(weights);
  const Index n = out.img_emb.rows();
  if (out.txt_emb.rows() != n || out.img_usa.rows() != n || out.txt_usa.rows() != n ||
      targets.p_i2i.rows() != n || targets.p_t2t.rows() != n) {
    throw Error(ErrorKind::ShapeMismatch, "batch size differs between student and teacher");
  }
  const double t = out.inv_temp;
  const double tu = out.inv_temp_uni;

  BatchLoss b;
  b.grads = LossGradients::zeros(n);
  auto& g = b.grads;
  auto& rep = b.report;

  // Cross-modal branch: one similarity matrix feeds both InfoNCE and CSA.
  const auto s_i2t = cosine_similarity(out.img_emb, out.txt_emb, SimilarityKind::I2T);
  const auto itc = infonce_loss(s_i2t, t);
  rep.l_original = itc.value;
  rep.itc.i2t = itc.i2t;
  rep.itc.t2i = itc.t2i;
  g.d_s_i2t = itc.d_s;
  g.d_log_inv_temp = itc.d_log_inv_temp;

  const auto q_i2t = row_softmax(s_i2t, t);
  const auto q_t2i = row_softmax(s_i2t.transposed(), t);
  const auto csa = csa_loss(targets.p_i2i, targets.p_t2t, q_i2t, q_t2i);
  rep.l_csa = csa.value;
  rep.per_direction.i2t = csa.first;
  rep.per_direction.t2i = csa.second;
  if (weights.alpha != 0.0) {
    const Matrix d_s = weights.alpha * t * (csa.d_logits_first + csa.d_logits_second.transpose());
    g.d_s_i2t += d_s;
    g.d_log_inv_temp += d_s.cwiseProduct(s_i2t.values).sum();
  }

  // Uni-modal branch: projector outputs only.
  const auto s_i2i = cosine_similarity(out.img_usa, out.img_usa, SimilarityKind::I2I);
  const auto s_t2t = cosine_similarity(out.txt_usa, out.txt_usa, SimilarityKind::T2T);
  const auto q_i2i = row_softmax(s_i2i, tu);
  const auto q_t2t = row_softmax(s_t2t, tu);
  const auto usa = usa_loss(targets.p_i2i, targets.p_t2t, q_i2i, q_t2t);
  rep.l_usa = usa.value;
  rep.per_direction.i2i = usa.first;
  rep.per_direction.t2t = usa.second;
  if (weights.beta != 0.0) {
    g.d_s_i2i = weights.beta * tu * usa.d_logits_first;
    g.d_s_t2t = weights.beta * tu * usa.d_logits_second;
    const double d_l = g.d_s_i2i.cwiseProduct(s_i2i.values).sum() +
                       g.d_s_t2t.cwiseProduct(s_t2t.values).sum();
    if (out.separate_uni_temp) {
      g.d_log_inv_temp_uni = d_l;
    } else {
      g.d_log_inv_temp += d_l;
    }
  }

  rep.l_total = cusa_total(rep.l_original, rep.l_csa, rep.l_usa, weights.alpha, weights.beta);
  if (!std::isfinite(rep.l_total)) {
    throw Error(ErrorKind::NumericFailure, "batch loss is not finite");
  }
  return b;
}

}  // namespace cusa
