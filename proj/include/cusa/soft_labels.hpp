#pragma once

// Teacher-side target distributions. The teacher is frozen: these matrices
// are constants with respect to the student and never receive gradients.

#include <string>

#include "cusa/core_math.hpp"

namespace cusa {

/// Teacher features of one batch; row i of both matrices belongs to pair i.
template <typename Scalar>
struct TeacherBatch {
  Embedding<Scalar> image_features;
  Embedding<Scalar> text_features;
};

template <typename Scalar>
struct TeacherTargets {
  RowStochastic<Scalar> p_i2i;
  RowStochastic<Scalar> p_t2t;
};

/// softmax_j(inv_temp * cos(f_i, f_j)) over the whole batch, self included.
/// With inv_temp = 1 this is exactly exp(r_ij) / sum_j exp(r_ij).
template <typename Scalar>
RowStochastic<Scalar> teacher_distribution(const Embedding<Scalar>& features,
                                           Scalar teacher_inv_temp = Scalar(1)) {
  if (features.rows() < 2) {
    throw Error(ErrorKind::DegenerateBatch,
                "teacher distribution needs a batch of at least 2, got " +
                    std::to_string(features.rows()));
  }
  const SimilarityKind kind = SimilarityKind::I2I;
  return row_softmax(cosine_similarity(features, features, kind), teacher_inv_temp);
}

template <typename Scalar>
TeacherTargets<Scalar> build_batch_targets(const TeacherBatch<Scalar>& teacher,
                                           Scalar teacher_inv_temp = Scalar(1)) {
  if (teacher.image_features.rows() != teacher.text_features.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "teacher image and text batches differ in size");
  }
  return {teacher_distribution(teacher.image_features, teacher_inv_temp),
          teacher_distribution(teacher.text_features, teacher_inv_temp)};
}

}  // namespace cusa
