#pragma once

#include <cstdint>

#include "cusa/core_math.hpp"

namespace cusa {

struct TrainConfig {
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t batch_size = 32;
  std::uint64_t epochs = 1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double teacher_inv_temp = 1.0;
  bool separate_uni_temp = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint32_t embed_dim = 16;
  std::uint32_t usa_dim = 16;
  /// Uni-modal evaluation on the projector outputs instead of the retrieval embedding.
  bool eval_usa_branch = false;

  /// Throws InvalidConfig (or NegativeWeight for alpha/beta).
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace cusa
