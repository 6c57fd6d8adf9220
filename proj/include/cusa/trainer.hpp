#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cusa/config.hpp"
#include "cusa/io.hpp"
#include "cusa/losses.hpp"
#include "cusa/optimizer.hpp"
#include "cusa/student.hpp"

namespace cusa {

/// Features gathered into pair order: row i of every matrix belongs to pairs[i].
struct TrainingData {
  PairList pairs;
  Matrix base_img;
  Matrix base_txt;
  Embedding<double> teacher_img;  ///< row-normalized teacher features
  Embedding<double> teacher_txt;

  Index size() const noexcept { return base_img.rows(); }
};

/// Throws MissingFeature naming the first id absent from a table.
TrainingData align_training_data(const PairList& pairs, const FeatureTable& img_base,
                                 const FeatureTable& txt_base, const FeatureTable& img_teacher,
                                 const FeatureTable& txt_teacher);

struct StepRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;  ///< global, 0-based
  double l_original = 0.0;
  double l_csa = 0.0;
  double l_usa = 0.0;
  double l_total = 0.0;
  double inv_temp = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

using TrainLog = std::vector<StepRecord>;

/// Seeded permutation of [0, n_pairs) cut into full batches; the remainder
/// is dropped. Throws BatchTooLarge if n_pairs < batch_size.
std::vector<std::vector<Index>> make_batches(Index n_pairs, Index batch_size, std::uint64_t seed,
                                             std::uint64_t epoch);

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Called after every optimizer step with the record and the updated params.
using StepObserver = std::function<void(const StepRecord&, const StudentParams&)>;

TrainResult train(const TrainingData& data, const TrainConfig& config,
                  std::optional<StudentParams> initial = std::nullopt,
                  const StepObserver& observer = {});

/// Line-delimited JSON: one header object, then one object per step.
std::string format_train_log(const TrainLog& log, const TrainConfig& config);

}  // namespace cusa
