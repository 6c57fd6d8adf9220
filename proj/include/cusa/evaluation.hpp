#pragma once

#include <string>
#include <vector>

#include "cusa/io.hpp"
#include "cusa/metrics.hpp"
#include "cusa/student.hpp"

namespace cusa {

/// Distinct ids in order of first appearance.
std::vector<std::string> unique_in_order(const std::vector<std::string>& ids);
std::vector<std::string> image_ids(const PairList& pairs);
std::vector<std::string> text_ids(const PairList& pairs);

/// Rows of `table` for `ids`, in that order, as doubles. Throws UnknownId.
Matrix gather_features(const FeatureTable& table, const std::vector<std::string>& ids);

struct ModelEvaluation {
  CrossModalReport cross;
  UniModalReport image;
  UniModalReport text;
};

/// Embeds the images and texts referenced by `pairs` with the student and
/// evaluates cross-modal and both uni-modal tasks against `relevance`.
/// Cross-modal retrieval always uses the retrieval embeddings; uni-modal
/// retrieval uses the projector outputs when `usa_branch` is set.
ModelEvaluation evaluate_model(const StudentParams& params, const FeatureTable& img_base,
                               const FeatureTable& txt_base, const PairList& pairs,
                               const RetrievalRelevance& relevance, bool usa_branch = false,
                               unsigned threads = 1);

}  // namespace cusa
