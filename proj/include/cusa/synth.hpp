#pragma once

// Synthetic clustered data with planted false negatives.
//
// Every cluster k owns one unit centroid per (modality, role). Pair i of
// cluster k gets
//
//   image_base = normalize(c_img_k + noise * (sqrt(1-gap) * A_img eta_i + sqrt(gap) * xi_i))
//   text_base  = normalize(c_txt_k + noise * (sqrt(1-gap) * A_txt eta_i + sqrt(gap) * xi'_i))
//   teacher    = normalize(c_teacher_k + noise * zeta_i)      (per modality)
//
// eta_i is a per-pair latent shared by both modalities (through fixed random
// maps A_img, A_txt), so the pairing is learnable from instance detail while
// the teacher only sees cluster structure. The pairs file labels only
// image_i <-> text_i; the relevance file marks every same-cluster item as
// relevant, so same-cluster pairs inside a batch are unlabeled positives.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cusa/io.hpp"

namespace cusa {

struct SynthConfig {
  std::uint32_t n_clusters = 4;
  std::uint32_t pairs_per_cluster = 200;
  std::uint32_t d_student_img = 32;
  std::uint32_t d_student_txt = 32;
  std::uint32_t d_teacher_img = 32;
  std::uint32_t d_teacher_txt = 32;
  double intra_noise = 0.15;
  /// Fraction of per-pair noise variance that is private to each modality.
  double cross_modal_gap = 0.0;
  std::uint64_t seed = 0;
  /// Pairs per cluster moved to the held-out split (0 = no split).
  std::uint32_t holdout_per_cluster = 0;

  void validate() const;
};

struct SynthDataset {
  FeatureTable img_base;
  FeatureTable txt_base;
  FeatureTable img_teacher;
  FeatureTable txt_teacher;
  PairList pairs;          ///< training split (everything when there is no hold-out)
  PairList holdout_pairs;  ///< empty when holdout_per_cluster == 0
  RetrievalRelevance relevance;
  std::vector<std::uint32_t> cluster;  ///< cluster of every generated pair, by row
};

SynthDataset synth_generate(const SynthConfig& config);

/// Writes img_base.cusf, txt_base.cusf, img_teacher.cusf, txt_teacher.cusf,
/// pairs.tsv, relevance.tsv (and pairs_holdout.tsv when present).
std::vector<std::filesystem::path> write_synth(const SynthDataset& data,
                                               const std::filesystem::path& dir);

}  // namespace cusa
