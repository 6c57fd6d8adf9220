#pragma once

// Retrieval metrics with multi-positive ground truth.
//
// Rankings sort the gallery by descending similarity; ties keep ascending
// gallery index. Recall is hit-based: a query counts if at least one of its
// relevant items is in the top k. R-Precision and mAP@R use R = |relevant|.

#include <span>
#include <string>
#include <vector>

#include "cusa/core_math.hpp"
#include "cusa/io.hpp"

namespace cusa {

struct RankedList {
  /// order[q] lists gallery indices, best first.
  std::vector<std::vector<Index>> order;
  Index gallery_size = 0;

  Index queries() const noexcept { return static_cast<Index>(order.size()); }
};

/// Per query, the sorted set of relevant gallery indices.
struct Relevance {
  std::vector<std::vector<Index>> sets;

  Index queries() const noexcept { return static_cast<Index>(sets.size()); }
};

/// `threads` bounds the number of worker threads (0 and 1 both mean serial).
RankedList rank_by_similarity(const Matrix& similarity, bool exclude_self = false,
                              unsigned threads = 1);

double recall_at_k(const RankedList& ranked, const Relevance& rel, Index k);
double r_precision(const RankedList& ranked, const Relevance& rel);
double map_at_r(const RankedList& ranked, const Relevance& rel);

/// Sum of six percent-scale recalls, each in [0, 100]. Compensated summation
/// so that decimal inputs sum to the nearest double of the decimal total.
double rsum(std::span<const double> recalls_percent);

/// Average (fractional) ranks, 1-based.
Vector fractional_ranks(std::span<const double> values);
double spearman(std::span<const double> pred, std::span<const double> gold);

struct DirectionMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double r_precision = 0.0;
  double map_at_r = 0.0;
};

struct CrossModalReport {
  DirectionMetrics i2t;
  DirectionMetrics t2i;
  double rsum = 0.0;  ///< percent scale
};

struct UniModalReport {
  double r1 = 0.0;
};

CrossModalReport evaluate_cross_modal(const Embedding<double>& img, const Embedding<double>& txt,
                                      const Relevance& rel_i2t, const Relevance& rel_t2i,
                                      unsigned threads = 1);

/// Every query is excluded from its own gallery and from its relevant set.
UniModalReport evaluate_uni_modal(const Embedding<double>& emb, const Relevance& rel,
                                  unsigned threads = 1);

/// Maps an id-level relevance file onto query/gallery indices. Relevant ids
/// outside the gallery are ignored (one file may cover several galleries).
/// Throws UnknownId for queries missing from the file and EmptyRelevance if
/// nothing relevant remains for a query.
Relevance resolve_relevance(const RetrievalRelevance& rel, const std::vector<std::string>& queries,
                            const std::vector<std::string>& gallery, bool drop_self = false);

/// Relevance implied by a pairs list: each image is relevant to the texts it
/// is paired with and vice versa.
RetrievalRelevance relevance_from_pairs(const PairList& pairs);

}  // namespace cusa
