#include "cusa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

namespace cusa {

namespace {

template <typename Fn>
void parallel_for(Index n, unsigned threads, Fn&& fn) {
  const Index workers = std::clamp<Index>(static_cast<Index>(threads), 1, std::max<Index>(n, 1));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < n; i += workers) fn(i);
    });
  }
}

void check_inputs(const RankedList& ranked, const Relevance& rel) {
  if (ranked.queries() == 0 || ranked.gallery_size == 0) {
    throw Error(ErrorKind::EmptyGallery, "no queries or an empty gallery");
  }
  if (ranked.queries() != rel.queries()) {
    throw Error(ErrorKind::ShapeMismatch, "ranking and relevance cover different queries");
  }
  for (Index q = 0; q < rel.queries(); ++q) {
    const auto& s = rel.sets[static_cast<std::size_t>(q)];
    if (s.empty()) {
      throw Error(ErrorKind::EmptyRelevance, "query " + std::to_string(q) + " has no relevant items",
                  static_cast<std::uint64_t>(q));
    }
    if (static_cast<Index>(s.size()) > static_cast<Index>(ranked.order[q].size())) {
      throw Error(ErrorKind::OutOfRange,
                  "query " + std::to_string(q) + " has more relevant items than gallery entries",
                  static_cast<std::uint64_t>(q));
    }
    if (s.front() < 0 || s.back() >= ranked.gallery_size) {
      throw Error(ErrorKind::OutOfRange,
                  "query " + std::to_string(q) + " references a gallery index out of range",
                  static_cast<std::uint64_t>(q));
    }
  }
}

bool is_relevant(const std::vector<Index>& set, Index g) {
  return std::binary_search(set.begin(), set.end(), g);
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

DirectionMetrics direction_metrics(const RankedList& ranked, const Relevance& rel) {
  return {recall_at_k(ranked, rel, 1), recall_at_k(ranked, rel, 5), recall_at_k(ranked, rel, 10),
          r_precision(ranked, rel), map_at_r(ranked, rel)};
}

}  // namespace

RankedList rank_by_similarity(const Matrix& sim, bool exclude_self, unsigned threads) {
  if (sim.rows() == 0 || sim.cols() == 0) {
    throw Error(ErrorKind::EmptyGallery, "similarity matrix is empty");
  }
  if (exclude_self && sim.rows() != sim.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "self exclusion needs a square similarity matrix");
  }
  if (exclude_self && sim.cols() < 2) {
    throw Error(ErrorKind::EmptyGallery, "gallery is empty once the query is excluded");
  }
  RankedList out;
  out.gallery_size = sim.cols();
  out.order.resize(static_cast<std::size_t>(sim.rows()));
  parallel_for(sim.rows(), threads, [&](Index q) {
    auto& order = out.order[static_cast<std::size_t>(q)];
    order.reserve(static_cast<std::size_t>(sim.cols()));
    for (Index g = 0; g < sim.cols(); ++g) {
      if (!(exclude_self && g == q)) order.push_back(g);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return sim(q, a) > sim(q, b); });
  });
  return out;
}

double recall_at_k(const RankedList& ranked, const Relevance& rel, Index k) {
  if (k < 1) throw Error(ErrorKind::OutOfRange, "k must be >= 1");
  check_inputs(ranked, rel);
  std::vector<double> hits(static_cast<std::size_t>(ranked.queries()), 0.0);
  for (Index q = 0; q < ranked.queries(); ++q) {
    const auto& order = ranked.order[static_cast<std::size_t>(q)];
    const auto& set = rel.sets[static_cast<std::size_t>(q)];
    const Index top = std::min<Index>(k, static_cast<Index>(order.size()));
    for (Index i = 0; i < top; ++i) {
      if (is_relevant(set, order[static_cast<std::size_t>(i)])) {
        hits[static_cast<std::size_t>(q)] = 1.0;
        break;
      }
    }
  }
  return mean_of(hits);
}

double r_precision(const RankedList& ranked, const Relevance& rel) {
  check_inputs(ranked, rel);
  std::vector<double> per_query(static_cast<std::size_t>(ranked.queries()));
  for (Index q = 0; q < ranked.queries(); ++q) {
    const auto& order = ranked.order[static_cast<std::size_t>(q)];
    const auto& set = rel.sets[static_cast<std::size_t>(q)];
    const std::size_t r = set.size();
    std::size_t found = 0;
    for (std::size_t i = 0; i < r; ++i) found += is_relevant(set, order[i]) ? 1 : 0;
    per_query[static_cast<std::size_t>(q)] = static_cast<double>(found) / static_cast<double>(r);
  }
  return mean_of(per_query);
}

double map_at_r(const RankedList& ranked, const Relevance& rel) {
  check_inputs(ranked, rel);
  std::vector<double> per_query(static_cast<std::size_t>(ranked.queries()));
  for (Index q = 0; q < ranked.queries(); ++q) {
    const auto& order = ranked.order[static_cast<std::size_t>(q)];
    const auto& set = rel.sets[static_cast<std::size_t>(q)];
    const std::size_t r = set.size();
    std::size_t found = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      if (is_relevant(set, order[i])) {
        ++found;
        acc += static_cast<double>(found) / static_cast<double>(i + 1);
      }
    }
    per_query[static_cast<std::size_t>(q)] = acc / static_cast<double>(r);
  }
  return mean_of(per_query);
}

double rsum(std::span<const double> recalls) {
  if (recalls.size() != 6) {
    throw Error(ErrorKind::ShapeMismatch, "RSUM takes exactly six recall values");
  }
  // Neumaier summation.
  double sum = 0.0;
  double comp = 0.0;
  for (double r : recalls) {
    if (!(r >= 0.0 && r <= 100.0)) {
      throw Error(ErrorKind::OutOfRange, "recall " + std::to_string(r) + " outside [0, 100]");
    }
    const double t = sum + r;
    if (std::abs(sum) >= std::abs(r)) {
      comp += (sum - t) + r;
    } else {
      comp += (r - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

Vector fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vector ranks(static_cast<Index>(n));
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    // positions i..j (0-based) share the average 1-based rank
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks(static_cast<Index>(idx[k])) = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Spearman inputs differ in length");
  }
  if (pred.size() < 2) {
    throw Error(ErrorKind::DegenerateInput, "Spearman needs at least two observations");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(gold[i])) {
      throw Error(ErrorKind::DegenerateInput, "non-finite score", i);
    }
  }
  const Vector a = fractional_ranks(pred);
  const Vector b = fractional_ranks(gold);
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double saa = da.squaredNorm();
  const double sbb = db.squaredNorm();
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorKind::DegenerateInput, "Spearman is undefined for a constant input");
  }
  return std::clamp(da.dot(db) / std::sqrt(saa * sbb), -1.0, 1.0);
}

CrossModalReport evaluate_cross_modal(const Embedding<double>& img, const Embedding<double>& txt,
                                      const Relevance& rel_i2t, const Relevance& rel_t2i,
                                      unsigned threads) {
  const auto s = cosine_similarity(img, txt, SimilarityKind::I2T);
  const auto ranked_i2t = rank_by_similarity(s.values, false, threads);
  const auto ranked_t2i = rank_by_similarity(s.transposed().values, false, threads);
  CrossModalReport r;
  r.i2t = direction_metrics(ranked_i2t, rel_i2t);
  r.t2i = direction_metrics(ranked_t2i, rel_t2i);
  const double recalls[6] = {100.0 * r.i2t.r1, 100.0 * r.i2t.r5, 100.0 * r.i2t.r10,
                             100.0 * r.t2i.r1, 100.0 * r.t2i.r5, 100.0 * r.t2i.r10};
  r.rsum = rsum(recalls);
  return r;
}

UniModalReport evaluate_uni_modal(const Embedding<double>& emb, const Relevance& rel,
                                  unsigned threads) {
  const auto s = cosine_similarity(emb, emb, SimilarityKind::I2I);
  const auto ranked = rank_by_similarity(s.values, true, threads);
  Relevance without_self;
  without_self.sets.reserve(rel.sets.size());
  for (Index q = 0; q < rel.queries(); ++q) {
    auto set = rel.sets[static_cast<std::size_t>(q)];
    std::erase(set, q);
    without_self.sets.push_back(std::move(set));
  }
  return {recall_at_k(ranked, without_self, 1)};
}

Relevance resolve_relevance(const RetrievalRelevance& rel, const std::vector<std::string>& queries,
                            const std::vector<std::string>& gallery, bool drop_self) {
  std::unordered_map<std::string, Index> where;
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    where.emplace(gallery[g], static_cast<Index>(g));
  }
  Relevance out;
  out.sets.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto it = rel.find(queries[q]);
    if (it == rel.end()) {
      throw Error(ErrorKind::UnknownId, "no relevance entry for query '" + queries[q] + "'", q);
    }
    std::vector<Index> set;
    for (const auto& id : it->second) {
      const auto g = where.find(id);
      if (g == where.end()) continue;
      if (drop_self && id == queries[q]) continue;
      set.push_back(g->second);
    }
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    if (set.empty()) {
      throw Error(ErrorKind::EmptyRelevance,
                  "query '" + queries[q] + "' has no relevant item in the gallery", q);
    }
    out.sets.push_back(std::move(set));
  }
  return out;
}

RetrievalRelevance relevance_from_pairs(const PairList& pairs) {
  RetrievalRelevance rel;
  for (const auto& p : pairs) {
    auto& a = rel[p.image_id];
    if (std::find(a.begin(), a.end(), p.text_id) == a.end()) a.push_back(p.text_id);
    auto& b = rel[p.text_id];
    if (std::find(b.begin(), b.end(), p.image_id) == b.end()) b.push_back(p.image_id);
  }
  return rel;
}

}  // namespace cusa
