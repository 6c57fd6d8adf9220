#include "cusa/evaluation.hpp"

#include <unordered_set>

namespace cusa {

std::vector<std::string> unique_in_order(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

std::vector<std::string> image_ids(const PairList& pairs) {
  std::vector<std::string> ids;
  ids.reserve(pairs.size());
  for (const auto& p : pairs) ids.push_back(p.image_id);
  return unique_in_order(ids);
}

std::vector<std::string> text_ids(const PairList& pairs) {
  std::vector<std::string> ids;
  ids.reserve(pairs.size());
  for (const auto& p : pairs) ids.push_back(p.text_id);
  return unique_in_order(ids);
}

Matrix gather_features(const FeatureTable& table, const std::vector<std::string>& ids) {
  const auto index = table.index();
  Matrix out(static_cast<Index>(ids.size()), table.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = index.find(ids[i]);
    if (it == index.end()) {
      throw Error(ErrorKind::UnknownId, "no features for id '" + ids[i] + "'", i);
    }
    out.row(static_cast<Index>(i)) = table.values.row(it->second).cast<double>();
  }
  return out;
}

ModelEvaluation evaluate_model(const StudentParams& params, const FeatureTable& img_base,
                               const FeatureTable& txt_base, const PairList& pairs,
                               const RetrievalRelevance& relevance, bool usa_branch,
                               unsigned threads) {
  const auto img_ids = image_ids(pairs);
  const auto txt_ids = text_ids(pairs);
  const auto img = embed_images(gather_features(img_base, img_ids), params);
  const auto txt = embed_texts(gather_features(txt_base, txt_ids), params);

  ModelEvaluation r;
  r.cross = evaluate_cross_modal(img, txt, resolve_relevance(relevance, img_ids, txt_ids),
                                 resolve_relevance(relevance, txt_ids, img_ids), threads);
  const auto rel_img = resolve_relevance(relevance, img_ids, img_ids, true);
  const auto rel_txt = resolve_relevance(relevance, txt_ids, txt_ids, true);
  if (usa_branch) {
    r.image = evaluate_uni_modal(project_usa(img, params.u_img), rel_img, threads);
    r.text = evaluate_uni_modal(project_usa(txt, params.u_txt), rel_txt, threads);
  } else {
    r.image = evaluate_uni_modal(img, rel_img, threads);
    r.text = evaluate_uni_modal(txt, rel_txt, threads);
  }
  return r;
}

}  // namespace cusa
