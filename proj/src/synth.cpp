#include "cusa/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace cusa {

namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  Matrix draw(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = dist_(rng_);
    }
    return m;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

// k unit centroids in R^d, mutually orthogonal when k <= d.
Matrix centroids(Gaussian& g, Index k, Index d) {
  const Matrix raw = g.draw(k, d);
  if (k <= d) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw.transpose());
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    return q.transpose();
  }
  return l2_normalize_rows(raw).matrix();
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_clusters < 2) throw Error(ErrorKind::InvalidConfig, "n_clusters must be >= 2");
  if (pairs_per_cluster < 2) throw Error(ErrorKind::InvalidConfig, "pairs_per_cluster must be >= 2");
  if (d_student_img < 1 || d_student_txt < 1 || d_teacher_img < 1 || d_teacher_txt < 1) {
    throw Error(ErrorKind::InvalidConfig, "feature dimensions must be >= 1");
  }
  if (!(intra_noise >= 0.0) || !std::isfinite(intra_noise)) {
    throw Error(ErrorKind::InvalidConfig, "intra_noise must be finite and >= 0");
  }
  if (!(cross_modal_gap >= 0.0 && cross_modal_gap <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "cross_modal_gap must be in [0, 1]");
  }
  if (holdout_per_cluster >= pairs_per_cluster) {
    throw Error(ErrorKind::InvalidConfig, "holdout_per_cluster must be < pairs_per_cluster");
  }
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Gaussian g(cfg.seed);
  const Index k = cfg.n_clusters;
  const Index si = cfg.d_student_img, st = cfg.d_student_txt;
  const Index ti = cfg.d_teacher_img, tt = cfg.d_teacher_txt;
  const Index latent = std::min(si, st);

  const Matrix c_img = centroids(g, k, si);
  const Matrix c_txt = centroids(g, k, st);
  const Matrix c_timg = centroids(g, k, ti);
  const Matrix c_ttxt = centroids(g, k, tt);
  const Matrix mix_img = g.draw(si, latent) / std::sqrt(static_cast<double>(latent));
  const Matrix mix_txt = g.draw(st, latent) / std::sqrt(static_cast<double>(latent));

  const double shared = cfg.intra_noise * std::sqrt(1.0 - cfg.cross_modal_gap);
  const double priv = cfg.intra_noise * std::sqrt(cfg.cross_modal_gap);
  const std::size_t n = static_cast<std::size_t>(k) * cfg.pairs_per_cluster;

  SynthDataset d;
  auto init = [n](FeatureTable& t, Index dim) {
    t.ids.reserve(n);
    t.values.resize(static_cast<Index>(n), dim);
  };
  init(d.img_base, si);
  init(d.txt_base, st);
  init(d.img_teacher, ti);
  init(d.txt_teacher, tt);
  d.cluster.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Index>(i / cfg.pairs_per_cluster);
    const Index row = static_cast<Index>(i);
    const Vector eta = g.draw(latent, 1);
    const Matrix xi_img = g.draw(1, si);
    const Matrix xi_txt = g.draw(1, st);
    const Matrix zeta_img = g.draw(1, ti);
    const Matrix zeta_txt = g.draw(1, tt);

    const Matrix img = c_img.row(c) + shared * (mix_img * eta).transpose() + priv * xi_img;
    const Matrix txt = c_txt.row(c) + shared * (mix_txt * eta).transpose() + priv * xi_txt;
    const Matrix timg = c_timg.row(c) + cfg.intra_noise * zeta_img;
    const Matrix ttxt = c_ttxt.row(c) + cfg.intra_noise * zeta_txt;

    d.img_base.values.row(row) = l2_normalize_rows(img).matrix().cast<float>();
    d.txt_base.values.row(row) = l2_normalize_rows(txt).matrix().cast<float>();
    d.img_teacher.values.row(row) = l2_normalize_rows(timg).matrix().cast<float>();
    d.txt_teacher.values.row(row) = l2_normalize_rows(ttxt).matrix().cast<float>();

    const auto img_id = make_id("img", i);
    const auto txt_id = make_id("txt", i);
    d.img_base.ids.push_back(img_id);
    d.img_teacher.ids.push_back(img_id);
    d.txt_base.ids.push_back(txt_id);
    d.txt_teacher.ids.push_back(txt_id);
    d.cluster.push_back(static_cast<std::uint32_t>(c));

    const bool held_out =
        i % cfg.pairs_per_cluster >= cfg.pairs_per_cluster - cfg.holdout_per_cluster;
    (held_out ? d.holdout_pairs : d.pairs).push_back({img_id, txt_id});
  }

  // Same-cluster membership, across and within modalities; self excluded.
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> img_rel, txt_rel;
    const std::size_t first = d.cluster[i] * static_cast<std::size_t>(cfg.pairs_per_cluster);
    for (std::size_t j = first; j < first + cfg.pairs_per_cluster; ++j) {
      if (j != i) img_rel.push_back(d.img_base.ids[j]);
      txt_rel.push_back(d.txt_base.ids[j]);
    }
    // image i: all same-cluster texts and the other same-cluster images
    std::vector<std::string> for_img = txt_rel;
    for_img.insert(for_img.end(), img_rel.begin(), img_rel.end());
    d.relevance.emplace(d.img_base.ids[i], std::move(for_img));

    std::vector<std::string> for_txt;
    for (std::size_t j = first; j < first + cfg.pairs_per_cluster; ++j) {
      for_txt.push_back(d.img_base.ids[j]);
    }
    for (std::size_t j = first; j < first + cfg.pairs_per_cluster; ++j) {
      if (j != i) for_txt.push_back(d.txt_base.ids[j]);
    }
    d.relevance.emplace(d.txt_base.ids[i], std::move(for_txt));
  }
  return d;
}

std::vector<std::filesystem::path> write_synth(const SynthDataset& data,
                                               const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> files{dir / "img_base.cusf",    dir / "txt_base.cusf",
                                           dir / "img_teacher.cusf", dir / "txt_teacher.cusf",
                                           dir / "pairs.tsv",        dir / "relevance.tsv"};
  write_features(files[0], data.img_base);
  write_features(files[1], data.txt_base);
  write_features(files[2], data.img_teacher);
  write_features(files[3], data.txt_teacher);
  write_pairs(files[4], data.pairs);
  write_relevance(files[5], data.relevance);
  if (!data.holdout_pairs.empty()) {
    files.push_back(dir / "pairs_holdout.tsv");
    write_pairs(files.back(), data.holdout_pairs);
  }
  return files;
}

}  // namespace cusa
