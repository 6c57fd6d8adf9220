#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "cusa/soft_labels.hpp"
#include "cusa/synth.hpp"

using namespace cusa;
namespace fs = std::filesystem;

namespace {

SynthConfig small(double noise, std::uint64_t seed = 5) {
  SynthConfig c;
  c.n_clusters = 2;
  c.pairs_per_cluster = 10;
  c.d_student_img = 8;
  c.d_student_txt = 6;
  c.d_teacher_img = 5;
  c.d_teacher_txt = 7;
  c.intra_noise = noise;
  c.seed = seed;
  return c;
}

// Over every item i, every (same-cluster j, other-cluster k) comparison of
// cos(i, j) against cos(i, k).
double separation(const FeatureTable& t, const std::vector<std::uint32_t>& cluster) {
  const Matrix x = t.as_double();
  const Matrix s = x * x.transpose();
  std::size_t wins = 0, total = 0;
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.rows(); ++j) {
      if (j == i || cluster[j] != cluster[i]) continue;
      for (Index k = 0; k < s.rows(); ++k) {
        if (cluster[k] == cluster[i]) continue;
        ++total;
        if (s(i, j) > s(i, k)) ++wins;
      }
    }
  }
  return static_cast<double>(wins) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("shapes, ids and pairs") {
  auto c = small(0.1);
  const auto d = synth_generate(c);
  CHECK(d.img_base.size() == 20);
  CHECK(d.img_base.dim() == 8);
  CHECK(d.txt_base.dim() == 6);
  CHECK(d.img_teacher.dim() == 5);
  CHECK(d.txt_teacher.dim() == 7);
  CHECK(d.img_teacher.ids == d.img_base.ids);
  CHECK(d.txt_teacher.ids == d.txt_base.ids);
  REQUIRE(d.pairs.size() == 20);
  CHECK(d.holdout_pairs.empty());
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(d.pairs[i].image_id == d.img_base.ids[i]);
    CHECK(d.pairs[i].text_id == d.txt_base.ids[i]);
    CHECK(d.cluster[i] == i / 10);
  }
  for (const auto* t : {&d.img_base, &d.txt_base, &d.img_teacher, &d.txt_teacher}) {
    for (Index i = 0; i < t->size(); ++i) CHECK(std::abs(t->values.row(i).norm() - 1.0f) <= 1e-6f);
  }
  CHECK(std::set<std::string>(d.img_base.ids.begin(), d.img_base.ids.end()).size() == 20);
}

TEST_CASE("holdout split takes the last pairs of every cluster") {
  auto c = small(0.1);
  c.holdout_per_cluster = 3;
  const auto d = synth_generate(c);
  REQUIRE(d.pairs.size() == 14);
  REQUIRE(d.holdout_pairs.size() == 6);
  CHECK(d.holdout_pairs[0].image_id == d.img_base.ids[7]);
  CHECK(d.holdout_pairs[3].image_id == d.img_base.ids[17]);
  CHECK(d.pairs[7].image_id == d.img_base.ids[10]);
  // the split does not change the generated features
  CHECK(d.img_base.values == synth_generate(small(0.1)).img_base.values);
}

TEST_CASE("zero noise collapses each cluster") {
  const auto d = synth_generate(small(0.0));
  for (Index i = 0; i < 20; ++i) {
    const Index first = (i / 10) * 10;
    CHECK(d.img_base.values.row(i) == d.img_base.values.row(first));
    CHECK(d.txt_teacher.values.row(i) == d.txt_teacher.values.row(first));
  }
  Matrix one_cluster(4, 5);
  for (Index i = 0; i < 4; ++i) one_cluster.row(i) = d.img_teacher.values.row(i * 2).cast<double>();
  const auto p = teacher_distribution(l2_normalize_rows(one_cluster)).probabilities();
  CHECK((p.array() - 0.25).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("generation is deterministic") {
  const auto a = synth_generate(small(0.1, 9));
  const auto b = synth_generate(small(0.1, 9));
  CHECK(encode_features(a.img_base) == encode_features(b.img_base));
  CHECK(encode_features(a.txt_base) == encode_features(b.txt_base));
  CHECK(encode_features(a.img_teacher) == encode_features(b.img_teacher));
  CHECK(encode_features(a.txt_teacher) == encode_features(b.txt_teacher));
  CHECK(a.pairs == b.pairs);
  CHECK(a.relevance == b.relevance);
  CHECK(synth_generate(small(0.1, 10)).img_base.values != a.img_base.values);
}

TEST_CASE("teacher features separate clusters at noise 0.1") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthConfig c;
    c.n_clusters = 4;
    c.pairs_per_cluster = 30;
    c.intra_noise = 0.1;
    c.seed = seed;
    const auto d = synth_generate(c);
    CHECK(separation(d.img_teacher, d.cluster) >= 0.99);
    CHECK(separation(d.txt_teacher, d.cluster) >= 0.99);
  }
}

TEST_CASE("relevance marks same-cluster items and is symmetric") {
  const auto d = synth_generate(small(0.1));
  CHECK(d.relevance.size() == 40);
  std::map<std::string, std::uint32_t> cluster_of;
  for (std::size_t i = 0; i < 20; ++i) {
    cluster_of[d.img_base.ids[i]] = d.cluster[i];
    cluster_of[d.txt_base.ids[i]] = d.cluster[i];
  }
  for (const auto& [query, ids] : d.relevance) {
    CHECK(ids.size() == 19);
    CHECK(std::find(ids.begin(), ids.end(), query) == ids.end());
    for (const auto& id : ids) {
      CHECK(cluster_of.at(id) == cluster_of.at(query));
      const auto& back = d.relevance.at(id);
      CHECK(std::find(back.begin(), back.end(), query) != back.end());
    }
  }
  // every labeled pair is relevant, and the labels miss the other same-cluster texts
  for (const auto& p : d.pairs) {
    const auto& r = d.relevance.at(p.image_id);
    CHECK(std::find(r.begin(), r.end(), p.text_id) != r.end());
  }
}

TEST_CASE("config validation") {
  auto c = small(0.1);
  c.n_clusters = 1;
  CHECK_THROWS_AS(synth_generate(c), Error);
  c = small(0.1);
  c.pairs_per_cluster = 1;
  CHECK_THROWS_AS(synth_generate(c), Error);
  c = small(-0.1);
  CHECK_THROWS_AS(c.validate(), Error);
  c = small(0.1);
  c.cross_modal_gap = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small(0.1);
  c.holdout_per_cluster = 10;
  try {
    c.validate();
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
  }
}

TEST_CASE("write_synth") {
  const fs::path dir = fs::temp_directory_path() / ("cusa_test_synth_" + std::to_string(std::random_device{}()));
  auto c = small(0.1);
  const auto d = synth_generate(c);
  const auto files = write_synth(d, dir / "a");
  CHECK(files.size() == 6);
  for (const auto& f : files) CHECK(fs::exists(f));
  CHECK(read_pairs(dir / "a" / "pairs.tsv") == d.pairs);
  CHECK(read_relevance(dir / "a" / "relevance.tsv") == d.relevance);
  CHECK(read_features(dir / "a" / "txt_teacher.cusf").values == d.txt_teacher.values);

  c.holdout_per_cluster = 2;
  const auto h = write_synth(synth_generate(c), dir / "b");
  CHECK(h.size() == 7);
  CHECK(read_pairs(dir / "b" / "pairs_holdout.tsv").size() == 4);
  fs::remove_all(dir);
}
