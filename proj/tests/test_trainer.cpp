#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cusa/optimizer.hpp"
#include "cusa/synth.hpp"
#include "cusa/trainer.hpp"
#include "scenario.hpp"

using namespace cusa;

namespace {

SynthDataset dataset(std::uint64_t seed, std::uint32_t clusters = 3, std::uint32_t per = 20) {
  SynthConfig c;
  c.n_clusters = clusters;
  c.pairs_per_cluster = per;
  c.d_student_img = 10;
  c.d_student_txt = 8;
  c.d_teacher_img = 6;
  c.d_teacher_txt = 7;
  c.seed = seed;
  return synth_generate(c);
}

TrainingData aligned(const SynthDataset& d) {
  return align_training_data(d.pairs, d.img_base, d.txt_base, d.img_teacher, d.txt_teacher);
}

TrainConfig config(double alpha, double beta, std::uint64_t seed, std::uint64_t epochs = 2) {
  TrainConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.batch_size = 8;
  c.epochs = epochs;
  c.learning_rate = 1e-2;
  c.seed = seed;
  c.embed_dim = 6;
  c.usa_dim = 4;
  return c;
}

StudentParams scalar_params(double value) {
  StudentParams p;
  p.w_img = Matrix::Constant(1, 1, value);
  p.w_txt = Matrix::Constant(1, 1, value);
  p.u_img = Matrix::Constant(1, 1, value);
  p.u_txt = Matrix::Constant(1, 1, value);
  p.log_inv_temp = value;
  return p;
}

}  // namespace

TEST_CASE("make_batches") {
  const auto b = make_batches(10, 4, 3, 0);
  REQUIRE(b.size() == 2);
  std::set<Index> seen;
  for (const auto& batch : b) {
    CHECK(batch.size() == 4);
    for (Index i : batch) {
      CHECK(i >= 0);
      CHECK(i < 10);
      seen.insert(i);
    }
  }
  CHECK(seen.size() == 8);
  CHECK(make_batches(10, 4, 3, 0) == b);
  CHECK(make_batches(100, 10, 3, 0) != make_batches(100, 10, 3, 1));
  CHECK(make_batches(100, 10, 3, 0) != make_batches(100, 10, 4, 0));
  CHECK(make_batches(4, 4, 0, 0).size() == 1);
  try {
    make_batches(3, 4, 0, 0);
    FAIL("expected BatchTooLarge");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BatchTooLarge);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  StudentParams p = scalar_params(0.7);
  const StudentParams before = p;
  AdamState s = AdamState::zeros_like(p);
  for (int i = 0; i < 3; ++i) adam_step(p, p.zeros_like(), s, AdamHyper{});
  CHECK(p.w_img(0, 0) == before.w_img(0, 0));
  CHECK(p.log_inv_temp == before.log_inv_temp);
  CHECK(s.step == 3);
}

TEST_CASE("adam: first step is about -lr for a unit gradient") {
  StudentParams p = scalar_params(0.0);
  StudentParams g = scalar_params(1.0);
  AdamState s = AdamState::zeros_like(p);
  const AdamHyper h{0.01, 0.9, 0.999, 1e-8, 0.0};
  adam_step(p, g, s, h);
  CHECK(p.w_img(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.log_inv_temp == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: two steps follow the hand recurrence") {
  const double lr = 0.05, b1 = 0.8, b2 = 0.95, eps = 1e-6;
  const double g1 = 0.3, g2 = -1.2, x0 = 0.4;
  double m = (1 - b1) * g1, v = (1 - b2) * g1 * g1;
  double x = x0 - lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
  m = b1 * m + (1 - b1) * g2;
  v = b2 * v + (1 - b2) * g2 * g2;
  x = x - lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);

  Matrix param = Matrix::Constant(1, 1, x0);
  AdamMoments mo{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  const AdamHyper h{lr, b1, b2, eps, 0.0};
  adam_update(param, Matrix::Constant(1, 1, g1), mo, 1, h, false);
  adam_update(param, Matrix::Constant(1, 1, g2), mo, 2, h, false);
  CHECK(std::abs(param(0, 0) - x) <= 1e-12);
}

TEST_CASE("adam: weight decay touches matrices only") {
  StudentParams p = scalar_params(2.0);
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, p.zeros_like(), s, AdamHyper{0.1, 0.9, 0.999, 1e-8, 0.5});
  CHECK(p.w_img(0, 0) == doctest::Approx(2.0 * (1 - 0.1 * 0.5)));
  CHECK(p.u_txt(0, 0) == doctest::Approx(1.9));
  CHECK(p.log_inv_temp == 2.0);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(config(0.5, 0.5, 0).validate());
  auto c = config(0.5, 0.5, 0);
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = config(-0.1, 0.5, 0);
  try {
    c.validate();
    FAIL("expected NegativeWeight");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NegativeWeight);
  }
  c = config(0.5, 0.5, 0);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = config(0.5, 0.5, 0);
  c.teacher_inv_temp = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(TrainConfig{}.eval_usa_branch == false);
  CHECK(TrainConfig{}.teacher_inv_temp == 1.0);
}

TEST_CASE("align_training_data reports missing ids") {
  const auto d = dataset(1);
  auto pairs = d.pairs;
  pairs[5].text_id = "nope";
  try {
    align_training_data(pairs, d.img_base, d.txt_base, d.img_teacher, d.txt_teacher);
    FAIL("expected MissingFeature");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFeature);
    CHECK(e.position() == 6u);
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }
}

TEST_CASE("train with zero weights still reports the alignment terms") {
  const auto r = train(aligned(dataset(2)), config(0.0, 0.0, 1));
  REQUIRE(r.log.size() == 2 * (60 / 8));
  for (const auto& s : r.log) {
    CHECK(s.l_total == s.l_original);
    CHECK(s.l_csa > 0.0);
    CHECK(s.l_usa > 0.0);
  }
}

TEST_CASE("train is deterministic and logs the identity on every step") {
  const auto data = aligned(dataset(3));
  const auto cfg = config(0.5, 0.3, 9);
  const auto a = train(data, cfg);
  const auto b = train(data, cfg);
  CHECK(a.log == b.log);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  CHECK(a.checkpoint.config == cfg);
  for (const auto& s : a.log) {
    CHECK(std::abs(s.l_total - (s.l_original + 0.5 * s.l_csa + 0.3 * s.l_usa)) <= 1e-9);
    CHECK(s.inv_temp >= 1.0);
    CHECK(s.inv_temp <= 100.0);
  }
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].step == i);
  CHECK(a.log.back().epoch == 1);
}

TEST_CASE("train: zero epochs returns the initial parameters") {
  const auto data = aligned(dataset(4));
  auto cfg = config(0.5, 0.5, 2, 0);
  const auto init = init_params(77, {10, 8, 6, 4});
  const auto r = train(data, cfg, init);
  CHECK(r.log.empty());
  CHECK(r.checkpoint.params.w_img == init.w_img);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(data, cfg, init_params(1, {10, 8, 5, 4})), Error);
}

TEST_CASE("train errors carry epoch and step") {
  auto d = dataset(5);
  d.img_base.values.setZero();
  const auto data = aligned(d);
  try {
    train(data, config(0.5, 0.5, 0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroRow);
    CHECK(std::string(e.what()).find("epoch 0, step 0:") != std::string::npos);
  }
}

TEST_CASE("train: total loss trends down over the first 50 steps") {
  // median over 5 seeds of (mean of steps 0-9) - (mean of steps 40-49)
  std::vector<double> drops;
  std::vector<double> slopes;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = aligned(dataset(seed, 2, 100));
    auto cfg = config(0.5, 0.5, seed, 10);
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 16;
    const auto log = train(data, cfg).log;
    REQUIRE(log.size() >= 50);
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
      head += log[static_cast<std::size_t>(i)].l_total / 10;
      tail += log[static_cast<std::size_t>(40 + i)].l_total / 10;
    }
    drops.push_back(head - tail);
    double sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (int i = 0; i < 50; ++i) {
      const double y = log[static_cast<std::size_t>(i)].l_total;
      sx += i;
      sy += y;
      sxy += i * y;
      sxx += i * i;
    }
    slopes.push_back((50 * sxy - sx * sy) / (50 * sxx - sx * sx));
  }
  CHECK(scenario::median(drops) > 0.0);
  CHECK(scenario::median(slopes) < 0.0);
}

TEST_CASE("format_train_log") {
  const auto data = aligned(dataset(6));
  const auto cfg = config(0.5, 0.5, 0, 1);
  const auto r = train(data, cfg);
  std::istringstream in(format_train_log(r.log, cfg));
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  CHECK(header["kind"] == "train_log");
  CHECK(header["threads"] == 1);
  CHECK(header["alpha"] == 0.5);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& rec = r.log[n];
    CHECK(j["step"] == rec.step);
    CHECK(j["l_total"].get<double>() == rec.l_total);
    CHECK(j["inv_temp"].get<double>() == rec.inv_temp);
    ++n;
  }
  CHECK(n == r.log.size());
}
