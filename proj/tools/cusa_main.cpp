// cusa: synth, train, eval, gradcheck and inspect from the command line.
//
// Reports are JSON on stdout. Exit codes: 0 ok, 2 usage or bad config,
// 3 I/O or file format, 4 inconsistent data (ids), 5 numeric failure,
// 6 gradcheck failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cusa/evaluation.hpp"
#include "cusa/gradcheck.hpp"
#include "cusa/io.hpp"
#include "cusa/losses.hpp"
#include "cusa/metrics.hpp"
#include "cusa/soft_labels.hpp"
#include "cusa/student.hpp"
#include "cusa/synth.hpp"
#include "cusa/trainer.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace cusa;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitNumeric = 5;
constexpr int kExitGradcheck = 6;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::NegativeWeight:
    case ErrorKind::BatchTooLarge:
    case ErrorKind::DegenerateBatch:
      return kExitUsage;
    case ErrorKind::IoFailure:
    case ErrorKind::BadMagic:
    case ErrorKind::VersionUnsupported:
    case ErrorKind::DuplicateId:
    case ErrorKind::TruncatedFile:
    case ErrorKind::NonFiniteValue:
    case ErrorKind::EmptyTable:
    case ErrorKind::MalformedLine:
      return kExitIo;
    case ErrorKind::UnknownId:
    case ErrorKind::MissingFeature:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::EmptyRelevance:
      return kExitData;
    default:
      return kExitNumeric;
  }
}

unsigned eval_threads() {
  const char* env = std::getenv("CUSA_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    throw Error(ErrorKind::InvalidConfig, std::string("CUSA_THREADS must be in [1, 1024], got '") +
                                              env + "'");
  }
  return static_cast<unsigned>(n);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json config_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"teacher_inv_temp", c.teacher_inv_temp},
          {"separate_uni_temp", c.separate_uni_temp},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay},
          {"embed_dim", c.embed_dim},
          {"usa_dim", c.usa_dim},
          {"eval_usa_branch", c.eval_usa_branch}};
}

json loss_json(const LossReport& r) {
  return {{"l_original", r.l_original},
          {"l_csa", r.l_csa},
          {"l_usa", r.l_usa},
          {"l_total", r.l_total},
          {"per_direction",
           {{"i2t", r.per_direction.i2t},
            {"t2i", r.per_direction.t2i},
            {"i2i", r.per_direction.i2i},
            {"t2t", r.per_direction.t2t}}}};
}

json direction_json(const DirectionMetrics& d) {
  return {{"r1", d.r1},
          {"r5", d.r5},
          {"r10", d.r10},
          {"r_precision", d.r_precision},
          {"map_at_r", d.map_at_r},
          {"percent",
           {{"r1", 100.0 * d.r1},
            {"r5", 100.0 * d.r5},
            {"r10", 100.0 * d.r10},
            {"r_precision", 100.0 * d.r_precision},
            {"map_at_r", 100.0 * d.map_at_r}}}};
}

// Shared report envelope. Wall time is kept out of the deterministic payload
// and only added on request.
struct Report {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json result = json::object();

  void print(bool timing, std::chrono::steady_clock::time_point start) const {
    json out;
    out["format_version"] = 1;
    out["command"] = command;
    out["config"] = config;
    out["seed"] = seed;
    out["result"] = result;
    if (timing) {
      out["timing"] = {
          {"wall_time_s",
           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    }
    std::cout << out.dump(2) << '\n';
  }
};

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
};

int run_synth(const SynthArgs& a, Report& rep) {
  a.cfg.validate();
  const auto data = synth_generate(a.cfg);
  std::error_code ec;
  std::filesystem::create_directories(a.out, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create '" + a.out + "': " + ec.message());
  const auto files = write_synth(data, a.out);

  rep.seed = a.cfg.seed;
  rep.config = {{"clusters", a.cfg.n_clusters},
                {"pairs_per_cluster", a.cfg.pairs_per_cluster},
                {"d_img", a.cfg.d_student_img},
                {"d_txt", a.cfg.d_student_txt},
                {"d_teacher_img", a.cfg.d_teacher_img},
                {"d_teacher_txt", a.cfg.d_teacher_txt},
                {"noise", a.cfg.intra_noise},
                {"gap", a.cfg.cross_modal_gap},
                {"holdout", a.cfg.holdout_per_cluster}};
  json names = json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  rep.result = {{"files", names},
                {"pairs", data.pairs.size()},
                {"holdout_pairs", data.holdout_pairs.size()}};
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  TrainConfig cfg;
  std::string pairs, img_base, txt_base, img_teacher, txt_teacher;
  std::string out_ckpt, log, resume;
};

int run_train(const TrainArgs& a, Report& rep) {
  a.cfg.validate();
  const auto pairs = read_pairs(a.pairs);
  const auto data = align_training_data(pairs, read_features(a.img_base), read_features(a.txt_base),
                                        read_features(a.img_teacher), read_features(a.txt_teacher));
  std::optional<StudentParams> initial;
  if (!a.resume.empty()) initial = read_checkpoint(a.resume).params;

  const auto result = train(data, a.cfg, std::move(initial));
  write_checkpoint(a.out_ckpt, result.checkpoint);
  if (!a.log.empty()) write_file(a.log, format_train_log(result.log, a.cfg));

  rep.seed = a.cfg.seed;
  rep.config = config_json(a.cfg);
  rep.result = {{"pairs", data.size()}, {"steps", result.log.size()}};
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    rep.result["final"] = {{"epoch", last.epoch},      {"step", last.step},
                           {"l_original", last.l_original}, {"l_csa", last.l_csa},
                           {"l_usa", last.l_usa},      {"l_total", last.l_total},
                           {"inv_temp", last.inv_temp}};
  }
  rep.result["inv_temp"] = clamped_inv_temp(result.checkpoint.params.log_inv_temp);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string task = "cross";
  std::string ckpt, img_base, txt_base, img_emb, txt_emb;
  std::string pairs, relevance, scored_pairs;
  std::vector<double> recalls;
  bool usa_branch = false;
};

// Produces embeddings for a list of ids on one side, from a checkpoint plus
// base features or from an embedding file.
class EmbeddingSource {
 public:
  explicit EmbeddingSource(const EvalArgs& a) : a_(a) {
    if (!a.ckpt.empty()) ckpt_ = read_checkpoint(a.ckpt);
  }

  bool from_checkpoint() const { return ckpt_.has_value(); }
  bool usa_default() const { return ckpt_ && ckpt_->config.eval_usa_branch; }

  const FeatureTable& table(bool image) {
    auto& slot = image ? img_ : txt_;
    if (!slot) {
      const std::string& path = from_checkpoint() ? (image ? a_.img_base : a_.txt_base)
                                                  : (image ? a_.img_emb : a_.txt_emb);
      if (path.empty()) {
        const char* need = from_checkpoint() ? (image ? "--img-base" : "--txt-base")
                                             : (image ? "--img-emb" : "--txt-emb");
        throw Error(ErrorKind::InvalidConfig, std::string(need) + " is required for this task");
      }
      slot = read_features(path);
    }
    return *slot;
  }

  Embedding<double> embed(bool image, const std::vector<std::string>& ids, bool usa) {
    const Matrix x = gather_features(table(image), ids);
    if (!ckpt_) return l2_normalize_rows(x);
    const auto& p = ckpt_->params;
    auto e = image ? embed_images(x, p) : embed_texts(x, p);
    if (usa) return project_usa(e, image ? p.u_img : p.u_txt);
    return e;
  }

 private:
  const EvalArgs& a_;
  std::optional<Checkpoint> ckpt_;
  std::optional<FeatureTable> img_, txt_;
};

struct ScoredPair {
  std::string a, b;
  double gold;
};

std::vector<ScoredPair> read_scored_pairs(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<ScoredPair> out;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    char* end = nullptr;
    const double gold = f.size() == 3 ? std::strtod(f[2].c_str(), &end) : 0.0;
    if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty() || *end != '\0' ||
        !std::isfinite(gold)) {
      throw Error(ErrorKind::MalformedLine,
                  "scored pairs line " + std::to_string(line_no) + ": expected id<TAB>id<TAB>score",
                  line_no);
    }
    out.push_back({f[0], f[1], gold});
  }
  if (out.empty()) throw Error(ErrorKind::EmptyTable, "no scored pairs in '" + path + "'");
  return out;
}

std::vector<std::string> table_ids(const FeatureTable& t) { return t.ids; }

int run_eval(const EvalArgs& a, Report& rep) {
  const unsigned threads = eval_threads();
  rep.config = {{"task", a.task}};

  if (a.task == "rsum") {
    rep.result = {{"recalls", a.recalls}, {"rsum", rsum(a.recalls)}};
    return kExitOk;
  }

  EmbeddingSource src(a);
  const bool usa = a.usa_branch || src.usa_default();
  rep.config["source"] = src.from_checkpoint() ? "checkpoint" : "embeddings";
  rep.config["threads"] = threads;
  if (src.from_checkpoint() && a.task != "cross") rep.config["usa_branch"] = usa;

  if (a.task == "cross") {
    if (a.pairs.empty()) throw Error(ErrorKind::InvalidConfig, "--pairs is required for cross");
    const auto pairs = read_pairs(a.pairs);
    const auto img_ids = image_ids(pairs);
    const auto txt_ids = text_ids(pairs);
    const auto rel = a.relevance.empty() ? relevance_from_pairs(pairs) : read_relevance(a.relevance);
    const auto img = src.embed(true, img_ids, false);
    const auto txt = src.embed(false, txt_ids, false);
    const auto r = evaluate_cross_modal(img, txt, resolve_relevance(rel, img_ids, txt_ids),
                                        resolve_relevance(rel, txt_ids, img_ids), threads);
    rep.result = {{"queries", {{"images", img_ids.size()}, {"texts", txt_ids.size()}}},
                  {"i2t", direction_json(r.i2t)},
                  {"t2i", direction_json(r.t2i)},
                  {"rsum", r.rsum}};
    return kExitOk;
  }

  if (a.task == "img" || a.task == "txt") {
    const bool image = a.task == "img";
    if (a.relevance.empty()) throw Error(ErrorKind::InvalidConfig, "--relevance is required");
    std::vector<std::string> ids;
    if (!a.pairs.empty()) {
      const auto pairs = read_pairs(a.pairs);
      ids = image ? image_ids(pairs) : text_ids(pairs);
    } else {
      ids = table_ids(src.table(image));
    }
    const auto emb = src.embed(image, ids, usa);
    const auto r = evaluate_uni_modal(
        emb, resolve_relevance(read_relevance(a.relevance), ids, ids, true), threads);
    rep.result = {{"queries", ids.size()}, {"r1", r.r1}, {"r1_percent", 100.0 * r.r1}};
    return kExitOk;
  }

  if (a.task == "sts") {
    if (a.scored_pairs.empty()) {
      throw Error(ErrorKind::InvalidConfig, "--scored-pairs is required for sts");
    }
    const auto scored = read_scored_pairs(a.scored_pairs);
    std::vector<std::string> ids;
    for (const auto& s : scored) {
      ids.push_back(s.a);
      ids.push_back(s.b);
    }
    ids = unique_in_order(ids);
    const auto emb = src.embed(false, ids, usa);
    std::unordered_map<std::string, Index> row;
    for (std::size_t i = 0; i < ids.size(); ++i) row[ids[i]] = static_cast<Index>(i);
    std::vector<double> pred, gold;
    for (const auto& s : scored) {
      pred.push_back(emb.matrix().row(row[s.a]).dot(emb.matrix().row(row[s.b])));
      gold.push_back(s.gold);
    }
    rep.result = {{"pairs", scored.size()}, {"spearman", spearman(pred, gold)}};
    return kExitOk;
  }

  throw Error(ErrorKind::InvalidConfig, "unknown task '" + a.task + "'");
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck_cmd(const GradcheckOptions& opt, Report& rep) {
  const auto report = run_gradcheck(opt);
  rep.seed = opt.seed;
  rep.config = {{"trials", opt.trials},
                {"dims", opt.max_dim},
                {"batch_sizes", opt.batch_sizes},
                {"step", opt.step},
                {"rel_tol", opt.rel_tol},
                {"abs_tol", opt.abs_tol}};
  json comps = json::array();
  for (const auto& c : report.components) {
    comps.push_back({{"name", c.name},
                     {"max_rel_error", c.max_rel_error},
                     {"max_abs_error", c.max_abs_error},
                     {"checked", c.checked},
                     {"failures", c.failures},
                     {"passed", c.passed()}});
  }
  rep.result = {{"passed", report.passed()}, {"components", comps}};
  if (const auto* bad = report.first_failure()) {
    rep.result["failed_component"] = bad->name;
    std::cerr << "gradcheck failed: component " << bad->name << " (" << bad->failures << " of "
              << bad->checked << " partials, max relative error " << bad->max_rel_error << ")\n";
    return kExitGradcheck;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string pairs, img_base, txt_base, img_teacher, txt_teacher, ckpt, export_path;
  std::vector<Index> batch;
  double alpha = 0.5;
  double beta = 0.5;
  double teacher_inv_temp = 1.0;
  std::uint64_t seed = 0;
  std::uint32_t embed_dim = 16;
  std::uint32_t usa_dim = 16;
  bool separate_uni_temp = false;
};

void export_embeddings(const std::string& path, const std::vector<std::string>& img_ids,
                       const Embedding<double>& img, const std::vector<std::string>& txt_ids,
                       const Embedding<double>& txt) {
  std::string out;
  char buf[32];
  auto dump = [&](const char* modality, const std::vector<std::string>& ids,
                  const Embedding<double>& e) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out += modality;
      out += '\t';
      out += ids[i];
      for (Index j = 0; j < e.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "\t%.17g", e.matrix()(static_cast<Index>(i), j));
        out += buf;
      }
      out += '\n';
    }
  };
  dump("image", img_ids, img);
  dump("text", txt_ids, txt);
  write_file(path, out);
}

int run_inspect(const InspectArgs& a, Report& rep) {
  validate(LossWeights{a.alpha, a.beta});
  if (a.batch.size() < 2) throw Error(ErrorKind::InvalidConfig, "--batch needs at least 2 indices");
  const auto pairs = read_pairs(a.pairs);
  PairList batch;
  for (const Index i : a.batch) {
    if (i < 0 || i >= static_cast<Index>(pairs.size())) {
      throw Error(ErrorKind::UnknownId, "batch index " + std::to_string(i) + " is outside the " +
                                            std::to_string(pairs.size()) + " pairs");
    }
    batch.push_back(pairs[static_cast<std::size_t>(i)]);
  }
  const auto img_base = read_features(a.img_base);
  const auto txt_base = read_features(a.txt_base);
  const auto data = align_training_data(batch, img_base, txt_base, read_features(a.img_teacher),
                                        read_features(a.txt_teacher));

  StudentParams params;
  if (!a.ckpt.empty()) {
    params = read_checkpoint(a.ckpt).params;
  } else {
    params = init_params(a.seed, {img_base.dim(), txt_base.dim(), a.embed_dim, a.usa_dim},
                         a.separate_uni_temp);
  }
  const auto targets =
      build_batch_targets(TeacherBatch<double>{data.teacher_img, data.teacher_txt},
                          a.teacher_inv_temp);
  const auto out = forward(data.base_img, data.base_txt, params);
  const auto loss = batch_loss_and_grads(out, targets, {a.alpha, a.beta});

  const auto s_i2t = cosine_similarity(out.img_emb, out.txt_emb, SimilarityKind::I2T);
  const auto s_i2i = cosine_similarity(out.img_usa, out.img_usa, SimilarityKind::I2I);
  const auto s_t2t = cosine_similarity(out.txt_usa, out.txt_usa, SimilarityKind::T2T);

  rep.seed = a.seed;
  rep.config = {{"alpha", a.alpha},
                {"beta", a.beta},
                {"teacher_inv_temp", a.teacher_inv_temp},
                {"batch", a.batch},
                {"params", a.ckpt.empty() ? "init" : "checkpoint"}};
  json ids = json::array();
  for (const auto& p : batch) ids.push_back({p.image_id, p.text_id});
  rep.result = {
      {"pairs", ids},
      {"inv_temp", out.inv_temp},
      {"inv_temp_uni", out.inv_temp_uni},
      {"P_i2i", matrix_json(targets.p_i2i.probabilities())},
      {"P_t2t", matrix_json(targets.p_t2t.probabilities())},
      {"Q_i2t", matrix_json(row_softmax(s_i2t, out.inv_temp).probabilities())},
      {"Q_t2i", matrix_json(row_softmax(s_i2t.transposed(), out.inv_temp).probabilities())},
      {"Q_i2i", matrix_json(row_softmax(s_i2i, out.inv_temp_uni).probabilities())},
      {"Q_t2t", matrix_json(row_softmax(s_t2t, out.inv_temp_uni).probabilities())},
      {"loss", loss_json(loss.report)}};

  if (!a.export_path.empty()) {
    const auto img_ids = image_ids(pairs);
    const auto txt_ids = text_ids(pairs);
    export_embeddings(a.export_path, img_ids,
                      embed_images(gather_features(img_base, img_ids), params), txt_ids,
                      embed_texts(gather_features(txt_base, txt_ids), params));
    rep.result["export"] = {{"path", a.export_path},
                            {"images", img_ids.size()},
                            {"texts", txt_ids.size()}};
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"Cross-modal and uni-modal soft-label alignment toolkit", "cusa"};
  app.require_subcommand(1);
  bool timing = false;
  app.add_flag("--timing", timing, "Add wall-clock time to the report");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic clustered dataset");
  synth->add_option("--clusters", sa.cfg.n_clusters, "Number of clusters")->capture_default_str();
  synth->add_option("--pairs-per-cluster", sa.cfg.pairs_per_cluster)->capture_default_str();
  synth->add_option("--d-img", sa.cfg.d_student_img, "Image base feature width")
      ->capture_default_str();
  synth->add_option("--d-txt", sa.cfg.d_student_txt, "Text base feature width")
      ->capture_default_str();
  synth->add_option("--d-teacher-img", sa.cfg.d_teacher_img)->capture_default_str();
  synth->add_option("--d-teacher-txt", sa.cfg.d_teacher_txt)->capture_default_str();
  synth->add_option("--noise", sa.cfg.intra_noise, "Within-cluster noise scale")
      ->capture_default_str();
  synth->add_option("--gap", sa.cfg.cross_modal_gap,
                    "Share of per-pair noise private to each modality")
      ->capture_default_str();
  synth->add_option("--seed", sa.cfg.seed)->capture_default_str();
  synth->add_option("--holdout", sa.cfg.holdout_per_cluster,
                    "Pairs per cluster written to pairs_holdout.tsv")
      ->capture_default_str();
  synth->add_option("--out", sa.out, "Output directory")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train the student");
  trn->add_option("--pairs", ta.pairs)->required();
  trn->add_option("--img-base", ta.img_base)->required();
  trn->add_option("--txt-base", ta.txt_base)->required();
  trn->add_option("--img-teacher", ta.img_teacher)->required();
  trn->add_option("--txt-teacher", ta.txt_teacher)->required();
  trn->add_option("--out-ckpt", ta.out_ckpt)->required();
  trn->add_option("--log", ta.log, "Step log (JSON lines)");
  trn->add_option("--resume", ta.resume, "Start from this checkpoint's parameters");
  trn->add_option("--alpha", ta.cfg.alpha)->capture_default_str();
  trn->add_option("--beta", ta.cfg.beta)->capture_default_str();
  trn->add_option("--batch-size", ta.cfg.batch_size)->capture_default_str();
  trn->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
  trn->add_option("--lr", ta.cfg.learning_rate)->capture_default_str();
  trn->add_option("--seed", ta.cfg.seed)->capture_default_str();
  trn->add_option("--embed-dim", ta.cfg.embed_dim)->capture_default_str();
  trn->add_option("--usa-dim", ta.cfg.usa_dim)->capture_default_str();
  trn->add_option("--teacher-inv-temp", ta.cfg.teacher_inv_temp)->capture_default_str();
  trn->add_option("--weight-decay", ta.cfg.weight_decay)->capture_default_str();
  trn->add_option("--beta1", ta.cfg.beta1)->capture_default_str();
  trn->add_option("--beta2", ta.cfg.beta2)->capture_default_str();
  trn->add_option("--eps", ta.cfg.epsilon)->capture_default_str();
  trn->add_flag("--separate-uni-temp", ta.cfg.separate_uni_temp,
                "Learn a second temperature for the uni-modal softmaxes");
  trn->add_flag("--eval-usa-branch", ta.cfg.eval_usa_branch,
                "Record that uni-modal evaluation should use the projector outputs");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate retrieval or similarity metrics");
  ev->add_option("--task", ea.task)
      ->check(CLI::IsMember({"cross", "img", "txt", "sts", "rsum"}))
      ->capture_default_str();
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint; embeds --img-base/--txt-base");
  ev->add_option("--img-base", ea.img_base);
  ev->add_option("--txt-base", ea.txt_base);
  auto* img_emb = ev->add_option("--img-emb", ea.img_emb, "Precomputed image embeddings");
  auto* txt_emb = ev->add_option("--txt-emb", ea.txt_emb, "Precomputed text embeddings");
  img_emb->excludes("--ckpt");
  txt_emb->excludes("--ckpt");
  ev->add_option("--pairs", ea.pairs);
  ev->add_option("--relevance", ea.relevance);
  ev->add_option("--scored-pairs", ea.scored_pairs, "id<TAB>id<TAB>gold per line (sts)");
  ev->add_option("--recalls", ea.recalls, "Six percent recalls (rsum)")
      ->delimiter(',')
      ->expected(6);
  ev->add_flag("--eval-usa-branch", ea.usa_branch,
               "Uni-modal tasks use the projector outputs");

  GradcheckOptions ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of all gradients");
  gc->add_option("--seed", ga.seed)->capture_default_str();
  gc->add_option("--trials", ga.trials)->capture_default_str();
  gc->add_option("--dims", ga.max_dim, "Largest random dimension")->capture_default_str();
  gc->add_option("--inject-fault", ga.inject_fault)->group("");

  InspectArgs ia;
  auto* ins = app.add_subcommand("inspect", "Dump teacher and student distributions for a batch");
  ins->add_option("--pairs", ia.pairs)->required();
  ins->add_option("--img-base", ia.img_base)->required();
  ins->add_option("--txt-base", ia.txt_base)->required();
  ins->add_option("--img-teacher", ia.img_teacher)->required();
  ins->add_option("--txt-teacher", ia.txt_teacher)->required();
  ins->add_option("--batch", ia.batch, "Pair indices (0-based)")->delimiter(',')->required();
  ins->add_option("--ckpt", ia.ckpt, "Checkpoint (default: freshly initialized student)");
  ins->add_option("--alpha", ia.alpha)->capture_default_str();
  ins->add_option("--beta", ia.beta)->capture_default_str();
  ins->add_option("--teacher-inv-temp", ia.teacher_inv_temp)->capture_default_str();
  ins->add_option("--seed", ia.seed)->capture_default_str();
  ins->add_option("--embed-dim", ia.embed_dim)->capture_default_str();
  ins->add_option("--usa-dim", ia.usa_dim)->capture_default_str();
  ins->add_flag("--separate-uni-temp", ia.separate_uni_temp);
  ins->add_option("--export", ia.export_path, "Write all embeddings as TSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitUsage;
  }

  Report rep;
  rep.command = app.get_subcommands().front()->get_name();
  int code = kExitOk;
  try {
    if (*synth) code = run_synth(sa, rep);
    if (*trn) code = run_train(ta, rep);
    if (*ev) code = run_eval(ea, rep);
    if (*gc) code = run_gradcheck_cmd(ga, rep);
    if (*ins) code = run_inspect(ia, rep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  rep.print(timing, start);
  return code;
}
