#include "cusa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cusa/soft_labels.hpp"

namespace cusa {

void TrainConfig::validate() const {
  cusa::validate(LossWeights{alpha, beta});
  if (batch_size < 2) {
    throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 2");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::InvalidConfig, "learning_rate must be > 0");
  }
  if (!(teacher_inv_temp > 0.0) || !std::isfinite(teacher_inv_temp)) {
    throw Error(ErrorKind::InvalidConfig, "teacher_inv_temp must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "optimizer moments must be in [0, 1), epsilon > 0");
  }
  if (!(weight_decay >= 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  }
  if (embed_dim < 1 || usa_dim < 1) {
    throw Error(ErrorKind::InvalidConfig, "embed_dim and usa_dim must be >= 1");
  }
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

Embedding<double> gather_rows(const Embedding<double>& e, const std::vector<Index>& rows) {
  return {gather_rows(e.matrix(), rows), Embedding<double>::Unchecked{}};
}

Matrix gather_ids(const FeatureTable& table, const std::unordered_map<std::string, Index>& index,
                  const PairList& pairs, bool image_side, const char* role) {
  Matrix out(static_cast<Index>(pairs.size()), table.dim());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& id = image_side ? pairs[i].image_id : pairs[i].text_id;
    const auto it = index.find(id);
    if (it == index.end()) {
      throw Error(ErrorKind::MissingFeature,
                  std::string(role) + " features have no row for id '" + id + "' (pairs line " +
                      std::to_string(i + 1) + ")",
                  i + 1);
    }
    out.row(static_cast<Index>(i)) = table.values.row(it->second).cast<double>();
  }
  return out;
}

}  // namespace

TrainingData align_training_data(const PairList& pairs, const FeatureTable& img_base,
                                 const FeatureTable& txt_base, const FeatureTable& img_teacher,
                                 const FeatureTable& txt_teacher) {
  if (pairs.empty()) throw Error(ErrorKind::InvalidConfig, "no training pairs");
  Matrix bi = gather_ids(img_base, img_base.index(), pairs, true, "image base");
  Matrix bt = gather_ids(txt_base, txt_base.index(), pairs, false, "text base");
  Matrix ti = gather_ids(img_teacher, img_teacher.index(), pairs, true, "image teacher");
  Matrix tt = gather_ids(txt_teacher, txt_teacher.index(), pairs, false, "text teacher");
  return {pairs, std::move(bi), std::move(bt), l2_normalize_rows(ti), l2_normalize_rows(tt)};
}

std::vector<std::vector<Index>> make_batches(Index n_pairs, Index batch_size, std::uint64_t seed,
                                             std::uint64_t epoch) {
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (n_pairs < batch_size) {
    throw Error(ErrorKind::BatchTooLarge, "batch_size " + std::to_string(batch_size) +
                                              " exceeds the " + std::to_string(n_pairs) +
                                              " available pairs");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x62617463u};
  std::mt19937_64 rng(seq);
  std::vector<Index> perm(static_cast<std::size_t>(n_pairs));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<Index>> batches;
  const Index count = n_pairs / batch_size;
  batches.reserve(static_cast<std::size_t>(count));
  for (Index b = 0; b < count; ++b) {
    const auto first = perm.begin() + b * batch_size;
    batches.emplace_back(first, first + batch_size);
  }
  return batches;
}

TrainResult train(const TrainingData& data, const TrainConfig& config,
                  std::optional<StudentParams> initial, const StepObserver& observer) {
  config.validate();
  const ModelDims dims{data.base_img.cols(), data.base_txt.cols(),
                       static_cast<Index>(config.embed_dim), static_cast<Index>(config.usa_dim)};
  StudentParams params =
      initial ? std::move(*initial) : init_params(config.seed, dims, config.separate_uni_temp);
  if (params.dims() != dims) {
    throw Error(ErrorKind::DimensionMismatch, "initial parameters do not match data and config");
  }
  if (params.separate_uni_temp() != config.separate_uni_temp) {
    throw Error(ErrorKind::InvalidConfig, "initial parameters disagree on separate_uni_temp");
  }
  const auto batch_size = static_cast<Index>(config.batch_size);
  if (config.epochs > 0 && data.size() < batch_size) {
    throw Error(ErrorKind::BatchTooLarge, "fewer pairs than batch_size");
  }

  const LossWeights weights{config.alpha, config.beta};
  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.epsilon,
                        config.weight_decay};
  AdamState state = AdamState::zeros_like(params);
  const double lo = std::log(kMinInvTemp);
  const double hi = std::log(kMaxInvTemp);

  TrainResult result;
  std::uint64_t step = 0;
  for (std::uint64_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& batch : make_batches(data.size(), batch_size, config.seed, epoch)) {
      try {
        const Matrix bi = gather_rows(data.base_img, batch);
        const Matrix bt = gather_rows(data.base_txt, batch);
        const TeacherBatch<double> teacher{gather_rows(data.teacher_img, batch),
                                           gather_rows(data.teacher_txt, batch)};
        const auto targets = build_batch_targets(teacher, config.teacher_inv_temp);
        const auto out = forward(bi, bt, params);
        const auto loss = batch_loss_and_grads(out, targets, weights);
        const auto grads = backward(bi, bt, params, loss.grads);
        adam_step(params, grads, state, hyper);
        params.log_inv_temp = std::clamp(params.log_inv_temp, lo, hi);
        if (params.log_inv_temp_uni) {
          *params.log_inv_temp_uni = std::clamp(*params.log_inv_temp_uni, lo, hi);
        }
        if (!params.w_img.allFinite() || !params.w_txt.allFinite() ||
            !params.u_img.allFinite() || !params.u_txt.allFinite()) {
          throw Error(ErrorKind::NumericFailure, "parameters became non-finite");
        }
        StepRecord rec{epoch,           step,         loss.report.l_original, loss.report.l_csa,
                       loss.report.l_usa, loss.report.l_total, out.inv_temp};
        result.log.push_back(rec);
        if (observer) observer(rec, params);
      } catch (const Error& e) {
        throw Error(e.kind(),
                    "epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " +
                        e.what(),
                    step);
      }
      ++step;
    }
  }
  result.checkpoint = {std::move(params), config};
  return result;
}

std::string format_train_log(const TrainLog& log, const TrainConfig& config) {
  using nlohmann::ordered_json;
  std::string out;
  ordered_json header;
  header["format_version"] = 1;
  header["kind"] = "train_log";
  header["threads"] = 1;
  header["alpha"] = config.alpha;
  header["beta"] = config.beta;
  header["batch_size"] = config.batch_size;
  header["epochs"] = config.epochs;
  header["learning_rate"] = config.learning_rate;
  header["seed"] = config.seed;
  out += header.dump();
  out += '\n';
  for (const auto& r : log) {
    ordered_json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["l_original"] = r.l_original;
    j["l_csa"] = r.l_csa;
    j["l_usa"] = r.l_usa;
    j["l_total"] = r.l_total;
    j["inv_temp"] = r.inv_temp;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace cusa
