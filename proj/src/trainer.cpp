#include "ipacp/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ipacp/adaptive_mix.hpp"
#include "ipacp/augmentation.hpp"
#include "ipacp/bcp.hpp"
#include "ipacp/errors.hpp"
#include "ipacp/masking.hpp"

namespace ipacp {

namespace fs = std::filesystem;

namespace {

// Stream keys for derive_seed(seed, {role, iteration, slot}).
enum Role : std::uint64_t {
  kInit = 1,
  kWeak = 2,
  kStrong = 3,
  kMixMask = 4,
  kPasteMask = 5,
  kCropLabeled = 6,
  kCropUnlabeled = 7,
  kSampler = 8,
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string log_header() { return "iter,epoch,lr,loss_l_to_u,loss_u_to_l,mu_mean,disagreement"; }

std::string format_log_row(const LogRow& r) {
  return std::to_string(r.iter) + ',' + std::to_string(r.epoch) + ',' + fmt(r.lr) + ',' +
         fmt(r.loss_l_to_u) + ',' + fmt(r.loss_u_to_l) + ',' + fmt(r.mu_mean) + ',' +
         fmt(r.disagreement);
}

struct Trainer::StepOutcome {
  ParamVector grad;
  LogRow row;
  std::vector<double> mus;
  EmaTargetBank bank;
};

Trainer::Trainer(TrainConfig config, DatasetSplit split, std::map<std::string, TrainingSample> cases,
                 TrainHooks hooks)
    : config_(std::move(config)),
      split_(std::move(split)),
      cases_(std::move(cases)),
      hooks_(std::move(hooks)),
      net_(config_.net()),
      sampler_(split_, config_.batch_size, derive_seed(config_.seed, {kSampler})) {
  config_.validate();
  for (const auto* ids : {&split_.labeled, &split_.unlabeled}) {
    for (const auto& id : *ids) {
      if (!cases_.count(id)) throw DataError("training case '" + id + "' was not loaded");
    }
  }
  if (!config_.supervised_only() && split_.unlabeled.empty()) {
    throw ConfigError("config key 'labeled_ratio': semi-supervised training needs unlabeled cases");
  }
  for (std::size_t k = 0; k < split_.unlabeled.size(); ++k) unlabeled_index_[split_.unlabeled[k]] = int(k);
}

Checkpoint Trainer::initial_state() const {
  Checkpoint c;
  c.net = config_.net();
  c.student = net_.init_params(derive_seed(config_.seed, {kInit}));
  c.teacher = c.student;
  c.optim = OptimState::zeros(c.student.size());
  c.alpha = config_.alpha;
  c.seed = config_.seed;
  c.config_text = serialize_config(without_run_location(config_));
  return c;
}

TrainingSample Trainer::crop(const TrainingSample& s, std::uint64_t seed) const {
  if (config_.patch_depth == 0) return s;
  const Dims full = s.image.dims();
  const Dims p{config_.patch_depth, config_.patch_height, config_.patch_width};
  if (p.depth > full.depth || p.height > full.height || p.width > full.width) {
    throw ConfigError("config key 'patch_depth': patch " + to_string(p) + " exceeds volume " +
                      to_string(full));
  }
  Rng rng(seed);
  const int z0 = std::uniform_int_distribution<int>(0, full.depth - p.depth)(rng);
  const int y0 = std::uniform_int_distribution<int>(0, full.height - p.height)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, full.width - p.width)(rng);
  TrainingSample out{Volume(p, 0.0), LabelMap(p, 0)};
  for (int z = 0; z < p.depth; ++z)
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        out.image(z, y, x) = s.image(z0 + z, y0 + y, x0 + x);
        out.labels(z, y, x) = s.labels(z0 + z, y0 + y, x0 + x);
      }
  out.image.spacing = s.image.spacing;
  return out;
}

Trainer::StepOutcome Trainer::step(const Checkpoint& state, long it) const {
  const auto seed_for = [&](Role role, int slot) {
    return derive_seed(config_.seed, {role, std::uint64_t(it), std::uint64_t(slot)});
  };
  const int bs = config_.batch_size;
  const Batch batch = sampler_.at(it);
  StepOutcome out;
  out.bank = state.ema_targets;
  out.row.iter = it + 1;
  out.row.epoch = batch.epoch;
  out.row.lr = poly_lr(config_.base_lr, it, config_.total_iters, config_.lr_power);

  std::vector<TrainingSample> labeled;
  for (int i = 0; i < bs; ++i) labeled.push_back(crop(cases_.at(batch.labeled[std::size_t(i)]), seed_for(kCropLabeled, i)));

  if (config_.supervised_only() || it < config_.warmup_iters) {
    LossGrad lg = net_.loss_and_grad(state.student, labeled, config_.loss_mode);
    out.grad = std::move(lg.grad);
    out.row.loss_l_to_u = lg.loss;
    return out;
  }

  // Unlabeled branch: adaptive augmentation and pseudo labels per sample.
  std::vector<Volume> augmented;
  std::vector<LabelMap> pseudo;
  std::vector<BinaryMask> mix_masks;
  double mu_sum = 0.0, dis_sum = 0.0;
  for (int i = 0; i < bs; ++i) {
    const std::string& id = batch.unlabeled[std::size_t(i)];
    const Volume u = crop(cases_.at(id), seed_for(kCropUnlabeled, i)).image;
    const Dims dims = u.dims();
    Volume weak = config_.wsa ? weak_augment(u, nullptr, seed_for(kWeak, i)).volume : u;
    Volume strong = config_.wsa ? strong_augment(weak, seed_for(kStrong, i)).volume : weak;
    const HoleRanges holes = resolve_holes(config_, dims);
    Rng mask_rng(seed_for(kMixMask, i));
    BinaryMask m = gen_multihole_mask(dims, holes.holes, holes.edge, mask_rng);
    const Volume ms = masked_strong_view(weak, strong, m);

    const ProbMap p_s = net_.forward(state.student, ms);
    const ProbMap p_t = net_.forward(state.teacher, weak);

    BinaryMask p_dif(dims, 0);
    if (hooks_.disagreement) p_dif = hooks_.disagreement(p_s, p_t);
    else if (config_.pdi) p_dif = prediction_disagreement(p_s, p_t);

    double mu = 0.0;
    if (hooks_.uncertainty_score) {
      mu = hooks_.uncertainty_score(p_s, p_t, config_.tau);
    } else if (config_.tue) {
      mu = high_uncertainty_score(p_s, p_t, kl_two_way(p_s, p_t, config_.kl_eps), config_.tau);
    }

    const Volume u_hat = adaptive_blend(weak, ms, mu);
    augmented.push_back(disagreement_blend(u_hat, ms, p_dif));

    PseudoContext ctx;
    ctx.mode = config_.pseudo_mode;
    if (!config_.ipt && (ctx.mode == PseudoMode::Ipt || ctx.mode == PseudoMode::VotIpt)) {
      ctx.mode = PseudoMode::Vot;
    }
    ctx.epoch = batch.epoch;
    ctx.total_epochs = total_epochs();
    ctx.ema_decay = config_.pseudo_ema_decay;
    ctx.sample_id = unlabeled_index_.at(id);
    pseudo.push_back(hooks_.pseudo_label ? hooks_.pseudo_label(p_t, p_s, ctx, out.bank)
                                         : pseudo_schedule(p_t, p_s, ctx, &out.bank));
    mix_masks.push_back(std::move(m));
    out.mus.push_back(mu);
    mu_sum += mu;
    dis_sum += double((p_dif.data() != 0).count()) / double(p_dif.size());
  }
  out.row.mu_mean = mu_sum / bs;
  out.row.disagreement = dis_sum / bs;

  // Labeled branch: bidirectional copy-paste per pair.
  const auto pairs = pair_indices(bs);
  out.grad = ParamVector::Zero(net_.num_params());
  for (const auto& [i, j] : pairs) {
    const auto ui = std::size_t(i), uj = std::size_t(j);
    const Dims dims = labeled[ui].image.dims();
    auto paste_mask = [&](int slot, std::size_t k) {
      if (!config_.bcp) return BinaryMask(dims, 1);
      if (config_.share_mask) return mix_masks[k];
      const HoleRanges holes = resolve_holes(config_, dims);
      Rng rng(seed_for(kPasteMask, slot));
      return gen_multihole_mask(dims, holes.holes, holes.edge, rng);
    };
    BinaryMask m_i = paste_mask(i, ui), m_j = paste_mask(j, uj);
    if (hooks_.copy_paste_masks) std::tie(m_i, m_j) = hooks_.copy_paste_masks(m_i, m_j);

    auto [x_lu, x_ul] = bcp_images(labeled[ui].image, augmented[ui], labeled[uj].image,
                                   augmented[uj], m_i, m_j);
    auto [y_lu, y_ul] = bcp_labels(labeled[ui].labels, pseudo[ui], labeled[uj].labels, pseudo[uj],
                                   m_i, m_j);
    const TrainingSample lu[] = {{std::move(x_lu), std::move(y_lu)}};
    const TrainingSample ul[] = {{std::move(x_ul), std::move(y_ul)}};
    LossGrad g_lu = net_.loss_and_grad(state.student, lu, config_.loss_mode);
    LossGrad g_ul = net_.loss_and_grad(state.student, ul, config_.loss_mode);
    out.row.loss_l_to_u += g_lu.loss;
    out.row.loss_u_to_l += g_ul.loss;
    out.grad += g_lu.grad + g_ul.grad;
  }
  const double n_pairs = double(pairs.size());
  out.row.loss_l_to_u /= n_pairs;
  out.row.loss_u_to_l /= n_pairs;
  out.grad /= n_pairs;
  return out;
}

void Trainer::run(Checkpoint& state, long end,
                  const std::function<void(const LogRow&)>& on_row) const {
  if (end > config_.total_iters) throw std::invalid_argument("run: end beyond total_iters");
  for (long it = state.iteration; it < end; ++it) {
    StepOutcome s = step(state, it);
    if (!std::isfinite(s.row.loss_l_to_u) || !std::isfinite(s.row.loss_u_to_l) ||
        !s.grad.allFinite()) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it + 1) +
                         " (loss_l_to_u=" + fmt(s.row.loss_l_to_u) +
                         ", loss_u_to_l=" + fmt(s.row.loss_u_to_l) + ")");
    }
    adam_step(state.student, s.grad, state.optim, s.row.lr);
    ema_update(state.teacher, state.student, config_.alpha);
    // Warm-up weights seed both models, as a pre-trained start would.
    if (it + 1 == config_.warmup_iters && !config_.supervised_only()) state.teacher = state.student;
    state.ema_targets = std::move(s.bank);
    state.iteration = it + 1;
    if (on_row) on_row(s.row);
  }
}

std::map<std::string, TrainingSample> load_cases(const Dataset& ds,
                                                 const std::vector<std::string>& ids) {
  std::map<std::string, TrainingSample> cases;
  for (const auto& id : ids) cases.emplace(id, ds.sample(id));
  return cases;
}

namespace {

void write_numeric_snapshot(const fs::path& out_dir, const Checkpoint& state,
                            const std::string& what) {
  nlohmann::json j{{"error", what},
                   {"iteration", state.iteration},
                   {"student_norm", state.student.norm()},
                   {"teacher_norm", state.teacher.norm()},
                   {"student_finite", state.student.allFinite()},
                   {"adam_step", state.optim.step}};
  std::ofstream(out_dir / "numeric_failure.json", std::ios::binary) << j.dump(2) << '\n';
  save_checkpoint(out_dir / "numeric_failure_checkpoint.vol", state);
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.data_root.empty()) throw ConfigError("config key 'data_root' is required");
  const Dataset ds(config.data_root);
  const DatasetSplit split = with_labeled_ratio(ds.split(), config.labeled_ratio);
  std::vector<std::string> ids = split.labeled;
  ids.insert(ids.end(), split.unlabeled.begin(), split.unlabeled.end());
  const Trainer trainer(config, split, load_cases(ds, ids), hooks);

  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);
  const fs::path log_path = out_dir / "train_log.csv";

  TrainResult result;
  if (config.resume_from.empty()) {
    result.checkpoint = trainer.initial_state();
    std::ofstream(log_path, std::ios::binary | std::ios::trunc) << log_header() << '\n';
  } else {
    result.checkpoint = load_checkpoint(config.resume_from);
    const Checkpoint fresh = trainer.initial_state();
    if (!(result.checkpoint.net == fresh.net) || result.checkpoint.seed != fresh.seed) {
      throw ConfigError("config key 'resume_from': checkpoint architecture or seed differs from config");
    }
    if (result.checkpoint.iteration > config.total_iters) {
      throw ConfigError("config key 'resume_from': checkpoint is past total_iters");
    }
    if (!fs::exists(log_path)) std::ofstream(log_path, std::ios::binary) << log_header() << '\n';
  }
  result.checkpoint.config_text = serialize_config(without_run_location(config));
  std::ofstream(out_dir / "config.txt", std::ios::binary) << serialize_config(config);

  const long end = config.stop_after >= 0 ? config.stop_after : config.total_iters;
  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  try {
    trainer.run(result.checkpoint, std::max(end, result.checkpoint.iteration), [&](const LogRow& row) {
      log << format_log_row(row) << '\n';
      log.flush();
      result.log.push_back(row);
    });
  } catch (const NumericError& e) {
    write_numeric_snapshot(out_dir, result.checkpoint, e.what());
    throw;
  }
  save_checkpoint(out_dir / "checkpoint.vol", result.checkpoint);
  return result;
}

}  // namespace ipacp
