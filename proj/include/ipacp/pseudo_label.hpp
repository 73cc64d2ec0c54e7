#pragma once

// Pseudo-label synthesis from teacher and student soft predictions.

#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "ipacp/volume.hpp"

namespace ipacp {

enum class PseudoMode { Ipt, Vot, Ema, VotIpt };

PseudoMode parse_pseudo_mode(const std::string& s);
std::string to_string(PseudoMode mode);

/// w_t * p_t + w_s * p_s.
template <typename Scalar>
BasicProbMap<Scalar> weighted_mix(const BasicProbMap<Scalar>& p_t, const BasicProbMap<Scalar>& p_s,
                                  Scalar w_t, Scalar w_s) {
  require_same_shape(p_t, p_s, "pseudo label mix");
  return BasicProbMap<Scalar>(p_t.dims(), (w_t * p_t.probs() + w_s * p_s.probs()).eval());
}

/// Teacher weight e/(e+1), student weight 1/(e+1); e counts epochs from 1.
template <typename Scalar>
BasicProbMap<Scalar> ipt_soft(const BasicProbMap<Scalar>& p_t, const BasicProbMap<Scalar>& p_s,
                              long e) {
  if (e < 1) throw std::invalid_argument("ipt_mix: epoch index starts at 1");
  const Scalar denom = Scalar(e + 1);
  return weighted_mix(p_t, p_s, Scalar(e) / denom, Scalar(1) / denom);
}

template <typename Scalar>
LabelMap ipt_mix(const BasicProbMap<Scalar>& p_t, const BasicProbMap<Scalar>& p_s, long e) {
  return argmax_labels(ipt_soft(p_t, p_s, e));
}

template <typename Scalar>
LabelMap vot_mix(const BasicProbMap<Scalar>& p_t, const BasicProbMap<Scalar>& p_s) {
  return argmax_labels(weighted_mix(p_t, p_s, Scalar(0.5), Scalar(0.5)));
}

/// Running soft target decay * prev + (1 - decay) * mean(p_t, p_s) and its argmax.
template <typename Scalar>
std::pair<BasicProbMap<Scalar>, LabelMap> ema_label_mix(const BasicProbMap<Scalar>& prev_soft,
                                                         const BasicProbMap<Scalar>& p_t,
                                                         const BasicProbMap<Scalar>& p_s,
                                                         Scalar decay) {
  require_same_shape(prev_soft, p_t, "ema_label_mix");
  if (!(decay >= Scalar(0) && decay < Scalar(1))) {
    throw std::invalid_argument("ema_label_mix: decay must lie in [0,1)");
  }
  const auto mean = weighted_mix(p_t, p_s, Scalar(0.5), Scalar(0.5));
  BasicProbMap<Scalar> soft(p_t.dims(),
                            (decay * prev_soft.probs() + (Scalar(1) - decay) * mean.probs()).eval());
  LabelMap labels = argmax_labels(soft);
  return {std::move(soft), std::move(labels)};
}

/// Per-sample running targets for the EMA strategy, keyed by sample id.
/// Unseen samples start from the uniform distribution.
template <typename Scalar>
class BasicEmaTargetBank {
 public:
  const BasicProbMap<Scalar>& get(int id, const Dims& dims, int classes) {
    auto it = targets_.find(id);
    if (it == targets_.end()) it = targets_.emplace(id, BasicProbMap<Scalar>(dims, classes)).first;
    return it->second;
  }
  void set(int id, BasicProbMap<Scalar> soft) { targets_.insert_or_assign(id, std::move(soft)); }
  const std::map<int, BasicProbMap<Scalar>>& targets() const { return targets_; }
  void clear() { targets_.clear(); }

 private:
  std::map<int, BasicProbMap<Scalar>> targets_;
};
using EmaTargetBank = BasicEmaTargetBank<double>;

/// Last epoch of the VOT phase in VOT+IPT: ceil(total / 5).
inline long vot_phase_end(long total_epochs) { return (total_epochs + 4) / 5; }

struct PseudoContext {
  PseudoMode mode = PseudoMode::VotIpt;
  long epoch = 1;
  long total_epochs = 1;
  double ema_decay = 0.9;
  int sample_id = -1;
};

template <typename Scalar>
LabelMap pseudo_schedule(const BasicProbMap<Scalar>& p_t, const BasicProbMap<Scalar>& p_s,
                         const PseudoContext& ctx, BasicEmaTargetBank<Scalar>* bank = nullptr) {
  if (ctx.epoch < 1 || ctx.epoch > ctx.total_epochs) {
    throw std::invalid_argument("pseudo_schedule: need 1 <= e <= E");
  }
  switch (ctx.mode) {
    case PseudoMode::Ipt:
      return ipt_mix(p_t, p_s, ctx.epoch);
    case PseudoMode::Vot:
      return vot_mix(p_t, p_s);
    case PseudoMode::VotIpt:
      return ctx.epoch <= vot_phase_end(ctx.total_epochs) ? vot_mix(p_t, p_s)
                                                          : ipt_mix(p_t, p_s, ctx.epoch);
    case PseudoMode::Ema: {
      if (!bank || ctx.sample_id < 0) {
        throw std::invalid_argument("pseudo_schedule: EMA mode needs a target bank and sample id");
      }
      const auto& prev = bank->get(ctx.sample_id, p_t.dims(), p_t.classes());
      auto [soft, labels] = ema_label_mix(prev, p_t, p_s, Scalar(ctx.ema_decay));
      bank->set(ctx.sample_id, std::move(soft));
      return labels;
    }
  }
  throw std::invalid_argument("pseudo_schedule: unknown mode");
}

inline PseudoMode parse_pseudo_mode(const std::string& s) {
  if (s == "IPT") return PseudoMode::Ipt;
  if (s == "VOT") return PseudoMode::Vot;
  if (s == "EMA") return PseudoMode::Ema;
  if (s == "VOT+IPT") return PseudoMode::VotIpt;
  throw std::invalid_argument("unknown pseudo-label mode '" + s + "'");
}

inline std::string to_string(PseudoMode mode) {
  switch (mode) {
    case PseudoMode::Ipt: return "IPT";
    case PseudoMode::Vot: return "VOT";
    case PseudoMode::Ema: return "EMA";
    case PseudoMode::VotIpt: return "VOT+IPT";
  }
  return "?";
}

}  // namespace ipacp
