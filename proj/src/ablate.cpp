#include "ipacp/ablate.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ipacp/errors.hpp"
#include "ipacp/evaluate.hpp"
#include "ipacp/trainer.hpp"

namespace ipacp {

namespace fs = std::filesystem;

std::vector<AblationVariant> ablation_variants(const TrainConfig& base, const std::string& axis) {
  std::vector<AblationVariant> out;
  if (axis == "tau") {
    for (double tau : {0.5, 0.6, 0.7, 0.8, 0.9}) {
      TrainConfig c = base;
      c.tau = tau;
      char label[16];
      std::snprintf(label, sizeof label, "tau=%.1f", tau);
      out.push_back({label, c});
    }
  } else if (axis == "holes") {
    for (auto [lo, hi] : {std::pair{5, 10}, {10, 20}, {10, 30}, {20, 40}, {30, 50}}) {
      TrainConfig c = base;
      c.hole_count_min = lo;
      c.hole_count_max = hi;
      out.push_back({"holes=" + std::to_string(lo) + "-" + std::to_string(hi), c});
    }
  } else if (axis == "pseudo_mode") {
    for (auto mode : {PseudoMode::Ema, PseudoMode::Vot, PseudoMode::Ipt, PseudoMode::VotIpt}) {
      TrainConfig c = base;
      c.pseudo_mode = mode;
      c.ipt = true;
      out.push_back({to_string(mode), c});
    }
  } else if (axis == "loss_mode") {
    for (auto mode : {LossMode::Ce, LossMode::Dice, LossMode::CeDice}) {
      TrainConfig c = base;
      c.loss_mode = mode;
      out.push_back({to_string(mode), c});
    }
  } else if (axis == "component_flags") {
    struct Row {
      const char* label;
      bool wsa, bcp, tue, ipt, pdi;
    };
    for (const Row& r : {Row{"none", false, false, false, false, false},
                         Row{"WSA", true, false, false, false, false},
                         Row{"WSA+BCP", true, true, false, false, false},
                         Row{"WSA+TUE", true, false, true, false, false},
                         Row{"WSA+BCP+TUE", true, true, true, false, false},
                         Row{"WSA+BCP+IPT", true, true, false, true, false},
                         Row{"WSA+BCP+TUE+IPT+PDI", true, true, true, true, true}}) {
      TrainConfig c = base;
      c.supervised = false;
      c.wsa = r.wsa;
      c.bcp = r.bcp;
      c.tue = r.tue;
      c.ipt = r.ipt;
      c.pdi = r.pdi;
      out.push_back({r.label, c});
    }
  } else {
    throw ConfigError("unknown ablation axis '" + axis +
                      "' (expected tau|holes|pseudo_mode|loss_mode|component_flags)");
  }
  for (auto& v : out) v.config.validate();
  return out;
}

AblationTable ablate(const TrainConfig& base, const std::string& axis) {
  AblationTable table;
  table.axis = axis;
  table.seeds.push_back(base.seed);
  for (auto s : base.extra_seeds) table.seeds.push_back(s);
  const Dataset ds(base.data_root);
  for (const auto& variant : ablation_variants(base, axis)) {
    AblationRow row;
    row.label = variant.label;
    for (auto seed : table.seeds) {
      TrainConfig c = variant.config;
      c.seed = seed;
      c.extra_seeds.clear();
      c.resume_from.clear();
      c.stop_after = -1;
      c.out_dir = (fs::path(base.out_dir) / axis / variant.label / ("seed_" + std::to_string(seed))).string();
      const TrainResult trained = train(c);
      const MetricsReport report = evaluate_checkpoint(trained.checkpoint, ds, c.eval_split,
                                                       c.eval_model, {c.window_size, c.window_stride});
      write_report(report, fs::path(c.out_dir) / "report");
      for (const auto& m : metric_names()) {
        const auto s = report.summary(m);
        if (s.count > 0) row.per_seed[m].push_back(s.mean);
      }
    }
    for (const auto& m : metric_names()) row.summary[m] = summarize(row.per_seed[m]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

nlohmann::json to_json(const AblationTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& m : metric_names()) {
      const auto& s = r.summary.at(m);
      metrics[m] = {{"mean", s.mean}, {"std", s.std}, {"per_seed", r.per_seed.count(m) ? r.per_seed.at(m) : std::vector<double>{}},
                    {"formatted", mean_std_string(s)}};
    }
    rows.push_back({{"label", r.label}, {"metrics", metrics}});
  }
  return {{"axis", table.axis}, {"seeds", table.seeds}, {"revision", revision()}, {"rows", rows}};
}

std::string to_csv(const AblationTable& table) {
  std::ostringstream out;
  out << table.axis;
  for (const auto& m : metric_names()) out << ',' << m;
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.label;
    for (const auto& m : metric_names()) out << ',' << mean_std_string(r.summary.at(m));
    out << '\n';
  }
  return out.str();
}

void write_ablation(const AblationTable& table, const fs::path& stem) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  auto with_ext = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  std::ofstream(with_ext(".json"), std::ios::binary) << to_json(table).dump(2) << '\n';
  std::ofstream(with_ext(".csv"), std::ios::binary) << to_csv(table);
}

}  // namespace ipacp
