#include "ipacp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ipacp {

namespace {

struct Counts {
  double a = 0, b = 0, both = 0;
};

Counts overlap_counts(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a.dims(), b.dims(), "overlap metric");
  const auto fa = (a.data() != 0);
  const auto fb = (b.data() != 0);
  return {double(fa.count()), double(fb.count()), double((fa && fb).count())};
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

double dice_score(const BinaryMask& a, const BinaryMask& b) {
  const Counts c = overlap_counts(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * c.both / (c.a + c.b);
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  const Counts c = overlap_counts(a, b);
  const double uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return c.both / uni;
}

double rmse(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a.dims(), b.dims(), "rmse");
  const auto diff = ((a.data() != 0) != (b.data() != 0)).count();
  return 100.0 * std::sqrt(double(diff) / double(a.size()));
}

std::vector<Eigen::Index> surface_voxels(const BinaryMask& m) {
  const Dims d = m.dims();
  auto fg = [&](int z, int y, int x) {
    if (z < 0 || y < 0 || x < 0 || z >= d.depth || y >= d.height || x >= d.width) return false;
    return m(z, y, x) != 0;
  };
  std::vector<Eigen::Index> out;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        if (!fg(z, y, x)) continue;
        if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
            !fg(z, y, x - 1) || !fg(z, y, x + 1)) {
          out.push_back(d.index(z, y, x));
        }
      }
    }
  }
  return out;
}

Eigen::ArrayXd squared_distance_transform(const Dims& dims,
                                          const std::vector<Eigen::Index>& features,
                                          const Spacing& spacing) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::ArrayXd f = Eigen::ArrayXd::Constant(dims.voxels(), inf);
  for (auto i : features) f[i] = 0.0;

  // One brute-force lower-envelope pass per axis: g(p) = min_q (|p-q| s)^2 + f(q).
  // Starting with x makes every value equal (dz s)^2 + ((dy s)^2 + (dx s)^2).
  std::vector<double> line, out;
  auto pass = [&](int n, Eigen::Index stride, double s, auto&& line_starts) {
    line.resize(std::size_t(n));
    out.resize(std::size_t(n));
    for (Eigen::Index start : line_starts) {
      bool any = false;
      for (int k = 0; k < n; ++k) {
        line[std::size_t(k)] = f[start + k * stride];
        any = any || line[std::size_t(k)] < inf;
      }
      if (!any) continue;
      for (int p = 0; p < n; ++p) {
        double best = inf;
        for (int q = 0; q < n; ++q) {
          if (line[std::size_t(q)] == inf) continue;
          const double step = double(p - q) * s;
          best = std::min(best, step * step + line[std::size_t(q)]);
        }
        out[std::size_t(p)] = best;
      }
      for (int k = 0; k < n; ++k) f[start + k * stride] = out[std::size_t(k)];
    }
  };
  const Eigen::Index hw = Eigen::Index(dims.height) * dims.width;
  std::vector<Eigen::Index> starts;
  for (int z = 0; z < dims.depth; ++z)
    for (int y = 0; y < dims.height; ++y) starts.push_back(dims.index(z, y, 0));
  pass(dims.width, 1, spacing.x, starts);
  starts.clear();
  for (int z = 0; z < dims.depth; ++z)
    for (int x = 0; x < dims.width; ++x) starts.push_back(dims.index(z, 0, x));
  pass(dims.height, dims.width, spacing.y, starts);
  starts.clear();
  for (Eigen::Index i = 0; i < hw; ++i) starts.push_back(i);
  pass(dims.depth, hw, spacing.z, starts);
  return f;
}

std::vector<double> directed_surface_distances(const BinaryMask& from, const BinaryMask& to,
                                               const Spacing& spacing) {
  require_same_dims(from.dims(), to.dims(), "surface distance");
  const auto src = surface_voxels(from);
  const auto dst = surface_voxels(to);
  const Eigen::ArrayXd sq = squared_distance_transform(to.dims(), dst, spacing);
  std::vector<double> out;
  out.reserve(src.size());
  for (auto i : src) out.push_back(std::sqrt(sq[i]));
  return out;
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty list");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must lie in (0,1]");
  std::sort(values.begin(), values.end());
  auto rank = std::size_t(std::ceil(q * double(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

/// nullopt when both masks are empty.
std::optional<std::pair<std::vector<double>, std::vector<double>>> both_directions(
    const BinaryMask& a, const BinaryMask& b, const Spacing& spacing, const char* metric) {
  require_same_dims(a.dims(), b.dims(), metric);
  const bool ea = !(a.data() != 0).any();
  const bool eb = !(b.data() != 0).any();
  if (ea && eb) return std::nullopt;
  if (ea) throw UndefinedMetric(UndefinedMetric::Side::First, std::string(metric) + ": first mask is empty");
  if (eb) throw UndefinedMetric(UndefinedMetric::Side::Second, std::string(metric) + ": second mask is empty");
  return std::pair{directed_surface_distances(a, b, spacing),
                   directed_surface_distances(b, a, spacing)};
}

}  // namespace

double hd95(const BinaryMask& a, const BinaryMask& b, const Spacing& spacing) {
  const auto d = both_directions(a, b, spacing, "hd95");
  if (!d) return 0.0;
  return std::max(nearest_rank_percentile(d->first, 0.95), nearest_rank_percentile(d->second, 0.95));
}

double asd(const BinaryMask& a, const BinaryMask& b, const Spacing& spacing) {
  const auto d = both_directions(a, b, spacing, "asd");
  if (!d) return 0.0;
  double sum = 0.0;
  for (double v : d->first) sum += v;
  for (double v : d->second) sum += v;
  return sum / double(d->first.size() + d->second.size());
}

CaseMetrics evaluate_case(const std::string& id, const BinaryMask& prediction,
                          const BinaryMask& reference, const Spacing& spacing) {
  CaseMetrics c;
  c.id = id;
  c.dice = 100.0 * dice_score(prediction, reference);
  c.jaccard = 100.0 * jaccard(prediction, reference);
  c.rmse = rmse(prediction, reference);
  try {
    c.hd95 = hd95(prediction, reference, spacing);
    c.asd = asd(prediction, reference, spacing);
  } catch (const UndefinedMetric& e) {
    c.note = e.side() == UndefinedMetric::Side::First ? "empty prediction" : "empty reference";
  }
  return c;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = int(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / double(values.size()));
  return s;
}

std::optional<double> metric_value(const CaseMetrics& c, const std::string& metric) {
  if (metric == "dice") return c.dice;
  if (metric == "jaccard") return c.jaccard;
  if (metric == "rmse") return c.rmse;
  if (metric == "hd95") return c.hd95;
  if (metric == "asd") return c.asd;
  throw std::invalid_argument("unknown metric '" + metric + "'");
}

MetricSummary MetricsReport::summary(const std::string& metric) const {
  std::vector<double> values;
  for (const auto& c : cases) {
    if (auto v = metric_value(c, metric)) values.push_back(*v);
  }
  return summarize(values);
}

std::string mean_std_string(const MetricSummary& s) {
  if (s.count == 0) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f(%.2f)", s.mean, s.std);
  return buf;
}

nlohmann::json to_json(const MetricsReport& report) {
  using nlohmann::json;
  json cases = json::array();
  for (const auto& c : report.cases) {
    json row{{"id", c.id}};
    for (const auto& m : metric_names()) {
      const auto v = metric_value(c, m);
      row[m] = v ? json(*v) : json(nullptr);
    }
    if (!c.note.empty()) row["note"] = c.note;
    cases.push_back(std::move(row));
  }
  json summary = json::object();
  for (const auto& m : metric_names()) {
    const auto s = report.summary(m);
    summary[m] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count},
                  {"formatted", mean_std_string(s)}};
  }
  return {{"metadata", report.metadata},
          {"units", {{"dice", "%"}, {"jaccard", "%"}, {"rmse", "% (binary voxelwise)"},
                     {"hd95", "mm"}, {"asd", "mm"}}},
          {"cases", cases},
          {"summary", summary}};
}

std::string to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "id";
  for (const auto& m : metric_names()) out << ',' << m;
  out << ",note\n";
  for (const auto& c : report.cases) {
    out << c.id;
    for (const auto& m : metric_names()) out << ',' << csv_cell(metric_value(c, m));
    out << ',' << c.note << '\n';
  }
  for (const char* row : {"mean", "std"}) {
    out << row;
    for (const auto& m : metric_names()) {
      const auto s = report.summary(m);
      out << ',' << (s.count ? format_number(row[0] == 'm' ? s.mean : s.std) : "");
    }
    out << ",\n";
  }
  return out.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto with_ext = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  std::ofstream j(with_ext(".json"), std::ios::binary);
  j << to_json(report).dump(2) << '\n';
  std::ofstream c(with_ext(".csv"), std::ios::binary);
  c << to_csv(report);
  if (!j || !c) throw std::runtime_error("failed to write report " + stem.string());
}

}  // namespace ipacp
