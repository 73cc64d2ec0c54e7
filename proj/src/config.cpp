#include "ipacp/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ipacp/errors.hpp"

namespace ipacp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config key '" + key + "': expected true|false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field number_field(std::string key, T TrainConfig::*member) {
  return {key,
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          },
          [member, key](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

Field bool_field(std::string key, bool TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, key](TrainConfig& c, const std::string& v) { c.*member = parse_bool(key, v); }};
}

Field string_field(std::string key, std::string TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(string_field("data_root", &TrainConfig::data_root));
    f.push_back(string_field("profile", &TrainConfig::profile));
    f.push_back(number_field("labeled_ratio", &TrainConfig::labeled_ratio));
    f.push_back(number_field("batch_size", &TrainConfig::batch_size));
    f.push_back(number_field("patch_depth", &TrainConfig::patch_depth));
    f.push_back(number_field("patch_height", &TrainConfig::patch_height));
    f.push_back(number_field("patch_width", &TrainConfig::patch_width));
    f.push_back(number_field("total_iters", &TrainConfig::total_iters));
    f.push_back(number_field("stop_after", &TrainConfig::stop_after));
    f.push_back(number_field("base_lr", &TrainConfig::base_lr));
    f.push_back(number_field("lr_power", &TrainConfig::lr_power));
    f.push_back(number_field("alpha", &TrainConfig::alpha));
    f.push_back(number_field("tau", &TrainConfig::tau));
    f.push_back(number_field("kl_eps", &TrainConfig::kl_eps));
    f.push_back(number_field("hole_count_min", &TrainConfig::hole_count_min));
    f.push_back(number_field("hole_count_max", &TrainConfig::hole_count_max));
    f.push_back(number_field("hole_edge_min", &TrainConfig::hole_edge_min));
    f.push_back(number_field("hole_edge_max", &TrainConfig::hole_edge_max));
    f.push_back(bool_field("share_mask", &TrainConfig::share_mask));
    f.push_back({"pseudo_mode", [](const TrainConfig& c) { return to_string(c.pseudo_mode); },
                 [](TrainConfig& c, const std::string& v) {
                   try {
                     c.pseudo_mode = parse_pseudo_mode(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("config key 'pseudo_mode': ") + e.what());
                   }
                 }});
    f.push_back(number_field("pseudo_ema_decay", &TrainConfig::pseudo_ema_decay));
    f.push_back({"loss_mode", [](const TrainConfig& c) { return to_string(c.loss_mode); },
                 [](TrainConfig& c, const std::string& v) {
                   try {
                     c.loss_mode = parse_loss_mode(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("config key 'loss_mode': ") + e.what());
                   }
                 }});
    f.push_back(bool_field("wsa", &TrainConfig::wsa));
    f.push_back(bool_field("tue", &TrainConfig::tue));
    f.push_back(bool_field("pdi", &TrainConfig::pdi));
    f.push_back(bool_field("ipt", &TrainConfig::ipt));
    f.push_back(bool_field("bcp", &TrainConfig::bcp));
    f.push_back(bool_field("supervised", &TrainConfig::supervised));
    f.push_back(number_field("warmup_iters", &TrainConfig::warmup_iters));
    f.push_back(number_field("width1", &TrainConfig::width1));
    f.push_back(number_field("width2", &TrainConfig::width2));
    f.push_back(number_field("down", &TrainConfig::down));
    f.push_back(number_field("classes", &TrainConfig::classes));
    f.push_back(number_field("seed", &TrainConfig::seed));
    f.push_back({"extra_seeds",
                 [](const TrainConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.extra_seeds.size(); ++i) {
                     if (i) s += ',';
                     s += std::to_string(c.extra_seeds[i]);
                   }
                   return s;
                 },
                 [](TrainConfig& c, const std::string& v) {
                   c.extra_seeds.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     item = trim(item);
                     if (!item.empty()) c.extra_seeds.push_back(parse_number<std::uint64_t>("extra_seeds", item));
                   }
                 }});
    f.push_back(string_field("out_dir", &TrainConfig::out_dir));
    f.push_back(string_field("resume_from", &TrainConfig::resume_from));
    f.push_back(string_field("eval_model", &TrainConfig::eval_model));
    f.push_back(string_field("eval_split", &TrainConfig::eval_split));
    f.push_back(number_field("window_size", &TrainConfig::window_size));
    f.push_back(number_field("window_stride", &TrainConfig::window_stride));
    return f;
  }();
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
      throw ConfigError("config key '" + key + "' repeated on lines " + std::to_string(it->second) +
                        " and " + std::to_string(lineno));
    }
    set_config_value(config, key, trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  TrainConfig config = parse_config(buf.str());
  // Relative paths are taken relative to the config file.
  const auto base = path.parent_path();
  auto rebase = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  rebase(config.data_root);
  rebase(config.out_dir);
  rebase(config.resume_from);
  return config;
}

std::string serialize_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

TrainConfig without_run_location(TrainConfig config) {
  const TrainConfig defaults;
  config.out_dir = defaults.out_dir;
  config.resume_from = defaults.resume_from;
  config.stop_after = defaults.stop_after;
  return config;
}

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize_config(without_run_location(config))) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (profile != "small" && profile != "large") fail("profile", "expected small|large");
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0)) fail("labeled_ratio", "must lie in (0,1]");
  if (batch_size <= 0 || batch_size % 2 != 0) fail("batch_size", "must be even and positive");
  for (auto [key, v] : {std::pair{"patch_depth", patch_depth}, {"patch_height", patch_height},
                        {"patch_width", patch_width}}) {
    if (v < 0) fail(key, "must be >= 0");
    if (v > 0 && v % down != 0) fail(key, "must be a multiple of down");
  }
  if ((patch_depth == 0) != (patch_height == 0) || (patch_depth == 0) != (patch_width == 0)) {
    fail("patch_depth", "set all three patch dims or none");
  }
  if (total_iters < 0) fail("total_iters", "must be >= 0");
  if (stop_after < -1 || stop_after > total_iters) fail("stop_after", "must be -1 or in [0, total_iters]");
  if (!(base_lr > 0.0)) fail("base_lr", "must be positive");
  if (!(lr_power > 0.0)) fail("lr_power", "must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha", "must lie in [0,1)");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau", "must lie in (0,1)");
  if (!(kl_eps > 0.0)) fail("kl_eps", "must be positive");
  auto check_range = [&](const char* lo_key, int lo, const char* hi_key, int hi, int min_lo) {
    if ((lo == -1) != (hi == -1)) fail(lo_key, std::string("set together with ") + hi_key);
    if (lo != -1 && (lo < min_lo || hi < lo)) fail(lo_key, std::string("invalid range with ") + hi_key);
  };
  check_range("hole_count_min", hole_count_min, "hole_count_max", hole_count_max, 0);
  check_range("hole_edge_min", hole_edge_min, "hole_edge_max", hole_edge_max, 1);
  if (!(pseudo_ema_decay >= 0.0 && pseudo_ema_decay < 1.0)) fail("pseudo_ema_decay", "must lie in [0,1)");
  if (warmup_iters < 0 || warmup_iters > total_iters) fail("warmup_iters", "must lie in [0, total_iters]");
  if (width1 <= 0) fail("width1", "must be positive");
  if (width2 <= 0) fail("width2", "must be positive");
  if (down <= 0) fail("down", "must be positive");
  if (classes < 2 || classes > 255) fail("classes", "must lie in [2,255]");
  if (eval_model != "teacher" && eval_model != "student") fail("eval_model", "expected teacher|student");
  if (window_size < 0 || (window_size > 0 && window_size % down != 0)) {
    fail("window_size", "must be 0 or a positive multiple of down");
  }
  if (window_size > 0 && (window_stride <= 0 || window_stride > window_size)) {
    fail("window_stride", "must lie in [1, window_size]");
  }
}

HoleRanges resolve_holes(const TrainConfig& config, const Dims& dims) {
  const HoleProfile p = config.profile == "large" ? large_tumor_holes(dims) : small_tumor_holes(dims);
  HoleRanges r{p.holes, p.edge};
  if (config.hole_count_min != -1) r.holes = {config.hole_count_min, config.hole_count_max};
  if (config.hole_edge_min != -1) r.edge = {config.hole_edge_min, config.hole_edge_max};
  return r;
}

}  // namespace ipacp
