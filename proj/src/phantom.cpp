#include "ipacp/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ipacp/errors.hpp"
#include "ipacp/volume_io.hpp"

namespace ipacp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kBackground = 0.3;
constexpr std::uint64_t kLabeledStream = 1;
constexpr std::uint64_t kUnlabeledStream = 2;
constexpr std::uint64_t kSplitStream = 0xFFFFFFFFull;

}  // namespace

void PhantomSpec::validate() const {
  if (!dims.valid()) throw std::invalid_argument("phantom: invalid dims " + to_string(dims));
  if (count_min < 1 || count_max < count_min) {
    throw std::invalid_argument("phantom: tumour counts need 1 <= min <= max");
  }
  if (!(radius_min >= 1.0) || radius_max < radius_min) {
    throw std::invalid_argument("phantom: radii need 1 <= min <= max");
  }
  const int smallest = std::min({dims.depth, dims.height, dims.width});
  if (2.0 * radius_max + 3.0 > double(smallest)) {
    throw std::invalid_argument("phantom: radius " + std::to_string(radius_max) +
                                " does not fit inside dims " + to_string(dims));
  }
  if (!(contrast > 0.0 && contrast <= 1.0)) throw std::invalid_argument("phantom: contrast must lie in (0,1]");
  if (!(contrast_jitter >= 0.0 && contrast_jitter < 1.0)) {
    throw std::invalid_argument("phantom: contrast jitter must lie in [0,1)");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("phantom: noise sigma must be >= 0");
  if (!(falloff > 0.0)) throw std::invalid_argument("phantom: falloff must be positive");
}

Phantom gen_phantom(const PhantomSpec& spec, Rng& rng) {
  spec.validate();
  const Dims d = spec.dims;
  std::uniform_int_distribution<int> count(spec.count_min, spec.count_max);
  std::uniform_real_distribution<double> radius(spec.radius_min, spec.radius_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Phantom ph;
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    Ellipsoid e;
    e.rz = radius(rng);
    e.ry = radius(rng);
    e.rx = radius(rng);
    // Keep one clear voxel between the ellipsoid and the border.
    auto centre = [&](double r, int extent) { return r + 1.0 + unit(rng) * (extent - 3.0 - 2.0 * r); };
    e.cz = centre(e.rz, d.depth);
    e.cy = centre(e.ry, d.height);
    e.cx = centre(e.rx, d.width);
    ph.tumors.push_back(e);
  }
  double contrast = spec.contrast;
  if (spec.contrast_jitter > 0.0) {
    contrast *= 1.0 + spec.contrast_jitter * (2.0 * unit(rng) - 1.0);
  }

  ph.labels = LabelMap(d, 0);
  Volume strength(d, 0.0);
  for (const auto& e : ph.tumors) {
    const double r_min = std::min({e.rz, e.ry, e.rx});
    const int z0 = std::max(0, int(std::floor(e.cz - e.rz - 2))), z1 = std::min(d.depth - 1, int(std::ceil(e.cz + e.rz + 2)));
    const int y0 = std::max(0, int(std::floor(e.cy - e.ry - 2))), y1 = std::min(d.height - 1, int(std::ceil(e.cy + e.ry + 2)));
    const int x0 = std::max(0, int(std::floor(e.cx - e.rx - 2))), x1 = std::min(d.width - 1, int(std::ceil(e.cx + e.rx + 2)));
    for (int z = z0; z <= z1; ++z) {
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double qz = (z - e.cz) / e.rz, qy = (y - e.cy) / e.ry, qx = (x - e.cx) / e.rx;
          const double rho = std::sqrt(qz * qz + qy * qy + qx * qx);
          double s = std::clamp(0.5 + (1.0 - rho) * r_min / spec.falloff, 0.0, 1.0);
          if (rho <= 1.0) {
            s = std::max(s, 0.6);
            ph.labels(z, y, x) = 1;
          } else {
            s = std::min(s, 0.4);
          }
          strength(z, y, x) = std::max(strength(z, y, x), s);
        }
      }
    }
  }

  ph.raw = Volume(d, kBackground);
  ph.raw.data() += contrast * strength.data();
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (Eigen::Index i = 0; i < ph.raw.size(); ++i) ph.raw[i] += noise(rng);
  }
  ph.image = minmax_normalize(ph.raw);
  return ph;
}

PhantomSpec phantom_profile(const std::string& name) {
  PhantomSpec s;
  if (name == "large") {
    s.dims = {64, 64, 64};
    s.count_min = 1;
    s.count_max = 2;
    s.radius_min = 6.0;
    s.radius_max = 12.0;
  } else if (name == "small") {
    s.dims = {48, 48, 48};
    s.count_min = 3;
    s.count_max = 8;
    s.radius_min = 2.0;
    s.radius_max = 4.0;
    s.contrast = 0.35;
    s.contrast_jitter = 0.3;
    s.noise_sigma = 0.15;
  } else {
    throw std::invalid_argument("unknown phantom profile '" + name + "' (expected large|small)");
  }
  return s;
}

std::size_t labeled_count(std::size_t n_train, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("labeled ratio must lie in (0,1]");
  // The epsilon keeps e.g. 0.1 * 360 from landing just under 36.
  return std::min(n_train, std::size_t(std::floor(ratio * double(n_train) + 1e-9)));
}

DatasetSplit make_split(const std::vector<std::string>& ids, double labeled_ratio,
                        std::size_t n_val, std::size_t n_test, Rng& rng) {
  if (n_val + n_test >= ids.size()) throw std::invalid_argument("make_split: no training ids left");
  std::vector<std::string> order = ids;
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit s;
  auto it = order.begin();
  s.test.assign(it, it + std::ptrdiff_t(n_test));
  it += std::ptrdiff_t(n_test);
  s.validation.assign(it, it + std::ptrdiff_t(n_val));
  it += std::ptrdiff_t(n_val);
  s.train.assign(it, order.end());
  return with_labeled_ratio(s, labeled_ratio);
}

DatasetSplit with_labeled_ratio(const DatasetSplit& split, double labeled_ratio) {
  DatasetSplit s = split;
  const std::size_t k = labeled_count(s.train.size(), labeled_ratio);
  if (k == 0) throw std::invalid_argument("labeled ratio leaves no labeled cases");
  s.labeled.assign(s.train.begin(), s.train.begin() + std::ptrdiff_t(k));
  s.unlabeled.assign(s.train.begin() + std::ptrdiff_t(k), s.train.end());
  return s;
}

std::string case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03d", index);
  return buf;
}

BatchSampler::BatchSampler(DatasetSplit split, int batch_size, std::uint64_t seed)
    : split_(std::move(split)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ <= 0) throw std::invalid_argument("batch size must be positive");
  if (split_.labeled.empty()) throw std::invalid_argument("sampler needs labeled ids");
}

std::string BatchSampler::pick(const std::vector<std::string>& ids, std::uint64_t stream,
                               long position) const {
  const long n = long(ids.size());
  const long pass = position / n;
  std::vector<std::size_t> perm(ids.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, {stream, std::uint64_t(pass)}));
  std::shuffle(perm.begin(), perm.end(), rng);
  return ids[perm[std::size_t(position % n)]];
}

long BatchSampler::epoch_of(long iteration) const {
  const auto& pool = split_.unlabeled.empty() ? split_.labeled : split_.unlabeled;
  return iteration * batch_size_ / long(pool.size()) + 1;
}

long BatchSampler::total_epochs(long iterations) const {
  if (iterations <= 0) return 1;
  const auto& pool = split_.unlabeled.empty() ? split_.labeled : split_.unlabeled;
  const long n = long(pool.size());
  return (iterations * batch_size_ + n - 1) / n;
}

Batch BatchSampler::at(long iteration) const {
  if (iteration < 0) throw std::invalid_argument("negative iteration");
  Batch b;
  b.epoch = epoch_of(iteration);
  for (int k = 0; k < batch_size_; ++k) {
    const long position = iteration * batch_size_ + k;
    b.labeled.push_back(pick(split_.labeled, kLabeledStream, position));
    if (!split_.unlabeled.empty()) {
      b.unlabeled.push_back(pick(split_.unlabeled, kUnlabeledStream, position));
    }
  }
  return b;
}

BatchSampler sample_batches(const DatasetSplit& split, int batch_size, std::uint64_t seed) {
  return BatchSampler(split, batch_size, seed);
}

void write_split(const fs::path& root, const DatasetSplit& split, const DatasetInfo& info) {
  json j{{"profile", info.profile},
         {"seed", info.seed},
         {"labeled_ratio", info.labeled_ratio},
         {"spacing", {info.spacing.z, info.spacing.y, info.spacing.x}},
         {"labeled", split.labeled},
         {"unlabeled", split.unlabeled},
         {"validation", split.validation},
         {"test", split.test},
         {"train", split.train}};
  std::ofstream out(root / "split.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (root / "split.json").string());
}

void generate_dataset(const fs::path& root, const std::string& profile, std::uint64_t seed,
                      int n_train, int n_val, int n_test, double labeled_ratio) {
  const PhantomSpec spec = phantom_profile(profile);
  if (n_train <= 0 || n_val < 0 || n_test < 0) throw std::invalid_argument("invalid case counts");
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  const int total = n_train + n_val + n_test;
  std::vector<std::string> ids;
  for (int i = 0; i < total; ++i) {
    const std::string id = case_id(i);
    Rng rng(derive_seed(seed, {std::uint64_t(i)}));
    Phantom ph = gen_phantom(spec, rng);
    ph.image.spacing = Spacing{};
    ph.labels.spacing = Spacing{};
    write_volume(ph.image, root / "images" / (id + ".vol"));
    write_volume(ph.labels, root / "labels" / (id + ".vol"), 2);
    ids.push_back(id);
  }
  Rng split_rng(derive_seed(seed, {kSplitStream}));
  const DatasetSplit split =
      make_split(ids, labeled_ratio, std::size_t(n_val), std::size_t(n_test), split_rng);
  write_split(root, split, {profile, seed, labeled_ratio, Spacing{}});
}

Dataset::Dataset(fs::path root) : root_(std::move(root)) {
  const fs::path split_path = root_ / "split.json";
  std::ifstream in(split_path, std::ios::binary);
  if (!in) throw DataError("dataset split file not found: " + split_path.string());
  try {
    const json j = json::parse(in);
    split_.labeled = j.at("labeled").get<std::vector<std::string>>();
    split_.unlabeled = j.at("unlabeled").get<std::vector<std::string>>();
    split_.validation = j.at("validation").get<std::vector<std::string>>();
    split_.test = j.at("test").get<std::vector<std::string>>();
    split_.train = j.value("train", std::vector<std::string>{});
    if (split_.train.empty()) {
      split_.train = split_.labeled;
      split_.train.insert(split_.train.end(), split_.unlabeled.begin(), split_.unlabeled.end());
    }
    info_.profile = j.value("profile", std::string());
    info_.seed = j.value("seed", std::uint64_t{0});
    info_.labeled_ratio = j.value("labeled_ratio", 0.0);
    if (j.contains("spacing")) {
      const auto& s = j.at("spacing");
      info_.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
  } catch (const json::exception& e) {
    throw DataError("malformed " + split_path.string() + ": " + e.what());
  }
}

std::vector<std::string> Dataset::ids(const std::string& split_name) const {
  if (split_name == "labeled") return split_.labeled;
  if (split_name == "unlabeled") return split_.unlabeled;
  if (split_name == "val" || split_name == "validation") return split_.validation;
  if (split_name == "test") return split_.test;
  if (split_name == "train") return split_.train;
  throw DataError("unknown split '" + split_name + "'");
}

Volume Dataset::image(const std::string& id) const {
  return read_volume(root_ / "images" / (id + ".vol"));
}

LabelMap Dataset::labels(const std::string& id) const {
  return read_label_map(root_ / "labels" / (id + ".vol"));
}

TrainingSample Dataset::sample(const std::string& id) const {
  TrainingSample s{image(id), labels(id)};
  require_same_dims(s.image.dims(), s.labels.dims(), ("case " + id).c_str());
  return s;
}

}  // namespace ipacp
