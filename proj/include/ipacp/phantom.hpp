#pragma once

// Synthetic tumour phantoms, dataset splits, batch sampling and the on-disk
// dataset layout `<root>/{images,labels}/<id>.vol` + `split.json`.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ipacp/rng.hpp"
#include "ipacp/seg_net.hpp"
#include "ipacp/volume.hpp"

namespace ipacp {

struct PhantomSpec {
  Dims dims{48, 48, 48};
  int count_min = 3;
  int count_max = 8;
  double radius_min = 2.0;
  double radius_max = 4.0;
  /// Tumour intensity above the 0.3 background.
  double contrast = 0.5;
  /// Per-volume multiplicative jitter of `contrast`, uniform in [1-j, 1+j].
  double contrast_jitter = 0.0;
  double noise_sigma = 0.1;
  /// Width of the soft boundary ramp, in voxels.
  double falloff = 1.0;

  /// Throws std::invalid_argument when no phantom can satisfy the spec.
  void validate() const;
};

struct Ellipsoid {
  double cz = 0, cy = 0, cx = 0;
  double rz = 0, ry = 0, rx = 0;
};

struct Phantom {
  /// Min-max normalized.
  Volume image;
  /// Before normalization: background mean 0.3, tumour plateau 0.3 + contrast.
  Volume raw;
  LabelMap labels;
  std::vector<Ellipsoid> tumors;
};

Phantom gen_phantom(const PhantomSpec& spec, Rng& rng);

/// Built-in profiles: "large" (1-2 tumours, radii 6-12, 64³) and "small"
/// (3-8 tumours, radii 2-4, 48³).
PhantomSpec phantom_profile(const std::string& name);

struct DatasetSplit {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  /// labeled followed by unlabeled, in the shuffled order the split used.
  std::vector<std::string> train;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// labeled = floor(ratio * n_train) where n_train = n - n_val - n_test.
std::size_t labeled_count(std::size_t n_train, double ratio);

DatasetSplit make_split(const std::vector<std::string>& ids, double labeled_ratio,
                        std::size_t n_val, std::size_t n_test, Rng& rng);
/// Re-partitions the training pool of `split` at a different ratio,
/// keeping its order.
DatasetSplit with_labeled_ratio(const DatasetSplit& split, double labeled_ratio);

std::string case_id(int index);

struct Batch {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  /// 1-based unlabeled pass counter at the start of the batch.
  long epoch = 1;
};

/// Stateless batch stream: batch k is a pure function of (split, batch
/// size, seed, k). Each pass over an id list follows its own seeded
/// permutation, so unlabeled ids are exhausted before any repeats and
/// labeled ids recycle.
class BatchSampler {
 public:
  BatchSampler(DatasetSplit split, int batch_size, std::uint64_t seed);

  Batch at(long iteration) const;
  long epoch_of(long iteration) const;
  /// Number of unlabeled passes touched by `iterations` batches.
  long total_epochs(long iterations) const;

 private:
  std::string pick(const std::vector<std::string>& ids, std::uint64_t stream, long position) const;

  DatasetSplit split_;
  int batch_size_;
  std::uint64_t seed_;
};

BatchSampler sample_batches(const DatasetSplit& split, int batch_size, std::uint64_t seed);

struct DatasetInfo {
  std::string profile;
  std::uint64_t seed = 0;
  double labeled_ratio = 0.1;
  Spacing spacing;
};

/// Generates `n_train + n_val + n_test` phantoms with per-case derived seeds
/// and writes the dataset layout.
void generate_dataset(const std::filesystem::path& root, const std::string& profile,
                      std::uint64_t seed, int n_train, int n_val, int n_test,
                      double labeled_ratio = 0.1);

void write_split(const std::filesystem::path& root, const DatasetSplit& split,
                 const DatasetInfo& info);

/// Throws DataError on a missing or malformed layout.
class Dataset {
 public:
  explicit Dataset(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  const DatasetSplit& split() const { return split_; }
  const DatasetInfo& info() const { return info_; }
  std::vector<std::string> ids(const std::string& split_name) const;

  Volume image(const std::string& id) const;
  LabelMap labels(const std::string& id) const;
  TrainingSample sample(const std::string& id) const;

 private:
  std::filesystem::path root_;
  DatasetSplit split_;
  DatasetInfo info_;
};

}  // namespace ipacp
