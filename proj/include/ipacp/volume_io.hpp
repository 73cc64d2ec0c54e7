#pragma once

// On-disk container: `<name>.vol` holds the raw little-endian payload and
// `<name>.json` next to it holds {dims, dtype, classes?, spacing?, ...}.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipacp/volume.hpp"

namespace ipacp {

enum class DType { F64, U8 };

struct ContainerHeader {
  Dims dims;
  DType dtype = DType::F64;
  std::optional<int> classes;
  std::optional<Spacing> spacing;
  /// Any additional metadata keys; written verbatim into the sidecar.
  nlohmann::json extra = nlohmann::json::object();
};

std::filesystem::path sidecar_path(const std::filesystem::path& vol_path);

/// Writes `payload_len` elements; the header must describe the payload length
/// exactly (dims voxels, times classes when present).
void write_container(const std::filesystem::path& vol_path, const ContainerHeader& header,
                     std::span<const double> payload);
void write_container(const std::filesystem::path& vol_path, const ContainerHeader& header,
                     std::span<const std::uint8_t> payload);

ContainerHeader read_header(const std::filesystem::path& vol_path);
std::vector<double> read_f64_payload(const std::filesystem::path& vol_path,
                                     const ContainerHeader& header);
std::vector<std::uint8_t> read_u8_payload(const std::filesystem::path& vol_path,
                                          const ContainerHeader& header);

void write_volume(const Volume& v, const std::filesystem::path& vol_path);
void write_volume(const LabelMap& l, const std::filesystem::path& vol_path,
                  std::optional<int> classes = std::nullopt);
void write_volume(const BinaryMask& m, const std::filesystem::path& vol_path);

Volume read_volume(const std::filesystem::path& vol_path);
LabelMap read_label_map(const std::filesystem::path& vol_path);
BinaryMask read_mask(const std::filesystem::path& vol_path);

}  // namespace ipacp
