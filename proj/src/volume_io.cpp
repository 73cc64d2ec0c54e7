#include "ipacp/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ipacp/errors.hpp"

namespace ipacp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x00000000FFFFFFFFull) << 32) | ((v & 0xFFFFFFFF00000000ull) >> 32);
    v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v & 0xFFFF0000FFFF0000ull) >> 16);
    v = ((v & 0x00FF00FF00FF00FFull) << 8) | ((v & 0xFF00FF00FF00FF00ull) >> 8);
  }
  return v;
}

std::size_t expected_length(const ContainerHeader& h) {
  // Multi-class f64 containers hold one plane per class; for u8 grids the
  // class count is metadata only.
  const std::size_t planes = h.dtype == DType::F64 ? std::size_t(h.classes.value_or(1)) : 1;
  return std::size_t(h.dims.voxels()) * planes;
}

void write_sidecar(const fs::path& vol_path, const ContainerHeader& h) {
  json j = h.extra;
  j["dims"] = {h.dims.depth, h.dims.height, h.dims.width};
  j["dtype"] = h.dtype == DType::F64 ? "f64" : "u8";
  if (h.classes) j["classes"] = *h.classes;
  if (h.spacing) j["spacing"] = {h.spacing->z, h.spacing->y, h.spacing->x};
  std::ofstream out(sidecar_path(vol_path), std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + sidecar_path(vol_path).string() + " for writing");
  out << j.dump(2) << '\n';
}

void write_bytes(const fs::path& vol_path, const char* bytes, std::size_t n) {
  std::ofstream out(vol_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + vol_path.string() + " for writing");
  out.write(bytes, std::streamsize(n));
  if (!out) throw DataError("short write to " + vol_path.string());
}

std::vector<char> read_bytes(const fs::path& vol_path) {
  std::ifstream in(vol_path, std::ios::binary);
  if (!in) throw DataError("missing file " + vol_path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_header_for_write(const ContainerHeader& h, std::size_t n) {
  if (!h.dims.valid()) throw std::invalid_argument("invalid dims " + to_string(h.dims));
  if (n != expected_length(h)) {
    throw std::invalid_argument("payload length does not match header dims");
  }
}

}  // namespace

fs::path sidecar_path(const fs::path& vol_path) {
  fs::path p = vol_path;
  p.replace_extension(".json");
  return p;
}

void write_container(const fs::path& vol_path, const ContainerHeader& header,
                     std::span<const double> payload) {
  if (header.dtype != DType::F64) throw std::invalid_argument("f64 payload with non-f64 header");
  check_header_for_write(header, payload.size());
  std::vector<char> bytes(payload.size() * 8);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(payload[i])) throw DataError("refusing to write a non-finite value");
    const std::uint64_t word = to_little(std::bit_cast<std::uint64_t>(payload[i]));
    std::memcpy(bytes.data() + 8 * i, &word, 8);
  }
  write_bytes(vol_path, bytes.data(), bytes.size());
  write_sidecar(vol_path, header);
}

void write_container(const fs::path& vol_path, const ContainerHeader& header,
                     std::span<const std::uint8_t> payload) {
  if (header.dtype != DType::U8) throw std::invalid_argument("u8 payload with non-u8 header");
  check_header_for_write(header, payload.size());
  write_bytes(vol_path, reinterpret_cast<const char*>(payload.data()), payload.size());
  write_sidecar(vol_path, header);
}

ContainerHeader read_header(const fs::path& vol_path) {
  std::ifstream in(sidecar_path(vol_path));
  if (!in) throw DataError("missing sidecar " + sidecar_path(vol_path).string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed sidecar " + sidecar_path(vol_path).string() + ": " + e.what());
  }
  ContainerHeader h;
  try {
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3) throw DataError("dims must have three entries");
    h.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype == "f64") {
      h.dtype = DType::F64;
    } else if (dtype == "u8") {
      h.dtype = DType::U8;
    } else {
      throw DataError("unsupported dtype '" + dtype + "'");
    }
    if (j.contains("classes")) h.classes = j["classes"].get<int>();
    if (j.contains("spacing")) {
      const auto& s = j["spacing"];
      h.spacing = Spacing{s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
  } catch (const json::exception& e) {
    throw DataError("bad sidecar " + sidecar_path(vol_path).string() + ": " + e.what());
  }
  if (!h.dims.valid()) throw DataError("invalid dims " + to_string(h.dims));
  if (h.classes && *h.classes < 1) throw DataError("invalid class count");
  if (h.spacing && !(h.spacing->z > 0 && h.spacing->y > 0 && h.spacing->x > 0)) {
    throw DataError("spacing must be positive");
  }
  for (const auto& key : {"dims", "dtype", "classes", "spacing"}) j.erase(key);
  h.extra = std::move(j);
  return h;
}

std::vector<double> read_f64_payload(const fs::path& vol_path, const ContainerHeader& header) {
  if (header.dtype != DType::F64) throw DataError("expected an f64 container");
  const auto bytes = read_bytes(vol_path);
  const std::size_t n = expected_length(header);
  if (bytes.size() != n * 8) {
    throw DataError("length mismatch in " + vol_path.string() + ": header expects " +
                    std::to_string(n * 8) + " bytes, file has " + std::to_string(bytes.size()));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t word;
    std::memcpy(&word, bytes.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_little(word));
    if (!std::isfinite(out[i])) throw DataError("non-finite value in " + vol_path.string());
  }
  return out;
}

std::vector<std::uint8_t> read_u8_payload(const fs::path& vol_path,
                                          const ContainerHeader& header) {
  if (header.dtype != DType::U8) throw DataError("expected a u8 container");
  const auto bytes = read_bytes(vol_path);
  const std::size_t n = expected_length(header);
  if (bytes.size() != n) {
    throw DataError("length mismatch in " + vol_path.string() + ": header expects " +
                    std::to_string(n) + " bytes, file has " + std::to_string(bytes.size()));
  }
  return {bytes.begin(), bytes.end()};
}

void write_volume(const Volume& v, const fs::path& vol_path) {
  ContainerHeader h{v.dims(), DType::F64, std::nullopt, v.spacing, json::object()};
  write_container(vol_path, h, std::span<const double>(v.data().data(), std::size_t(v.size())));
}

void write_volume(const LabelMap& l, const fs::path& vol_path, std::optional<int> classes) {
  ContainerHeader h{l.dims(), DType::U8, classes, l.spacing, json::object()};
  h.extra["kind"] = "labels";
  write_container(vol_path, h,
                  std::span<const std::uint8_t>(l.data().data(), std::size_t(l.size())));
}

void write_volume(const BinaryMask& m, const fs::path& vol_path) {
  ContainerHeader h{m.dims(), DType::U8, std::nullopt, m.spacing, json::object()};
  h.extra["kind"] = "mask";
  write_container(vol_path, h,
                  std::span<const std::uint8_t>(m.data().data(), std::size_t(m.size())));
}

Volume read_volume(const fs::path& vol_path) {
  const auto h = read_header(vol_path);
  if (h.classes) throw DataError("expected a scalar volume, found a multi-class container");
  auto values = read_f64_payload(vol_path, h);
  Volume v(h.dims, Eigen::Map<const Eigen::ArrayXd>(values.data(), Eigen::Index(values.size())));
  v.spacing = h.spacing;
  return v;
}

namespace {
template <typename GridT>
GridT read_u8_grid(const fs::path& vol_path) {
  const auto h = read_header(vol_path);
  const auto classes = h.classes;
  const auto values = read_u8_payload(vol_path, h);
  typename GridT::Storage data(Eigen::Index(values.size()));
  std::memcpy(data.data(), values.data(), values.size());
  GridT g(h.dims, std::move(data));
  g.spacing = h.spacing;
  if (classes && !(g.data().template cast<int>() < *classes).all()) {
    throw DataError("label value outside declared class count in " + vol_path.string());
  }
  return g;
}
}  // namespace

LabelMap read_label_map(const fs::path& vol_path) { return read_u8_grid<LabelMap>(vol_path); }

BinaryMask read_mask(const fs::path& vol_path) {
  auto m = read_u8_grid<BinaryMask>(vol_path);
  if (!is_binary(m)) throw DataError("mask is not binary: " + vol_path.string());
  return m;
}

}  // namespace ipacp
