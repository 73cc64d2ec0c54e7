#include "ipacp/checkpoint.hpp"

#include "ipacp/errors.hpp"
#include "ipacp/volume_io.hpp"

namespace ipacp {

using nlohmann::json;

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.net == b.net) || a.iteration != b.iteration || a.alpha != b.alpha || a.seed != b.seed ||
      a.optim.step != b.optim.step || a.config_text != b.config_text || a.student != b.student || a.teacher != b.teacher ||
      a.optim.m != b.optim.m || a.optim.v != b.optim.v) {
    return false;
  }
  const auto& ta = a.ema_targets.targets();
  const auto& tb = b.ema_targets.targets();
  if (ta.size() != tb.size()) return false;
  for (auto ia = ta.begin(), ib = tb.begin(); ia != ta.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !(ia->second.dims() == ib->second.dims()) ||
        ia->second.probs() != ib->second.probs()) {
      return false;
    }
  }
  return true;
}

void save_checkpoint(const std::filesystem::path& vol_path, const Checkpoint& ckpt) {
  const Eigen::Index n = ckpt.student.size();
  if (ckpt.teacher.size() != n || ckpt.optim.m.size() != n || ckpt.optim.v.size() != n) {
    throw std::invalid_argument("save_checkpoint: inconsistent vector lengths");
  }
  std::vector<double> payload;
  json sections = json::array();
  auto append = [&](const std::string& name, const double* data, Eigen::Index len) {
    sections.push_back({{"name", name}, {"offset", payload.size()}, {"length", len}});
    payload.insert(payload.end(), data, data + len);
  };
  append("student", ckpt.student.data(), n);
  append("teacher", ckpt.teacher.data(), n);
  append("adam_m", ckpt.optim.m.data(), n);
  append("adam_v", ckpt.optim.v.data(), n);
  json targets = json::array();
  for (const auto& [id, soft] : ckpt.ema_targets.targets()) {
    append("ema_target_" + std::to_string(id), soft.probs().data(), soft.probs().size());
    const Dims d = soft.dims();
    targets.push_back({{"id", id}, {"dims", {d.depth, d.height, d.width}}, {"classes", soft.classes()}});
  }

  ContainerHeader h;
  h.dims = {1, 1, int(payload.size())};
  h.dtype = DType::F64;
  h.extra = {{"kind", "checkpoint"},
             {"arch", arch_string(ckpt.net)},
             {"C", ckpt.net.classes},
             {"alpha", ckpt.alpha},
             {"seed", ckpt.seed},
             {"step", ckpt.optim.step},
             {"iteration", ckpt.iteration},
             {"sections", sections},
             {"ema_targets", targets},
             {"config", ckpt.config_text}};
  write_container(vol_path, h, std::span<const double>(payload));
}

Checkpoint load_checkpoint(const std::filesystem::path& vol_path) {
  const ContainerHeader h = read_header(vol_path);
  if (h.extra.value("kind", std::string()) != "checkpoint") {
    throw DataError(vol_path.string() + " is not a checkpoint");
  }
  const auto payload = read_f64_payload(vol_path, h);
  Checkpoint ckpt;
  try {
    ckpt.net = parse_arch_string(h.extra.at("arch").get<std::string>());
    ckpt.alpha = h.extra.at("alpha").get<double>();
    ckpt.seed = h.extra.at("seed").get<std::uint64_t>();
    ckpt.optim.step = h.extra.at("step").get<long>();
    ckpt.iteration = h.extra.at("iteration").get<long>();
    ckpt.config_text = h.extra.value("config", std::string());
    auto section = [&](const std::string& name) -> Eigen::Map<const Eigen::VectorXd> {
      for (const auto& s : h.extra.at("sections")) {
        if (s.at("name").get<std::string>() == name) {
          const auto off = s.at("offset").get<std::size_t>();
          const auto len = s.at("length").get<std::size_t>();
          if (off + len > payload.size()) throw DataError("checkpoint section out of range");
          return {payload.data() + off, Eigen::Index(len)};
        }
      }
      throw DataError("checkpoint is missing section " + name);
    };
    ckpt.student = section("student");
    ckpt.teacher = section("teacher");
    ckpt.optim.m = section("adam_m");
    ckpt.optim.v = section("adam_v");
    for (const auto& t : h.extra.at("ema_targets")) {
      const int id = t.at("id").get<int>();
      const auto& d = t.at("dims");
      const Dims dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
      const int classes = t.at("classes").get<int>();
      const auto data = section("ema_target_" + std::to_string(id));
      if (data.size() != dims.voxels() * classes) throw DataError("bad EMA target length");
      ckpt.ema_targets.set(
          id, ProbMap(dims, Eigen::Map<const Eigen::MatrixXd>(data.data(), dims.voxels(), classes)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint metadata: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw DataError("malformed checkpoint: " + std::string(e.what()));
  }
  if (SegNet(ckpt.net).num_params() != ckpt.student.size()) {
    throw DataError("checkpoint parameter count does not match its architecture");
  }
  return ckpt;
}

}  // namespace ipacp
