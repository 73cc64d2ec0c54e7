#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <fstream>
#include <sstream>

#include "ipacp/ablate.hpp"
#include "ipacp/checkpoint.hpp"
#include "ipacp/config.hpp"
#include "ipacp/errors.hpp"
#include "ipacp/evaluate.hpp"
#include "ipacp/trainer.hpp"
#include "test_util.hpp"

using namespace ipacp;
namespace fs = std::filesystem;

namespace {

/// One small dataset shared by every case in this file.
const fs::path& dataset_root() {
  static const test::TempDir dir;
  static const bool made = [] {
    generate_dataset(dir.path / "data", "small", 5, 8, 2, 2, 0.25);
    return true;
  }();
  (void)made;
  static const fs::path root = dir.path / "data";
  return root;
}

TrainConfig tiny_config(const fs::path& out) {
  TrainConfig c;
  c.data_root = dataset_root().string();
  c.labeled_ratio = 0.25;
  c.patch_depth = c.patch_height = c.patch_width = 16;
  c.width1 = 2;
  c.width2 = 3;
  c.down = 4;
  c.total_iters = 6;
  c.base_lr = 1e-2;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const TrainConfig c = parse_config(
      "# comment line\n"
      "data_root = /data   # trailing comment\n"
      "total_iters = 50\n"
      "pseudo_mode = EMA\n"
      "loss_mode = Dice\n"
      "tue = false\n"
      "extra_seeds = 1, 2\n");
  CHECK(c.data_root == "/data");
  CHECK(c.total_iters == 50);
  CHECK(c.pseudo_mode == PseudoMode::Ema);
  CHECK(c.loss_mode == LossMode::Dice);
  CHECK_FALSE(c.tue);
  CHECK(c.extra_seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.batch_size == 2);
  CHECK(c.base_lr == 2.5e-4);

  CHECK(parse_config(serialize_config(c)).total_iters == 50);
  CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));

  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("total_iters = 5\ntotal_iters = 6\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("total_iters = five\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("tau = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("alpha = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("pseudo_mode = MEAN\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just a line\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("hole_count_min = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("patch_depth = 16\n"), ConfigError);
  try {
    parse_config("labeled_ratio = 0\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("labeled_ratio") != std::string::npos);
  }
}

TEST_CASE("config paths and hashing") {
  const test::TempDir dir;
  fs::create_directories(dir.path / "cfg");
  std::ofstream(dir.path / "cfg" / "run.txt") << "data_root = ../data\nout_dir = out\n";
  const TrainConfig c = load_config(dir.path / "cfg" / "run.txt");
  CHECK(fs::path(c.data_root) == (dir.path / "data").lexically_normal());
  CHECK(fs::path(c.out_dir) == (dir.path / "cfg" / "out").lexically_normal());
  CHECK_THROWS_AS(load_config(dir.path / "absent.txt"), ConfigError);

  TrainConfig moved = c;
  moved.out_dir = "/elsewhere";
  moved.stop_after = 3;
  CHECK(config_hash(moved) == config_hash(c));
  moved.tau = 0.7;
  CHECK(config_hash(moved) != config_hash(c));
  CHECK(config_hash(c).size() == 16);

  TrainConfig holes;
  CHECK(resolve_holes(holes, {48, 48, 48}).edge == IntRange{3, 6});
  holes.hole_count_min = 2;
  holes.hole_count_max = 4;
  CHECK(resolve_holes(holes, {48, 48, 48}).holes == IntRange{2, 4});
}

TEST_CASE("checkpoint round trip") {
  const test::TempDir dir;
  Checkpoint c;
  c.net = NetConfig{2, 3, 2, 2};
  const SegNet net(c.net);
  c.student = net.init_params(1);
  c.teacher = net.init_params(2);
  c.optim = OptimState::zeros(c.student.size());
  c.optim.m.setConstant(0.25);
  c.optim.v.setConstant(0.5);
  c.optim.step = 7;
  c.iteration = 7;
  c.seed = 99;
  c.config_text = "total_iters = 7\n";
  c.ema_targets.set(3, ProbMap({2, 2, 2}, 2));
  save_checkpoint(dir.path / "c.vol", c);
  const Checkpoint back = load_checkpoint(dir.path / "c.vol");
  CHECK(back == c);
  save_checkpoint(dir.path / "d.vol", back);
  CHECK(test::read_bytes(dir.path / "c.vol") == test::read_bytes(dir.path / "d.vol"));
  CHECK(test::read_bytes(dir.path / "c.json") == test::read_bytes(dir.path / "d.json"));

  fs::resize_file(dir.path / "c.vol", 16);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "c.vol"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.vol"), DataError);
}

TEST_CASE("zero iterations yield the initial state and an empty log") {
  const test::TempDir dir;
  TrainConfig c = tiny_config(dir.path / "run");
  c.total_iters = 0;
  const TrainResult r = train(c);
  CHECK(r.log.empty());
  const Checkpoint saved = load_checkpoint(dir.path / "run" / "checkpoint.vol");
  CHECK(saved.student == saved.teacher);
  CHECK(saved.iteration == 0);
  const Dataset ds(c.data_root);
  const Trainer t(c, with_labeled_ratio(ds.split(), c.labeled_ratio),
                  load_cases(ds, ds.ids("train")));
  CHECK(saved.student == t.initial_state().student);
  CHECK(test::read_bytes(dir.path / "run" / "train_log.csv") == log_header() + "\n");
}

TEST_CASE("training is deterministic and resumable") {
  const test::TempDir dir;
  const TrainResult a = train(tiny_config(dir.path / "a"));
  const TrainResult b = train(tiny_config(dir.path / "b"));
  CHECK(a.log.size() == 6);
  CHECK(a.log == b.log);
  for (const char* f : {"train_log.csv", "checkpoint.vol", "checkpoint.json"}) {
    CHECK(test::read_bytes(dir.path / "a" / f) == test::read_bytes(dir.path / "b" / f));
  }

  TrainConfig first = tiny_config(dir.path / "r");
  first.stop_after = 3;
  train(first);
  CHECK(load_checkpoint(dir.path / "r" / "checkpoint.vol").iteration == 3);
  TrainConfig second = tiny_config(dir.path / "r");
  fs::copy_file(dir.path / "r" / "checkpoint.vol", dir.path / "half.vol");
  fs::copy_file(dir.path / "r" / "checkpoint.json", dir.path / "half.json");
  second.resume_from = (dir.path / "half.vol").string();
  train(second);
  for (const char* f : {"train_log.csv", "checkpoint.vol", "checkpoint.json"}) {
    CHECK(test::read_bytes(dir.path / "a" / f) == test::read_bytes(dir.path / "r" / f));
  }
}

TEST_CASE("the teacher only moves by the EMA of the student") {
  const TrainConfig c = tiny_config("unused");
  const Dataset ds(c.data_root);
  const Trainer t(c, with_labeled_ratio(ds.split(), c.labeled_ratio), load_cases(ds, ds.ids("train")));
  Checkpoint s = t.initial_state();
  for (long k = 0; k < 4; ++k) {
    const ParamVector teacher = s.teacher;
    t.run(s, k + 1, {});
    ParamVector expected = teacher;
    ema_update(expected, s.student, c.alpha);
    CHECK(s.teacher == expected);
  }
}

TEST_CASE("the teacher takes the student weights when the warm-up ends") {
  TrainConfig c = tiny_config("unused");
  c.warmup_iters = 2;
  const Dataset ds(c.data_root);
  const DatasetSplit split = with_labeled_ratio(ds.split(), c.labeled_ratio);
  const auto cases = load_cases(ds, ds.ids("train"));
  const Trainer t(c, split, cases);
  Checkpoint s = t.initial_state();
  t.run(s, 1, {});
  CHECK_FALSE(s.teacher == s.student);
  t.run(s, 2, {});
  CHECK(s.teacher == s.student);
  const ParamVector teacher = s.teacher;
  t.run(s, 3, {});
  ParamVector expected = teacher;
  ema_update(expected, s.student, c.alpha);
  CHECK(s.teacher == expected);

  // Supervised runs have no hand-off.
  c.supervised = true;
  const Trainer sup(c, split, cases);
  Checkpoint u = sup.initial_state();
  sup.run(u, 2, {});
  CHECK_FALSE(u.teacher == u.student);
}

TEST_CASE("supervised mode and flag fallbacks") {
  TrainConfig c = tiny_config("unused");
  const Dataset ds(c.data_root);
  const DatasetSplit split = with_labeled_ratio(ds.split(), c.labeled_ratio);
  const auto cases = load_cases(ds, ds.ids("train"));

  c.supervised = true;
  const Trainer sup(c, split, cases);
  Checkpoint s = sup.initial_state();
  std::vector<LogRow> rows;
  sup.run(s, 3, [&](const LogRow& r) { rows.push_back(r); });
  for (const auto& r : rows) {
    CHECK(r.loss_u_to_l == 0.0);
    CHECK(r.mu_mean == 0.0);
  }

  TrainConfig off = tiny_config("unused");
  off.wsa = off.tue = off.pdi = off.ipt = off.bcp = false;
  CHECK(off.supervised_only());
  const Trainer none(off, split, cases);
  Checkpoint n = none.initial_state();
  none.run(n, 3, {});
  CHECK(n.student == s.student);
}

TEST_CASE("non-finite losses raise NumericError with a snapshot") {
  const test::TempDir dir;
  TrainConfig c = tiny_config(dir.path / "run");
  c.base_lr = 1e300;
  c.supervised = true;
  CHECK_THROWS_AS(train(c), NumericError);
  CHECK(fs::exists(dir.path / "run" / "numeric_failure.json"));
  CHECK(fs::exists(dir.path / "run" / "numeric_failure_checkpoint.vol"));
}

TEST_CASE("evaluation with an oracle predictor") {
  const Dataset ds(dataset_root());
  const auto ids = ds.ids("test");
  const MetricsReport r =
      evaluate(ds, ids, [&](const std::string& id, const Volume&) { return foreground(ds.labels(id)); });
  CHECK(r.cases.size() == ids.size());
  CHECK(r.summary("dice").mean == 100.0);
  CHECK(r.summary("hd95").mean == 0.0);
  CHECK(r.metadata.contains("revision"));

  const MetricsReport empty = evaluate(ds, ids, [&](const std::string&, const Volume& v) {
    return BinaryMask(v.dims(), 0);
  });
  CHECK(empty.summary("dice").mean == 0.0);
  CHECK(empty.summary("hd95").count == 0);
  CHECK(empty.cases[0].note == "empty prediction");
}

TEST_CASE("checkpoint evaluation is reproducible") {
  const test::TempDir dir;
  const TrainConfig c = tiny_config(dir.path / "run");
  const TrainResult r = train(c);
  const Dataset ds(c.data_root);
  const MetricsReport a = evaluate_checkpoint(r.checkpoint, ds, "test", "teacher");
  const MetricsReport b = evaluate_checkpoint(load_checkpoint(dir.path / "run" / "checkpoint.vol"),
                                              ds, "test", "teacher");
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.metadata["model"] == "teacher");
  CHECK(a.metadata["config_hash"] == config_hash(c));

  // Sliding windows that tile the volume exactly reproduce whole-volume
  // inference for a net whose receptive field stays inside one window.
  const SegNet net(r.checkpoint.net);
  const Volume img = ds.image(ds.ids("test")[0]);
  const ProbMap whole = predict(net, r.checkpoint.teacher, img);
  const ProbMap windowed = predict(net, r.checkpoint.teacher, img, {48, 48});
  CHECK(whole.probs() == windowed.probs());
  const ProbMap overlapping = predict(net, r.checkpoint.teacher, img, {32, 16});
  CHECK(is_valid_probmap(overlapping, 1e-9));
}

TEST_CASE("ablation variants") {
  TrainConfig base;
  CHECK(ablation_variants(base, "tau").size() == 5);
  CHECK(ablation_variants(base, "holes").size() == 5);
  CHECK(ablation_variants(base, "pseudo_mode").size() == 4);
  CHECK(ablation_variants(base, "loss_mode").size() == 3);
  const auto flags = ablation_variants(base, "component_flags");
  CHECK(flags.front().config.supervised_only());
  CHECK_FALSE(flags.back().config.supervised_only());
  CHECK_THROWS_AS(ablation_variants(base, "depth"), ConfigError);
}

#ifdef IPACP_CLI_PATH
TEST_CASE("CLI exit codes") {
  const test::TempDir dir;
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(IPACP_CLI_PATH) + " " + args + " > " +
                            (dir.path / "out.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("train --config " + (dir.path / "absent.txt").string()) == 2);
  std::ofstream(dir.path / "bad.txt") << "no_such_key = 1\n";
  CHECK(run("train --config " + (dir.path / "bad.txt").string()) == 2);
  std::ofstream(dir.path / "nodata.txt") << "data_root = " << (dir.path / "nothing").string() << "\n";
  CHECK(run("train --config " + (dir.path / "nodata.txt").string()) == 3);
  CHECK(run("eval --ckpt " + (dir.path / "none.vol").string() + " --data " +
            dataset_root().string() + " --split test") == 3);
  CHECK(run("frobnicate") == 2);

  std::ofstream(dir.path / "blowup.txt")
      << "data_root = " << dataset_root().string() << "\nlabeled_ratio = 0.25\n"
      << "patch_depth = 16\npatch_height = 16\npatch_width = 16\nwidth1 = 2\nwidth2 = 3\n"
      << "total_iters = 3\nbase_lr = 1e300\nsupervised = true\nout_dir = " << (dir.path / "b").string() << "\n";
  CHECK(run("train --config " + (dir.path / "blowup.txt").string()) == 4);

  std::ofstream(dir.path / "ok.txt")
      << "data_root = " << dataset_root().string() << "\nlabeled_ratio = 0.25\n"
      << "patch_depth = 16\npatch_height = 16\npatch_width = 16\nwidth1 = 2\nwidth2 = 3\n"
      << "total_iters = 2\nout_dir = " << (dir.path / "ok").string() << "\n";
  CHECK(run("train --config " + (dir.path / "ok.txt").string()) == 0);
  CHECK(run("eval --ckpt " + (dir.path / "ok" / "checkpoint.vol").string() + " --data " +
            dataset_root().string() + " --split test --report " + (dir.path / "rep").string()) == 0);
  CHECK(fs::exists(dir.path / "rep.json"));
  CHECK(fs::exists(dir.path / "rep.csv"));
  CHECK(run("gen-data --profile small --out " + (dir.path / "g").string() +
            " --seed 1 --train 4 --val 1 --test 1 --labeled-ratio 0.25") == 0);
  CHECK(fs::exists(dir.path / "g" / "split.json"));
  CHECK(run("gen-data --profile huge --out " + (dir.path / "h").string() + " --seed 1") == 2);
}
#endif
