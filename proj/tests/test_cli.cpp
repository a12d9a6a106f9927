#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vql/data.hpp"

using namespace vql;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char *p = std::getenv("VQL_CLI");
  REQUIRE_MESSAGE(p != nullptr, "VQL_CLI must point at the built binary");
  return p;
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "vql_cli_test";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string &args, const fs::path &stdout_file = {}) {
  std::string cmd = cli_path() + " " + args;
  if (!stdout_file.empty()) cmd += " > " + stdout_file.string();
  cmd += " 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Fixture {
  fs::path dir = work_dir();
  fs::path gt = dir / "annotations.json";
  fs::path pred = dir / "predictions.json";
  SyntheticData data;

  explicit Fixture(std::uint64_t seed, double jitter = 0.05) {
    GeneratorConfig cfg;
    cfg.num_sequences = 6;
    cfg.noise.center_jitter = jitter;
    cfg.emit_head_tensors = true;
    data = generate_synthetic(seed, cfg);
    spit(gt, serialize_annotations(data.annotations));
    spit(pred, serialize_predictions(data.degraded_predictions));
  }
};

}  // namespace

TEST_CASE("score exit codes") {
  Fixture fx(301);
  const fs::path report = fx.dir / "report.json";

  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --out " + report.string()) == 0);
  const std::string doc = slurp(report);
  CHECK(doc.find("\"tAP\"") != std::string::npos);
  CHECK(doc.find("\"success_pct\"") != std::string::npos);

  // missing input file: I/O failure
  CHECK(run("score --gt " + fx.gt.string() + " --pred /nonexistent.json") ==
        1);

  // malformed predictions: validation failure
  const fs::path bad = fx.dir / "bad.json";
  spit(bad, "{\"version\":\"1\"}");
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + bad.string()) == 2);

  // unmatched query_id: validation failure
  TrackSet ghost = fx.data.degraded_predictions;
  ResponseTrack g = ghost.begin()->second;
  g.query_id = "ghost";
  ghost["ghost"] = g;
  const fs::path ghostp = fx.dir / "ghost.json";
  spit(ghostp, serialize_predictions(ghost));
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + ghostp.string()) ==
        2);

  // thresholds outside (0,1]: validation failure
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --thresholds-t 0.0") == 2);
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --thresholds-st 1.5") == 2);
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --workers 0") == 2);
}

TEST_CASE("score output is byte-identical across worker counts") {
  Fixture fx(302, 0.2);
  const fs::path r1 = fx.dir / "r1.json";
  const fs::path r8 = fx.dir / "r8.json";
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --workers 1 --out " + r1.string()) == 0);
  CHECK(run("score --gt " + fx.gt.string() + " --pred " + fx.pred.string() +
            " --workers 8 --out " + r8.string()) == 0);
  CHECK(slurp(r1) == slurp(r8));
  // and it matches the library result exactly
  TrackSet gts;
  for (const auto &a : fx.data.annotations) gts[a.sequence_id] = a.to_gt_track();
  CHECK(slurp(r1) == serialize_report(score(fx.data.degraded_predictions, gts)));
}

TEST_CASE("gen is deterministic and self-consistent") {
  const fs::path d1 = work_dir() / "gen1";
  const fs::path d2 = work_dir() / "gen2";
  const std::string flags =
      " --seed 11 --sequences 5 --noise-center 0.1 --head-tensors";
  CHECK(run("gen --out " + d1.string() + flags) == 0);
  CHECK(run("gen --out " + d2.string() + flags) == 0);
  for (const char *f : {"annotations.json", "oracle_predictions.json",
                        "degraded_predictions.json", "head_outputs.json",
                        "gen_config.json"}) {
    CHECK(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  // generated annotations pass the parser's validation
  CHECK_NOTHROW(parse_annotations(slurp(d1 / "annotations.json")));

  // oracle predictions score perfectly through the binary
  const fs::path report = work_dir() / "oracle_report.json";
  CHECK(run("score --gt " + (d1 / "annotations.json").string() + " --pred " +
            (d1 / "oracle_predictions.json").string() + " --out " +
            report.string()) == 0);
  const std::string doc = slurp(report);
  CHECK(doc.find("\"success_pct\": 100.0") != std::string::npos);

  // infeasible config: validation failure
  CHECK(run("gen --out " + (work_dir() / "gen_bad").string() +
            " --min-frames 4 --max-frames 4 --max-segments 5") == 2);
}

TEST_CASE("decode round trip through the binary") {
  Fixture fx(303, 0.0);
  const fs::path tensors = fx.dir / "head_outputs.json";
  spit(tensors, serialize_head_tensors(fx.data.head_tensors));
  const fs::path decoded = fx.dir / "decoded.json";
  CHECK(run("decode --tensors " + tensors.string() + " --out " +
            decoded.string()) == 0);
  // decoded tracks equal the oracle predictions frame for frame
  const TrackSet back = parse_predictions(slurp(decoded));
  REQUIRE(back.size() == fx.data.oracle_predictions.size());
  for (const auto &[qid, oracle] : fx.data.oracle_predictions) {
    REQUIRE(back.count(qid) == 1);
    const auto &t = back.at(qid);
    CHECK(t.interval.start_frame == oracle.interval.start_frame);
    CHECK(t.interval.end_frame == oracle.interval.end_frame);
    for (const auto &[f, box] : oracle.boxes)
      CHECK((t.boxes.at(f).center - box.center).norm() < 1e-6);
  }

  CHECK(run("decode --tensors /nonexistent.json") == 1);
  const fs::path garbled = fx.dir / "garbled.json";
  spit(garbled, "][");
  CHECK(run("decode --tensors " + garbled.string()) == 2);
}

TEST_CASE("stats") {
  Fixture fx(304);
  const fs::path out = fx.dir / "stats.json";
  CHECK(run("stats --gt " + fx.gt.string() + " --out " + out.string()) == 0);
  const std::string doc = slurp(out);
  CHECK(doc.find("d_sep_frames") != std::string::npos);
  CHECK(doc.find("yaw_deg") != std::string::npos);
  CHECK(run("stats --gt /nonexistent.json") == 1);
}

TEST_CASE("selfcheck") {
  CHECK(run("selfcheck --pairs 10 --samples 262144 --workers 4") == 0);
  CHECK(run("selfcheck --pairs 0") == 2);
}

TEST_CASE("fuse-demo digests are stable") {
  const fs::path dir = work_dir();
  for (const std::string v : {"add", "daf", "gaf", "paf"}) {
    const fs::path a = dir / ("fuse_a_" + v + ".json");
    const fs::path b = dir / ("fuse_b_" + v + ".json");
    CHECK(run("fuse-demo --seed 7 --variant " + v + " --scale 4 --out " +
              a.string()) == 0);
    CHECK(run("fuse-demo --seed 7 --variant " + v + " --scale 4 --out " +
              b.string()) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a).find("slice_checksums") != std::string::npos);
  }
  // different seeds give different digests
  const fs::path c = dir / "fuse_c.json";
  CHECK(run("fuse-demo --seed 8 --variant gaf --scale 4 --out " +
            c.string()) == 0);
  CHECK(slurp(c) != slurp(dir / "fuse_a_gaf.json"));
  CHECK(run("fuse-demo --variant bogus") == 2);
}
