// Command-line surface: scoring, statistics, synthetic generation,
// head-output decoding, geometry self-check, and the fusion demo.
//
// Exit codes: 0 success, 1 I/O failure, 2 validation failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vql/data.hpp"
#include "vql/fusion.hpp"
#include "vql/geometry.hpp"
#include "vql/metrics.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path);
  out << content;
  out.flush();
  if (!out) throw std::ios_base::failure("write failed: " + path);
}

bool parse_workspace(const std::string &s, vql::Workspace &ws) {
  double v[6];
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2],
                  &v[3], &v[4], &v[5]) != 6)
    return false;
  ws.lo = {v[0], v[1], v[2]};
  ws.hi = {v[3], v[4], v[5]};
  return ws.valid();
}

bool parse_grid(const std::string &s, int &nx, int &ny, int &nz) {
  return std::sscanf(s.c_str(), "%d,%d,%d", &nx, &ny, &nz) == 3 && nx > 0 &&
         ny > 0 && nz > 0;
}

vql::TrackSet gt_tracks(const std::vector<vql::SequenceAnnotation> &anns) {
  vql::TrackSet gts;
  for (const auto &a : anns) gts[a.sequence_id] = a.to_gt_track();
  return gts;
}

int cmd_score(const std::string &gt_path, const std::string &pred_path,
              const std::string &out_path, int workers,
              const std::vector<double> &tth, const std::vector<double> &stth) {
  std::string gt_text, pred_text;
  try {
    gt_text = read_file(gt_path);
    pred_text = read_file(pred_path);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  try {
    const auto anns = vql::parse_annotations(gt_text);
    const auto preds = vql::parse_predictions(pred_text);
    const auto report = vql::score(preds, gt_tracks(anns), workers, tth, stth);
    const std::string doc = vql::serialize_report(report);
    if (out_path.empty())
      std::cout << doc;
    else
      write_file(out_path, doc);
  } catch (const std::ios_base::failure &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_gen(std::uint64_t seed, const vql::GeneratorConfig &cfg,
            const std::string &out_dir) {
  vql::SyntheticData data;
  try {
    data = vql::generate_synthetic(seed, cfg);
  } catch (const std::exception &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    fs::create_directories(out_dir);
    write_file(out_dir + "/annotations.json",
               vql::serialize_annotations(data.annotations));
    write_file(out_dir + "/oracle_predictions.json",
               vql::serialize_predictions(data.oracle_predictions));
    write_file(out_dir + "/degraded_predictions.json",
               vql::serialize_predictions(data.degraded_predictions));
    if (cfg.emit_head_tensors)
      write_file(out_dir + "/head_outputs.json",
                 vql::serialize_head_tensors(data.head_tensors));
    // config echo so outputs are self-describing
    json echo = {{"seed", seed},
                 {"num_sequences", cfg.num_sequences},
                 {"min_frames", cfg.min_frames},
                 {"max_frames", cfg.max_frames},
                 {"min_segments", cfg.min_segments},
                 {"max_segments", cfg.max_segments},
                 {"noise",
                  {{"center_jitter", cfg.noise.center_jitter},
                   {"size_jitter", cfg.noise.size_jitter},
                   {"angle_jitter", cfg.noise.angle_jitter},
                   {"temporal_shift", cfg.noise.temporal_shift}}},
                 {"head_tensors", cfg.emit_head_tensors}};
    write_file(out_dir + "/gen_config.json", echo.dump(2) + "\n");
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

int cmd_stats(const std::string &gt_path, const std::string &out_path) {
  std::string text;
  try {
    text = read_file(gt_path);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  try {
    const auto anns = vql::parse_annotations(text);
    const auto stats = vql::compute_stats(anns);
    const std::string doc = vql::serialize_stats(stats);
    if (out_path.empty())
      std::cout << doc;
    else
      write_file(out_path, doc);
  } catch (const std::ios_base::failure &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_decode(const std::string &tensor_path, const std::string &out_path,
               double presence_threshold) {
  std::string text;
  try {
    text = read_file(tensor_path);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  try {
    const auto docs = vql::parse_head_tensors(text);
    const auto preds = vql::decode_head_tensors(docs, presence_threshold);
    const std::string doc = vql::serialize_predictions(preds);
    if (out_path.empty())
      std::cout << doc;
    else
      write_file(out_path, doc);
  } catch (const std::ios_base::failure &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

vql::Box9 random_box(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> c(-2.0, 2.0), s(0.3, 2.0),
      a(-M_PI, M_PI);
  return vql::Box9({c(rng), c(rng), c(rng)}, {s(rng), s(rng), s(rng)},
                   {a(rng), a(rng), a(rng)});
}

int cmd_selfcheck(std::uint64_t seed, int pairs, std::uint64_t samples,
                  int workers) {
  if (pairs < 1 || samples < 1) {
    std::cerr << "validation error: pairs and samples must be positive\n";
    return kExitValidation;
  }
  std::mt19937_64 rng(seed);
  double max_dev = 0.0;
  int with_overlap = 0;
  for (int i = 0; i < pairs; ++i) {
    vql::Box9 a = random_box(rng);
    vql::Box9 b = random_box(rng);
    // nudge b toward a so most pairs overlap
    b.center = a.center + (b.center - a.center) * 0.3;
    const double exact = vql::iou3d(a, b);
    if (exact <= 0.0) continue;
    ++with_overlap;
    const double mc =
        vql::mc_iou_oracle(a, b, samples, seed ^ (0x9e37ULL * i), workers);
    max_dev = std::max(max_dev, std::abs(exact - mc));
  }
  std::cout << "pairs=" << pairs << " overlapping=" << with_overlap
            << " max_deviation=" << max_dev << "\n";
  return max_dev <= 0.01 ? kExitOk : kExitValidation;
}

int cmd_fuse_demo(std::uint64_t seed, const std::string &variant, int scale,
                  const std::string &out_path) {
  if (variant != "add" && variant != "daf" && variant != "gaf" &&
      variant != "paf") {
    std::cerr << "validation error: unknown variant " << variant << "\n";
    return kExitValidation;
  }
  const int D = scale, H = scale, W = scale, C = 16;
  vql::Workspace ws;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  vql::FeatureVolume3D vol = vql::FeatureVolume3D::zeros(D, H, W, C, ws);
  for (auto &x : vol.values) x = u(rng);
  vql::FeatureMap2D map2d = vql::FeatureMap2D::zeros(8, 8, C);
  for (auto &x : map2d.values) x = u(rng);

  // camera behind the workspace x-min face, looking along +x
  vql::PinholeCamera cam;
  cam.fx = cam.fy = 8.0;
  cam.cx = cam.cy = 4.0;
  cam.width = cam.height = 8;
  cam.rot.m = {0, 1, 0, 0, 0, 1, 1, 0, 0};  // camera z = world x
  cam.trans = {0, 0, 2.0};                  // 2 m standoff

  vql::AttentionParams params = vql::make_random_params(seed ^ 0xabcdULL, C, 4,
                                                        /*residual=*/true);
  params.keep_weights = true;

  vql::FusionAudit audit;
  vql::FeatureVolume3D fused;
  if (variant == "add") {
    vql::FeatureVolume3D aligned =
        vql::FeatureVolume3D::zeros(D, H, W, C, ws);
    for (auto &x : aligned.values) x = u(rng);
    fused = vql::add_fuse(vol, aligned);
  } else if (variant == "daf") {
    const auto lifted = vql::lift(map2d, cam, 8, 1.0, 12.0);
    fused = vql::daf_fuse(vol, lifted, cam, params, &audit);
  } else if (variant == "gaf") {
    const auto enc = vql::sinusoidal_depth_encoding(D, C);
    fused = vql::gaf_fuse(vol, map2d, enc, params, &audit);
  } else {
    fused = vql::paf_fuse(vol, map2d, cam, params, &audit);
  }

  // digest: per-slice checksums plus weight-row-sum extrema
  json slices = json::array();
  for (int d = 0; d < D; ++d) {
    double sum = 0;
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int c = 0; c < C; ++c) sum += fused.voxel(d, h, w)[c];
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12e", sum);
    slices.push_back(buf);
  }
  json doc = {{"version", vql::kSchemaVersion},
              {"variant", variant},
              {"seed", seed},
              {"scale", scale},
              {"slice_checksums", slices},
              {"weight_row_sum_min", audit.min_row_sum},
              {"weight_row_sum_max", audit.max_row_sum}};
  const std::string text = doc.dump(2) + "\n";
  try {
    if (out_path.empty())
      std::cout << text;
    else
      write_file(out_path, text);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"3D visual query localization benchmark toolkit"};
  app.require_subcommand(1);

  std::string gt_path, pred_path, out_path, tensor_path, out_dir;
  std::string grid_str = "16,16,16", ws_str, variant = "add";
  std::uint64_t seed = 0;
  int workers = 1, pairs = 200, scale = 8;
  std::uint64_t samples = 2000000;
  double presence_threshold = 0.5;
  std::vector<double> tth = vql::kTemporalThresholds;
  std::vector<double> stth = vql::kSpatioTemporalThresholds;
  vql::GeneratorConfig gen_cfg;

  auto *sc_score = app.add_subcommand("score", "score predictions against GT");
  sc_score->add_option("--gt", gt_path, "annotations document")->required();
  sc_score->add_option("--pred", pred_path, "predictions document")
      ->required();
  sc_score->add_option("--out", out_path, "report path (stdout if omitted)");
  sc_score->add_option("--workers", workers, "worker count");
  sc_score->add_option("--thresholds-t", tth, "tIoU thresholds");
  sc_score->add_option("--thresholds-st", stth, "stIoU thresholds");

  auto *sc_gen = app.add_subcommand("gen", "generate synthetic data");
  sc_gen->add_option("--seed", seed, "master seed");
  sc_gen->add_option("--out", out_dir, "output directory")->required();
  sc_gen->add_option("--sequences", gen_cfg.num_sequences, "sequence count");
  sc_gen->add_option("--min-frames", gen_cfg.min_frames, "min frames");
  sc_gen->add_option("--max-frames", gen_cfg.max_frames, "max frames");
  sc_gen->add_option("--min-segments", gen_cfg.min_segments, "min segments");
  sc_gen->add_option("--max-segments", gen_cfg.max_segments, "max segments");
  sc_gen->add_option("--noise-center", gen_cfg.noise.center_jitter,
                     "center jitter, meters");
  sc_gen->add_option("--noise-size", gen_cfg.noise.size_jitter,
                     "relative size jitter");
  sc_gen->add_option("--noise-angle", gen_cfg.noise.angle_jitter,
                     "angle jitter, radians");
  sc_gen->add_option("--noise-shift", gen_cfg.noise.temporal_shift,
                     "temporal shift, frames");
  sc_gen->add_flag("--head-tensors", gen_cfg.emit_head_tensors,
                   "also emit encoded head outputs");
  std::string gen_grid = "16,16,16", gen_ws;
  sc_gen->add_option("--grid", gen_grid, "nx,ny,nz");
  sc_gen->add_option("--workspace", gen_ws, "x0,y0,z0,x1,y1,z1");

  auto *sc_stats = app.add_subcommand("stats", "dataset statistics");
  sc_stats->add_option("--gt", gt_path, "annotations document")->required();
  sc_stats->add_option("--out", out_path, "stats path (stdout if omitted)");

  auto *sc_decode = app.add_subcommand("decode", "decode raw head outputs");
  sc_decode->add_option("--tensors", tensor_path, "head output document")
      ->required();
  sc_decode->add_option("--out", out_path, "predictions path");
  sc_decode->add_option("--presence-threshold", presence_threshold,
                        "presence probability cutoff");

  auto *sc_check = app.add_subcommand("selfcheck", "geometry oracle audit");
  sc_check->add_option("--seed", seed, "seed");
  sc_check->add_option("--pairs", pairs, "random box pairs");
  sc_check->add_option("--samples", samples, "Monte Carlo samples per pair");
  sc_check->add_option("--workers", workers, "worker count");

  auto *sc_fuse = app.add_subcommand("fuse-demo", "fusion operator demo");
  sc_fuse->add_option("--seed", seed, "seed");
  sc_fuse->add_option("--variant", variant, "add | daf | gaf | paf");
  sc_fuse->add_option("--scale", scale, "volume side length");
  sc_fuse->add_option("--out", out_path, "digest path (stdout if omitted)");
  sc_fuse->add_option("--workers", workers, "worker count");

  CLI11_PARSE(app, argc, argv);

  if (workers < 1) {
    std::cerr << "validation error: workers must be >= 1\n";
    return kExitValidation;
  }
  for (double t : tth)
    if (t <= 0.0 || t > 1.0) {
      std::cerr << "validation error: thresholds must lie in (0,1]\n";
      return kExitValidation;
    }
  for (double t : stth)
    if (t <= 0.0 || t > 1.0) {
      std::cerr << "validation error: thresholds must lie in (0,1]\n";
      return kExitValidation;
    }

  if (sc_score->parsed())
    return cmd_score(gt_path, pred_path, out_path, workers, tth, stth);
  if (sc_gen->parsed()) {
    if (!parse_grid(gen_grid, gen_cfg.grid_nx, gen_cfg.grid_ny,
                    gen_cfg.grid_nz)) {
      std::cerr << "validation error: bad --grid\n";
      return kExitValidation;
    }
    if (!gen_ws.empty() && !parse_workspace(gen_ws, gen_cfg.workspace)) {
      std::cerr << "validation error: bad --workspace\n";
      return kExitValidation;
    }
    return cmd_gen(seed, gen_cfg, out_dir);
  }
  if (sc_stats->parsed()) return cmd_stats(gt_path, out_path);
  if (sc_decode->parsed())
    return cmd_decode(tensor_path, out_path, presence_threshold);
  if (sc_check->parsed())
    return cmd_selfcheck(seed, pairs, samples, workers);
  if (sc_fuse->parsed())
    return cmd_fuse_demo(seed, variant, scale, out_path);
  return kExitOk;
}
