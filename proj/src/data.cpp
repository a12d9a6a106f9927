#include "vql/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace vql {

std::uint64_t splitmix64_next(std::uint64_t &state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ResponseTrack SequenceAnnotation::to_gt_track() const {
  ResponseTrack t;
  t.query_id = sequence_id;
  const Segment &seg = segments.back();
  t.interval = seg.interval;
  t.confidence = 1.0;
  for (int f = seg.interval.start_frame; f <= seg.interval.end_frame; ++f)
    t.boxes[f] = seg.boxes[f - seg.interval.start_frame];
  return t;
}

std::vector<double> box_to_array(const Box9 &b) {
  return {b.center.x,   b.center.y,   b.center.z,  b.size.x,  b.size.y,
          b.size.z,     b.rotation.x, b.rotation.y, b.rotation.z};
}

Box9 box_from_array(const std::vector<double> &a) {
  if (a.size() != 9) throw std::runtime_error("box array must have 9 entries");
  return Box9({a[0], a[1], a[2]}, {a[3], a[4], a[5]}, {a[6], a[7], a[8]});
}

namespace {

json segment_to_json(const Segment &s) {
  json boxes = json::array();
  for (const auto &b : s.boxes) boxes.push_back(box_to_array(b));
  return {{"start", s.interval.start_frame},
          {"end", s.interval.end_frame},
          {"boxes", boxes}};
}

Segment segment_from_json(const json &j) {
  Segment s;
  s.interval.start_frame = j.at("start").get<int>();
  s.interval.end_frame = j.at("end").get<int>();
  for (const auto &b : j.at("boxes"))
    s.boxes.push_back(box_from_array(b.get<std::vector<double>>()));
  return s;
}

void validate_annotation(const SequenceAnnotation &a,
                         std::vector<std::string> &errors) {
  auto err = [&](const std::string &msg) {
    errors.push_back("sequence " + a.sequence_id + ": " + msg);
  };
  if (a.frame_count < 1) err("frame_count must be positive");
  if (a.segments.empty()) err("no response segments");
  int prev_end = -1;
  for (const auto &s : a.segments) {
    if (!s.interval.valid()) err("invalid segment interval");
    if (s.interval.start_frame <= prev_end)
      err("segments overlap or are unsorted");
    prev_end = s.interval.end_frame;
    if (static_cast<int>(s.boxes.size()) != s.interval.length())
      err("segment box count does not match interval length");
    for (const auto &b : s.boxes)
      if (!b.valid()) err("invalid box in segment");
    if (s.interval.end_frame >= a.frame_count)
      err("segment extends past frame_count");
  }
  if (!a.segments.empty() &&
      a.most_recent_frame != a.segments.back().interval.end_frame)
    err("most_recent_frame does not equal the last segment end");
}

}  // namespace

std::string serialize_annotations(const std::vector<SequenceAnnotation> &anns) {
  json seqs = json::array();
  for (const auto &a : anns) {
    json segs = json::array();
    for (const auto &s : a.segments) segs.push_back(segment_to_json(s));
    seqs.push_back({{"sequence_id", a.sequence_id},
                    {"fps", a.fps},
                    {"frames", a.frame_count},
                    {"query",
                     {{"box9", box_to_array(a.query_box)},
                      {"source", a.query_source}}},
                    {"segments", segs},
                    {"most_recent_frame", a.most_recent_frame}});
  }
  json doc = {{"version", kSchemaVersion}, {"sequences", seqs}};
  return doc.dump(2) + "\n";
}

std::vector<SequenceAnnotation> parse_annotations(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("annotation document: ") + e.what());
  }
  std::vector<SequenceAnnotation> out;
  std::vector<std::string> errors;
  try {
    for (const auto &j : doc.at("sequences")) {
      SequenceAnnotation a;
      a.sequence_id = j.at("sequence_id").get<std::string>();
      a.fps = j.value("fps", 20.0);
      a.frame_count = j.at("frames").get<int>();
      a.query_box =
          box_from_array(j.at("query").at("box9").get<std::vector<double>>());
      a.query_source = j.at("query").value("source", "");
      for (const auto &s : j.at("segments"))
        a.segments.push_back(segment_from_json(s));
      a.most_recent_frame = j.at("most_recent_frame").get<int>();
      validate_annotation(a, errors);
      out.push_back(std::move(a));
    }
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("annotation document: ") + e.what());
  }
  if (!errors.empty()) {
    std::string msg = "annotation validation failed:";
    for (const auto &e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  return out;
}

std::string serialize_predictions(const TrackSet &preds) {
  json arr = json::array();
  for (const auto &[qid, t] : preds) {
    json boxes = json::array();
    for (int f = t.interval.start_frame; f <= t.interval.end_frame; ++f) {
      const Box9 *b = t.box_at(f);
      if (!b) throw std::runtime_error("prediction missing box at frame");
      boxes.push_back(box_to_array(*b));
    }
    arr.push_back({{"query_id", qid},
                   {"confidence", t.confidence},
                   {"start", t.interval.start_frame},
                   {"end", t.interval.end_frame},
                   {"boxes", boxes}});
  }
  json doc = {{"version", kSchemaVersion}, {"predictions", arr}};
  return doc.dump(2) + "\n";
}

TrackSet parse_predictions(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("prediction document: ") + e.what());
  }
  TrackSet out;
  std::vector<std::string> errors;
  try {
    for (const auto &j : doc.at("predictions")) {
      ResponseTrack t;
      t.query_id = j.at("query_id").get<std::string>();
      t.confidence = j.at("confidence").get<double>();
      t.interval.start_frame = j.at("start").get<int>();
      t.interval.end_frame = j.at("end").get<int>();
      if (!t.interval.valid()) {
        errors.push_back("query " + t.query_id + ": invalid interval");
        continue;
      }
      const auto &boxes = j.at("boxes");
      if (static_cast<int>(boxes.size()) != t.interval.length()) {
        errors.push_back("query " + t.query_id +
                         ": box count does not match interval length");
        continue;
      }
      int f = t.interval.start_frame;
      for (const auto &b : boxes)
        t.boxes[f++] = box_from_array(b.get<std::vector<double>>());
      if (!std::isfinite(t.confidence))
        errors.push_back("query " + t.query_id + ": non-finite confidence");
      if (out.count(t.query_id))
        errors.push_back("query " + t.query_id +
                         ": duplicate prediction (Top-1 protocol)");
      else
        out[t.query_id] = std::move(t);
    }
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("prediction document: ") + e.what());
  }
  if (!errors.empty()) {
    std::string msg = "prediction validation failed:";
    for (const auto &e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  return out;
}

int sep_distance(const SequenceAnnotation &a) {
  return (a.frame_count - 1) - a.most_recent_frame;
}

namespace {

Histogram make_hist(const std::string &name, double lo, double hi, int bins) {
  Histogram h;
  h.name = name;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.counts.assign(bins, 0);
  return h;
}

void hist_add(Histogram &h, double x) {
  const int bins = static_cast<int>(h.counts.size());
  const double lo = h.edges.front(), hi = h.edges.back();
  int b = static_cast<int>((x - lo) / (hi - lo) * bins);
  b = std::clamp(b, 0, bins - 1);  // out-of-range mass clamps to end bins
  ++h.counts[b];
}

}  // namespace

SplitStats compute_stats(const std::vector<SequenceAnnotation> &anns) {
  if (anns.empty()) throw std::runtime_error("no annotations to summarize");
  SplitStats s;
  Histogram h_sep = make_hist("d_sep_frames", 0, 400, 16);
  Histogram h_start = make_hist("segment_start_frame", 0, 400, 16);
  Histogram h_end = make_hist("segment_end_frame", 0, 400, 16);
  Histogram h_l = make_hist("box_length_m", 0, 3, 15);
  Histogram h_w = make_hist("box_width_m", 0, 3, 15);
  Histogram h_h = make_hist("box_height_m", 0, 3, 15);
  // angles reported in degrees at this boundary
  Histogram h_yaw = make_hist("yaw_deg", -180, 180, 24);
  Histogram h_pitch = make_hist("pitch_deg", -180, 180, 24);
  Histogram h_roll = make_hist("roll_deg", -180, 180, 24);
  Histogram h_cx = make_hist("center_x_m", 0, 10, 20);
  Histogram h_cy = make_hist("center_y_m", -2, 2, 16);
  Histogram h_cz = make_hist("center_z_m", -1, 1, 8);

  constexpr double kRad2Deg = 180.0 / M_PI;
  for (const auto &a : anns) {
    ++s.num_sequences;
    hist_add(h_sep, sep_distance(a));
    for (const auto &seg : a.segments) {
      hist_add(h_start, seg.interval.start_frame);
      hist_add(h_end, seg.interval.end_frame);
      for (const auto &b : seg.boxes) {
        ++s.num_boxes;
        hist_add(h_l, b.size.x);
        hist_add(h_w, b.size.y);
        hist_add(h_h, b.size.z);
        hist_add(h_yaw, b.rotation.x * kRad2Deg);
        hist_add(h_pitch, b.rotation.y * kRad2Deg);
        hist_add(h_roll, b.rotation.z * kRad2Deg);
        hist_add(h_cx, b.center.x);
        hist_add(h_cy, b.center.y);
        hist_add(h_cz, b.center.z);
      }
    }
  }
  s.histograms = {h_sep, h_start, h_end, h_l,  h_w,  h_h,
                  h_yaw, h_pitch, h_roll, h_cx, h_cy, h_cz};
  return s;
}

std::string serialize_stats(const SplitStats &s) {
  json hists = json::array();
  for (const auto &h : s.histograms)
    hists.push_back(
        {{"name", h.name}, {"edges", h.edges}, {"counts", h.counts}});
  json doc = {{"version", kSchemaVersion},
              {"num_sequences", s.num_sequences},
              {"num_boxes", s.num_boxes},
              {"histograms", hists}};
  return doc.dump(2) + "\n";
}

std::string serialize_head_tensors(const std::vector<HeadTensorDoc> &docs) {
  json arr = json::array();
  for (const auto &d : docs) {
    json frames = json::array();
    for (const auto &f : d.frames) {
      json entries = json::array();
      for (const auto &e : f.entries)
        entries.push_back(
            {{"anchor", e.anchor},
             {"logit", e.logit},
             {"offset", {e.offset.x, e.offset.y, e.offset.z}},
             {"size", {e.size.x, e.size.y, e.size.z}},
             {"rotation", {e.rotation.x, e.rotation.y, e.rotation.z}}});
      frames.push_back({{"frame", f.frame}, {"entries", entries}});
    }
    arr.push_back({{"query_id", d.query_id},
                   {"workspace",
                    {d.workspace.lo.x, d.workspace.lo.y, d.workspace.lo.z,
                     d.workspace.hi.x, d.workspace.hi.y, d.workspace.hi.z}},
                   {"grid", {d.nx, d.ny, d.nz}},
                   {"default_logit", d.default_logit},
                   {"frames", frames}});
  }
  json doc = {{"version", kSchemaVersion}, {"head_outputs", arr}};
  return doc.dump(2) + "\n";
}

std::vector<HeadTensorDoc> parse_head_tensors(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("head tensor document: ") + e.what());
  }
  std::vector<HeadTensorDoc> out;
  try {
    for (const auto &j : doc.at("head_outputs")) {
      HeadTensorDoc d;
      d.query_id = j.at("query_id").get<std::string>();
      const auto ws = j.at("workspace").get<std::vector<double>>();
      d.workspace.lo = {ws[0], ws[1], ws[2]};
      d.workspace.hi = {ws[3], ws[4], ws[5]};
      const auto g = j.at("grid").get<std::vector<int>>();
      d.nx = g[0];
      d.ny = g[1];
      d.nz = g[2];
      d.default_logit = j.at("default_logit").get<double>();
      for (const auto &jf : j.at("frames")) {
        HeadTensorFrame f;
        f.frame = jf.at("frame").get<int>();
        for (const auto &je : jf.at("entries")) {
          HeadTensorFrame::Entry e;
          e.anchor = je.at("anchor").get<int>();
          e.logit = je.at("logit").get<double>();
          const auto o = je.at("offset").get<std::vector<double>>();
          const auto sz = je.at("size").get<std::vector<double>>();
          const auto r = je.at("rotation").get<std::vector<double>>();
          e.offset = {o[0], o[1], o[2]};
          e.size = {sz[0], sz[1], sz[2]};
          e.rotation = {r[0], r[1], r[2]};
          f.entries.push_back(e);
        }
        d.frames.push_back(std::move(f));
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception &e) {
    throw std::runtime_error(std::string("head tensor document: ") + e.what());
  }
  return out;
}

std::string serialize_report(const MetricReport &r) {
  auto suite = [](const ThresholdSuite &s) {
    json per = json::object();
    for (size_t i = 0; i < s.thresholds.size(); ++i) {
      std::ostringstream key;
      key << s.thresholds[i];
      per[key.str()] = s.ap[i];
    }
    return json{{"mean", s.mean},
                {"thresholds", s.thresholds},
                {"per_threshold", per}};
  };
  json doc = {{"version", kSchemaVersion},
              {"num_queries", r.num_queries},
              {"num_predictions", r.num_predictions},
              {"tAP", suite(r.tap)},
              {"stAP", suite(r.stap)},
              {"success_pct", r.success_pct},
              {"recovery_pct", r.recovery_pct},
              {"recovery_macro_pct", r.recovery_macro_pct},
              {"per_query_stiou", r.per_query_stiou}};
  return doc.dump(2) + "\n";
}

TrackSet decode_head_tensors(const std::vector<HeadTensorDoc> &docs,
                             double presence_threshold) {
  TrackSet out;
  for (const auto &d : docs) {
    const AnchorGrid grid = build_grid(d.workspace, d.nx, d.ny, d.nz);
    struct FrameBox {
      int frame;
      Box9 box;
      double score;
    };
    std::vector<FrameBox> decoded;
    for (const auto &f : d.frames) {
      FrameOutput fo;
      fo.anchors.assign(grid.count(), AnchorPrediction{});
      for (auto &a : fo.anchors) a.logit = d.default_logit;
      for (const auto &e : f.entries) {
        if (e.anchor < 0 || e.anchor >= grid.count())
          throw std::runtime_error("head tensor anchor index out of range");
        fo.anchors[e.anchor] = {e.offset, e.size, e.rotation, e.logit};
      }
      const DecodedBox db = decode(grid, fo);
      if (db.score > presence_threshold)
        decoded.push_back({f.frame, db.box, db.score});
    }
    if (decoded.empty()) continue;
    std::sort(decoded.begin(), decoded.end(),
              [](const FrameBox &a, const FrameBox &b) {
                return a.frame < b.frame;
              });
    // longest contiguous run; ties resolved toward the latest run
    size_t best_lo = 0, best_len = 1, lo = 0;
    for (size_t i = 1; i <= decoded.size(); ++i) {
      if (i == decoded.size() || decoded[i].frame != decoded[i - 1].frame + 1) {
        if (i - lo >= best_len) {
          best_len = i - lo;
          best_lo = lo;
        }
        lo = i;
      }
    }
    ResponseTrack t;
    t.query_id = d.query_id;
    t.interval = {decoded[best_lo].frame,
                  decoded[best_lo + best_len - 1].frame};
    double conf = 0;
    for (size_t i = best_lo; i < best_lo + best_len; ++i) {
      t.boxes[decoded[i].frame] = decoded[i].box;
      conf += decoded[i].score;
    }
    t.confidence = conf / static_cast<double>(best_len);
    out[t.query_id] = std::move(t);
  }
  return out;
}

namespace {

struct SeqRng {
  std::mt19937_64 rng;
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  Vec3 unit_vec() {
    Vec3 v(normal(), normal(), normal());
    const double n = v.norm();
    return n > 0 ? v * (1.0 / n) : Vec3(1, 0, 0);
  }
};

}  // namespace

SyntheticData generate_synthetic(std::uint64_t seed,
                                 const GeneratorConfig &cfg) {
  if (cfg.num_sequences < 1 || cfg.min_frames > cfg.max_frames ||
      cfg.min_segments < 1 || cfg.min_segments > cfg.max_segments ||
      cfg.min_frames < 2 * cfg.max_segments)
    throw std::runtime_error("infeasible generator config");
  if (!cfg.workspace.valid())
    throw std::runtime_error("degenerate workspace in generator config");

  SyntheticData out;
  const AnchorGrid grid =
      build_grid(cfg.workspace, cfg.grid_nx, cfg.grid_ny, cfg.grid_nz);
  const Workspace &ws = cfg.workspace;
  const Vec3 extent = ws.hi - ws.lo;

  for (int q = 0; q < cfg.num_sequences; ++q) {
    std::uint64_t st = seed;
    for (int k = 0; k <= q; ++k) splitmix64_next(st);
    SeqRng r{std::mt19937_64(st)};

    SequenceAnnotation ann;
    {
      std::ostringstream id;
      id << "seq_";
      id.width(3);
      id.fill('0');
      id << q;
      ann.sequence_id = id.str();
    }
    ann.query_source = "template_" + ann.sequence_id;
    ann.frame_count = r.uniform_int(cfg.min_frames, cfg.max_frames);
    const int nseg = r.uniform_int(cfg.min_segments, cfg.max_segments);

    // segment layout: one segment per equal block of the timeline
    const int block = ann.frame_count / nseg;
    std::vector<TemporalInterval> ivals;
    for (int s = 0; s < nseg; ++s) {
      const int b0 = s * block;
      const int b1 = (s == nseg - 1) ? ann.frame_count - 1 : (s + 1) * block - 2;
      const int len = std::max(1, std::min(b1 - b0, r.uniform_int(3, 15)));
      const int start = r.uniform_int(b0, std::max(b0, b1 - len));
      ivals.push_back({start, std::min(start + len, b1)});
    }

    // smooth sinusoidal trajectory, margins keep centers inside the workspace
    const Vec3 sizev(r.uniform(0.2, 1.0), r.uniform(0.2, 0.8),
                     r.uniform(0.2, 0.8));
    Vec3 base, amp, freq, phase;
    auto traj_axis = [&](double lo, double hi, double &b, double &a) {
      const double margin = 0.1 * (hi - lo);
      b = r.uniform(lo + 2 * margin, hi - 2 * margin);
      a = std::min({b - lo - margin, hi - b - margin, 0.25 * (hi - lo)});
    };
    traj_axis(ws.lo.x, ws.hi.x, base.x, amp.x);
    traj_axis(ws.lo.y, ws.hi.y, base.y, amp.y);
    traj_axis(ws.lo.z, ws.hi.z, base.z, amp.z);
    freq = {r.uniform(0.01, 0.05), r.uniform(0.01, 0.05),
            r.uniform(0.01, 0.05)};
    phase = {r.uniform(0, 2 * M_PI), r.uniform(0, 2 * M_PI),
             r.uniform(0, 2 * M_PI)};
    const double yaw0 = r.uniform(-M_PI, M_PI);
    const double yaw_rate = r.uniform(-0.02, 0.02);
    const double pitch_amp = r.uniform(0, 0.15);
    const double roll_amp = r.uniform(0, 0.15);

    auto gt_box = [&](int t) {
      const Vec3 c(base.x + amp.x * std::sin(freq.x * t + phase.x),
                   base.y + amp.y * std::sin(freq.y * t + phase.y),
                   base.z + amp.z * std::sin(freq.z * t + phase.z));
      const Vec3 rot(wrap_angle(yaw0 + yaw_rate * t),
                     pitch_amp * std::sin(0.05 * t),
                     roll_amp * std::cos(0.04 * t));
      return Box9(c, sizev, rot);
    };

    for (const auto &iv : ivals) {
      Segment seg;
      seg.interval = iv;
      for (int t = iv.start_frame; t <= iv.end_frame; ++t)
        seg.boxes.push_back(gt_box(t));
      ann.segments.push_back(std::move(seg));
    }
    ann.most_recent_frame = ann.segments.back().interval.end_frame;
    ann.query_box = gt_box(ann.segments.front().interval.start_frame);

    // oracle prediction: the most recent segment, exactly
    ResponseTrack oracle = ann.to_gt_track();
    out.oracle_predictions[oracle.query_id] = oracle;

    // degraded prediction: unit-scale noise draws scaled by the knobs,
    // so the same seed sweeps each knob along fixed directions
    const Segment &last = ann.segments.back();
    const NoiseConfig &nz = cfg.noise;
    ResponseTrack deg;
    deg.query_id = ann.sequence_id;
    const int shift = nz.temporal_shift;
    int p0 = std::clamp(last.interval.start_frame + shift, 0,
                        ann.frame_count - 1);
    int p1 = std::clamp(last.interval.end_frame + shift, 0,
                        ann.frame_count - 1);
    if (p0 > p1) p0 = p1;
    deg.interval = {p0, p1};
    std::map<int, Vec3> jitter_dir;
    std::map<int, Vec3> size_dir, angle_dir;
    for (int t = last.interval.start_frame; t <= last.interval.end_frame;
         ++t) {
      jitter_dir[t] = r.unit_vec();
      size_dir[t] = r.unit_vec();
      angle_dir[t] = r.unit_vec();
    }
    auto nearest_gt_frame = [&](int t) {
      return std::clamp(t, last.interval.start_frame,
                        last.interval.end_frame);
    };
    for (int t = p0; t <= p1; ++t) {
      const int g = nearest_gt_frame(t);
      const Box9 &gb = last.boxes[g - last.interval.start_frame];
      const Vec3 c = gb.center + jitter_dir[g] * nz.center_jitter;
      Vec3 s = gb.size + size_dir[g] * (nz.size_jitter * gb.size.norm());
      s = {std::max(s.x, 0.05), std::max(s.y, 0.05), std::max(s.z, 0.05)};
      const Vec3 rot = gb.rotation + angle_dir[g] * nz.angle_jitter;
      deg.boxes[t] = Box9(c, s, rot);
    }
    deg.confidence =
        1.0 / (1.0 + nz.center_jitter + nz.size_jitter + nz.angle_jitter +
               0.05 * std::abs(shift));
    out.degraded_predictions[deg.query_id] = deg;

    if (cfg.emit_head_tensors) {
      HeadTensorDoc ht;
      ht.query_id = ann.sequence_id;
      ht.workspace = ws;
      ht.nx = cfg.grid_nx;
      ht.ny = cfg.grid_ny;
      ht.nz = cfg.grid_nz;
      ht.default_logit = -1000.0;
      for (int t = last.interval.start_frame; t <= last.interval.end_frame;
           ++t) {
        const Box9 &gb = last.boxes[t - last.interval.start_frame];
        int best = 0;
        double bd = 1e300;
        for (int n = 0; n < grid.count(); ++n) {
          const double d = (grid.centers[n] - gb.center).norm();
          if (d < bd) {
            bd = d;
            best = n;
          }
        }
        const RegressionTarget tgt = encode(grid, gb, best);
        HeadTensorFrame f;
        f.frame = t;
        f.entries.push_back({best, 1000.0, tgt.center_offset, tgt.size,
                             tgt.rotation});
        ht.frames.push_back(std::move(f));
      }
      out.head_tensors.push_back(std::move(ht));
    }

    out.annotations.push_back(std::move(ann));
  }
  return out;
}

}  // namespace vql
