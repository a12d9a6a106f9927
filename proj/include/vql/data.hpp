#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vql/anchor.hpp"
#include "vql/geometry.hpp"
#include "vql/metrics.hpp"

// Annotation and prediction document schemas (versioned JSON), dataset
// statistics, and the deterministic synthetic sequence generator.

namespace vql {

inline constexpr const char *kSchemaVersion = "1";

struct Segment {
  TemporalInterval interval;
  std::vector<Box9> boxes;  // one per frame, in order
};

struct SequenceAnnotation {
  std::string sequence_id;
  double fps = 20.0;
  int frame_count = 0;
  Box9 query_box;            // box in the template frame
  std::string query_source;  // template reference
  std::vector<Segment> segments;  // disjoint, sorted
  int most_recent_frame = 0;

  const Segment &most_recent_segment() const { return segments.back(); }
  // GT track for scoring: the most recent response segment.
  ResponseTrack to_gt_track() const;
};

// Box <-> 9-element array, fixed order (x,y,z,l,w,h,yaw,pitch,roll).
std::vector<double> box_to_array(const Box9 &b);
Box9 box_from_array(const std::vector<double> &a);

std::string serialize_annotations(const std::vector<SequenceAnnotation> &anns);
std::vector<SequenceAnnotation> parse_annotations(const std::string &text);

std::string serialize_predictions(const TrackSet &preds);
// Throws on duplicate query_id (Top-1 protocol) or invariant violations.
TrackSet parse_predictions(const std::string &text);

// d_sep: look-back span from the query time (sequence end) to the end of
// the most recent response segment: (frame_count - 1) - most_recent_frame.
int sep_distance(const SequenceAnnotation &a);

struct Histogram {
  std::string name;
  std::vector<double> edges;   // n+1 edges
  std::vector<long long> counts;  // n bins; out-of-range clamps to end bins
};

struct SplitStats {
  std::vector<Histogram> histograms;
  long long num_sequences = 0;
  long long num_boxes = 0;
};

SplitStats compute_stats(const std::vector<SequenceAnnotation> &anns);
std::string serialize_stats(const SplitStats &s);

// Versioned report document; embeds the exact threshold sets used.
std::string serialize_report(const MetricReport &r);

struct NoiseConfig {
  double center_jitter = 0.0;   // meters, per-axis scale
  double size_jitter = 0.0;     // relative
  double angle_jitter = 0.0;    // radians
  int temporal_shift = 0;       // frames, shifts the predicted interval
};

struct GeneratorConfig {
  int num_sequences = 8;
  int min_frames = 40, max_frames = 390;
  int min_segments = 1, max_segments = 5;
  NoiseConfig noise;
  bool emit_head_tensors = false;
  Workspace workspace;
  int grid_nx = 16, grid_ny = 16, grid_nz = 16;
};

// Sparse per-frame head tensor: every anchor holds `default_logit` and a
// zero regression unless listed in `entries`.
struct HeadTensorFrame {
  int frame = 0;
  struct Entry {
    int anchor = 0;
    double logit = 0.0;
    Vec3 offset, size, rotation;
  };
  std::vector<Entry> entries;
};

struct HeadTensorDoc {
  std::string query_id;
  Workspace workspace;
  int nx = 16, ny = 16, nz = 16;
  double default_logit = -10.0;
  std::vector<HeadTensorFrame> frames;
};

std::string serialize_head_tensors(const std::vector<HeadTensorDoc> &docs);
std::vector<HeadTensorDoc> parse_head_tensors(const std::string &text);

// Track assembly from raw head outputs: per-frame argmax decode, frames
// with presence above the threshold form runs, the longest contiguous run
// becomes the track (ties -> latest run), confidence = mean presence over
// the kept frames. Queries with no frame above threshold are omitted.
TrackSet decode_head_tensors(const std::vector<HeadTensorDoc> &docs,
                             double presence_threshold = 0.5);

struct SyntheticData {
  std::vector<SequenceAnnotation> annotations;
  TrackSet oracle_predictions;    // exact GT on the most recent segment
  TrackSet degraded_predictions;  // configured noise applied
  std::vector<HeadTensorDoc> head_tensors;  // when requested
};

// Deterministic per (seed, config); per-sequence streams derived by a
// splitmix of the master seed. Noise draws are unit-scale and multiplied
// by the knob, so a knob sweep at fixed seed perturbs each box along a
// fixed direction with growing magnitude.
SyntheticData generate_synthetic(std::uint64_t seed,
                                 const GeneratorConfig &cfg);

std::uint64_t splitmix64_next(std::uint64_t &state);

}  // namespace vql
