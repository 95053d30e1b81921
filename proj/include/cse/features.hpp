#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cse/checkpoint.hpp"
#include "cse/dataset.hpp"
#include "cse/tensor.hpp"

namespace cse {

constexpr int kKeypoints = 14;  // K_max after head/thorax merging
constexpr int kFeatureSchemaVersion = 1;

// 14-node order after reduction.
enum Kp14 {
  kHead = 0,
  kThorax,
  kLEar,
  kREar,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLHip,
  kRHip,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle
};

// COCO-17 detector order.
enum Kp17 {
  kNose = 0,
  kLEye,
  kREye,
  kLEar17,
  kREar17,
  kLShoulder,
  kRShoulder,
  kLElbow17,
  kRElbow17,
  kLWrist17,
  kRWrist17,
  kLHip17,
  kRHip17,
  kLKnee17,
  kRKnee17,
  kLAnkle17,
  kRAnkle17
};

/// Merge the 17 detector keypoints to 14: head = mean(nose, eyes), thorax =
/// shoulder midpoint, the rest pass through. Input [17,2] or [T,17,2].
inline Tensor reduce_keypoints(const Tensor& raw) {
  const bool framed = raw.rank() == 3;
  if (!framed && raw.rank() != 2) {
    throw std::invalid_argument("reduce_keypoints: expected [17,2] or [T,17,2], got " + raw.shape_str());
  }
  const int T = framed ? raw.extent(0) : 1;
  const int K = framed ? raw.extent(1) : raw.extent(0);
  const int C = framed ? raw.extent(2) : raw.extent(1);
  if (K != kRawKeypoints || C != 2) {
    throw std::invalid_argument("reduce_keypoints: expected 17 keypoints of rank 2, got " + raw.shape_str());
  }
  Tensor out(framed ? std::vector<int>{T, kKeypoints, 2} : std::vector<int>{kKeypoints, 2});
  static constexpr int pass_through[12][2] = {
      {kLEar, kLEar17},   {kREar, kREar17},   {kLElbow, kLElbow17}, {kRElbow, kRElbow17},
      {kLWrist, kLWrist17}, {kRWrist, kRWrist17}, {kLHip, kLHip17},   {kRHip, kRHip17},
      {kLKnee, kLKnee17}, {kRKnee, kRKnee17}, {kLAnkle, kLAnkle17}, {kRAnkle, kRAnkle17}};
  for (int t = 0; t < T; ++t) {
    const double* src = raw.data() + static_cast<size_t>(t) * kRawKeypoints * 2;
    double* dst = out.data() + static_cast<size_t>(t) * kKeypoints * 2;
    for (int c = 0; c < 2; ++c) {
      dst[kHead * 2 + c] = (src[kNose * 2 + c] + src[kLEye * 2 + c] + src[kREye * 2 + c]) / 3.0;
      dst[kThorax * 2 + c] = (src[kLShoulder * 2 + c] + src[kRShoulder * 2 + c]) / 2.0;
      for (const auto& [to, from] : pass_through) dst[to * 2 + c] = src[from * 2 + c];
    }
  }
  return out;
}

struct SkeletonGraph {
  Tensor adjacency;   // [14,14] binary, zero diagonal
  Tensor normalized;  // D^{-1/2} (A + I) D^{-1/2}
};

/// Symmetric renormalization with self loops: D^{-1/2} (A + I) D^{-1/2},
/// where D holds the row sums of A + I.
inline Tensor normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.extent(0) != a.extent(1)) {
    throw std::invalid_argument("normalize_adjacency: expected a square matrix, got " + a.shape_str());
  }
  const int n = a.extent(0);
  std::vector<double> inv_sqrt(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double d = 1.0;
    for (int j = 0; j < n; ++j) d += a(i, j);
    inv_sqrt[static_cast<size_t>(i)] = 1.0 / std::sqrt(d);
  }
  Tensor out({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = a(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = inv_sqrt[static_cast<size_t>(i)] * v * inv_sqrt[static_cast<size_t>(j)];
    }
  }
  return out;
}

/// The fixed 13-edge anatomical tree on the 14 reduced keypoints:
///
///        LEar - head - REar
///                |
///   LElbow -- thorax -- RElbow
///     |      /      \      |
///  LWrist  LHip    RHip  RWrist
///           |        |
///         LKnee    RKnee
///           |        |
///        LAnkle   RAnkle
inline SkeletonGraph build_adjacency() {
  static constexpr int edges[13][2] = {
      {kHead, kThorax}, {kHead, kLEar},   {kHead, kREar},   {kThorax, kLElbow}, {kThorax, kRElbow},
      {kThorax, kLHip}, {kThorax, kRHip}, {kLElbow, kLWrist}, {kRElbow, kRWrist}, {kLHip, kLKnee},
      {kRHip, kRKnee},  {kLKnee, kLAnkle}, {kRKnee, kRAnkle}};
  SkeletonGraph g;
  g.adjacency = Tensor({kKeypoints, kKeypoints});
  for (const auto& [a, b] : edges) {
    g.adjacency(a, b) = 1.0;
    g.adjacency(b, a) = 1.0;
  }
  g.normalized = normalize_adjacency(g.adjacency);
  return g;
}

struct KeypointSequence {
  Tensor values;  // [32,14,2], box-relative in [0,1]
  int clamped = 0;
};

/// Box-relative keypoint positions: a point at the box corner maps to (0,0),
/// the opposite corner to (1,1). Out-of-box points are clamped and counted.
inline KeypointSequence keypoint_sequence(const Segment& seg) {
  KeypointSequence out;
  const Tensor reduced = reduce_keypoints(seg.keypoints);
  out.values = Tensor({kWindowFrames, kKeypoints, 2});
  for (int t = 0; t < kWindowFrames; ++t) {
    const Box& b = seg.boxes[static_cast<size_t>(t)];
    for (int k = 0; k < kKeypoints; ++k) {
      double wx = (reduced(t, k, 0) - b.x) / b.w;
      double hy = (reduced(t, k, 1) - b.y) / b.h;
      if (wx < 0.0 || wx > 1.0) {
        wx = std::clamp(wx, 0.0, 1.0);
        ++out.clamped;
      }
      if (hy < 0.0 || hy > 1.0) {
        hy = std::clamp(hy, 0.0, 1.0);
        ++out.clamped;
      }
      out.values(t, k, 0) = wx;
      out.values(t, k, 1) = hy;
    }
  }
  return out;
}

struct ContextChannels {
  Tensor data1;       // [32,5] one-hot vehicle speed
  Tensor data2;       // [32,2] one-hot light, none -> all-zero
  double data3 = 0;   // intersection flag
  Tensor data4;       // [3] one-hot road type
};

inline Tensor one_hot_speed(SpeedCat s) {
  Tensor v({5});
  v(static_cast<int>(s)) = 1.0;
  return v;
}

inline Tensor one_hot_light(LightState l) {
  Tensor v({2});
  if (l == LightState::red) v(0) = 1.0;
  if (l == LightState::green) v(1) = 1.0;
  return v;
}

inline Tensor one_hot_road(RoadType r) {
  Tensor v({3});
  v(static_cast<int>(r)) = 1.0;
  return v;
}

inline ContextChannels encode_context(const Segment& seg) {
  ContextChannels c;
  c.data1 = Tensor({kWindowFrames, 5});
  c.data2 = Tensor({kWindowFrames, 2});
  for (int t = 0; t < kWindowFrames; ++t) {
    const FrameContext& f = seg.ctx[static_cast<size_t>(t)];
    c.data1(t, static_cast<int>(f.speed)) = 1.0;
    if (f.light == LightState::red) c.data2(t, 0) = 1.0;
    if (f.light == LightState::green) c.data2(t, 1) = 1.0;
  }
  c.data3 = seg.at_intersection ? 1.0 : 0.0;
  c.data4 = one_hot_road(seg.road);
  return c;
}

struct TrajectoryVector {
  Tensor values;  // [32,5]: center x, center y, area, area change, speed
  int clamped = 0;
};

/// Normalized positioning vector per frame: box center over frame extents,
/// box area over frame area, its first difference, and the center speed in
/// normalized units per frame. Frame 0 has zero area change and zero speed.
inline TrajectoryVector trajectory_features(const std::vector<Box>& boxes, int frame_w, int frame_h) {
  if (frame_w <= 0 || frame_h <= 0) throw std::invalid_argument("trajectory_features: frame extents must be positive");
  if (boxes.size() != kWindowFrames) {
    throw std::invalid_argument("trajectory_features: expected 32 boxes, got " + std::to_string(boxes.size()));
  }
  TrajectoryVector out;
  out.values = Tensor({kWindowFrames, 5});
  const double fw = frame_w, fh = frame_h, fa = fw * fh;
  double prev_cx = 0, prev_cy = 0, prev_z = 0;
  for (int t = 0; t < kWindowFrames; ++t) {
    const Box& b = boxes[static_cast<size_t>(t)];
    double cx = (b.x + b.w / 2.0) / fw;
    double cy = (b.y + b.h / 2.0) / fh;
    double z = (b.w * b.h) / fa;
    for (double* v : {&cx, &cy, &z}) {
      if (*v < 0.0 || *v > 1.0) {
        *v = std::clamp(*v, 0.0, 1.0);
        ++out.clamped;
      }
    }
    const double dz = (t == 0) ? 0.0 : z - prev_z;
    const double speed = (t == 0) ? 0.0 : std::hypot(cx - prev_cx, cy - prev_cy);
    out.values(t, 0) = cx;
    out.values(t, 1) = cy;
    out.values(t, 2) = z;
    out.values(t, 3) = dz;
    out.values(t, 4) = speed;
    prev_cx = cx;
    prev_cy = cy;
    prev_z = z;
  }
  return out;
}

/// All three model inputs for one segment.
struct Features {
  SegmentId id;
  Tensor kp;    // [32,14,2]
  Tensor data1; // [32,5]
  Tensor data2; // [32,2]
  double data3 = 0;
  Tensor data4; // [3]
  Tensor traj;  // [32,5]
  int label = 0;
  SourceLabel source = SourceLabel::not_crossing;
  int clamped = 0;
};

inline Features featurize_segment(const Segment& seg) {
  Features f;
  f.id = seg.id;
  KeypointSequence kp = keypoint_sequence(seg);
  f.kp = std::move(kp.values);
  ContextChannels ctx = encode_context(seg);
  f.data1 = std::move(ctx.data1);
  f.data2 = std::move(ctx.data2);
  f.data3 = ctx.data3;
  f.data4 = std::move(ctx.data4);
  TrajectoryVector tr = trajectory_features(seg.boxes, seg.frame_w, seg.frame_h);
  f.traj = std::move(tr.values);
  f.label = seg.label();
  f.source = seg.source;
  f.clamped = kp.clamped + tr.clamped;
  return f;
}

inline std::vector<Features> featurize(const std::vector<Segment>& segments) {
  std::vector<Features> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(featurize_segment(s));
  return out;
}

// ---------------------------------------------------------------------------
// on-disk feature cache, keyed by segment identity

inline void save_feature_cache(const std::vector<Features>& feats, const std::string& path) {
  NamedTensorFile f;
  f.meta.emplace_back("schema_version", std::to_string(kFeatureSchemaVersion));
  f.meta.emplace_back("count", std::to_string(feats.size()));
  for (const auto& x : feats) {
    std::ostringstream rec;
    rec << x.id.str() << " " << x.label << " " << to_string(x.source) << " " << x.clamped;
    f.meta.emplace_back("segment", rec.str());
    const std::string p = x.id.str();
    f.tensors.emplace_back(p + "/kp", x.kp);
    f.tensors.emplace_back(p + "/data1", x.data1);
    f.tensors.emplace_back(p + "/data2", x.data2);
    Tensor d34({4});
    d34(0) = x.data3;
    for (int i = 0; i < 3; ++i) d34(i + 1) = x.data4(i);
    f.tensors.emplace_back(p + "/data34", d34);
    f.tensors.emplace_back(p + "/traj", x.traj);
  }
  f.save_file(path);
}

inline std::vector<Features> load_feature_cache(const std::string& path) {
  NamedTensorFile f = NamedTensorFile::load_file(path);
  const std::string ver = f.meta_value("schema_version");
  if (ver != std::to_string(kFeatureSchemaVersion)) {
    throw std::runtime_error("feature cache " + path + ": schema version '" + ver + "' != " +
                             std::to_string(kFeatureSchemaVersion) + ", regenerate with `featurize`");
  }
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [n, t] : f.tensors) by_name[n] = &t;
  std::vector<Features> out;
  for (const auto& [k, v] : f.meta) {
    if (k != "segment") continue;
    std::istringstream rec(v);
    std::string idstr, source;
    int label = 0, clamped = 0;
    rec >> idstr >> label >> source >> clamped;
    Features x;
    const size_t a = idstr.find('/');
    const size_t b = idstr.rfind('/');
    if (a == std::string::npos || b == a) throw std::runtime_error("feature cache: bad segment id " + idstr);
    x.id.clip_id = idstr.substr(0, a);
    x.id.ped_id = idstr.substr(a + 1, b - a - 1);
    x.id.window = std::stoi(idstr.substr(b + 1));
    x.label = label;
    x.source = label_from_string(source);
    x.clamped = clamped;
    auto need = [&](const std::string& suffix) -> const Tensor& {
      auto it = by_name.find(idstr + "/" + suffix);
      if (it == by_name.end()) throw std::runtime_error("feature cache: missing tensor " + idstr + "/" + suffix);
      return *it->second;
    };
    x.kp = need("kp");
    x.data1 = need("data1");
    x.data2 = need("data2");
    const Tensor& d34 = need("data34");
    x.data3 = d34(0);
    x.data4 = Tensor({3});
    for (int i = 0; i < 3; ++i) x.data4(i) = d34(i + 1);
    x.traj = need("traj");
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace cse
