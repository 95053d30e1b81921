#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cse/rng.hpp"
#include "cse/tensor.hpp"

namespace cse {

constexpr int kWindowFrames = 32;   // F_max
constexpr int kRawKeypoints = 17;   // detector output
constexpr double kMinBoxPresence = 0.75;

enum class SpeedCat { stopped, slow, fast, accelerating, decelerating };
enum class LightState { none, red, green };
enum class RoadType { garage, parking_lot, street };
enum class SourceLabel { crossing, not_crossing, irrelevant };

inline const char* to_string(SpeedCat v) {
  switch (v) {
    case SpeedCat::stopped: return "stopped";
    case SpeedCat::slow: return "slow";
    case SpeedCat::fast: return "fast";
    case SpeedCat::accelerating: return "accelerating";
    case SpeedCat::decelerating: return "decelerating";
  }
  return "?";
}
inline const char* to_string(LightState v) {
  switch (v) {
    case LightState::none: return "none";
    case LightState::red: return "red";
    case LightState::green: return "green";
  }
  return "?";
}
inline const char* to_string(RoadType v) {
  switch (v) {
    case RoadType::garage: return "garage";
    case RoadType::parking_lot: return "parking_lot";
    case RoadType::street: return "street";
  }
  return "?";
}
inline const char* to_string(SourceLabel v) {
  switch (v) {
    case SourceLabel::crossing: return "crossing";
    case SourceLabel::not_crossing: return "not_crossing";
    case SourceLabel::irrelevant: return "irrelevant";
  }
  return "?";
}

inline SpeedCat speed_from_string(const std::string& s) {
  if (s == "stopped") return SpeedCat::stopped;
  if (s == "slow") return SpeedCat::slow;
  if (s == "fast") return SpeedCat::fast;
  if (s == "accelerating") return SpeedCat::accelerating;
  if (s == "decelerating") return SpeedCat::decelerating;
  throw std::invalid_argument("unknown speed category '" + s +
                              "' (expected one of {stopped, slow, fast, accelerating, decelerating})");
}
inline LightState light_from_string(const std::string& s) {
  if (s == "none") return LightState::none;
  if (s == "red") return LightState::red;
  if (s == "green") return LightState::green;
  throw std::invalid_argument("unknown light state '" + s + "' (expected one of {red, green, none})");
}
inline RoadType road_from_string(const std::string& s) {
  if (s == "garage") return RoadType::garage;
  if (s == "parking_lot") return RoadType::parking_lot;
  if (s == "street") return RoadType::street;
  throw std::invalid_argument("unknown road type '" + s + "' (expected one of {garage, parking_lot, street})");
}
inline SourceLabel label_from_string(const std::string& s) {
  if (s == "crossing") return SourceLabel::crossing;
  if (s == "not_crossing") return SourceLabel::not_crossing;
  if (s == "irrelevant") return SourceLabel::irrelevant;
  throw std::invalid_argument("unknown label '" + s + "' (expected one of {crossing, not_crossing, irrelevant})");
}

/// crossing -> 1, not_crossing/irrelevant -> 0.
inline int binarize_label(SourceLabel s) { return s == SourceLabel::crossing ? 1 : 0; }

struct Box {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Box&) const = default;
};

using Keypoints17 = std::array<std::array<double, 2>, kRawKeypoints>;

struct FrameContext {
  SpeedCat speed = SpeedCat::stopped;
  LightState light = LightState::none;
  bool operator==(const FrameContext&) const = default;
};

struct PedestrianTrack {
  std::string ped_id;
  SourceLabel label = SourceLabel::not_crossing;
  bool at_intersection = false;
  std::vector<std::optional<Box>> boxes;            // one entry per clip frame
  std::vector<std::optional<Keypoints17>> keypoints;
  bool operator==(const PedestrianTrack&) const = default;
};

struct AnnotatedClip {
  std::string clip_id;
  int frame_w = 0, frame_h = 0;
  RoadType road_type = RoadType::street;
  std::vector<FrameContext> frames;
  std::vector<PedestrianTrack> tracks;
  int frame_count() const { return static_cast<int>(frames.size()); }
  bool operator==(const AnnotatedClip&) const = default;
};

struct SegmentId {
  std::string clip_id;
  std::string ped_id;
  int window = 1;  // 1-based window slot within the track

  std::string str() const { return clip_id + "/" + ped_id + "/" + std::to_string(window); }
  std::string group() const { return clip_id + "/" + ped_id; }
  auto operator<=>(const SegmentId&) const = default;
};

/// One pedestrian over one 32-frame window, boxes/keypoints imputed.
struct Segment {
  SegmentId id;
  int start_frame = 0;
  Tensor keypoints;               // [32,17,2] raw pixel coords
  std::vector<Box> boxes;         // 32 entries
  std::vector<FrameContext> ctx;  // 32 entries
  RoadType road = RoadType::street;
  bool at_intersection = false;
  SourceLabel source = SourceLabel::not_crossing;
  int frame_w = 0, frame_h = 0;

  int label() const { return binarize_label(source); }
};

// ---------------------------------------------------------------------------
// corpus IO: one JSON object per line, one line per clip

namespace detail {

inline std::runtime_error corpus_error(size_t line_no, const std::string& what) {
  return std::runtime_error("annotation line " + std::to_string(line_no) + ": " + what);
}

inline AnnotatedClip parse_clip_json(const nlohmann::json& j) {
  AnnotatedClip clip;
  clip.clip_id = j.at("clip_id").get<std::string>();
  clip.frame_w = j.at("frame_w").get<int>();
  clip.frame_h = j.at("frame_h").get<int>();
  if (clip.frame_w <= 0 || clip.frame_h <= 0) {
    throw std::invalid_argument("clip " + clip.clip_id + ": frame size must be positive");
  }
  clip.road_type = road_from_string(j.at("road_type").get<std::string>());
  const auto& frames = j.at("frames");
  if (frames.empty()) throw std::invalid_argument("clip " + clip.clip_id + ": no frames");
  for (const auto& f : frames) {
    FrameContext c;
    c.speed = speed_from_string(f.at("speed").get<std::string>());
    c.light = light_from_string(f.at("light").get<std::string>());
    clip.frames.push_back(c);
  }
  const size_t m = clip.frames.size();
  for (const auto& t : j.at("tracks")) {
    PedestrianTrack track;
    track.ped_id = t.at("ped_id").get<std::string>();
    track.label = label_from_string(t.at("label").get<std::string>());
    const std::string inter = t.at("at_intersection").get<std::string>();
    if (inter != "yes" && inter != "no") {
      throw std::invalid_argument("clip " + clip.clip_id + " track " + track.ped_id +
                                  ": at_intersection must be yes|no, got '" + inter + "'");
    }
    track.at_intersection = inter == "yes";
    const auto& boxes = t.at("boxes");
    const auto& kps = t.at("keypoints");
    if (boxes.size() != m || kps.size() != m) {
      throw std::invalid_argument("clip " + clip.clip_id + " track " + track.ped_id +
                                  ": boxes/keypoints must have one entry per frame (" + std::to_string(m) + ")");
    }
    for (size_t i = 0; i < m; ++i) {
      if (boxes[i].is_null()) {
        track.boxes.emplace_back(std::nullopt);
      } else {
        Box b{boxes[i].at(0).get<double>(), boxes[i].at(1).get<double>(), boxes[i].at(2).get<double>(),
              boxes[i].at(3).get<double>()};
        if (b.w <= 0 || b.h <= 0) {
          throw std::invalid_argument("clip " + clip.clip_id + " track " + track.ped_id + ": frame " +
                                      std::to_string(i) + " box has non-positive extent");
        }
        track.boxes.emplace_back(b);
      }
      if (kps[i].is_null()) {
        track.keypoints.emplace_back(std::nullopt);
      } else {
        if (kps[i].size() != kRawKeypoints) {
          throw std::invalid_argument("clip " + clip.clip_id + " track " + track.ped_id + ": frame " +
                                      std::to_string(i) + " has " + std::to_string(kps[i].size()) +
                                      " keypoints, expected 17");
        }
        Keypoints17 pts;
        for (size_t p = 0; p < kRawKeypoints; ++p) {
          pts[p][0] = kps[i][p].at(0).get<double>();
          pts[p][1] = kps[i][p].at(1).get<double>();
          const double eps = 1e-6;
          if (pts[p][0] < -eps || pts[p][0] > clip.frame_w + eps || pts[p][1] < -eps ||
              pts[p][1] > clip.frame_h + eps) {
            throw std::invalid_argument("clip " + clip.clip_id + " track " + track.ped_id + ": frame " +
                                        std::to_string(i) + " keypoint " + std::to_string(p) +
                                        " lies outside the frame");
          }
        }
        track.keypoints.emplace_back(pts);
      }
    }
    clip.tracks.push_back(std::move(track));
  }
  return clip;
}

inline nlohmann::ordered_json clip_to_json(const AnnotatedClip& clip) {
  nlohmann::ordered_json j;
  j["clip_id"] = clip.clip_id;
  j["frame_w"] = clip.frame_w;
  j["frame_h"] = clip.frame_h;
  j["road_type"] = to_string(clip.road_type);
  auto& frames = j["frames"] = nlohmann::ordered_json::array();
  for (const auto& f : clip.frames) {
    frames.push_back({{"speed", to_string(f.speed)}, {"light", to_string(f.light)}});
  }
  auto& tracks = j["tracks"] = nlohmann::ordered_json::array();
  for (const auto& t : clip.tracks) {
    nlohmann::ordered_json tj;
    tj["ped_id"] = t.ped_id;
    tj["label"] = to_string(t.label);
    tj["at_intersection"] = t.at_intersection ? "yes" : "no";
    auto& boxes = tj["boxes"] = nlohmann::ordered_json::array();
    for (const auto& b : t.boxes) {
      if (b.has_value()) {
        boxes.push_back({b->x, b->y, b->w, b->h});
      } else {
        boxes.push_back(nullptr);
      }
    }
    auto& kps = tj["keypoints"] = nlohmann::ordered_json::array();
    for (const auto& k : t.keypoints) {
      if (k.has_value()) {
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (const auto& p : *k) pts.push_back({p[0], p[1]});
        kps.push_back(std::move(pts));
      } else {
        kps.push_back(nullptr);
      }
    }
    tracks.push_back(std::move(tj));
  }
  return j;
}

}  // namespace detail

struct CorpusSummary {
  size_t clips = 0;
  size_t tracks = 0;
  size_t frames = 0;
  std::map<std::string, size_t> label_counts;
};

inline std::vector<AnnotatedClip> parse_annotations(std::istream& is) {
  std::vector<AnnotatedClip> clips;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw detail::corpus_error(line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      AnnotatedClip clip = detail::parse_clip_json(j);
      if (!seen.insert(clip.clip_id).second) {
        throw std::invalid_argument("duplicate clip_id " + clip.clip_id);
      }
      clips.push_back(std::move(clip));
    } catch (const std::exception& e) {
      throw detail::corpus_error(line_no, e.what());
    }
  }
  return clips;
}

inline std::vector<AnnotatedClip> parse_annotations_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open annotation file " + path);
  return parse_annotations(is);
}

inline void serialize_annotations(const std::vector<AnnotatedClip>& clips, std::ostream& os) {
  for (const auto& c : clips) os << detail::clip_to_json(c).dump() << "\n";
}

inline void serialize_annotations_file(const std::vector<AnnotatedClip>& clips, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write annotation file " + path);
  serialize_annotations(clips, os);
}

inline CorpusSummary summarize(const std::vector<AnnotatedClip>& clips) {
  CorpusSummary s;
  s.clips = clips.size();
  for (const auto& c : clips) {
    s.frames += c.frames.size();
    s.tracks += c.tracks.size();
    for (const auto& t : c.tracks) s.label_counts[to_string(t.label)]++;
  }
  return s;
}

// ---------------------------------------------------------------------------
// windowing

struct WindowStats {
  size_t emitted = 0;
  size_t dropped_low_presence = 0;
  size_t dropped_no_keypoints = 0;
  std::vector<std::string> warnings;
};

/// Cuts per-pedestrian windows of exactly 32 frames at the given stride
/// (stride 32 tiles the clip). Windows with box presence below 75% are
/// dropped; gaps inside kept windows are filled by last-observation
/// carry-forward with backfill at the start.
inline std::vector<Segment> segment_windows(const AnnotatedClip& clip, int stride = kWindowFrames,
                                            WindowStats* stats = nullptr) {
  if (stride < 1) throw std::invalid_argument("segment_windows: stride must be >= 1");
  std::vector<Segment> out;
  const int m = clip.frame_count();
  if (m < kWindowFrames) {
    if (stats != nullptr) {
      stats->warnings.push_back("clip " + clip.clip_id + ": only " + std::to_string(m) +
                                " frames, below the 32-frame window");
    }
    return out;
  }
  for (const auto& track : clip.tracks) {
    int slot = 0;
    for (int start = 0; start + kWindowFrames <= m; start += stride) {
      ++slot;
      int present = 0;
      for (int i = 0; i < kWindowFrames; ++i) {
        if (track.boxes[static_cast<size_t>(start + i)].has_value()) ++present;
      }
      if (present < static_cast<int>(kMinBoxPresence * kWindowFrames)) {
        if (stats != nullptr) ++stats->dropped_low_presence;
        continue;
      }
      int kp_present = 0;
      for (int i = 0; i < kWindowFrames; ++i) {
        if (track.keypoints[static_cast<size_t>(start + i)].has_value()) ++kp_present;
      }
      if (kp_present == 0) {
        if (stats != nullptr) {
          ++stats->dropped_no_keypoints;
          stats->warnings.push_back("clip " + clip.clip_id + " track " + track.ped_id + " window " +
                                    std::to_string(slot) + ": no keypoint observations");
        }
        continue;
      }

      Segment seg;
      seg.id = SegmentId{clip.clip_id, track.ped_id, slot};
      seg.start_frame = start;
      seg.road = clip.road_type;
      seg.at_intersection = track.at_intersection;
      seg.source = track.label;
      seg.frame_w = clip.frame_w;
      seg.frame_h = clip.frame_h;
      seg.ctx.assign(clip.frames.begin() + start, clip.frames.begin() + start + kWindowFrames);

      // impute boxes: carry forward, backfill the head of the window
      seg.boxes.resize(kWindowFrames);
      {
        int first_obs = -1;
        for (int i = 0; i < kWindowFrames; ++i) {
          if (track.boxes[static_cast<size_t>(start + i)].has_value()) {
            first_obs = i;
            break;
          }
        }
        Box last = *track.boxes[static_cast<size_t>(start + first_obs)];
        for (int i = 0; i < kWindowFrames; ++i) {
          const auto& b = track.boxes[static_cast<size_t>(start + i)];
          if (b.has_value()) last = *b;
          seg.boxes[static_cast<size_t>(i)] = (i < first_obs) ? *track.boxes[static_cast<size_t>(start + first_obs)] : last;
        }
      }
      // impute keypoints the same way
      seg.keypoints = Tensor({kWindowFrames, kRawKeypoints, 2});
      {
        int first_obs = -1;
        for (int i = 0; i < kWindowFrames; ++i) {
          if (track.keypoints[static_cast<size_t>(start + i)].has_value()) {
            first_obs = i;
            break;
          }
        }
        Keypoints17 last = *track.keypoints[static_cast<size_t>(start + first_obs)];
        for (int i = 0; i < kWindowFrames; ++i) {
          const auto& k = track.keypoints[static_cast<size_t>(start + i)];
          if (k.has_value()) last = *k;
          const Keypoints17& use = (i < first_obs) ? *track.keypoints[static_cast<size_t>(start + first_obs)] : last;
          for (int p = 0; p < kRawKeypoints; ++p) {
            seg.keypoints(i, p, 0) = use[static_cast<size_t>(p)][0];
            seg.keypoints(i, p, 1) = use[static_cast<size_t>(p)][1];
          }
        }
      }
      out.push_back(std::move(seg));
      if (stats != nullptr) ++stats->emitted;
    }
  }
  return out;
}

inline std::vector<Segment> segment_corpus(const std::vector<AnnotatedClip>& clips, int stride = kWindowFrames,
                                           WindowStats* stats = nullptr) {
  std::vector<Segment> out;
  for (const auto& c : clips) {
    auto segs = segment_windows(c, stride, stats);
    for (auto& s : segs) out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// fold protocols

enum class FoldProtocol { stratified, balanced };

struct FoldPlan {
  FoldProtocol protocol = FoldProtocol::stratified;
  uint64_t seed = 1;
  struct Fold {
    std::vector<SegmentId> train;
    std::vector<SegmentId> val;
  };
  std::vector<Fold> folds;
  int k() const { return static_cast<int>(folds.size()); }
};

/// Lightweight fold-protocol view of a segment.
struct FoldItem {
  SegmentId id;
  int label = 0;
};

inline std::vector<FoldItem> fold_items(const std::vector<Segment>& segments) {
  std::vector<FoldItem> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back({s.id, s.label()});
  return out;
}

namespace detail {

struct Group {
  std::string key;
  int label = 0;
  std::vector<SegmentId> ids;
};

inline std::vector<Group> group_items(const std::vector<FoldItem>& items) {
  std::map<std::string, Group> by_key;
  for (const auto& s : items) {
    Group& g = by_key[s.id.group()];
    g.key = s.id.group();
    g.label = s.label;
    g.ids.push_back(s.id);
  }
  std::vector<Group> out;
  out.reserve(by_key.size());
  for (auto& [k, g] : by_key) out.push_back(std::move(g));
  return out;
}

}  // namespace detail

/// Stratified k-fold over segments, constrained so all segments of one
/// pedestrian-in-one-clip land in the same fold. Greedy largest-first
/// assignment keeps per-fold class counts balanced; with single-segment
/// groups the per-class spread is at most 1.
inline FoldPlan stratified_kfold(const std::vector<FoldItem>& items, int k = 5, uint64_t seed = 1) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  size_t pos = 0, neg = 0;
  for (const auto& s : items) (s.label == 1 ? pos : neg)++;
  if (pos < static_cast<size_t>(k) || neg < static_cast<size_t>(k)) {
    throw std::invalid_argument("stratified_kfold: need at least " + std::to_string(k) +
                                " segments of each class, have " + std::to_string(pos) + " positive / " +
                                std::to_string(neg) + " negative");
  }
  auto groups = detail::group_items(items);
  Rng rng(seed, 101);
  rng.shuffle(groups);
  std::stable_sort(groups.begin(), groups.end(),
                   [](const detail::Group& a, const detail::Group& b) { return a.ids.size() > b.ids.size(); });

  FoldPlan plan;
  plan.protocol = FoldProtocol::stratified;
  plan.seed = seed;
  plan.folds.resize(static_cast<size_t>(k));
  std::vector<std::array<size_t, 2>> counts(static_cast<size_t>(k), {0, 0});
  std::vector<size_t> totals(static_cast<size_t>(k), 0);
  for (const auto& g : groups) {
    size_t best = 0;
    for (size_t f = 1; f < static_cast<size_t>(k); ++f) {
      const auto cls = static_cast<size_t>(g.label);
      if (counts[f][cls] < counts[best][cls] ||
          (counts[f][cls] == counts[best][cls] && totals[f] < totals[best])) {
        best = f;
      }
    }
    counts[best][static_cast<size_t>(g.label)] += g.ids.size();
    totals[best] += g.ids.size();
    for (const auto& id : g.ids) plan.folds[best].val.push_back(id);
  }
  for (auto& fold : plan.folds) std::sort(fold.val.begin(), fold.val.end());
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    for (size_t o = 0; o < plan.folds.size(); ++o) {
      if (o == f) continue;
      plan.folds[f].train.insert(plan.folds[f].train.end(), plan.folds[o].val.begin(), plan.folds[o].val.end());
    }
    std::sort(plan.folds[f].train.begin(), plan.folds[f].train.end());
  }
  return plan;
}

/// The imbalance protocol: every fold trains on all positive segments plus an
/// equal number of negatives sampled without replacement (independently per
/// fold). A fold's validation list holds the segments of clips that do not
/// appear in its training pool.
inline FoldPlan balanced_kfold(const std::vector<FoldItem>& items, int k = 5, uint64_t seed = 1) {
  if (k < 1) throw std::invalid_argument("balanced_kfold: k must be >= 1");
  std::vector<SegmentId> pos, neg;
  for (const auto& s : items) (s.label == 1 ? pos : neg).push_back(s.id);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  if (neg.size() < pos.size()) {
    throw std::invalid_argument("balanced_kfold: " + std::to_string(neg.size()) + " negatives < " +
                                std::to_string(pos.size()) + " positives");
  }
  FoldPlan plan;
  plan.protocol = FoldProtocol::balanced;
  plan.seed = seed;
  plan.folds.resize(static_cast<size_t>(k));
  Rng rng(seed, 202);
  for (size_t f = 0; f < static_cast<size_t>(k); ++f) {
    Rng fold_rng = rng.substream(f);
    auto picks = fold_rng.sample_without_replacement(neg.size(), pos.size());
    auto& fold = plan.folds[f];
    fold.train = pos;
    for (size_t i : picks) fold.train.push_back(neg[i]);
    std::sort(fold.train.begin(), fold.train.end());
    std::set<std::string> train_clips;
    for (const auto& id : fold.train) train_clips.insert(id.clip_id);
    for (const auto& s : items) {
      if (train_clips.count(s.id.clip_id) == 0) fold.val.push_back(s.id);
    }
    std::sort(fold.val.begin(), fold.val.end());
  }
  return plan;
}

/// Stratified validation partition with per-fold rebalanced training pools:
/// all positives outside the fold's validation block plus an equal count of
/// sampled negatives. Keeps validation a disjoint cover, so out-of-fold
/// stacking stays leak-free under the balanced regime.
inline FoldPlan balanced_oof_plan(const std::vector<FoldItem>& items, int k = 5, uint64_t seed = 1) {
  FoldPlan plan = stratified_kfold(items, k, seed);
  plan.protocol = FoldProtocol::balanced;
  std::map<SegmentId, int> label_of;
  for (const auto& s : items) label_of[s.id] = s.label;
  Rng rng(seed, 303);
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    auto& fold = plan.folds[f];
    std::vector<SegmentId> pos, neg;
    for (const auto& id : fold.train) (label_of[id] == 1 ? pos : neg).push_back(id);
    if (neg.size() < pos.size()) {
      throw std::invalid_argument("balanced_oof_plan: fold " + std::to_string(f) + " has fewer negatives (" +
                                  std::to_string(neg.size()) + ") than positives (" + std::to_string(pos.size()) + ")");
    }
    Rng fold_rng = rng.substream(f);
    auto picks = fold_rng.sample_without_replacement(neg.size(), pos.size());
    fold.train = pos;
    for (size_t i : picks) fold.train.push_back(neg[i]);
    std::sort(fold.train.begin(), fold.train.end());
  }
  return plan;
}

inline FoldPlan stratified_kfold(const std::vector<Segment>& segments, int k = 5, uint64_t seed = 1) {
  return stratified_kfold(fold_items(segments), k, seed);
}
inline FoldPlan balanced_kfold(const std::vector<Segment>& segments, int k = 5, uint64_t seed = 1) {
  return balanced_kfold(fold_items(segments), k, seed);
}
inline FoldPlan balanced_oof_plan(const std::vector<Segment>& segments, int k = 5, uint64_t seed = 1) {
  return balanced_oof_plan(fold_items(segments), k, seed);
}

// ---------------------------------------------------------------------------
// train/val/test split by clip id

struct SplitFile {
  std::vector<std::string> train, val, test;

  static SplitFile load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open split file " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("split file " + path + ": " + e.what());
    }
    SplitFile s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  }

  void save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["train"] = train;
    j["val"] = val;
    j["test"] = test;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write split file " + path);
    os << j.dump(2) << "\n";
  }
};

struct PoolSplit {
  std::vector<Segment> pool;  // train + val merged
  std::vector<Segment> test;
};

/// Partitions segments by clip id; train and validation clips merge into one
/// pool. Every clip must be accounted for on exactly one side.
inline PoolSplit train_test_split(const std::vector<Segment>& segments, const SplitFile& split,
                                  const std::vector<AnnotatedClip>& clips) {
  std::set<std::string> pool_ids(split.train.begin(), split.train.end());
  pool_ids.insert(split.val.begin(), split.val.end());
  std::set<std::string> test_ids(split.test.begin(), split.test.end());
  for (const auto& id : test_ids) {
    if (pool_ids.count(id) != 0) {
      throw std::invalid_argument("split: clip " + id + " appears in both pool and test");
    }
  }
  std::set<std::string> data_ids;
  for (const auto& c : clips) data_ids.insert(c.clip_id);
  for (const auto& id : pool_ids) {
    if (data_ids.count(id) == 0) throw std::invalid_argument("split: clip " + id + " not present in the corpus");
  }
  for (const auto& id : test_ids) {
    if (data_ids.count(id) == 0) throw std::invalid_argument("split: clip " + id + " not present in the corpus");
  }
  for (const auto& id : data_ids) {
    if (pool_ids.count(id) == 0 && test_ids.count(id) == 0) {
      throw std::invalid_argument("split: corpus clip " + id + " is missing from the split file");
    }
  }
  PoolSplit out;
  for (const auto& s : segments) {
    if (pool_ids.count(s.id.clip_id) != 0) {
      out.pool.push_back(s);
    } else if (test_ids.count(s.id.clip_id) != 0) {
      out.test.push_back(s);
    }
  }
  return out;
}

}  // namespace cse
