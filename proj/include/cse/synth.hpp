#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cse/dataset.hpp"
#include "cse/rng.hpp"

namespace cse {

/// Declarative scene generator config. The generator makes no claim about any
/// real dataset's statistics; every distribution below is config-declared.
struct SceneConfig {
  int clips = 200;
  int frames_per_clip = 48;
  int peds_per_clip = 2;
  int frame_w = 640;
  int frame_h = 480;

  double crossing_fraction = 0.4;                  // clip-level class prior
  std::optional<double> crossing_fraction_test;    // override for test clips
  double irrelevant_fraction = 0.25;               // of non-crossing tracks
  double test_clip_fraction = 0.2;
  double val_clip_fraction = 0.1;

  // class-conditional context tables (crossing / not crossing)
  std::array<double, 5> speed_given_crossing{0.25, 0.15, 0.05, 0.10, 0.45};
  std::array<double, 5> speed_given_not{0.10, 0.15, 0.40, 0.25, 0.10};
  std::array<double, 3> light_given_crossing{0.40, 0.45, 0.15};  // none, red, green
  std::array<double, 3> light_given_not{0.40, 0.15, 0.45};
  std::array<double, 3> road_given_crossing{0.05, 0.10, 0.85};   // garage, parking_lot, street
  std::array<double, 3> road_given_not{0.20, 0.35, 0.45};
  double p_intersection_given_crossing = 0.85;
  double p_intersection_given_not = 0.15;

  // per-channel class-signal strengths in [0,1]; 1 = fully informative,
  // 0 = the channel carries no label information
  double keypoint_signal = 1.0;
  double context_signal = 1.0;
  double trajectory_signal = 1.0;
  // correlation of channel corruptions: 1 = one shared corruption process,
  // 0 = independent per channel
  double signal_overlap = 1.0;

  double gait_amplitude = 1.0;
  double noise_px = 1.0;
  double occlusion_prob = 0.02;
  uint64_t seed = 1;

  void validate() const {
    if (frames_per_clip < kWindowFrames) {
      throw std::invalid_argument("SceneConfig: frames_per_clip must be >= 32");
    }
    if (clips < 1 || peds_per_clip < 1 || frame_w < 1 || frame_h < 1) {
      throw std::invalid_argument("SceneConfig: counts and extents must be positive");
    }
    auto prob = [](double p, const char* what) {
      if (p < 0.0 || p > 1.0) throw std::invalid_argument(std::string("SceneConfig: ") + what + " must be in [0,1]");
    };
    prob(crossing_fraction, "crossing_fraction");
    if (crossing_fraction_test.has_value()) prob(*crossing_fraction_test, "crossing_fraction_test");
    prob(irrelevant_fraction, "irrelevant_fraction");
    prob(test_clip_fraction, "test_clip_fraction");
    prob(val_clip_fraction, "val_clip_fraction");
    prob(p_intersection_given_crossing, "p_intersection_given_crossing");
    prob(p_intersection_given_not, "p_intersection_given_not");
    prob(keypoint_signal, "keypoint_signal");
    prob(context_signal, "context_signal");
    prob(trajectory_signal, "trajectory_signal");
    prob(signal_overlap, "signal_overlap");
    prob(occlusion_prob, "occlusion_prob");
  }

  nlohmann::ordered_json echo() const {
    nlohmann::ordered_json j;
    j["clips"] = clips;
    j["frames_per_clip"] = frames_per_clip;
    j["peds_per_clip"] = peds_per_clip;
    j["frame_w"] = frame_w;
    j["frame_h"] = frame_h;
    j["crossing_fraction"] = crossing_fraction;
    if (crossing_fraction_test.has_value()) j["crossing_fraction_test"] = *crossing_fraction_test;
    j["irrelevant_fraction"] = irrelevant_fraction;
    j["test_clip_fraction"] = test_clip_fraction;
    j["val_clip_fraction"] = val_clip_fraction;
    j["speed_given_crossing"] = speed_given_crossing;
    j["speed_given_not"] = speed_given_not;
    j["light_given_crossing"] = light_given_crossing;
    j["light_given_not"] = light_given_not;
    j["road_given_crossing"] = road_given_crossing;
    j["road_given_not"] = road_given_not;
    j["p_intersection_given_crossing"] = p_intersection_given_crossing;
    j["p_intersection_given_not"] = p_intersection_given_not;
    j["keypoint_signal"] = keypoint_signal;
    j["context_signal"] = context_signal;
    j["trajectory_signal"] = trajectory_signal;
    j["signal_overlap"] = signal_overlap;
    j["gait_amplitude"] = gait_amplitude;
    j["noise_px"] = noise_px;
    j["occlusion_prob"] = occlusion_prob;
    j["seed"] = seed;
    return j;
  }
};

namespace synth_detail {

// stick-figure template in box-relative coordinates (x right, y down)
struct PoseTemplate {
  static constexpr double nose_y = 0.06, eye_y = 0.05, ear_y = 0.07;
  static constexpr double shoulder_y = 0.22, elbow_y = 0.38, wrist_y = 0.52;
  static constexpr double hip_y = 0.52, knee_y = 0.72, ankle_y = 0.93;
  static constexpr double head_half = 0.04, ear_half = 0.08;
  static constexpr double shoulder_half = 0.15, arm_half = 0.20, hip_half = 0.10;
};

inline int draw_categorical(Rng& rng, const double* probs, int n) {
  double u = rng.uniform();
  for (int i = 0; i < n; ++i) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  return n - 1;
}

/// Run-length categorical process: a state drawn from the table is held for a
/// uniform 3..10 frames, so per-frame frequencies still follow the table.
inline std::vector<int> run_length_series(Rng& rng, const double* probs, int n, int frames) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(frames));
  while (static_cast<int>(out.size()) < frames) {
    const int state = draw_categorical(rng, probs, n);
    const int hold = 3 + static_cast<int>(rng.below(8));
    for (int i = 0; i < hold && static_cast<int>(out.size()) < frames; ++i) out.push_back(state);
  }
  return out;
}

struct ChannelFlips {
  bool keypoints = false;
  bool context = false;
  bool trajectory = false;
};

/// Channel corruptions with controllable overlap. A channel with strength s
/// flips with probability (1-s)/2, so strength 0 makes it uninformative.
/// Channels compare against one shared uniform with probability `overlap`
/// (comonotone coupling: exact marginals, maximal co-flipping) and against
/// their own draw otherwise.
inline ChannelFlips draw_flips(Rng& rng, const SceneConfig& cfg) {
  const double shared_u = rng.uniform();
  auto flip_for = [&](double strength) {
    const double p_flip = (1.0 - strength) / 2.0;
    const bool use_shared = rng.uniform() < cfg.signal_overlap;
    const double own_u = rng.uniform();
    return (use_shared ? shared_u : own_u) < p_flip;
  };
  ChannelFlips f;
  f.keypoints = flip_for(cfg.keypoint_signal);
  f.context = flip_for(cfg.context_signal);
  f.trajectory = flip_for(cfg.trajectory_signal);
  return f;
}

}  // namespace synth_detail

struct SynthResult {
  std::vector<AnnotatedClip> clips;
  SplitFile split;
  nlohmann::ordered_json echo;
  std::vector<std::string> warnings;
};

/// Generates a labeled corpus in the annotation schema. Crossing pedestrians
/// walk curb-to-road-center with growing boxes and a swinging gait;
/// non-crossing pedestrians drift along the sidewalk. Context channels come
/// from the class-conditional tables.
inline SynthResult generate_corpus(const SceneConfig& cfg) {
  cfg.validate();
  SynthResult out;
  out.echo = cfg.echo();
  if (cfg.crossing_fraction >= 0.5) {
    out.warnings.push_back("crossing_fraction >= 0.5: balanced folds downstream will fail (fewer negatives than positives)");
  }

  Rng master(cfg.seed, 0xA11CE);

  // clip partition first, then a per-partition class prior
  std::vector<int> partition(static_cast<size_t>(cfg.clips), 0);  // 0 train, 1 val, 2 test
  {
    Rng part_rng = master.substream(1);
    std::vector<size_t> order(static_cast<size_t>(cfg.clips));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    part_rng.shuffle(order);
    const size_t n_test = static_cast<size_t>(cfg.test_clip_fraction * cfg.clips);
    const size_t n_val = static_cast<size_t>(cfg.val_clip_fraction * cfg.clips);
    for (size_t i = 0; i < n_test && i < order.size(); ++i) partition[order[i]] = 2;
    for (size_t i = n_test; i < n_test + n_val && i < order.size(); ++i) partition[order[i]] = 1;
  }

  for (int c = 0; c < cfg.clips; ++c) {
    Rng rng = master.substream(100 + static_cast<uint64_t>(c));
    const std::string clip_id = "clip" + std::to_string(c);

    const double prior = (partition[static_cast<size_t>(c)] == 2 && cfg.crossing_fraction_test.has_value())
                             ? *cfg.crossing_fraction_test
                             : cfg.crossing_fraction;
    const bool crossing_clip = rng.bernoulli(prior);
    const auto flips = synth_detail::draw_flips(rng, cfg);
    const bool ctx_label = crossing_clip != flips.context;
    const bool kp_label = crossing_clip != flips.keypoints;
    const bool traj_label = crossing_clip != flips.trajectory;

    AnnotatedClip clip;
    clip.clip_id = clip_id;
    clip.frame_w = cfg.frame_w;
    clip.frame_h = cfg.frame_h;
    const int M = cfg.frames_per_clip;

    const auto& road_tab = ctx_label ? cfg.road_given_crossing : cfg.road_given_not;
    clip.road_type = static_cast<RoadType>(synth_detail::draw_categorical(rng, road_tab.data(), 3));

    const auto& speed_tab = ctx_label ? cfg.speed_given_crossing : cfg.speed_given_not;
    const auto& light_tab = ctx_label ? cfg.light_given_crossing : cfg.light_given_not;
    const auto speeds = synth_detail::run_length_series(rng, speed_tab.data(), 5, M);
    const auto lights = synth_detail::run_length_series(rng, light_tab.data(), 3, M);
    for (int i = 0; i < M; ++i) {
      FrameContext fc;
      fc.speed = static_cast<SpeedCat>(speeds[static_cast<size_t>(i)]);
      fc.light = static_cast<LightState>(lights[static_cast<size_t>(i)]);
      clip.frames.push_back(fc);
    }

    for (int p = 0; p < cfg.peds_per_clip; ++p) {
      PedestrianTrack track;
      track.ped_id = "ped" + std::to_string(p);
      if (crossing_clip) {
        track.label = SourceLabel::crossing;
      } else {
        track.label = rng.bernoulli(cfg.irrelevant_fraction) ? SourceLabel::irrelevant : SourceLabel::not_crossing;
      }
      const double p_inter = ctx_label ? cfg.p_intersection_given_crossing : cfg.p_intersection_given_not;
      track.at_intersection = rng.bernoulli(p_inter);

      // trajectory: curb-to-center approach vs sidewalk-parallel drift
      const double h0 = rng.uniform(90.0, 150.0);
      const double w0 = h0 / 2.5;
      const bool from_left = rng.bernoulli(0.5);
      const double dir = from_left ? 1.0 : -1.0;
      double cx = (from_left ? rng.uniform(0.12, 0.30) : rng.uniform(0.70, 0.88)) * cfg.frame_w;
      double cy = rng.uniform(0.50, 0.62) * cfg.frame_h;
      const double lateral0 = traj_label ? rng.uniform(1.5, 2.5) : rng.uniform(0.2, 1.2);
      const double lateral_ramp = traj_label ? rng.uniform(0.04, 0.09) : 0.0;
      const double growth = traj_label ? rng.uniform(0.012, 0.022) : rng.uniform(-0.002, 0.002);
      const double drift_y = rng.uniform(-0.2, 0.3);

      // gait: stride width, swing amplitude and frequency carry the
      // keypoint-channel signal (walking with purpose vs standing about)
      const double amp = (kp_label ? 0.085 : 0.018) * cfg.gait_amplitude;
      const double widen = (kp_label ? 0.055 : 0.0) * cfg.gait_amplitude;
      const double freq = kp_label ? (1.0 / 14.0) : (1.0 / 30.0);
      const double phase = rng.uniform(0.0, 6.283185307179586);
      const double lean = kp_label ? 0.035 * dir : 0.0;

      for (int i = 0; i < M; ++i) {
        const double t = static_cast<double>(i);
        const double scale = 1.0 + growth * t;
        const double h = std::min(h0 * scale, 0.92 * cfg.frame_h);
        const double w = w0 * scale;
        cx += dir * (lateral0 + lateral_ramp * t);
        cy += drift_y;
        const double bx = std::clamp(cx - w / 2.0, 0.0, cfg.frame_w - w);
        const double by = std::clamp(cy - h / 2.0, 0.0, cfg.frame_h - h);

        if (rng.bernoulli(cfg.occlusion_prob)) {
          track.boxes.emplace_back(std::nullopt);
          track.keypoints.emplace_back(std::nullopt);
          continue;
        }
        track.boxes.emplace_back(Box{bx, by, w, h});

        using PT = synth_detail::PoseTemplate;
        const double swing = amp * std::sin(6.283185307179586 * freq * t + phase);
        Keypoints17 kp;
        auto put = [&](int idx, double rx, double ry) {
          const double px = bx + (rx + (ry < PT::hip_y ? lean : 0.0)) * w + rng.uniform(-cfg.noise_px, cfg.noise_px);
          const double py = by + ry * h + rng.uniform(-cfg.noise_px, cfg.noise_px);
          kp[static_cast<size_t>(idx)] = {std::clamp(px, 0.0, double(cfg.frame_w)),
                                          std::clamp(py, 0.0, double(cfg.frame_h))};
        };
        put(0, 0.5, PT::nose_y);
        put(1, 0.5 - PT::head_half, PT::eye_y);
        put(2, 0.5 + PT::head_half, PT::eye_y);
        put(3, 0.5 - PT::ear_half, PT::ear_y);
        put(4, 0.5 + PT::ear_half, PT::ear_y);
        put(5, 0.5 - PT::shoulder_half, PT::shoulder_y);
        put(6, 0.5 + PT::shoulder_half, PT::shoulder_y);
        // arms swing against the same-side leg
        put(7, 0.5 - PT::arm_half - 0.5 * swing, PT::elbow_y);
        put(8, 0.5 + PT::arm_half - 0.5 * swing, PT::elbow_y);
        put(9, 0.5 - PT::arm_half - swing, PT::wrist_y);
        put(10, 0.5 + PT::arm_half - swing, PT::wrist_y);
        put(11, 0.5 - PT::hip_half, PT::hip_y);
        put(12, 0.5 + PT::hip_half, PT::hip_y);
        // alternating legs: left ankle leads, right ankle trails
        put(13, 0.5 - PT::hip_half - 0.5 * widen + 0.5 * swing, PT::knee_y);
        put(14, 0.5 + PT::hip_half + 0.5 * widen - 0.5 * swing, PT::knee_y);
        put(15, 0.5 - PT::hip_half - widen + swing, PT::ankle_y);
        put(16, 0.5 + PT::hip_half + widen - swing, PT::ankle_y);
        track.keypoints.emplace_back(kp);
      }
      clip.tracks.push_back(std::move(track));
    }
    out.clips.push_back(std::move(clip));
    switch (partition[static_cast<size_t>(c)]) {
      case 0: out.split.train.push_back(clip_id); break;
      case 1: out.split.val.push_back(clip_id); break;
      case 2: out.split.test.push_back(clip_id); break;
    }
  }
  return out;
}

/// Corpus with a target correlation between member errors: rho 1 routes every
/// channel corruption through one shared draw, rho 0 corrupts channels
/// independently. The echo carries the resulting feature-noise plan; measured
/// correlations are verified post hoc by the analyze stage, not promised.
inline SynthResult generate_error_controlled(SceneConfig cfg, double rho_target, double channel_noise = 0.24) {
  if (rho_target < -1.0 || rho_target > 1.0) {
    throw std::invalid_argument("generate_error_controlled: rho_target must be in [-1,1]");
  }
  cfg.signal_overlap = std::max(0.0, rho_target);  // negative targets degrade to independent channels
  const double strength = 1.0 - 2.0 * channel_noise;
  cfg.keypoint_signal = strength;
  cfg.context_signal = strength;
  cfg.trajectory_signal = strength;
  SynthResult out = generate_corpus(cfg);
  out.echo["rho_target"] = rho_target;
  out.echo["channel_flip_prob"] = channel_noise;
  return out;
}

/// Max relative deviation of generated limb lengths from the pose template,
/// measured per frame in box units. Used by the skeleton-topology checks.
inline double max_bone_deviation(const AnnotatedClip& clip) {
  using PT = synth_detail::PoseTemplate;
  struct BoneRef {
    int a, b;
    double dx, dy;
  };
  const BoneRef bones[] = {
      {5, 7, 0.05, PT::elbow_y - PT::shoulder_y},   // upper arm (nominal swing offset 0)
      {7, 9, 0.0, PT::wrist_y - PT::elbow_y},       // forearm
      {11, 13, 0.0, PT::knee_y - PT::hip_y},        // thigh
      {13, 15, 0.0, PT::ankle_y - PT::knee_y},      // shin
      {11, 12, 2 * PT::hip_half, 0.0},              // pelvis
      {5, 6, 2 * PT::shoulder_half, 0.0},           // shoulders
  };
  double worst = 0.0;
  for (const auto& track : clip.tracks) {
    for (size_t i = 0; i < track.boxes.size(); ++i) {
      if (!track.boxes[i].has_value() || !track.keypoints[i].has_value()) continue;
      const Box& b = *track.boxes[i];
      const Keypoints17& kp = *track.keypoints[i];
      for (const auto& bone : bones) {
        const double dx = (kp[static_cast<size_t>(bone.a)][0] - kp[static_cast<size_t>(bone.b)][0]) / b.h;
        const double dy = (kp[static_cast<size_t>(bone.a)][1] - kp[static_cast<size_t>(bone.b)][1]) / b.h;
        const double len = std::hypot(dx, dy);
        const double nominal = std::hypot(bone.dx * b.w / b.h, bone.dy);
        if (nominal > 1e-9) worst = std::max(worst, std::abs(len - nominal) / nominal);
      }
    }
  }
  return worst;
}

}  // namespace cse
