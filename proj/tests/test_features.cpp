#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "cse/features.hpp"
#include "cse/rng.hpp"

using namespace cse;

namespace {

Tensor raw17(const std::array<std::array<double, 2>, 17>& pts) {
  Tensor t({17, 2});
  for (int p = 0; p < 17; ++p) {
    t(p, 0) = pts[static_cast<size_t>(p)][0];
    t(p, 1) = pts[static_cast<size_t>(p)][1];
  }
  return t;
}

Segment static_segment() {
  Segment seg;
  seg.id = {"c", "p", 1};
  seg.frame_w = 640;
  seg.frame_h = 480;
  seg.road = RoadType::parking_lot;
  seg.at_intersection = true;
  seg.source = SourceLabel::crossing;
  seg.keypoints = Tensor({kWindowFrames, 17, 2});
  for (int t = 0; t < kWindowFrames; ++t) {
    seg.boxes.push_back(Box{270, 140, 100, 200});
    seg.ctx.push_back(FrameContext{SpeedCat::slow, LightState::none});
    for (int p = 0; p < 17; ++p) {
      seg.keypoints(t, p, 0) = 280 + p;
      seg.keypoints(t, p, 1) = 150 + 3 * p;
    }
  }
  return seg;
}

}  // namespace

TEST_CASE("reduce_keypoints merges head and thorax") {
  std::array<std::array<double, 2>, 17> pts{};
  for (int p = 0; p < 17; ++p) pts[static_cast<size_t>(p)] = {double(p), double(2 * p)};
  pts[kNose] = {10, 10};
  pts[kLEye] = {10, 10};
  pts[kREye] = {10, 10};
  pts[kLShoulder] = {0, 0};
  pts[kRShoulder] = {4, 0};

  Tensor out = reduce_keypoints(raw17(pts));
  REQUIRE(out.shape() == std::vector<int>{14, 2});
  CHECK(out(kHead, 0) == 10.0);
  CHECK(out(kHead, 1) == 10.0);
  CHECK(out(kThorax, 0) == 2.0);
  CHECK(out(kThorax, 1) == 0.0);

  // hand oracle for the full mapping
  CHECK(out(kLEar, 0) == pts[kLEar17][0]);
  CHECK(out(kREar, 1) == pts[kREar17][1]);
  CHECK(out(kLElbow, 0) == pts[kLElbow17][0]);
  CHECK(out(kRWrist, 1) == pts[kRWrist17][1]);
  CHECK(out(kLHip, 0) == pts[kLHip17][0]);
  CHECK(out(kRKnee, 0) == pts[kRKnee17][0]);
  CHECK(out(kLAnkle, 1) == pts[kLAnkle17][1]);
  CHECK(out(kRAnkle, 0) == pts[kRAnkle17][0]);

  CHECK_THROWS_WITH(reduce_keypoints(Tensor({16, 2})), Catch::Matchers::ContainsSubstring("17"));
}

TEST_CASE("reduce_keypoints general fixture matches hand averaging") {
  std::array<std::array<double, 2>, 17> pts{};
  Rng rng(5, 0);
  for (auto& p : pts) p = {rng.uniform(0, 100), rng.uniform(0, 100)};
  Tensor out = reduce_keypoints(raw17(pts));
  for (int c = 0; c < 2; ++c) {
    const double head = (pts[kNose][c] + pts[kLEye][c] + pts[kREye][c]) / 3.0;
    const double thorax = (pts[kLShoulder][c] + pts[kRShoulder][c]) / 2.0;
    CHECK(std::abs(out(kHead, c) - head) < 1e-12);
    CHECK(std::abs(out(kThorax, c) - thorax) < 1e-12);
  }
}

TEST_CASE("reduce_keypoints is translation equivariant") {
  Rng rng(9, 0);
  std::array<std::array<double, 2>, 17> pts{};
  for (auto& p : pts) p = {rng.uniform(0, 50), rng.uniform(0, 50)};
  auto shifted = pts;
  for (auto& p : shifted) {
    p[0] += 13.5;
    p[1] -= 4.25;
  }
  Tensor a = reduce_keypoints(raw17(pts));
  Tensor b = reduce_keypoints(raw17(shifted));
  for (int k = 0; k < 14; ++k) {
    CHECK(std::abs(b(k, 0) - a(k, 0) - 13.5) < 1e-12);
    CHECK(std::abs(b(k, 1) - a(k, 1) + 4.25) < 1e-12);
  }
}

TEST_CASE("skeleton adjacency has 13 symmetric edges and no isolated node") {
  SkeletonGraph g = build_adjacency();
  int ones = 0;
  for (int i = 0; i < 14; ++i) {
    CHECK(g.adjacency(i, i) == 0.0);
    int degree = 0;
    for (int j = 0; j < 14; ++j) {
      CHECK(g.adjacency(i, j) == g.adjacency(j, i));
      if (g.adjacency(i, j) == 1.0) {
        ++ones;
        ++degree;
      }
    }
    CHECK(degree >= 1);
  }
  CHECK(ones == 26);  // 2 x 13 edges
}

TEST_CASE("normalize_adjacency matches the 2-node identity") {
  Tensor a = Tensor::from({2, 2}, {0, 1, 1, 0});
  Tensor n = normalize_adjacency(a);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(n(i, j) == Catch::Approx(0.5).margin(1e-15));
  }
  // regular graph with self loops: every row sums to 1
  double row = n(0, 0) + n(0, 1);
  CHECK(row == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("normalized skeleton adjacency is symmetric, nonnegative, contractive") {
  SkeletonGraph g = build_adjacency();
  for (int i = 0; i < 14; ++i) {
    for (int j = 0; j < 14; ++j) {
      CHECK(g.normalized(i, j) >= 0.0);
      CHECK(g.normalized(i, j) == Catch::Approx(g.normalized(j, i)).margin(1e-15));
    }
  }
  // spectral radius via power iteration
  std::vector<double> v(14, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> w(14, 0.0);
    for (int i = 0; i < 14; ++i) {
      for (int j = 0; j < 14; ++j) w[static_cast<size_t>(i)] += g.normalized(i, j) * v[static_cast<size_t>(j)];
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : w) x /= norm;
    lambda = norm;
    v = w;
  }
  CHECK(lambda <= 1.0 + 1e-9);
}

TEST_CASE("keypoint sequence normalizes to the box and clamps strays") {
  Segment seg = static_segment();
  // place the nose exactly at the box corner and one ankle outside
  for (int t = 0; t < kWindowFrames; ++t) {
    for (int p : {kNose, kLEye, kREye}) {
      seg.keypoints(t, p, 0) = 270;
      seg.keypoints(t, p, 1) = 140;
    }
    seg.keypoints(t, kRAnkle17, 0) = 270 + 100;  // x+W -> 1.0 exactly
    seg.keypoints(t, kRAnkle17, 1) = 140 + 200 + 50;  // below the box -> clamped
  }
  KeypointSequence ks = keypoint_sequence(seg);
  REQUIRE(ks.values.shape() == std::vector<int>{32, 14, 2});
  CHECK(ks.values(0, kHead, 0) == 0.0);
  CHECK(ks.values(0, kHead, 1) == 0.0);
  CHECK(ks.values(0, kRAnkle, 0) == 1.0);
  CHECK(ks.values(0, kRAnkle, 1) == 1.0);
  CHECK(ks.clamped == kWindowFrames);  // one clamped coordinate per frame
  for (double v : ks.values.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("trajectory of a static box") {
  Segment seg = static_segment();  // box 100x200 centered at (320,240) in 640x480
  TrajectoryVector tv = trajectory_features(seg.boxes, seg.frame_w, seg.frame_h);
  const double z = 20000.0 / 307200.0;
  for (int t = 0; t < kWindowFrames; ++t) {
    CHECK(tv.values(t, 0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(tv.values(t, 1) == Catch::Approx(0.5).margin(1e-12));
    CHECK(tv.values(t, 2) == Catch::Approx(z).margin(1e-12));
    CHECK(tv.values(t, 3) == 0.0);
    CHECK(tv.values(t, 4) == 0.0);
  }
  CHECK(z == Catch::Approx(0.0651).margin(5e-5));
}

TEST_CASE("trajectory of full-frame and moving boxes") {
  std::vector<Box> full(kWindowFrames, Box{0, 0, 640, 480});
  TrajectoryVector tv = trajectory_features(full, 640, 480);
  CHECK(tv.values(5, 0) == 0.5);
  CHECK(tv.values(5, 1) == 0.5);
  CHECK(tv.values(5, 2) == 1.0);

  // 6.4 px/frame horizontal motion in a 640-wide frame -> speed 0.01/frame
  std::vector<Box> moving;
  for (int t = 0; t < kWindowFrames; ++t) moving.push_back(Box{100 + 6.4 * t, 200, 50, 100});
  TrajectoryVector mv = trajectory_features(moving, 640, 480);
  CHECK(mv.values(0, 4) == 0.0);
  for (int t = 1; t < kWindowFrames; ++t) CHECK(mv.values(t, 4) == Catch::Approx(0.01).margin(1e-12));

  CHECK_THROWS_WITH(trajectory_features(moving, 0, 480), Catch::Matchers::ContainsSubstring("positive"));
}

TEST_CASE("context encoding uses fixed category orders") {
  CHECK(one_hot_speed(SpeedCat::slow).values() == std::vector<double>{0, 1, 0, 0, 0});
  CHECK(one_hot_light(LightState::none).values() == std::vector<double>{0, 0});
  CHECK(one_hot_light(LightState::red).values() == std::vector<double>{1, 0});
  CHECK(one_hot_light(LightState::green).values() == std::vector<double>{0, 1});
  CHECK(one_hot_road(RoadType::parking_lot).values() == std::vector<double>{0, 1, 0});

  Segment seg = static_segment();
  seg.ctx[3].speed = SpeedCat::decelerating;
  seg.ctx[3].light = LightState::green;
  ContextChannels c = encode_context(seg);
  REQUIRE(c.data1.shape() == std::vector<int>{32, 5});
  REQUIRE(c.data2.shape() == std::vector<int>{32, 2});
  for (int t = 0; t < kWindowFrames; ++t) {
    double row1 = 0, row2 = 0;
    for (int j = 0; j < 5; ++j) row1 += c.data1(t, j);
    for (int j = 0; j < 2; ++j) row2 += c.data2(t, j);
    CHECK(row1 == 1.0);
    CHECK(row2 == (t == 3 ? 1.0 : 0.0));  // light 'none' rows are all-zero
  }
  CHECK(c.data1(3, 4) == 1.0);
  CHECK(c.data2(3, 1) == 1.0);
  CHECK(c.data3 == 1.0);
  CHECK(c.data4.values() == std::vector<double>{0, 1, 0});
}

TEST_CASE("feature cache round-trips and enforces schema version") {
  Segment seg = static_segment();
  std::vector<Features> feats = featurize({seg});
  REQUIRE(feats.size() == 1);

  const std::string path = std::filesystem::temp_directory_path() / "cse_feature_cache_test.txt";
  save_feature_cache(feats, path);
  auto loaded = load_feature_cache(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].id == feats[0].id);
  CHECK(loaded[0].kp == feats[0].kp);
  CHECK(loaded[0].data1 == feats[0].data1);
  CHECK(loaded[0].data2 == feats[0].data2);
  CHECK(loaded[0].data3 == feats[0].data3);
  CHECK(loaded[0].data4 == feats[0].data4);
  CHECK(loaded[0].traj == feats[0].traj);
  CHECK(loaded[0].label == 1);
  CHECK(loaded[0].source == SourceLabel::crossing);

  // stale schema versions are rejected with a pointer at featurize
  NamedTensorFile f = NamedTensorFile::load_file(path);
  f.meta[0].second = "0";
  f.save_file(path);
  CHECK_THROWS_WITH(load_feature_cache(path), Catch::Matchers::ContainsSubstring("schema version"));
  std::filesystem::remove(path);
}
