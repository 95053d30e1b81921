#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "cse/dataset.hpp"

using namespace cse;

namespace {

// A fully-present track covering all frames of the clip.
PedestrianTrack make_track(const std::string& id, SourceLabel label, int frames, double x0 = 100.0) {
  PedestrianTrack t;
  t.ped_id = id;
  t.label = label;
  t.at_intersection = label == SourceLabel::crossing;
  for (int i = 0; i < frames; ++i) {
    t.boxes.emplace_back(Box{x0 + i, 200.0, 40.0, 120.0});
    Keypoints17 k;
    for (int p = 0; p < kRawKeypoints; ++p) {
      k[static_cast<size_t>(p)] = {x0 + i + p, 200.0 + 2 * p};
    }
    t.keypoints.emplace_back(k);
  }
  return t;
}

AnnotatedClip make_clip(const std::string& id, int frames, const std::vector<std::pair<std::string, SourceLabel>>& peds) {
  AnnotatedClip c;
  c.clip_id = id;
  c.frame_w = 640;
  c.frame_h = 480;
  c.road_type = RoadType::street;
  for (int i = 0; i < frames; ++i) {
    c.frames.push_back(FrameContext{i % 2 == 0 ? SpeedCat::slow : SpeedCat::stopped,
                                    i % 3 == 0 ? LightState::red : LightState::none});
  }
  for (const auto& [pid, label] : peds) c.tracks.push_back(make_track(pid, label, frames));
  return c;
}

std::vector<Segment> synth_segments(int pos, int neg) {
  std::vector<Segment> out;
  std::vector<AnnotatedClip> clips;
  for (int i = 0; i < pos; ++i) {
    clips.push_back(make_clip("p" + std::to_string(i), 32, {{"a", SourceLabel::crossing}}));
  }
  for (int i = 0; i < neg; ++i) {
    clips.push_back(make_clip("n" + std::to_string(i), 32, {{"a", SourceLabel::not_crossing}}));
  }
  for (const auto& c : clips) {
    for (auto& s : segment_windows(c)) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("parse empty corpus") {
  std::istringstream is("");
  auto clips = parse_annotations(is);
  CHECK(clips.empty());
  auto s = summarize(clips);
  CHECK(s.clips == 0);
  CHECK(s.tracks == 0);
  CHECK(s.frames == 0);
}

TEST_CASE("corpus roundtrip preserves counts and content") {
  std::vector<AnnotatedClip> clips;
  clips.push_back(make_clip("c1", 40, {{"p1", SourceLabel::crossing}, {"p2", SourceLabel::irrelevant}}));
  clips.push_back(make_clip("c2", 35, {{"p1", SourceLabel::not_crossing}}));
  // punch some holes so optional fields are exercised
  clips[0].tracks[0].boxes[5] = std::nullopt;
  clips[0].tracks[0].keypoints[6] = std::nullopt;

  std::ostringstream os;
  serialize_annotations(clips, os);
  std::istringstream is(os.str());
  auto parsed = parse_annotations(is);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed == clips);

  auto s = summarize(parsed);
  CHECK(s.clips == 2);
  CHECK(s.tracks == 3);
  CHECK(s.frames == 75);
  CHECK(s.label_counts.at("crossing") == 1);

  // serialize -> parse -> serialize is byte-stable
  std::ostringstream os2;
  serialize_annotations(parsed, os2);
  CHECK(os.str() == os2.str());
}

TEST_CASE("parse rejects unknown enum values with the allowed set") {
  std::istringstream is(
      R"({"clip_id":"c","frame_w":10,"frame_h":10,"road_type":"street","frames":[{"speed":"warp","light":"none"}],"tracks":[]})");
  CHECK_THROWS_WITH(parse_annotations(is),
                    Catch::Matchers::ContainsSubstring("warp") &&
                        Catch::Matchers::ContainsSubstring("stopped, slow, fast, accelerating, decelerating") &&
                        Catch::Matchers::ContainsSubstring("line 1"));
}

TEST_CASE("parse rejects malformed records with a line locator") {
  std::istringstream is("\n{not json}\n");
  CHECK_THROWS_WITH(parse_annotations(is), Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("binarize_label") {
  CHECK(binarize_label(SourceLabel::crossing) == 1);
  CHECK(binarize_label(SourceLabel::not_crossing) == 0);
  CHECK(binarize_label(SourceLabel::irrelevant) == 0);
  CHECK_THROWS_WITH(label_from_string("jaywalking"), Catch::Matchers::ContainsSubstring("crossing"));
}

TEST_CASE("segment_windows tiling arithmetic") {
  auto c64 = make_clip("c", 64, {{"p1", SourceLabel::crossing}});
  CHECK(segment_windows(c64, 32).size() == 2);
  CHECK(segment_windows(c64, 16).size() == 3);  // (64-32)/16 + 1

  auto c31 = make_clip("s", 31, {{"p1", SourceLabel::crossing}});
  WindowStats stats;
  CHECK(segment_windows(c31, 32, &stats).empty());
  REQUIRE(stats.warnings.size() == 1);
  CHECK_THAT(stats.warnings[0], Catch::Matchers::ContainsSubstring("below the 32-frame window"));

  // two pedestrians -> twice the segments
  auto c2 = make_clip("d", 96, {{"p1", SourceLabel::crossing}, {"p2", SourceLabel::not_crossing}});
  CHECK(segment_windows(c2, 32).size() == 6);
}

TEST_CASE("segment_windows presence threshold and imputation") {
  auto clip = make_clip("c", 32, {{"p1", SourceLabel::crossing}});
  auto& track = clip.tracks[0];
  // 9 missing of 32 -> 23 present < 24 -> dropped
  for (int i = 0; i < 9; ++i) track.boxes[static_cast<size_t>(i)] = std::nullopt;
  WindowStats stats;
  CHECK(segment_windows(clip, 32, &stats).empty());
  CHECK(stats.dropped_low_presence == 1);

  // 8 missing of 32 -> exactly 75% -> kept, head backfilled from frame 8
  auto clip2 = make_clip("c2", 32, {{"p1", SourceLabel::crossing}});
  for (int i = 0; i < 8; ++i) clip2.tracks[0].boxes[static_cast<size_t>(i)] = std::nullopt;
  auto segs = segment_windows(clip2, 32);
  REQUIRE(segs.size() == 1);
  const Box expect = *clip2.tracks[0].boxes[8];
  for (int i = 0; i < 8; ++i) CHECK(segs[0].boxes[static_cast<size_t>(i)] == expect);

  // interior gap carries the last observation forward
  auto clip3 = make_clip("c3", 32, {{"p1", SourceLabel::crossing}});
  clip3.tracks[0].boxes[10] = std::nullopt;
  auto segs3 = segment_windows(clip3, 32);
  REQUIRE(segs3.size() == 1);
  CHECK(segs3[0].boxes[10] == *clip3.tracks[0].boxes[9]);
}

TEST_CASE("segment count matches floor(present_span/32) on fully-present fixtures") {
  for (int frames : {32, 63, 64, 100, 129}) {
    auto c = make_clip("c", frames, {{"p1", SourceLabel::crossing}});
    CHECK(segment_windows(c, 32).size() == static_cast<size_t>(frames / 32));
  }
}

TEST_CASE("stratified folds balance classes") {
  auto segs = synth_segments(10, 10);
  FoldPlan plan = stratified_kfold(segs, 5, 1);
  std::map<SegmentId, int> label_of;
  for (const auto& s : segs) label_of[s.id] = s.label();
  for (const auto& fold : plan.folds) {
    int pos = 0, neg = 0;
    for (const auto& id : fold.val) (label_of[id] == 1 ? pos : neg)++;
    CHECK(pos == 2);
    CHECK(neg == 2);
    CHECK(fold.train.size() + fold.val.size() == segs.size());
  }

  auto segs2 = synth_segments(11, 10);
  FoldPlan plan2 = stratified_kfold(segs2, 5, 1);
  std::map<SegmentId, int> label2;
  for (const auto& s : segs2) label2[s.id] = s.label();
  int lo = 100, hi = 0;
  size_t covered = 0;
  for (const auto& fold : plan2.folds) {
    int pos = 0;
    for (const auto& id : fold.val) pos += label2[id];
    lo = std::min(lo, pos);
    hi = std::max(hi, pos);
    covered += fold.val.size();
  }
  CHECK(hi - lo <= 1);
  CHECK(covered == segs2.size());
}

TEST_CASE("stratified folds are deterministic and keep groups together") {
  auto segs = synth_segments(10, 12);
  FoldPlan a = stratified_kfold(segs, 5, 1);
  FoldPlan b = stratified_kfold(segs, 5, 1);
  for (int f = 0; f < 5; ++f) {
    CHECK(a.folds[static_cast<size_t>(f)].val == b.folds[static_cast<size_t>(f)].val);
    CHECK(a.folds[static_cast<size_t>(f)].train == b.folds[static_cast<size_t>(f)].train);
  }

  // multi-segment pedestrians never straddle folds
  std::vector<Segment> multi;
  for (int i = 0; i < 12; ++i) {
    auto c = make_clip("m" + std::to_string(i), 64,
                       {{"a", i % 2 == 0 ? SourceLabel::crossing : SourceLabel::not_crossing}});
    for (auto& s : segment_windows(c)) multi.push_back(std::move(s));
  }
  FoldPlan plan = stratified_kfold(multi, 5, 3);
  for (const auto& fold : plan.folds) {
    std::set<std::string> val_groups;
    for (const auto& id : fold.val) val_groups.insert(id.group());
    for (const auto& id : fold.train) CHECK(val_groups.count(id.group()) == 0);
  }
}

TEST_CASE("stratified folds reject thin classes") {
  auto segs = synth_segments(4, 10);
  CHECK_THROWS_WITH(stratified_kfold(segs, 5, 1), Catch::Matchers::ContainsSubstring("4 positive"));
}

TEST_CASE("balanced folds keep all positives and sample distinct negatives") {
  auto segs = synth_segments(5, 50);
  FoldPlan plan = balanced_kfold(segs, 5, 7);
  std::map<SegmentId, int> label_of;
  for (const auto& s : segs) label_of[s.id] = s.label();
  for (const auto& fold : plan.folds) {
    size_t pos = 0;
    std::set<SegmentId> negs;
    for (const auto& id : fold.train) {
      if (label_of[id] == 1) {
        ++pos;
      } else {
        negs.insert(id);
      }
    }
    CHECK(pos == 5);
    CHECK(negs.size() == 5);  // distinct by construction of the set
    size_t neg_count = fold.train.size() - pos;
    CHECK(neg_count == negs.size());
    // validation never shares a clip with the fold's training pool
    std::set<std::string> train_clips;
    for (const auto& id : fold.train) train_clips.insert(id.clip_id);
    for (const auto& id : fold.val) CHECK(train_clips.count(id.clip_id) == 0);
  }

  CHECK_THROWS_WITH(balanced_kfold(synth_segments(5, 4), 5, 7),
                    Catch::Matchers::ContainsSubstring("negatives < 5 positives"));
}

TEST_CASE("balanced oof plan keeps disjoint validation cover with balanced training pools") {
  auto segs = synth_segments(10, 40);
  FoldPlan plan = balanced_oof_plan(segs, 5, 2);
  std::map<SegmentId, int> label_of;
  for (const auto& s : segs) label_of[s.id] = s.label();
  std::set<SegmentId> seen;
  for (const auto& fold : plan.folds) {
    size_t pos = 0, neg = 0;
    for (const auto& id : fold.train) (label_of[id] == 1 ? pos : neg)++;
    CHECK(pos == neg);
    std::set<SegmentId> train(fold.train.begin(), fold.train.end());
    for (const auto& id : fold.val) {
      CHECK(train.count(id) == 0);
      CHECK(seen.insert(id).second);  // validation blocks are disjoint
    }
  }
  size_t covered = 0;
  for (const auto& fold : plan.folds) covered += fold.val.size();
  CHECK(covered == segs.size());
}

TEST_CASE("train_test_split partitions by clip") {
  std::vector<AnnotatedClip> clips;
  for (int i = 0; i < 4; ++i) {
    clips.push_back(make_clip("c" + std::to_string(i), 64, {{"p", SourceLabel::crossing}}));
  }
  auto segs = segment_corpus(clips);
  REQUIRE(segs.size() == 8);

  SplitFile split;
  split.train = {"c0", "c1"};
  split.val = {"c2"};
  split.test = {"c3"};
  auto ps = train_test_split(segs, split, clips);
  CHECK(ps.pool.size() == 6);
  CHECK(ps.test.size() == 2);
  for (const auto& s : ps.pool) CHECK(s.id.clip_id != "c3");

  SplitFile all_test;
  all_test.test = {"c0", "c1", "c2", "c3"};
  auto ps2 = train_test_split(segs, all_test, clips);
  CHECK(ps2.pool.empty());
  CHECK(ps2.test.size() == 8);

  SplitFile missing;
  missing.train = {"c0", "c1", "cX"};
  missing.test = {"c2", "c3"};
  CHECK_THROWS_WITH(train_test_split(segs, missing, clips), Catch::Matchers::ContainsSubstring("cX"));

  SplitFile partial;
  partial.train = {"c0"};
  partial.test = {"c3"};
  CHECK_THROWS_WITH(train_test_split(segs, partial, clips), Catch::Matchers::ContainsSubstring("missing from the split"));
}
