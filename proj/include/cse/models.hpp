#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cse/evaluation.hpp"
#include "cse/features.hpp"
#include "cse/layers.hpp"
#include "cse/model_spec.hpp"
#include "cse/train.hpp"

namespace cse {

// sized to land near the published parameter budgets (see profile targets)
constexpr int kM1GraphChannels = 16;
constexpr int kM1KernelWidth = 3;
constexpr int kM1GruHidden = 16;
constexpr double kM1DropRate = 0.5;
constexpr int kM2Hidden = 3;
constexpr int kM3Filters = 8;
constexpr int kM3KernelWidth = 3;
constexpr double kM3DropRate = 0.3;

inline int argmax2(const Tensor& s) { return s(1) > s(0) ? 1 : 0; }  // exact tie -> Not-Crossing

inline double positive_confidence(const Tensor& s) { return kernels::sigmoid(s(1)); }

/// Graph model over box-relative keypoints: graph conv, ReLU, dropout, an
/// additive skip through a 1x1 conv, per-frame flatten, GRU, FC head.
/// Accepts any window length; all parameters are length-independent.
struct M1Model {
  ParamSet ps;
  GraphConvLayer gc;
  ReluLayer relu;
  DropoutLayer drop{kM1DropRate};
  PointConvLayer skip;
  GruLayer gru;
  DenseLayer fc;

  M1Model() {
    const SkeletonGraph g = build_adjacency();
    gc.build(ps, "m1.graph", g.normalized, kM1KernelWidth, 2, kM1GraphChannels);
    skip.build(ps, "m1.skip", 2, kM1GraphChannels);
    gru.build(ps, "m1.gru", kKeypoints * kM1GraphChannels, kM1GruHidden, false);
    fc.build(ps, "m1.fc", kM1GruHidden, 2);
  }

  void init(Rng rng) {
    gc.init(ps, rng);
    skip.init(ps, rng);
    gru.init(ps, rng);
    fc.init(ps, rng);
  }

  ParamSet& params() { return ps; }

  Tensor forward(const Features& x, Mode mode, Rng* rng) {
    const Tensor& kp = x.kp;
    if (kp.rank() != 3 || kp.extent(1) != kKeypoints || kp.extent(2) != 2) {
      throw std::invalid_argument("M1: expected keypoints [T,14,2], got " + kp.shape_str());
    }
    const int T = kp.extent(0);
    Tensor a = gc.forward(ps, kp);
    Tensor d = drop.forward(relu.forward(a), mode, rng);
    Tensor s = skip.forward(ps, kp);
    for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    Tensor h = gru.forward(ps, d.reshaped({T, kKeypoints * kM1GraphChannels}));
    return fc.forward(ps, h);
  }

  void backward(const Tensor& g) {
    Tensor gh = fc.backward(ps, g);
    const Tensor gf = gru.backward(ps, gh);
    const int T = gf.extent(0);
    Tensor gm = gf.reshaped({T, kKeypoints, kM1GraphChannels});
    skip.backward(ps, gm);
    gc.backward(ps, relu.backward(drop.backward(gm)));
  }

  static ModelSpec spec() {
    ModelSpec s;
    s.name = "M1";
    s.input_desc = "keypoints[32x14x2]";
    const int elems = kWindowFrames * kKeypoints * kM1GraphChannels;
    s.layers = {LayerSpec::graph_conv(kWindowFrames, kKeypoints, kM1KernelWidth, 2, kM1GraphChannels),
                LayerSpec::relu(elems),
                LayerSpec::dropout(kM1DropRate, elems),
                LayerSpec::conv_point(kWindowFrames * kKeypoints, 2, kM1GraphChannels),
                LayerSpec::flatten(),
                LayerSpec::gru(kKeypoints * kM1GraphChannels, kM1GruHidden, kWindowFrames),
                LayerSpec::dense(kM1GruHidden, 2)};
    return s;
  }
};

/// Stacked GRUs over the time-series context channels; the second GRU's last
/// hidden state is concatenated with the categorical channels before the FC
/// head.
struct M2Model {
  ParamSet ps;
  GruLayer gru_a;
  GruLayer gru_b;
  DenseLayer fc;

  M2Model() {
    gru_a.build(ps, "m2.gru_a", 5, kM2Hidden, true);
    gru_b.build(ps, "m2.gru_b", kM2Hidden + 2, kM2Hidden, false);
    fc.build(ps, "m2.fc", kM2Hidden + 1 + 3, 2);
  }

  void init(Rng rng) {
    gru_a.init(ps, rng);
    gru_b.init(ps, rng);
    fc.init(ps, rng);
  }

  ParamSet& params() { return ps; }

  Tensor forward(const Features& x, Mode, Rng*) {
    if (x.data1.rank() != 2 || x.data1.extent(1) != 5 || x.data2.extent(1) != 2 ||
        x.data1.extent(0) != x.data2.extent(0)) {
      throw std::invalid_argument("M2: expected data1 [T,5] and data2 [T,2]");
    }
    const int T = x.data1.extent(0);
    Tensor ha = gru_a.forward(ps, x.data1);  // [T,3]
    Tensor cat({T, kM2Hidden + 2});
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < kM2Hidden; ++j) cat(t, j) = ha(t, j);
      cat(t, kM2Hidden) = x.data2(t, 0);
      cat(t, kM2Hidden + 1) = x.data2(t, 1);
    }
    Tensor hb = gru_b.forward(ps, cat);  // [3]
    Tensor z({kM2Hidden + 4});
    for (int j = 0; j < kM2Hidden; ++j) z(j) = hb(j);
    z(kM2Hidden) = x.data3;
    for (int j = 0; j < 3; ++j) z(kM2Hidden + 1 + j) = x.data4(j);
    return fc.forward(ps, z);
  }

  void backward(const Tensor& g) {
    Tensor gz = fc.backward(ps, g);
    Tensor ghb({kM2Hidden});
    for (int j = 0; j < kM2Hidden; ++j) ghb(j) = gz(j);
    Tensor gcat = gru_b.backward(ps, ghb);
    const int T = gcat.extent(0);
    Tensor gha({T, kM2Hidden});
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < kM2Hidden; ++j) gha(t, j) = gcat(t, j);
    }
    gru_a.backward(ps, gha);
  }

  static ModelSpec spec() {
    ModelSpec s;
    s.name = "M2";
    s.input_desc = "speed[32x5]+light[32x2]+intersection[1]+road[3]";
    s.layers = {LayerSpec::gru(5, kM2Hidden, kWindowFrames),
                LayerSpec::gru(kM2Hidden + 2, kM2Hidden, kWindowFrames),
                LayerSpec::dense(kM2Hidden + 4, 2)};
    return s;
  }
};

/// Three-layer 1D-CNN over the 5-feature trajectory window.
struct M3Model {
  ParamSet ps;
  Conv1dLayer conv;
  ReluLayer relu;
  DropoutLayer drop{kM3DropRate};
  DenseLayer fc;

  M3Model() {
    conv.build(ps, "m3.conv", kM3KernelWidth, 5, kM3Filters);
    fc.build(ps, "m3.fc", kWindowFrames * kM3Filters, 2);
  }

  void init(Rng rng) {
    conv.init(ps, rng);
    fc.init(ps, rng);
  }

  ParamSet& params() { return ps; }

  Tensor forward(const Features& x, Mode mode, Rng* rng) {
    if (x.traj.rank() != 2 || x.traj.extent(0) != kWindowFrames || x.traj.extent(1) != 5) {
      throw std::invalid_argument("M3: expected trajectory [32,5], got " + x.traj.shape_str());
    }
    Tensor c = conv.forward(ps, x.traj);
    Tensor d = drop.forward(relu.forward(c), mode, rng);
    return fc.forward(ps, d.reshaped({kWindowFrames * kM3Filters}));
  }

  void backward(const Tensor& g) {
    Tensor gd = fc.backward(ps, g).reshaped({kWindowFrames, kM3Filters});
    conv.backward(ps, relu.backward(drop.backward(gd)));
  }

  static ModelSpec spec() {
    ModelSpec s;
    s.name = "M3";
    s.input_desc = "trajectory[32x5]";
    const int elems = kWindowFrames * kM3Filters;
    s.layers = {LayerSpec::conv1d(kWindowFrames, kM3KernelWidth, 5, kM3Filters), LayerSpec::relu(elems),
                LayerSpec::dropout(kM3DropRate, elems), LayerSpec::flatten(),
                LayerSpec::dense(kWindowFrames * kM3Filters, 2)};
    return s;
  }
};

/// The stacking classifier: one dense map from the concatenated member S
/// vectors to 2 outputs.
struct MetaModel {
  ParamSet ps;
  DenseLayer fc;
  int member_count = 0;

  explicit MetaModel(int members = 3) : member_count(members) {
    if (members < 1) throw std::invalid_argument("MetaModel: need at least one member");
    fc.build(ps, "cse.fc", 2 * members, 2);
  }

  void init(Rng rng) { fc.init(ps, rng); }
  ParamSet& params() { return ps; }

  Tensor forward(const Tensor& s_concat, Mode, Rng*) {
    if (s_concat.rank() != 1 || s_concat.extent(0) != 2 * member_count) {
      throw std::invalid_argument("MetaModel: expected " + std::to_string(2 * member_count) +
                                  " stacked features, got " + s_concat.shape_str());
    }
    return fc.forward(ps, s_concat);
  }

  void backward(const Tensor& g) { fc.backward(ps, g); }

  static ModelSpec spec(int members) {
    ModelSpec s;
    s.name = "CSE-head";
    s.input_desc = "stacked S[" + std::to_string(2 * members) + "]";
    s.layers = {LayerSpec::dense(2 * members, 2), LayerSpec::sigmoid(2)};
    return s;
  }
};

// ---------------------------------------------------------------------------
// runtime member selection

enum class MemberId { M1 = 0, M2 = 1, M3 = 2 };

inline const char* member_name(MemberId m) {
  switch (m) {
    case MemberId::M1: return "M1";
    case MemberId::M2: return "M2";
    case MemberId::M3: return "M3";
  }
  return "?";
}

inline MemberId member_from_string(const std::string& s) {
  if (s == "M1" || s == "m1") return MemberId::M1;
  if (s == "M2" || s == "m2") return MemberId::M2;
  if (s == "M3" || s == "m3") return MemberId::M3;
  throw std::invalid_argument("unknown member '" + s + "' (expected one of {M1, M2, M3})");
}

inline ModelSpec member_spec(MemberId m) {
  switch (m) {
    case MemberId::M1: return M1Model::spec();
    case MemberId::M2: return M2Model::spec();
    case MemberId::M3: return M3Model::spec();
  }
  throw std::invalid_argument("member_spec: bad member");
}

/// Value-semantic wrapper so the generic training machinery works on a
/// runtime-chosen member.
struct AnyMember {
  std::variant<M1Model, M2Model, M3Model> v;

  explicit AnyMember(MemberId id) {
    switch (id) {
      case MemberId::M1: v = M1Model{}; break;
      case MemberId::M2: v = M2Model{}; break;
      case MemberId::M3: v = M3Model{}; break;
    }
  }

  void init(const Rng& rng) {
    std::visit([&](auto& m) { m.init(rng); }, v);
  }
  ParamSet& params() {
    return std::visit([](auto& m) -> ParamSet& { return m.params(); }, v);
  }
  Tensor forward(const Features& x, Mode mode, Rng* rng) {
    return std::visit([&](auto& m) { return m.forward(x, mode, rng); }, v);
  }
  void backward(const Tensor& g) {
    std::visit([&](auto& m) { m.backward(g); }, v);
  }
};

// ---------------------------------------------------------------------------
// fold training

struct MemberTrainResult {
  MemberId member = MemberId::M1;
  int fold = -1;
  ParamSet params;
  FitResult fit;
  std::vector<SegmentId> val_ids;
  std::vector<Tensor> val_scores;  // pre-sigmoid S vectors, aligned with val_ids
  MetricsReport val_metrics;
};

/// Deterministic stream id for (member, fold); refits use fold = -1.
inline uint64_t member_stream(MemberId m, int fold) {
  return (static_cast<uint64_t>(m) + 1) * 0x10000ULL + static_cast<uint64_t>(fold + 1);
}

/// Trains one member on one fold and returns its out-of-fold S scores on the
/// fold's validation block.
inline MemberTrainResult train_member(MemberId id, const std::vector<const Features*>& train,
                                      const std::vector<const Features*>& val, const TrainRecipe& recipe,
                                      uint64_t seed, int fold) {
  MemberTrainResult out;
  out.member = id;
  out.fold = fold;

  AnyMember model(id);
  const Rng stream(seed, member_stream(id, fold));
  model.init(stream.substream(0));

  std::vector<int> train_y, val_y;
  train_y.reserve(train.size());
  for (const auto* f : train) train_y.push_back(f->label);
  val_y.reserve(val.size());
  for (const auto* f : val) val_y.push_back(f->label);

  out.fit = fit_model(model, train, train_y, val, val_y, recipe, stream);
  out.params = model.params();

  std::vector<int> preds;
  std::vector<double> confs;
  for (const auto* f : val) {
    Tensor s = model.forward(*f, Mode::eval, nullptr);
    preds.push_back(argmax2(s));
    confs.push_back(positive_confidence(s));
    out.val_ids.push_back(f->id);
    out.val_scores.push_back(std::move(s));
  }
  if (!val.empty()) out.val_metrics = evaluate_predictions(val_y, preds, confs);
  return out;
}

}  // namespace cse
