#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cse/checkpoint.hpp"
#include "cse/dataset.hpp"
#include "cse/ensemble.hpp"
#include "cse/evaluation.hpp"
#include "cse/features.hpp"
#include "cse/models.hpp"
#include "cse/report.hpp"
#include "cse/synth.hpp"

namespace cse {

constexpr const char* kPipelineVersion = "1";

/// Everything one run needs; every stage echoes the effective config plus
/// input hashes into its artifact directory.
struct RunConfig {
  std::string out = "out";
  std::string corpus;  // defaults to <out>/synth/corpus.jsonl
  std::string split;   // defaults to <out>/synth/split.json
  std::vector<MemberId> members{MemberId::M1, MemberId::M2, MemberId::M3};
  FoldProtocol protocol = FoldProtocol::stratified;
  int k = 5;
  uint64_t seed = 1;
  int stride = kWindowFrames;
  char delim = ',';
  bool average_folds = false;
  std::string baseline = "auto";    // analyze stage
  std::string additional = "auto";  // analyze stage
  TrainRecipe recipe;
  SceneConfig scene;
  std::optional<double> rho;  // error-controlled synth mode
  double rho_noise = 0.24;    // per-channel flip probability in that mode

  std::string corpus_path() const { return corpus.empty() ? out + "/synth/corpus.jsonl" : corpus; }
  std::string split_path() const { return split.empty() ? out + "/synth/split.json" : split; }

  void validate() const {
    if (members.empty()) throw std::invalid_argument("config: member set must be non-empty");
    std::set<MemberId> uniq(members.begin(), members.end());
    if (uniq.size() != members.size()) throw std::invalid_argument("config: duplicate members");
    if (k < 2) throw std::invalid_argument("config: need at least 2 folds");
    if (stride < 1) throw std::invalid_argument("config: stride must be >= 1");
    if (out.empty()) throw std::invalid_argument("config: output directory required");
  }

  std::string echo_ini() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "version=" << kPipelineVersion << "\n";
    os << "out=" << out << "\n";
    os << "corpus=" << corpus_path() << "\n";
    os << "split=" << split_path() << "\n";
    os << "members=";
    for (size_t i = 0; i < members.size(); ++i) os << (i ? "," : "") << member_name(members[i]);
    os << "\n";
    os << "protocol=" << (protocol == FoldProtocol::stratified ? "stratified" : "balanced") << "\n";
    os << "k=" << k << "\n";
    os << "seed=" << seed << "\n";
    os << "stride=" << stride << "\n";
    os << "format=" << (delim == '\t' ? "tsv" : "csv") << "\n";
    os << "average_folds=" << (average_folds ? 1 : 0) << "\n";
    os << "baseline=" << baseline << "\n";
    os << "additional=" << additional << "\n";
    os << "[recipe]\n";
    os << "lr=" << fmt_double(recipe.adam.lr, 17) << "\n";
    os << "batch=" << recipe.batch_size << "\n";
    os << "epochs=" << recipe.max_epochs << "\n";
    os << "patience=" << recipe.patience << "\n";
    os << "[scene]\n";
    os << scene.echo().dump() << "\n";
    if (rho.has_value()) {
      os << "rho=" << fmt_double(*rho, 17) << "\n";
      os << "rho_noise=" << fmt_double(rho_noise, 17) << "\n";
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// stage plumbing

namespace stage {

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing input: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string file_hash(const std::string& path) { return hash_hex(fnv1a(read_file(path))); }

inline std::string dir(const RunConfig& cfg, const std::string& name) {
  const std::string d = cfg.out + "/" + name;
  std::filesystem::create_directories(d);
  return d;
}

/// A completed stage leaves a stamp of its config + input hashes; reruns with
/// an identical stamp and intact outputs are no-ops.
inline bool fresh(const std::string& stage_dir, const std::string& stamp,
                  const std::vector<std::string>& outputs) {
  std::ifstream is(stage_dir + "/stage.stamp");
  if (!is) return false;
  std::string existing;
  std::getline(is, existing);
  if (existing != stamp) return false;
  for (const auto& o : outputs) {
    if (!std::filesystem::exists(stage_dir + "/" + o)) return false;
  }
  return true;
}

inline void finish(const std::string& stage_dir, const std::string& stamp, const RunConfig& cfg,
                   const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  std::ostringstream echo;
  echo << cfg.echo_ini();
  echo << "[inputs]\n";
  for (const auto& [k, v] : input_hashes) echo << k << "=" << v << "\n";
  write_text_file(stage_dir + "/config_echo.ini", echo.str());
  write_text_file(stage_dir + "/stage.stamp", stamp + "\n");
}

inline std::string stamp_of(const RunConfig& cfg, const std::string& stage_name,
                            const std::vector<std::pair<std::string, std::string>>& input_hashes) {
  std::ostringstream os;
  os << stage_name << "\n" << cfg.echo_ini();
  for (const auto& [k, v] : input_hashes) os << k << "=" << v << "\n";
  return hash_hex(fnv1a(os.str()));
}

template <class F>
void parallel_for(size_t n, F&& fn) {
  const size_t workers = std::min<size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(n);
  auto run = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline SegmentId parse_segment_id(const std::string& s) {
  const size_t a = s.find('/');
  const size_t b = s.rfind('/');
  if (a == std::string::npos || b == a) throw std::runtime_error("bad segment id: " + s);
  return SegmentId{s.substr(0, a), s.substr(a + 1, b - a - 1), std::stoi(s.substr(b + 1))};
}

}  // namespace stage

/// Clip-id partition of cached features into the merged train+val pool and
/// the test set, with the same strictness as the segment-level splitter.
struct FeatureSplit {
  std::vector<Features> pool;
  std::vector<Features> test;
};

inline FeatureSplit split_features(std::vector<Features> feats, const SplitFile& split,
                                   const std::set<std::string>& corpus_clips) {
  std::set<std::string> pool_ids(split.train.begin(), split.train.end());
  pool_ids.insert(split.val.begin(), split.val.end());
  std::set<std::string> test_ids(split.test.begin(), split.test.end());
  for (const auto& id : test_ids) {
    if (pool_ids.count(id) != 0) throw std::invalid_argument("split: clip " + id + " appears in both pool and test");
  }
  for (const auto& id : pool_ids) {
    if (corpus_clips.count(id) == 0) throw std::invalid_argument("split: clip " + id + " not present in the corpus");
  }
  for (const auto& id : test_ids) {
    if (corpus_clips.count(id) == 0) throw std::invalid_argument("split: clip " + id + " not present in the corpus");
  }
  for (const auto& id : corpus_clips) {
    if (pool_ids.count(id) == 0 && test_ids.count(id) == 0) {
      throw std::invalid_argument("split: corpus clip " + id + " is missing from the split file");
    }
  }
  FeatureSplit out;
  for (auto& f : feats) {
    if (pool_ids.count(f.id.clip_id) != 0) {
      out.pool.push_back(std::move(f));
    } else {
      out.test.push_back(std::move(f));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// fold plan IO

inline void save_fold_plan(const FoldPlan& plan, const std::string& path) {
  nlohmann::ordered_json j;
  j["protocol"] = plan.protocol == FoldProtocol::stratified ? "stratified" : "balanced";
  j["seed"] = plan.seed;
  auto& folds = j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : plan.folds) {
    nlohmann::ordered_json fj;
    auto& train = fj["train"] = nlohmann::ordered_json::array();
    for (const auto& id : f.train) train.push_back(id.str());
    auto& val = fj["val"] = nlohmann::ordered_json::array();
    for (const auto& id : f.val) val.push_back(id.str());
    folds.push_back(std::move(fj));
  }
  write_text_file(path, j.dump(1) + "\n");
}

inline FoldPlan load_fold_plan(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(stage::read_file(path));
  FoldPlan plan;
  plan.protocol = j.at("protocol") == "stratified" ? FoldProtocol::stratified : FoldProtocol::balanced;
  plan.seed = j.at("seed").get<uint64_t>();
  for (const auto& fj : j.at("folds")) {
    FoldPlan::Fold f;
    for (const auto& s : fj.at("train")) f.train.push_back(stage::parse_segment_id(s.get<std::string>()));
    for (const auto& s : fj.at("val")) f.val.push_back(stage::parse_segment_id(s.get<std::string>()));
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// stages

struct SynthStage {
  bool skipped = false;
  std::string corpus_path, split_path;
  std::vector<std::string> warnings;
};

inline SynthStage run_synth(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "synth");
  const std::string stamp = stage::stamp_of(cfg, "synth", {});
  SynthStage out;
  out.corpus_path = d + "/corpus.jsonl";
  out.split_path = d + "/split.json";
  if (stage::fresh(d, stamp, {"corpus.jsonl", "split.json", "scene.json"})) {
    out.skipped = true;
    return out;
  }
  SynthResult r = cfg.rho.has_value() ? generate_error_controlled(cfg.scene, *cfg.rho, cfg.rho_noise)
                                      : generate_corpus(cfg.scene);
  serialize_annotations_file(r.clips, out.corpus_path);
  r.split.save(out.split_path);
  write_text_file(d + "/scene.json", r.echo.dump(1) + "\n");
  out.warnings = r.warnings;
  stage::finish(d, stamp, cfg, {{"corpus", stage::file_hash(out.corpus_path)}, {"split", stage::file_hash(out.split_path)}});
  return out;
}

struct IngestStage {
  bool skipped = false;
  CorpusSummary summary;
  size_t segments = 0;
  size_t segment_positives = 0;
  WindowStats window_stats;
};

inline IngestStage run_ingest(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "ingest");
  const auto corpus_hash = stage::file_hash(cfg.corpus_path());
  const std::string stamp = stage::stamp_of(cfg, "ingest", {{"corpus", corpus_hash}});
  IngestStage out;
  auto clips = parse_annotations_file(cfg.corpus_path());
  out.summary = summarize(clips);
  auto segs = segment_corpus(clips, cfg.stride, &out.window_stats);
  out.segments = segs.size();
  for (const auto& s : segs) out.segment_positives += static_cast<size_t>(s.label());
  if (stage::fresh(d, stamp, {"summary.json"})) {
    out.skipped = true;
    return out;
  }
  nlohmann::ordered_json j;
  j["clips"] = out.summary.clips;
  j["tracks"] = out.summary.tracks;
  j["frames"] = out.summary.frames;
  j["labels"] = out.summary.label_counts;
  j["segments"] = out.segments;
  j["segment_positives"] = out.segment_positives;
  j["windows_dropped_low_presence"] = out.window_stats.dropped_low_presence;
  j["windows_dropped_no_keypoints"] = out.window_stats.dropped_no_keypoints;
  j["warnings"] = out.window_stats.warnings;
  write_text_file(d + "/summary.json", j.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {{"corpus", corpus_hash}});
  return out;
}

struct FeaturizeStage {
  bool skipped = false;
  std::string cache_path;
  size_t segments = 0;
  size_t clamped = 0;
};

inline FeaturizeStage run_featurize(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "featurize");
  const auto corpus_hash = stage::file_hash(cfg.corpus_path());
  const std::string stamp = stage::stamp_of(cfg, "featurize", {{"corpus", corpus_hash}});
  FeaturizeStage out;
  out.cache_path = d + "/features.txt";
  if (stage::fresh(d, stamp, {"features.txt"})) {
    out.skipped = true;
    auto cached = load_feature_cache(out.cache_path);
    out.segments = cached.size();
    return out;
  }
  auto clips = parse_annotations_file(cfg.corpus_path());
  WindowStats stats;
  auto segs = segment_corpus(clips, cfg.stride, &stats);
  auto feats = featurize(segs);
  out.segments = feats.size();
  for (const auto& f : feats) out.clamped += static_cast<size_t>(f.clamped);
  save_feature_cache(feats, out.cache_path);
  nlohmann::ordered_json j;
  j["segments"] = out.segments;
  j["clamped_coordinates"] = out.clamped;
  j["schema_version"] = kFeatureSchemaVersion;
  write_text_file(d + "/featurize.json", j.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {{"corpus", corpus_hash}});
  return out;
}

namespace stage {

inline std::set<std::string> corpus_clip_ids(const RunConfig& cfg) {
  auto clips = parse_annotations_file(cfg.corpus_path());
  std::set<std::string> ids;
  for (const auto& c : clips) ids.insert(c.clip_id);
  return ids;
}

inline FeatureSplit load_split_features(const RunConfig& cfg) {
  const std::string cache = cfg.out + "/featurize/features.txt";
  if (!std::filesystem::exists(cache)) {
    throw std::runtime_error("feature cache not found at " + cache + "; run `featurize` first");
  }
  auto feats = load_feature_cache(cache);
  const SplitFile split = SplitFile::load(cfg.split_path());
  return split_features(std::move(feats), split, corpus_clip_ids(cfg));
}

}  // namespace stage

struct TrainStage {
  bool skipped = false;
  FoldPlan plan;
  // indexed [member][fold]
  std::vector<std::vector<MetricsReport>> val_metrics;
  std::vector<std::vector<int>> best_epochs;
};

inline TrainStage run_train(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "train");
  const auto corpus_hash = stage::file_hash(cfg.corpus_path());
  const auto split_hash = stage::file_hash(cfg.split_path());
  const std::string stamp = stage::stamp_of(cfg, "train", {{"corpus", corpus_hash}, {"split", split_hash}});

  TrainStage out;
  std::vector<std::string> outputs{"plan.json", "scores.csv", "train.json"};
  for (MemberId m : cfg.members) {
    for (int f = 0; f < cfg.k; ++f) {
      outputs.push_back(std::string("ckpt_") + member_name(m) + "_f" + std::to_string(f) + ".txt");
    }
  }
  if (stage::fresh(d, stamp, outputs)) {
    out.skipped = true;
    out.plan = load_fold_plan(d + "/plan.json");
    return out;
  }

  FeatureSplit fs = stage::load_split_features(cfg);
  if (fs.pool.empty()) throw std::runtime_error("train: empty training pool");
  std::vector<FoldItem> items;
  items.reserve(fs.pool.size());
  for (const auto& f : fs.pool) items.push_back({f.id, f.label});
  out.plan = cfg.protocol == FoldProtocol::stratified ? stratified_kfold(items, cfg.k, cfg.seed)
                                                      : balanced_oof_plan(items, cfg.k, cfg.seed);
  save_fold_plan(out.plan, d + "/plan.json");

  std::map<SegmentId, const Features*> by_id;
  for (const auto& f : fs.pool) by_id[f.id] = &f;
  auto lookup = [&](const std::vector<SegmentId>& ids) {
    std::vector<const Features*> v;
    v.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw std::runtime_error("train: fold references unknown segment " + id.str());
      v.push_back(it->second);
    }
    return v;
  };

  const size_t tasks = cfg.members.size() * static_cast<size_t>(cfg.k);
  std::vector<MemberTrainResult> results(tasks);
  stage::parallel_for(tasks, [&](size_t t) {
    const size_t mi = t / static_cast<size_t>(cfg.k);
    const int fold = static_cast<int>(t % static_cast<size_t>(cfg.k));
    const auto& f = out.plan.folds[static_cast<size_t>(fold)];
    results[t] = train_member(cfg.members[mi], lookup(f.train), lookup(f.val), cfg.recipe, cfg.seed, fold);
  });

  std::ofstream scores(d + "/scores.csv");
  scores << "member" << cfg.delim << "fold" << cfg.delim << "segment" << cfg.delim << "s0" << cfg.delim
         << "s1" << cfg.delim << "label\n";
  nlohmann::ordered_json tj;
  out.val_metrics.resize(cfg.members.size());
  out.best_epochs.resize(cfg.members.size());
  for (size_t t = 0; t < tasks; ++t) {
    const size_t mi = t / static_cast<size_t>(cfg.k);
    const auto& r = results[t];
    out.val_metrics[mi].push_back(r.val_metrics);
    out.best_epochs[mi].push_back(r.fit.best_epoch);

    NamedTensorFile ckpt = params_to_file(r.params);
    ckpt.meta.emplace_back("member", member_name(r.member));
    ckpt.meta.emplace_back("fold", std::to_string(r.fold));
    ckpt.meta.emplace_back("spec_hash", member_spec(r.member).content_hash());
    ckpt.meta.emplace_back("seed", std::to_string(cfg.seed));
    ckpt.meta.emplace_back("best_epoch", std::to_string(r.fit.best_epoch));
    ckpt.save_file(d + "/ckpt_" + std::string(member_name(r.member)) + "_f" + std::to_string(r.fold) + ".txt");

    char buf[32];
    for (size_t i = 0; i < r.val_ids.size(); ++i) {
      scores << member_name(r.member) << cfg.delim << r.fold << cfg.delim << r.val_ids[i].str() << cfg.delim;
      std::snprintf(buf, sizeof(buf), "%.17g", r.val_scores[i](0));
      scores << buf << cfg.delim;
      std::snprintf(buf, sizeof(buf), "%.17g", r.val_scores[i](1));
      scores << buf << cfg.delim << by_id.at(r.val_ids[i])->label << "\n";
    }

    nlohmann::ordered_json mj;
    mj["member"] = member_name(r.member);
    mj["fold"] = r.fold;
    mj["best_epoch"] = r.fit.best_epoch;
    mj["epochs_run"] = r.fit.epochs_run;
    mj["val_accuracy"] = r.val_metrics.accuracy;
    mj["val_f1"] = r.val_metrics.f1;
    if (r.val_metrics.auc.has_value()) {
      mj["val_auc"] = *r.val_metrics.auc;
    } else {
      mj["val_auc"] = "undefined";
    }
    tj.push_back(std::move(mj));
  }
  write_text_file(d + "/train.json", tj.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {{"corpus", corpus_hash}, {"split", split_hash}});
  return out;
}

struct StackStage {
  bool skipped = false;
  size_t oof_rows = 0;
  size_t leakage_violations = 0;
};

inline StackStage run_stack(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "stack");
  const std::string train_dir = cfg.out + "/train";
  if (!std::filesystem::exists(train_dir + "/scores.csv")) {
    throw std::runtime_error("stack: fold scores not found at " + train_dir + "/scores.csv; run `train` first");
  }
  const auto scores_hash = stage::file_hash(train_dir + "/scores.csv");
  const std::string stamp = stage::stamp_of(cfg, "stack", {{"scores", scores_hash}});
  StackStage out;
  std::vector<std::string> outputs{"oof.csv", "cse.txt", "stack.json"};
  for (MemberId m : cfg.members) outputs.push_back(std::string("refit_") + member_name(m) + ".txt");
  if (stage::fresh(d, stamp, outputs)) {
    out.skipped = true;
    return out;
  }

  const FoldPlan plan = load_fold_plan(train_dir + "/plan.json");

  // fold scores back into per-(member, fold) tables
  std::map<std::pair<std::string, int>, MemberFoldScores> tables;
  std::map<SegmentId, int> labels;
  {
    std::ifstream is(train_dir + "/scores.csv");
    std::string line;
    std::getline(is, line);  // header
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto cells = stage::split_line(line, delim);
      if (cells.size() != 6) throw std::runtime_error("stack: malformed scores row: " + line);
      const std::string member = cells[0];
      const int fold = std::stoi(cells[1]);
      const SegmentId id = stage::parse_segment_id(cells[2]);
      auto& tab = tables[{member, fold}];
      tab.member = member_from_string(member);
      tab.fold = fold;
      tab.ids.push_back(id);
      Tensor s({2});
      s(0) = std::stod(cells[3]);
      s(1) = std::stod(cells[4]);
      tab.scores.push_back(std::move(s));
      labels[id] = std::stoi(cells[5]);
    }
  }
  std::vector<MemberFoldScores> fold_scores;
  fold_scores.reserve(tables.size());
  for (auto& [k, v] : tables) fold_scores.push_back(std::move(v));

  OofFeatures oof = collect_oof(cfg.members, plan, fold_scores, labels);
  out.oof_rows = oof.size();
  out.leakage_violations = audit_oof_leakage(plan, oof);
  if (out.leakage_violations != 0) {
    throw std::runtime_error("stack: leakage audit failed with " + std::to_string(out.leakage_violations) +
                             " violations");
  }
  save_oof(oof, d + "/oof.csv", cfg.delim);

  CseClassifier clf = train_cse(oof, cfg.seed, cfg.recipe);

  // full-pool refit per member; epoch budget = mean of the member's fold best epochs
  FeatureSplit fs = stage::load_split_features(cfg);
  std::vector<const Features*> pool;
  std::vector<int> pool_y;
  for (const auto& f : fs.pool) {
    pool.push_back(&f);
    pool_y.push_back(f.label);
  }
  nlohmann::json tj = nlohmann::json::parse(stage::read_file(train_dir + "/train.json"));
  std::map<std::string, std::pair<int, int>> epoch_sum;  // member -> (sum, n)
  for (const auto& row : tj) {
    auto& e = epoch_sum[row.at("member").get<std::string>()];
    e.first += row.at("best_epoch").get<int>();
    e.second += 1;
  }

  std::vector<ParamSet> refit_results(cfg.members.size());
  stage::parallel_for(cfg.members.size(), [&](size_t mi) {
    const MemberId id = cfg.members[mi];
    AnyMember model(id);
    const Rng stream(cfg.seed, member_stream(id, -1));
    model.init(stream.substream(0));
    TrainRecipe refit = cfg.recipe;
    const auto& e = epoch_sum.at(member_name(id));
    refit.max_epochs = std::max(1, static_cast<int>(std::lround(static_cast<double>(e.first) / e.second)));
    fit_model(model, pool, pool_y, {}, {}, refit, stream);
    refit_results[mi] = model.params();
  });

  for (size_t mi = 0; mi < cfg.members.size(); ++mi) {
    NamedTensorFile ckpt = params_to_file(refit_results[mi]);
    ckpt.meta.emplace_back("member", member_name(cfg.members[mi]));
    ckpt.meta.emplace_back("fold", "refit");
    ckpt.meta.emplace_back("spec_hash", member_spec(cfg.members[mi]).content_hash());
    ckpt.save_file(d + "/refit_" + std::string(member_name(cfg.members[mi])) + ".txt");
  }

  NamedTensorFile cse_file = params_to_file(clf.meta.params());
  cse_file.meta.emplace_back("kind", "cse-classifier");
  std::ostringstream mlist;
  for (size_t i = 0; i < clf.members.size(); ++i) mlist << (i ? "," : "") << member_name(clf.members[i]);
  cse_file.meta.emplace_back("members", mlist.str());
  for (size_t i = 0; i < clf.members.size(); ++i) {
    cse_file.meta.emplace_back(std::string("hash_") + member_name(clf.members[i]), clf.member_hashes[i]);
  }
  cse_file.meta.emplace_back("inference", cfg.average_folds ? "fold-mean" : "refit");
  cse_file.save_file(d + "/cse.txt");

  nlohmann::ordered_json sj;
  sj["oof_rows"] = out.oof_rows;
  sj["leakage_violations"] = out.leakage_violations;
  sj["members"] = mlist.str();
  write_text_file(d + "/stack.json", sj.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {{"scores", scores_hash}});
  return out;
}

/// Members + meta loaded for inference. Default mode scores members with the
/// full-pool refit. The fold-mean mode runs the stack once per fold's member
/// set - the score distribution the meta was trained on - and averages the
/// meta logits.
struct CseRuntime {
  CseClassifier clf;
  std::vector<std::vector<AnyMember>> models;  // [member][1 or k]

  /// Mean member S vector across loaded variants (reported per member in the
  /// predictions table).
  Tensor member_score(size_t mi, const Features& f) {
    auto& variants = models[mi];
    Tensor sum({2});
    for (auto& m : variants) {
      Tensor s = m.forward(f, Mode::eval, nullptr);
      sum(0) += s(0);
      sum(1) += s(1);
    }
    sum(0) /= static_cast<double>(variants.size());
    sum(1) /= static_cast<double>(variants.size());
    return sum;
  }

  CsePrediction predict(const Features& f) {
    const size_t variants = models.empty() ? 0 : models[0].size();
    if (variants <= 1) {
      std::vector<Tensor> scores;
      scores.reserve(models.size());
      for (size_t mi = 0; mi < models.size(); ++mi) scores.push_back(member_score(mi, f));
      return cse_predict(clf, scores);
    }
    CsePrediction out;
    Tensor logit_sum({2});
    std::vector<double> conf_sum(models.size(), 0.0);
    for (size_t v = 0; v < variants; ++v) {
      std::vector<Tensor> scores;
      scores.reserve(models.size());
      for (size_t mi = 0; mi < models.size(); ++mi) {
        scores.push_back(models[mi][v].forward(f, Mode::eval, nullptr));
      }
      CsePrediction p = cse_predict(clf, scores);
      logit_sum(0) += p.meta_logits(0);
      logit_sum(1) += p.meta_logits(1);
      for (size_t mi = 0; mi < models.size(); ++mi) conf_sum[mi] += p.member_conf[mi];
    }
    out.meta_logits = Tensor({2});
    out.meta_logits(0) = logit_sum(0) / static_cast<double>(variants);
    out.meta_logits(1) = logit_sum(1) / static_cast<double>(variants);
    out.label = argmax2(out.meta_logits);
    out.confidence = positive_confidence(out.meta_logits);
    for (double c : conf_sum) out.member_conf.push_back(c / static_cast<double>(variants));
    return out;
  }
};

inline CseRuntime load_cse_runtime(const RunConfig& cfg) {
  const std::string stack_dir = cfg.out + "/stack";
  if (!std::filesystem::exists(stack_dir + "/cse.txt")) {
    throw std::runtime_error("eval: stacked classifier not found at " + stack_dir + "/cse.txt; run `stack` first");
  }
  CseRuntime rt;
  NamedTensorFile cse_file = NamedTensorFile::load_file(stack_dir + "/cse.txt");
  const std::string members_csv = cse_file.meta_value("members");
  for (const auto& name : stage::split_line(members_csv, ',')) {
    rt.clf.members.push_back(member_from_string(name));
  }
  rt.clf.meta = MetaModel(static_cast<int>(rt.clf.members.size()));
  params_from_file(cse_file, rt.clf.meta.params());
  for (MemberId m : rt.clf.members) {
    const std::string hash = cse_file.meta_value(std::string("hash_") + member_name(m));
    if (hash != member_spec(m).content_hash()) {
      throw std::runtime_error(std::string("eval: member ") + member_name(m) +
                               " spec hash mismatch against the stacked classifier provenance");
    }
    rt.clf.member_hashes.push_back(hash);
  }
  rt.clf.average_folds = cfg.average_folds;

  for (MemberId m : rt.clf.members) {
    std::vector<AnyMember> variants;
    if (cfg.average_folds) {
      for (int f = 0; f < cfg.k; ++f) {
        const std::string p = cfg.out + "/train/ckpt_" + member_name(m) + "_f" + std::to_string(f) + ".txt";
        AnyMember model(m);
        params_from_file(NamedTensorFile::load_file(p), model.params());
        variants.push_back(std::move(model));
      }
    } else {
      AnyMember model(m);
      params_from_file(NamedTensorFile::load_file(stack_dir + "/refit_" + std::string(member_name(m)) + ".txt"),
                       model.params());
      variants.push_back(std::move(model));
    }
    rt.models.push_back(std::move(variants));
  }
  return rt;
}

struct EvalStage {
  bool skipped = false;
  MetricsReport report;
  size_t test_segments = 0;
};

inline EvalStage run_eval(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "eval");
  const auto cse_hash = stage::file_hash(cfg.out + "/stack/cse.txt");
  const auto features_hash = stage::file_hash(cfg.out + "/featurize/features.txt");
  const std::string stamp = stage::stamp_of(cfg, "eval", {{"cse", cse_hash}, {"features", features_hash}});
  EvalStage out;
  if (stage::fresh(d, stamp, {"predictions.csv", "metrics.json", "confusion.csv"})) {
    out.skipped = true;
    nlohmann::json mj = nlohmann::json::parse(stage::read_file(d + "/metrics.json"));
    out.test_segments = mj.at("test_segments").get<size_t>();
    return out;
  }

  FeatureSplit fs = stage::load_split_features(cfg);
  if (fs.test.empty()) throw std::runtime_error("eval: empty test set");
  out.test_segments = fs.test.size();

  CseRuntime rt = load_cse_runtime(cfg);

  std::ofstream pred(d + "/predictions.csv");
  pred << "segment" << cfg.delim << "label";
  for (MemberId m : rt.clf.members) {
    pred << cfg.delim << member_name(m) << "_s0" << cfg.delim << member_name(m) << "_s1";
  }
  pred << cfg.delim << "cse_l0" << cfg.delim << "cse_l1" << cfg.delim << "cse_conf" << cfg.delim
       << "cse_pred\n";

  std::vector<int> y_true, y_pred;
  std::vector<double> conf;
  char buf[32];
  for (const auto& f : fs.test) {
    std::vector<Tensor> scores;
    for (size_t mi = 0; mi < rt.models.size(); ++mi) scores.push_back(rt.member_score(mi, f));
    CsePrediction p = rt.predict(f);
    y_true.push_back(f.label);
    y_pred.push_back(p.label);
    conf.push_back(p.confidence);
    pred << f.id.str() << cfg.delim << f.label;
    for (const auto& s : scores) {
      for (int j = 0; j < 2; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", s(j));
        pred << cfg.delim << buf;
      }
    }
    std::snprintf(buf, sizeof(buf), "%.17g", p.meta_logits(0));
    pred << cfg.delim << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", p.meta_logits(1));
    pred << cfg.delim << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", p.confidence);
    pred << cfg.delim << buf << cfg.delim << p.label << "\n";
  }
  pred.close();

  out.report = evaluate_predictions(y_true, y_pred, conf);
  nlohmann::ordered_json mj;
  mj["test_segments"] = out.test_segments;
  mj["accuracy"] = out.report.accuracy;
  mj["precision"] = out.report.precision;
  mj["recall"] = out.report.recall;
  mj["f1"] = out.report.f1;
  if (out.report.auc.has_value()) {
    mj["auc"] = *out.report.auc;
  } else {
    mj["auc"] = "undefined";
  }
  mj["tp"] = out.report.counts.tp;
  mj["fp"] = out.report.counts.fp;
  mj["tn"] = out.report.counts.tn;
  mj["fn"] = out.report.counts.fn;
  write_text_file(d + "/metrics.json", mj.dump(1) + "\n");

  std::ostringstream cm;
  cm << "actual\\predicted" << cfg.delim << "not_crossing" << cfg.delim << "crossing\n";
  cm << "not_crossing" << cfg.delim << out.report.counts.tn << cfg.delim << out.report.counts.fp << "\n";
  cm << "crossing" << cfg.delim << out.report.counts.fn << cfg.delim << out.report.counts.tp << "\n";
  write_text_file(d + "/confusion.csv", cm.str());

  stage::finish(d, stamp, cfg, {{"cse", cse_hash}, {"features", features_hash}});
  return out;
}

struct ProfileStage {
  bool skipped = false;
  ComplexityReport report;
  bool ordering_ok = false;  // M2 < M3 < M1 among the shipped members
};

inline ProfileStage run_profile(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "profile");
  const std::string stamp = stage::stamp_of(cfg, "profile", {});
  ProfileStage out;
  std::vector<ModelSpec> specs;
  for (MemberId m : cfg.members) specs.push_back(member_spec(m));
  out.report = build_complexity_report(specs, MetaModel::spec(static_cast<int>(cfg.members.size())));
  out.ordering_ok = profile_flops(M2Model::spec()) < profile_flops(M3Model::spec()) &&
                    profile_flops(M3Model::spec()) < profile_flops(M1Model::spec());
  if (stage::fresh(d, stamp, {"complexity.csv", "complexity.json"})) {
    out.skipped = true;
    return out;
  }

  // sizing targets the member widths were tuned against, in params
  const std::map<std::string, double> target{{"M1", 12500.0}, {"M2", 220.0}, {"M3", 700.0}};
  std::ostringstream csv;
  csv << "model" << cfg.delim << "params" << cfg.delim << "flops" << cfg.delim << "param_target" << cfg.delim
      << "param_ratio\n";
  nlohmann::ordered_json j;
  j["convention"] = out.report.convention;
  auto row_json = [&](const ComplexityRow& r) {
    nlohmann::ordered_json rj;
    rj["model"] = r.name;
    rj["params"] = r.params;
    rj["flops"] = r.flops;
    auto it = target.find(r.name);
    if (it != target.end()) rj["param_target"] = it->second;
    return rj;
  };
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : out.report.members) {
    auto it = target.find(r.name);
    csv << r.name << cfg.delim << r.params << cfg.delim << r.flops << cfg.delim
        << (it != target.end() ? fmt_double(it->second) : "") << cfg.delim
        << (it != target.end() ? fmt_double(static_cast<double>(r.params) / it->second) : "") << "\n";
    rows.push_back(row_json(r));
  }
  csv << out.report.meta.name << cfg.delim << out.report.meta.params << cfg.delim << out.report.meta.flops
      << cfg.delim << cfg.delim << "\n";
  csv << out.report.ensemble.name << cfg.delim << out.report.ensemble.params << cfg.delim
      << out.report.ensemble.flops << cfg.delim << cfg.delim << "\n";
  rows.push_back(row_json(out.report.meta));
  rows.push_back(row_json(out.report.ensemble));
  j["flop_ordering_m2_m3_m1"] = out.ordering_ok;
  write_text_file(d + "/complexity.csv", csv.str());
  write_text_file(d + "/complexity.json", j.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {});
  return out;
}

// parsed view of eval/predictions.csv
struct PredictionsTable {
  std::vector<MemberId> members;
  std::vector<SegmentId> ids;
  std::vector<int> labels;
  std::vector<std::vector<Tensor>> member_scores;  // [row][member]
  std::vector<int> cse_pred;
  std::vector<double> cse_conf;

  std::vector<int> member_preds(size_t mi) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto& row : member_scores) out.push_back(argmax2(row[mi]));
    return out;
  }
  std::vector<double> member_confs(size_t mi) const {
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& row : member_scores) out.push_back(positive_confidence(row[mi]));
    return out;
  }
};

inline PredictionsTable load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path + "; run `eval` first");
  std::string header;
  std::getline(is, header);
  const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  auto cols = stage::split_line(header, delim);
  PredictionsTable t;
  for (const auto& c : cols) {
    if (c.size() > 3 && c.substr(c.size() - 3) == "_s0") t.members.push_back(member_from_string(c.substr(0, c.size() - 3)));
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = stage::split_line(line, delim);
    if (cells.size() != 2 + 2 * t.members.size() + 4) throw std::runtime_error("malformed predictions row: " + line);
    t.ids.push_back(stage::parse_segment_id(cells[0]));
    t.labels.push_back(std::stoi(cells[1]));
    std::vector<Tensor> row;
    for (size_t m = 0; m < t.members.size(); ++m) {
      Tensor s({2});
      s(0) = std::stod(cells[2 + 2 * m]);
      s(1) = std::stod(cells[3 + 2 * m]);
      row.push_back(std::move(s));
    }
    t.member_scores.push_back(std::move(row));
    t.cse_conf.push_back(std::stod(cells[cells.size() - 2]));
    t.cse_pred.push_back(std::stoi(cells[cells.size() - 1]));
  }
  return t;
}

struct AnalyzeStage {
  bool skipped = false;
  struct Row {
    std::string baseline, additional;
    SensitivityReport report;
  };
  std::vector<Row> rows;
};

inline AnalyzeStage run_analyze(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "analyze");
  const auto pred_hash = stage::file_hash(cfg.out + "/eval/predictions.csv");
  const std::string stamp = stage::stamp_of(cfg, "analyze", {{"predictions", pred_hash}});
  AnalyzeStage out;

  PredictionsTable t = load_predictions(cfg.out + "/eval/predictions.csv");
  if (t.members.size() < 2) throw std::runtime_error("analyze: need at least two members in the predictions table");

  // pick the baseline: flagged member or the best by F1 on the test set
  size_t base_idx = 0;
  if (cfg.baseline == "auto") {
    double best = -1.0;
    for (size_t m = 0; m < t.members.size(); ++m) {
      const double f1 = evaluate_predictions(t.labels, t.member_preds(m), t.member_confs(m)).f1;
      if (f1 > best) {
        best = f1;
        base_idx = m;
      }
    }
  } else {
    const MemberId want = member_from_string(cfg.baseline);
    bool found = false;
    for (size_t m = 0; m < t.members.size(); ++m) {
      if (t.members[m] == want) {
        base_idx = m;
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("analyze: baseline " + cfg.baseline + " not among evaluated members");
  }

  for (size_t m = 0; m < t.members.size(); ++m) {
    if (m == base_idx) continue;
    if (cfg.additional != "auto" && member_from_string(cfg.additional) != t.members[m]) continue;
    AnalyzeStage::Row row;
    row.baseline = member_name(t.members[base_idx]);
    row.additional = member_name(t.members[m]);
    row.report = sensitivity(t.member_preds(base_idx), t.member_confs(base_idx), t.member_preds(m),
                             t.member_confs(m), t.cse_pred, t.labels);
    out.rows.push_back(std::move(row));
  }
  if (out.rows.empty()) throw std::invalid_argument("analyze: no (baseline, additional) pair selected");

  if (stage::fresh(d, stamp, {"sensitivity.csv", "sensitivity.json"})) {
    out.skipped = true;
    return out;
  }

  std::ostringstream csv;
  csv << "baseline" << cfg.delim << "additional" << cfg.delim << "baseline_false" << cfg.delim
      << "additional_false" << cfg.delim << "common_predictions" << cfg.delim << "common_false" << cfg.delim
      << "union_false" << cfg.delim << "merged_actual_false" << cfg.delim << "confidence_correlation\n";
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& row : out.rows) {
    const auto& r = row.report;
    csv << row.baseline << cfg.delim << row.additional << cfg.delim << fmt_double(r.baseline_false)
        << cfg.delim << fmt_double(r.additional_false) << cfg.delim << fmt_double(r.common_pred) << cfg.delim
        << fmt_double(r.common_false) << cfg.delim << fmt_double(r.union_false) << cfg.delim
        << fmt_double(r.merged_false) << cfg.delim
        << (r.confidence_corr.has_value() ? fmt_double(*r.confidence_corr) : "undefined") << "\n";
    nlohmann::ordered_json rj;
    rj["baseline"] = row.baseline;
    rj["additional"] = row.additional;
    rj["baseline_false"] = r.baseline_false;
    rj["additional_false"] = r.additional_false;
    rj["common_predictions"] = r.common_pred;
    rj["common_false"] = r.common_false;
    rj["union_false"] = r.union_false;
    rj["merged_actual_false"] = r.merged_false;
    if (r.confidence_corr.has_value()) {
      rj["confidence_correlation"] = *r.confidence_corr;
    } else {
      rj["confidence_correlation"] = "undefined";
    }
    j.push_back(std::move(rj));
  }
  write_text_file(d + "/sensitivity.csv", csv.str());
  write_text_file(d + "/sensitivity.json", j.dump(1) + "\n");
  stage::finish(d, stamp, cfg, {{"predictions", pred_hash}});
  return out;
}

struct ReportStage {
  bool skipped = false;
  std::vector<std::string> artifacts;
};

inline ReportStage run_report(const RunConfig& cfg) {
  cfg.validate();
  const std::string d = stage::dir(cfg, "report");
  const auto pred_hash = stage::file_hash(cfg.out + "/eval/predictions.csv");
  const auto corpus_hash = stage::file_hash(cfg.corpus_path());
  const std::string stamp = stage::stamp_of(cfg, "report", {{"predictions", pred_hash}, {"corpus", corpus_hash}});
  ReportStage out;
  if (stage::fresh(d, stamp, {"confusion.svg", "roc.svg", "roc.csv", "attributes.csv"})) {
    out.skipped = true;
    return out;
  }

  PredictionsTable t = load_predictions(cfg.out + "/eval/predictions.csv");
  const ConfusionCounts counts = confusion(t.labels, t.cse_pred);
  write_text_file(d + "/confusion.svg", confusion_svg(counts, "CSE confusion matrix"));
  out.artifacts.push_back("confusion.svg");

  const auto roc = roc_points(t.cse_conf, t.labels);
  std::ostringstream rc;
  rc << "fpr" << cfg.delim << "tpr" << cfg.delim << "threshold\n";
  for (const auto& p : roc) {
    rc << fmt_double(p.fpr, 10) << cfg.delim << fmt_double(p.tpr, 10) << cfg.delim
       << fmt_double(p.threshold, 10) << "\n";
  }
  write_text_file(d + "/roc.csv", rc.str());
  write_text_file(d + "/roc.svg", roc_svg(roc, "CSE ROC"));
  out.artifacts.push_back("roc.svg");

  auto clips = parse_annotations_file(cfg.corpus_path());
  const auto tables = attribute_tables(clips);
  std::ostringstream att;
  att << "attribute" << cfg.delim << "category" << cfg.delim << "class" << cfg.delim << "fraction\n";
  for (const auto& tab : tables) {
    for (size_t k = 0; k < tab.classes.size(); ++k) {
      for (size_t c = 0; c < tab.categories.size(); ++c) {
        att << tab.attribute << cfg.delim << tab.categories[c] << cfg.delim << tab.classes[k] << cfg.delim
            << fmt_double(tab.fractions[k][c]) << "\n";
      }
    }
    write_text_file(d + "/attribute_" + tab.attribute + ".svg",
                    histogram_svg(tab.attribute, tab.categories, tab.classes, tab.fractions));
    out.artifacts.push_back("attribute_" + tab.attribute + ".svg");
  }
  write_text_file(d + "/attributes.csv", att.str());
  out.artifacts.push_back("attributes.csv");

  stage::finish(d, stamp, cfg, {{"predictions", pred_hash}, {"corpus", corpus_hash}});
  return out;
}

}  // namespace cse
