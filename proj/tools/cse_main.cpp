// cse: operator CLI wiring the pipeline stages into reproducible runs.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cse/pipeline.hpp"

namespace {

using namespace cse;

std::vector<MemberId> parse_members(const std::string& csv) {
  std::vector<MemberId> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(member_from_string(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

void print_metrics(const MetricsReport& r) {
  std::printf("  accuracy   %.4f\n", r.accuracy);
  std::printf("  precision  %.4f\n", r.precision);
  std::printf("  recall     %.4f\n", r.recall);
  std::printf("  f1         %.4f\n", r.f1);
  if (r.auc.has_value()) {
    std::printf("  auc        %.4f\n", *r.auc);
  } else {
    std::printf("  auc        undefined (single-class)\n");
  }
  std::printf("  confusion  tp=%ld fp=%ld tn=%ld fn=%ld\n", r.counts.tp, r.counts.fp, r.counts.tn,
              r.counts.fn);
}

struct CliOptions {
  RunConfig cfg;
  std::string members_csv = "M1,M2,M3";
  std::string protocol = "stratified";
  std::string format = "csv";
  double lr = 1e-3;
  double rho = -2.0;  // sentinel: unset
  double crossing_fraction_test = -1.0;
  uint64_t scene_seed = 0;  // 0: follow --seed

  void finalize() {
    cfg.members = parse_members(members_csv);
    if (protocol == "stratified") {
      cfg.protocol = FoldProtocol::stratified;
    } else if (protocol == "balanced") {
      cfg.protocol = FoldProtocol::balanced;
    } else {
      throw std::invalid_argument("--folds must be stratified or balanced, got '" + protocol + "'");
    }
    if (format == "csv") {
      cfg.delim = ',';
    } else if (format == "tsv") {
      cfg.delim = '\t';
    } else {
      throw std::invalid_argument("--format must be csv or tsv, got '" + format + "'");
    }
    cfg.recipe.adam.lr = lr;
    if (rho >= -1.0) cfg.rho = rho;
    if (crossing_fraction_test >= 0.0) cfg.scene.crossing_fraction_test = crossing_fraction_test;
    cfg.scene.seed = scene_seed != 0 ? scene_seed : cfg.seed;
    cfg.validate();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual stacked ensemble pipeline for pedestrian intent prediction"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; every key is also a flag of the same name");

  CliOptions opt;
  app.add_option("--out", opt.cfg.out, "artifact root directory")->envname("CSE_OUT_ROOT");
  app.add_option("--corpus", opt.cfg.corpus, "annotation corpus (default <out>/synth/corpus.jsonl)");
  app.add_option("--split", opt.cfg.split, "split file (default <out>/synth/split.json)");
  app.add_option("--seed", opt.cfg.seed, "run seed");
  app.add_option("--members", opt.members_csv, "member models, comma separated subset of M1,M2,M3");
  app.add_option("--folds", opt.protocol, "fold protocol: stratified | balanced");
  app.add_option("--k", opt.cfg.k, "fold count");
  app.add_option("--stride", opt.cfg.stride, "window stride in frames (32 tiles the clip)");
  app.add_option("--format", opt.format, "table format: csv | tsv");
  app.add_flag("--average-folds", opt.cfg.average_folds,
               "average fold models at test time instead of the full-pool refit");
  app.add_option("--baseline", opt.cfg.baseline, "analyze: baseline member (default: best by F1)");
  app.add_option("--additional", opt.cfg.additional, "analyze: additional member (default: every other)");
  app.add_option("--lr", opt.lr, "optimizer learning rate");
  app.add_option("--batch", opt.cfg.recipe.batch_size, "batch size");
  app.add_option("--epochs", opt.cfg.recipe.max_epochs, "max training epochs");
  app.add_option("--patience", opt.cfg.recipe.patience, "early-stop patience in epochs");

  app.add_option("--clips", opt.cfg.scene.clips, "synth: clip count");
  app.add_option("--frames", opt.cfg.scene.frames_per_clip, "synth: frames per clip (>= 32)");
  app.add_option("--peds", opt.cfg.scene.peds_per_clip, "synth: pedestrians per clip");
  app.add_option("--crossing-fraction", opt.cfg.scene.crossing_fraction, "synth: crossing prior");
  app.add_option("--crossing-fraction-test", opt.crossing_fraction_test,
                 "synth: crossing prior for test clips (steers test imbalance)");
  app.add_option("--test-fraction", opt.cfg.scene.test_clip_fraction, "synth: test clip fraction");
  app.add_option("--val-fraction", opt.cfg.scene.val_clip_fraction, "synth: val clip fraction");
  app.add_option("--kp-signal", opt.cfg.scene.keypoint_signal, "synth: keypoint channel signal strength [0,1]");
  app.add_option("--ctx-signal", opt.cfg.scene.context_signal, "synth: context channel signal strength [0,1]");
  app.add_option("--traj-signal", opt.cfg.scene.trajectory_signal,
                 "synth: trajectory channel signal strength [0,1]");
  app.add_option("--overlap", opt.cfg.scene.signal_overlap, "synth: channel corruption overlap [0,1]");
  app.add_option("--rho", opt.rho, "synth: error-controlled mode with this target member correlation");
  app.add_option("--rho-noise", opt.cfg.rho_noise, "synth: per-channel flip probability in error-controlled mode");
  app.add_option("--occlusion", opt.cfg.scene.occlusion_prob, "synth: per-frame occlusion probability");
  app.add_option("--noise-px", opt.cfg.scene.noise_px, "synth: keypoint jitter in pixels");
  app.add_option("--gait", opt.cfg.scene.gait_amplitude, "synth: gait amplitude scale");
  app.add_option("--scene-seed", opt.scene_seed, "synth: corpus seed (default: --seed)");

  auto* sub_synth = app.add_subcommand("synth", "generate a synthetic annotation corpus and split file");
  auto* sub_ingest = app.add_subcommand("ingest", "validate and summarize a corpus");
  auto* sub_featurize = app.add_subcommand("featurize", "cut windows and cache model inputs");
  auto* sub_train = app.add_subcommand("train", "train members across the fold plan");
  auto* sub_stack = app.add_subcommand("stack", "assemble out-of-fold features and train the stacked classifier");
  auto* sub_eval = app.add_subcommand("eval", "run the stacked classifier on the test split");
  auto* sub_profile = app.add_subcommand("profile", "parameter and FLOP complexity report");
  auto* sub_analyze = app.add_subcommand("analyze", "member-vs-member sensitivity statistics");
  auto* sub_report = app.add_subcommand("report", "plot-ready CSVs and static SVG charts");
  for (auto* s : {sub_synth, sub_ingest, sub_featurize, sub_train, sub_stack, sub_eval, sub_profile,
                  sub_analyze, sub_report}) {
    s->fallthrough();
  }

  std::string stage_name = "parse";
  try {
    app.parse(argc, argv);
    opt.finalize();
    const RunConfig& cfg = opt.cfg;

    if (sub_synth->parsed()) {
      stage_name = "synth";
      SynthStage r = run_synth(cfg);
      std::printf("%s corpus at %s\n", r.skipped ? "kept" : "wrote", r.corpus_path.c_str());
      for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
    } else if (sub_ingest->parsed()) {
      stage_name = "ingest";
      IngestStage r = run_ingest(cfg);
      std::printf("clips %zu, tracks %zu, frames %zu\n", r.summary.clips, r.summary.tracks, r.summary.frames);
      for (const auto& [label, n] : r.summary.label_counts) std::printf("  %s: %zu tracks\n", label.c_str(), n);
      std::printf("segments %zu (%zu crossing)\n", r.segments, r.segment_positives);
      std::printf("windows dropped: %zu low presence, %zu without keypoints\n",
                  r.window_stats.dropped_low_presence, r.window_stats.dropped_no_keypoints);
      for (const auto& w : r.window_stats.warnings) std::printf("warning: %s\n", w.c_str());
    } else if (sub_featurize->parsed()) {
      stage_name = "featurize";
      FeaturizeStage r = run_featurize(cfg);
      std::printf("%s feature cache for %zu segments at %s\n", r.skipped ? "kept" : "wrote", r.segments,
                  r.cache_path.c_str());
      if (!r.skipped) std::printf("clamped coordinates: %zu\n", r.clamped);
    } else if (sub_train->parsed()) {
      stage_name = "train";
      TrainStage r = run_train(cfg);
      if (r.skipped) {
        std::printf("train stage already complete for these inputs\n");
      } else {
        for (size_t m = 0; m < cfg.members.size(); ++m) {
          double acc = 0;
          for (const auto& vm : r.val_metrics[m]) acc += vm.accuracy;
          std::printf("%s: mean fold validation accuracy %.4f\n", member_name(cfg.members[m]),
                      acc / static_cast<double>(r.val_metrics[m].size()));
        }
      }
    } else if (sub_stack->parsed()) {
      stage_name = "stack";
      StackStage r = run_stack(cfg);
      if (r.skipped) {
        std::printf("stack stage already complete for these inputs\n");
      } else {
        std::printf("OOF rows %zu, leakage violations %zu\n", r.oof_rows, r.leakage_violations);
      }
    } else if (sub_eval->parsed()) {
      stage_name = "eval";
      EvalStage r = run_eval(cfg);
      if (r.skipped) {
        std::printf("eval stage already complete (%zu test segments)\n", r.test_segments);
      } else {
        std::printf("test segments %zu\n", r.test_segments);
        print_metrics(r.report);
      }
    } else if (sub_profile->parsed()) {
      stage_name = "profile";
      ProfileStage r = run_profile(cfg);
      std::printf("%-14s %10s %12s\n", "model", "params", "flops");
      for (const auto& row : r.report.members) {
        std::printf("%-14s %10zu %12zu\n", row.name.c_str(), row.params, row.flops);
      }
      std::printf("%-14s %10zu %12zu\n", r.report.meta.name.c_str(), r.report.meta.params, r.report.meta.flops);
      std::printf("%-14s %10zu %12zu\n", r.report.ensemble.name.c_str(), r.report.ensemble.params,
                  r.report.ensemble.flops);
      std::printf("convention: %s\n", r.report.convention.c_str());
      std::printf("flop ordering M2 < M3 < M1: %s\n", r.ordering_ok ? "yes" : "no");
    } else if (sub_analyze->parsed()) {
      stage_name = "analyze";
      AnalyzeStage r = run_analyze(cfg);
      for (const auto& row : r.rows) {
        std::printf("baseline %s vs additional %s (merged = CSE)\n", row.baseline.c_str(),
                    row.additional.c_str());
        std::printf("  baseline false        %.4f\n", row.report.baseline_false);
        std::printf("  additional false      %.4f\n", row.report.additional_false);
        std::printf("  common predictions    %.4f\n", row.report.common_pred);
        std::printf("  common false          %.4f\n", row.report.common_false);
        std::printf("  union false           %.4f\n", row.report.union_false);
        std::printf("  merged actual false   %.4f\n", row.report.merged_false);
        if (row.report.confidence_corr.has_value()) {
          std::printf("  confidence correlation %.4f\n", *row.report.confidence_corr);
        } else {
          std::printf("  confidence correlation undefined (zero variance)\n");
        }
      }
    } else if (sub_report->parsed()) {
      stage_name = "report";
      ReportStage r = run_report(cfg);
      if (r.skipped) {
        std::printf("report stage already complete for these inputs\n");
      } else {
        for (const auto& a : r.artifacts) std::printf("wrote %s/report/%s\n", cfg.out.c_str(), a.c_str());
      }
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "{\"stage\":\"" << stage_name << "\",\"error\":\"" << e.what() << "\",\"exit\":1}" << std::endl;
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "{\"stage\":\"" << stage_name << "\",\"error\":\"" << e.what() << "\",\"exit\":1}" << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "{\"stage\":\"" << stage_name << "\",\"error\":\"" << e.what() << "\",\"exit\":2}" << std::endl;
    return 2;
  }
}
