#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cse/model_spec.hpp"

namespace cse {

// class 1 = Crossing throughout

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

inline ConfusionCounts confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("confusion: got " + std::to_string(y_true.size()) + " labels vs " +
                                std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionCounts c;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t != 0 && t != 1) throw std::invalid_argument("confusion: labels must be binary");
    if (p != 0 && p != 1) throw std::invalid_argument("confusion: predictions must be binary");
    if (t == 1) {
      (p == 1 ? c.tp : c.fn)++;
    } else {
      (p == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

/// Rank-statistic AUC: the probability a random positive outranks a random
/// negative, ties counted half. Single-class inputs are undefined.
inline std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& y_true) {
  if (scores.size() != y_true.size()) throw std::invalid_argument("auc: scores/labels length mismatch");
  const size_t n = scores.size();
  size_t npos = 0;
  for (int t : y_true) npos += static_cast<size_t>(t);
  const size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_pos = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (y_true[k] == 1) rank_pos += rank[k];
  }
  const double u = rank_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::optional<double> auc;  // nullopt when y_true is single-class
  ConfusionCounts counts;
};

/// Accuracy/P/R/F1 from counts with 0/0 -> 0 conventions; AUC from rank
/// statistics over the positive-class confidences.
inline MetricsReport metrics(const ConfusionCounts& counts, const std::vector<double>& scores,
                             const std::vector<int>& y_true) {
  MetricsReport r;
  r.counts = counts;
  const double n = static_cast<double>(counts.total());
  r.accuracy = n > 0 ? (counts.tp + counts.tn) / n : 0.0;
  r.precision = (counts.tp + counts.fp) > 0 ? static_cast<double>(counts.tp) / (counts.tp + counts.fp) : 0.0;
  r.recall = (counts.tp + counts.fn) > 0 ? static_cast<double>(counts.tp) / (counts.tp + counts.fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.auc = auc_rank(scores, y_true);
  return r;
}

inline MetricsReport evaluate_predictions(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                          const std::vector<double>& scores) {
  return metrics(confusion(y_true, y_pred), scores, y_true);
}

// ---------------------------------------------------------------------------
// complexity profiling

/// Counting convention embedded in every report: one multiply-accumulate
/// costs 2 FLOPs, elementwise ops cost 1 FLOP per element, and recurrent
/// layers are charged their per-step cell cost once (the time loop is not
/// unrolled), matching static-graph profilers.
inline const char* flop_convention() { return "mac=2;elementwise=1;rnn=cell-once"; }

inline size_t profile_params(const LayerSpec& l) {
  using K = LayerSpec::Kind;
  switch (l.kind) {
    case K::dense:
      return static_cast<size_t>(l.in) * l.out + l.out;
    case K::conv1d:
    case K::graph_conv:  // adjacency is a constant; only the kernel counts
      return static_cast<size_t>(l.width) * l.cin * l.cout + l.cout;
    case K::conv_point:
      return static_cast<size_t>(l.cin) * l.cout + l.cout;
    case K::gru:
      return 3 * (static_cast<size_t>(l.in) * l.hidden + static_cast<size_t>(l.hidden) * l.hidden +
                  2 * static_cast<size_t>(l.hidden));
    case K::dropout:
    case K::relu:
    case K::sigmoid:
    case K::flatten:
      return 0;
  }
  throw std::invalid_argument("profile_params: unknown layer kind");
}

inline size_t profile_params(const ModelSpec& spec) {
  size_t total = 0;
  for (const auto& l : spec.layers) total += profile_params(l);
  return total;
}

inline size_t profile_flops(const LayerSpec& l) {
  using K = LayerSpec::Kind;
  switch (l.kind) {
    case K::dense:
      return 2 * static_cast<size_t>(l.in) * l.out + l.out;
    case K::conv1d:
      return static_cast<size_t>(l.T) * l.cout * (2 * static_cast<size_t>(l.width) * l.cin) +
             static_cast<size_t>(l.T) * l.cout;
    case K::conv_point:
      return static_cast<size_t>(l.T) * l.cout * (2 * static_cast<size_t>(l.cin)) +
             static_cast<size_t>(l.T) * l.cout;
    case K::graph_conv: {
      const size_t agg = 2 * static_cast<size_t>(l.T) * l.K * l.K * l.cin;
      const size_t conv = static_cast<size_t>(l.T) * l.K * l.cout * (2 * static_cast<size_t>(l.width) * l.cin) +
                          static_cast<size_t>(l.T) * l.K * l.cout;
      return agg + conv;
    }
    case K::gru: {
      // one cell: 3 gate matmuls with two bias adds each, gate nonlinearities
      // (2h sigmoid + h tanh), and the 5h-element state update
      const size_t gates = 3 * (2 * static_cast<size_t>(l.in) * l.hidden +
                                2 * static_cast<size_t>(l.hidden) * l.hidden + 2 * static_cast<size_t>(l.hidden));
      const size_t pointwise = 8 * static_cast<size_t>(l.hidden);
      return gates + pointwise;
    }
    case K::relu:
    case K::sigmoid:
      return static_cast<size_t>(l.elems);
    case K::dropout:   // identity at inference
    case K::flatten:
      return 0;
  }
  throw std::invalid_argument("profile_flops: unknown layer kind");
}

inline size_t profile_flops(const ModelSpec& spec) {
  size_t total = 0;
  for (const auto& l : spec.layers) total += profile_flops(l);
  return total;
}

struct ComplexityRow {
  std::string name;
  size_t params = 0;
  size_t flops = 0;
};

struct ComplexityReport {
  std::vector<ComplexityRow> members;
  ComplexityRow meta;     // the stacking classifier
  ComplexityRow ensemble; // member sum + meta
  std::string convention = flop_convention();
};

inline ComplexityReport build_complexity_report(const std::vector<ModelSpec>& member_specs,
                                                const ModelSpec& meta_spec) {
  ComplexityReport r;
  std::string ens_name = "CSE(";
  for (size_t i = 0; i < member_specs.size(); ++i) {
    const auto& s = member_specs[i];
    r.members.push_back({s.name, profile_params(s), profile_flops(s)});
    ens_name += (i ? "+" : "") + s.name;
  }
  ens_name += ")";
  r.meta = {meta_spec.name, profile_params(meta_spec), profile_flops(meta_spec)};
  r.ensemble.name = ens_name;
  for (const auto& m : r.members) {
    r.ensemble.params += m.params;
    r.ensemble.flops += m.flops;
  }
  r.ensemble.params += r.meta.params;
  r.ensemble.flops += r.meta.flops;
  return r;
}

// ---------------------------------------------------------------------------
// ensemble sensitivity statistics

struct SensitivityReport {
  double baseline_false = 0;    // baseline model false-prediction ratio
  double additional_false = 0;  // additional model false-prediction ratio
  double common_pred = 0;       // samples assigned the same class by both
  double common_false = 0;      // samples misclassified by both
  double union_false = 0;       // samples misclassified by either
  double merged_false = 0;      // the merged model's actual false ratio
  std::optional<double> confidence_corr;  // Pearson over confidence pairs
};

inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;  // zero variance: undefined
  return sab / std::sqrt(saa * sbb);
}

/// Set statistics of two prediction vectors against truth plus the merged
/// model's error rate; every ratio is normalized by the test-set size.
inline SensitivityReport sensitivity(const std::vector<int>& baseline_pred, const std::vector<double>& baseline_conf,
                                     const std::vector<int>& additional_pred,
                                     const std::vector<double>& additional_conf,
                                     const std::vector<int>& merged_pred, const std::vector<int>& y_true) {
  const size_t n = y_true.size();
  if (baseline_pred.size() != n || additional_pred.size() != n || merged_pred.size() != n ||
      baseline_conf.size() != n || additional_conf.size() != n) {
    throw std::invalid_argument("sensitivity: all vectors must align with y_true");
  }
  if (n == 0) throw std::invalid_argument("sensitivity: empty test set");
  for (double c : baseline_conf) {
    if (c < 0.0 || c > 1.0) throw std::invalid_argument("sensitivity: confidences must lie in [0,1]");
  }
  for (double c : additional_conf) {
    if (c < 0.0 || c > 1.0) throw std::invalid_argument("sensitivity: confidences must lie in [0,1]");
  }
  SensitivityReport r;
  size_t bf = 0, af = 0, cp = 0, cf = 0, uf = 0, mf = 0;
  for (size_t i = 0; i < n; ++i) {
    const bool b_wrong = baseline_pred[i] != y_true[i];
    const bool a_wrong = additional_pred[i] != y_true[i];
    bf += b_wrong;
    af += a_wrong;
    cp += baseline_pred[i] == additional_pred[i];
    cf += b_wrong && a_wrong;
    uf += b_wrong || a_wrong;
    mf += merged_pred[i] != y_true[i];
  }
  const double dn = static_cast<double>(n);
  r.baseline_false = bf / dn;
  r.additional_false = af / dn;
  r.common_pred = cp / dn;
  r.common_false = cf / dn;
  r.union_false = uf / dn;
  r.merged_false = mf / dn;
  r.confidence_corr = pearson(baseline_conf, additional_conf);
  return r;
}

}  // namespace cse
