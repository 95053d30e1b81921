#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cse/dataset.hpp"
#include "cse/evaluation.hpp"

namespace cse {

inline std::string fmt_double(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// ROC sweep

struct RocPoint {
  double fpr = 0, tpr = 0, threshold = 0;
};

inline std::vector<RocPoint> roc_points(const std::vector<double>& scores, const std::vector<int>& y_true) {
  if (scores.size() != y_true.size()) throw std::invalid_argument("roc_points: length mismatch");
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (int t : y_true) (t == 1 ? pos : neg) += 1.0;
  std::vector<RocPoint> out;
  out.push_back({0, 0, 1.0});
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (y_true[order[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    out.push_back({neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0, s});
  }
  return out;
}

// ---------------------------------------------------------------------------
// minimal static SVG emitters

namespace svg {

inline std::string header(int w, int h) {
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "' viewBox='0 0 "
     << w << " " << h << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  return os.str();
}

inline std::string text(double x, double y, const std::string& s, int size = 12,
                        const std::string& anchor = "middle") {
  std::ostringstream os;
  os << "<text x='" << x << "' y='" << y << "' font-family='sans-serif' font-size='" << size
     << "' text-anchor='" << anchor << "'>" << s << "</text>\n";
  return os.str();
}

}  // namespace svg

/// 2x2 confusion heatmap; class 1 = Crossing.
inline std::string confusion_svg(const ConfusionCounts& c, const std::string& title) {
  const double cell = 120, x0 = 110, y0 = 70;
  const long counts[2][2] = {{c.tn, c.fp}, {c.fn, c.tp}};
  const long max_count = std::max({c.tp, c.fp, c.tn, c.fn, 1L});
  std::ostringstream os;
  os << svg::header(400, 380);
  os << svg::text(200, 28, title, 14);
  const char* axis[2] = {"Not-Crossing", "Crossing"};
  for (int r = 0; r < 2; ++r) {
    for (int col = 0; col < 2; ++col) {
      const double shade = 1.0 - 0.75 * static_cast<double>(counts[r][col]) / static_cast<double>(max_count);
      const int rgb = static_cast<int>(255 * shade);
      os << "<rect x='" << x0 + col * cell << "' y='" << y0 + r * cell << "' width='" << cell
         << "' height='" << cell << "' fill='rgb(" << rgb << "," << rgb << ",255)' stroke='black'/>\n";
      os << svg::text(x0 + col * cell + cell / 2, y0 + r * cell + cell / 2 + 5, std::to_string(counts[r][col]), 18);
    }
    os << svg::text(x0 - 12, y0 + r * cell + cell / 2 + 4, axis[r], 12, "end");
    os << svg::text(x0 + r * cell + cell / 2, y0 + 2 * cell + 24, axis[r], 12);
  }
  os << svg::text(46, y0 + cell, "actual", 13, "middle");
  os << svg::text(x0 + cell, y0 + 2 * cell + 48, "predicted", 13);
  os << "</svg>\n";
  return os.str();
}

inline std::string roc_svg(const std::vector<RocPoint>& pts, const std::string& title) {
  const double x0 = 60, y0 = 40, w = 300, h = 300;
  std::ostringstream os;
  os << svg::header(420, 400);
  os << svg::text(x0 + w / 2, 24, title, 14);
  os << "<rect x='" << x0 << "' y='" << y0 << "' width='" << w << "' height='" << h
     << "' fill='none' stroke='black'/>\n";
  os << "<line x1='" << x0 << "' y1='" << y0 + h << "' x2='" << x0 + w << "' y2='" << y0
     << "' stroke='lightgray' stroke-dasharray='4'/>\n";
  os << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& p : pts) os << x0 + p.fpr * w << "," << y0 + h - p.tpr * h << " ";
  os << "'/>\n";
  os << svg::text(x0 + w / 2, y0 + h + 32, "false positive rate", 12);
  os << "<g transform='rotate(-90 20 " << y0 + h / 2 << ")'>"
     << svg::text(20, y0 + h / 2, "true positive rate", 12) << "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    os << svg::text(x0 + w * i / 4.0, y0 + h + 14, fmt_double(i / 4.0, 2), 10);
    os << svg::text(x0 - 8, y0 + h - h * i / 4.0 + 4, fmt_double(i / 4.0, 2), 10, "end");
  }
  os << "</svg>\n";
  return os.str();
}

/// Grouped bar chart: one group per category, one bar per class.
inline std::string histogram_svg(const std::string& title, const std::vector<std::string>& categories,
                                 const std::vector<std::string>& classes,
                                 const std::vector<std::vector<double>>& fractions) {
  const double x0 = 60, y0 = 50, h = 240;
  const double group_w = 90, bar_gap = 4;
  const double w = group_w * static_cast<double>(categories.size());
  const char* palette[] = {"#4878cf", "#e06666", "#93c47d", "#b78add"};
  std::ostringstream os;
  os << svg::header(static_cast<int>(x0 + w + 160), 380);
  os << svg::text(x0 + w / 2, 24, title, 14);
  const double bar_w = (group_w - 2 * bar_gap) / static_cast<double>(classes.size()) - bar_gap;
  for (size_t c = 0; c < categories.size(); ++c) {
    for (size_t k = 0; k < classes.size(); ++k) {
      const double frac = fractions[k][c];
      const double bx = x0 + group_w * static_cast<double>(c) + bar_gap + static_cast<double>(k) * (bar_w + bar_gap);
      os << "<rect x='" << bx << "' y='" << y0 + h - frac * h << "' width='" << bar_w << "' height='"
         << frac * h << "' fill='" << palette[k % 4] << "'/>\n";
    }
    os << svg::text(x0 + group_w * (static_cast<double>(c) + 0.5), y0 + h + 18, categories[c], 11);
  }
  os << "<line x1='" << x0 << "' y1='" << y0 + h << "' x2='" << x0 + w << "' y2='" << y0 + h
     << "' stroke='black'/>\n";
  for (size_t k = 0; k < classes.size(); ++k) {
    const double ly = y0 + 18 * static_cast<double>(k);
    os << "<rect x='" << x0 + w + 16 << "' y='" << ly - 10 << "' width='12' height='12' fill='"
       << palette[k % 4] << "'/>\n";
    os << svg::text(x0 + w + 34, ly, classes[k], 11, "start");
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// per-attribute class distributions (the corpus-side report)

struct AttributeTable {
  std::string attribute;
  std::vector<std::string> categories;
  std::vector<std::string> classes;          // crossing, not_crossing, irrelevant
  std::vector<std::vector<double>> fractions;  // [class][category]
};

inline std::vector<AttributeTable> attribute_tables(const std::vector<AnnotatedClip>& clips) {
  const std::vector<std::string> classes{"crossing", "not_crossing", "irrelevant"};
  auto class_index = [](SourceLabel l) {
    return l == SourceLabel::crossing ? 0 : (l == SourceLabel::not_crossing ? 1 : 2);
  };

  AttributeTable speed{"vehicle_speed",
                       {"stopped", "slow", "fast", "accelerating", "decelerating"},
                       classes,
                       std::vector<std::vector<double>>(3, std::vector<double>(5, 0.0))};
  AttributeTable light{"traffic_light", {"none", "red", "green"}, classes,
                       std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0))};
  AttributeTable road{"road_type", {"garage", "parking_lot", "street"}, classes,
                      std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0))};
  AttributeTable inter{"at_intersection", {"no", "yes"}, classes,
                       std::vector<std::vector<double>>(3, std::vector<double>(2, 0.0))};
  std::vector<double> frame_totals(3, 0.0), track_totals(3, 0.0);

  for (const auto& clip : clips) {
    for (const auto& track : clip.tracks) {
      const int k = class_index(track.label);
      track_totals[static_cast<size_t>(k)] += 1.0;
      road.fractions[static_cast<size_t>(k)][static_cast<size_t>(clip.road_type)] += 1.0;
      inter.fractions[static_cast<size_t>(k)][track.at_intersection ? 1 : 0] += 1.0;
      for (const auto& f : clip.frames) {
        frame_totals[static_cast<size_t>(k)] += 1.0;
        speed.fractions[static_cast<size_t>(k)][static_cast<size_t>(f.speed)] += 1.0;
        light.fractions[static_cast<size_t>(k)][static_cast<size_t>(f.light)] += 1.0;
      }
    }
  }
  auto normalize = [](AttributeTable& t, const std::vector<double>& totals) {
    for (size_t k = 0; k < t.fractions.size(); ++k) {
      if (totals[k] == 0.0) continue;
      for (double& v : t.fractions[k]) v /= totals[k];
    }
  };
  normalize(speed, frame_totals);
  normalize(light, frame_totals);
  normalize(road, track_totals);
  normalize(inter, track_totals);
  return {speed, light, road, inter};
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

}  // namespace cse
