#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmaug/error.hpp"
#include "gmmaug/quantile.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug {

struct LabelOverlap {
  int label = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // Empty when the denominator is zero: an absent label is undefined, not 0.
  std::optional<double> dice;
  std::optional<double> sensitivity;
  std::optional<double> precision;
};

struct OverlapReport {
  std::vector<LabelOverlap> labels;

  const LabelOverlap& at(int label) const {
    for (const auto& l : labels)
      if (l.label == label) return l;
    throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(label) + " not in report");
  }
};

namespace detail {
inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

/// Dice 2tp/(2tp+fp+fn), sensitivity tp/(tp+fn), precision tp/(tp+fp) per label.
inline OverlapReport overlap(const LabelVolume& pred, const LabelVolume& ref, const std::set<int>& labels) {
  if (pred.dims() != ref.dims()) throw Error(ErrorKind::ShapeMismatch, "prediction and reference dims differ");
  OverlapReport report;
  for (int label : labels) {
    LabelOverlap o;
    o.label = label;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == label;
      const bool r = ref[i] == label;
      o.tp += p && r;
      o.fp += p && !r;
      o.fn += !p && r;
    }
    o.dice = detail::ratio(2 * o.tp, 2 * o.tp + o.fp + o.fn);
    o.sensitivity = detail::ratio(o.tp, o.tp + o.fn);
    o.precision = detail::ratio(o.tp, o.tp + o.fp);
    report.labels.push_back(o);
  }
  return report;
}

/// All non-zero labels present in either volume.
inline std::set<int> present_labels(const LabelVolume& a, const LabelVolume& b) {
  std::set<int> out;
  for (auto l : a.labels())
    if (l) out.insert(l);
  for (auto l : b.labels())
    if (l) out.insert(l);
  return out;
}

inline void to_json(nlohmann::json& j, const LabelOverlap& o) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"label", o.label},     {"tp", o.tp},
                     {"fp", o.fp},           {"fn", o.fn},
                     {"dice", opt(o.dice)},  {"sensitivity", opt(o.sensitivity)},
                     {"precision", opt(o.precision)}};
}

inline void to_json(nlohmann::json& j, const OverlapReport& r) { j = nlohmann::json{{"labels", r.labels}}; }

inline std::string to_csv(const OverlapReport& r) {
  std::ostringstream os;
  os.precision(17);
  auto opt = [&os](const std::optional<double>& v) {
    if (v) os << *v;
  };
  os << "label,tp,fp,fn,dice,sensitivity,precision\n";
  for (const auto& o : r.labels) {
    os << o.label << ',' << o.tp << ',' << o.fp << ',' << o.fn << ',';
    opt(o.dice);
    os << ',';
    opt(o.sensitivity);
    os << ',';
    opt(o.precision);
    os << '\n';
  }
  return os.str();
}

struct OutlierResult {
  double fraction = 0.0;
  std::vector<std::size_t> indices;
  double q1 = 0.0;
  double q3 = 0.0;
  double lower_fence = 0.0;
  double upper_fence = 0.0;
};

/// Tukey fences: v is an outlier iff it lies strictly farther than 1.5 IQR
/// below Q1 or above Q3.
inline OutlierResult outlier_fraction(std::span<const double> values) {
  if (values.size() < 4) throw Error(ErrorKind::InsufficientData, "outlier rule needs at least 4 values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  OutlierResult r;
  r.q1 = percentile_sorted(sorted, 25.0);
  r.q3 = percentile_sorted(sorted, 75.0);
  const double iqr = r.q3 - r.q1;
  r.lower_fence = r.q1 - 1.5 * iqr;
  r.upper_fence = r.q3 + 1.5 * iqr;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < r.lower_fence || values[i] > r.upper_fence) r.indices.push_back(i);
  r.fraction = static_cast<double>(r.indices.size()) / static_cast<double>(values.size());
  return r;
}

struct Summary {
  double p50 = 0.0;
  double p10 = 0.0;
};

inline Summary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::InsufficientData, "cannot summarize an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {percentile_sorted(sorted, 50.0), percentile_sorted(sorted, 10.0)};
}

}  // namespace gmmaug
