#pragma once

// metrics and matching: greedy root-distance person matching, correctness
// percentages at a distance threshold, mean joint error, multi-frame
// aggregation, and comparison-table formatting.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hupor/core.hpp"

namespace hupor {

inline constexpr double kMatchGateMm = 500.0;
inline constexpr double kPckThresholdMm = 150.0;

// abs scores raw positions; rel root-aligns each pair first (the root itself
// is then degenerate and skipped); occ is rel restricted to joints whose
// occlusion label says "occluded".
enum class EvalMode { abs, rel, occ };

using JointLabels = std::array<int, kJoints>;  // 0 truncated, 1 occluded, 2 visible

struct MatchedPair {
  int pred = -1;
  int gt = -1;
  double root_distance = 0;  // mm between the two pelvises
};

struct Matching {
  std::vector<Pose3D> preds, gts;
  std::vector<MatchedPair> pairs;
  std::vector<int> unmatched_preds, unmatched_gts;
};

// greedy one-to-one matching by ascending pelvis distance; pairs farther
// apart than the gate stay unmatched. ties break on (gt, pred) index, so the
// result is deterministic.
inline Matching match_people(const std::vector<Pose3D>& preds, const std::vector<Pose3D>& gts,
                             double gate_mm = kMatchGateMm) {
  if (!(gate_mm > 0)) throw validation_error("match gate must be positive");
  struct Entry {
    double dist;
    int gt, pred;
  };
  std::vector<Entry> entries;
  for (size_t g = 0; g < gts.size(); ++g)
    for (size_t p = 0; p < preds.size(); ++p) {
      const double d = norm(preds[p].joints[kPelvis] - gts[g].joints[kPelvis]);
      if (d <= gate_mm) entries.push_back({d, static_cast<int>(g), static_cast<int>(p)});
    }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });

  Matching m;
  m.preds = preds;
  m.gts = gts;
  std::vector<char> pred_used(preds.size(), 0), gt_used(gts.size(), 0);
  for (const Entry& e : entries) {
    if (pred_used[e.pred] || gt_used[e.gt]) continue;
    pred_used[e.pred] = gt_used[e.gt] = 1;
    m.pairs.push_back({e.pred, e.gt, e.dist});
  }
  for (size_t p = 0; p < preds.size(); ++p)
    if (!pred_used[p]) m.unmatched_preds.push_back(static_cast<int>(p));
  for (size_t g = 0; g < gts.size(); ++g)
    if (!gt_used[g]) m.unmatched_gts.push_back(static_cast<int>(g));
  return m;
}

namespace detail {

// emit (joint, error-mm) for one matched pair under a mode. rel/occ shift the
// prediction so the pelvises coincide.
template <class Fn>
inline void pair_errors(const Pose3D& pred, const Pose3D& gt, EvalMode mode,
                        const JointLabels* label_row, Fn&& emit) {
  const V3d shift =
      mode == EvalMode::abs ? V3d{0, 0, 0} : gt.joints[kPelvis] - pred.joints[kPelvis];
  for (int j = 0; j < kJoints; ++j) {
    if (mode != EvalMode::abs && j == kPelvis) continue;
    if (mode == EvalMode::occ && (*label_row)[j] != 1) continue;
    emit(j, norm(pred.joints[j] + shift - gt.joints[j]));
  }
}

// how many joints the mode would evaluate for one ground-truth person
inline int evaluated_joints(EvalMode mode, const JointLabels* label_row) {
  if (mode == EvalMode::abs) return kJoints;
  if (mode == EvalMode::rel) return kJoints - 1;
  int n = 0;
  for (int j = 0; j < kJoints; ++j)
    if (j != kPelvis && (*label_row)[j] == 1) ++n;
  return n;
}

inline void check_labels(EvalMode mode, const Matching& m,
                         const std::vector<JointLabels>* labels) {
  if (mode == EvalMode::occ && !labels)
    throw validation_error("occluded-joint metrics need occlusion labels");
  if (labels && labels->size() != m.gts.size())
    throw validation_error("occlusion labels must cover every ground-truth person");
}

}  // namespace detail

// percentage of evaluated joints with error strictly below the threshold.
// all_people additionally counts every joint of an unmatched ground-truth
// person as incorrect; otherwise only matched pairs are scored. an empty
// evaluation reports zero.
inline double pck(const Matching& m, EvalMode mode,
                  const std::vector<JointLabels>* occlusion_labels = nullptr,
                  double thresh_mm = kPckThresholdMm, bool all_people = false) {
  detail::check_labels(mode, m, occlusion_labels);
  if (!(thresh_mm > 0)) throw validation_error("pck threshold must be positive");
  long correct = 0, total = 0;
  for (const MatchedPair& pr : m.pairs) {
    const JointLabels* row = occlusion_labels ? &(*occlusion_labels)[pr.gt] : nullptr;
    detail::pair_errors(m.preds[pr.pred], m.gts[pr.gt], mode, row, [&](int, double mm) {
      ++total;
      if (mm < thresh_mm) ++correct;
    });
  }
  if (all_people)
    for (int gi : m.unmatched_gts)
      total += detail::evaluated_joints(mode, occlusion_labels ? &(*occlusion_labels)[gi] : nullptr);
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

// mean joint error in mm over matched pairs; absent when nothing qualified.
inline std::optional<double> mpjpe(const Matching& m, EvalMode mode,
                                   const std::vector<JointLabels>* occlusion_labels = nullptr) {
  detail::check_labels(mode, m, occlusion_labels);
  double sum = 0;
  long n = 0;
  for (const MatchedPair& pr : m.pairs) {
    const JointLabels* row = occlusion_labels ? &(*occlusion_labels)[pr.gt] : nullptr;
    detail::pair_errors(m.preds[pr.pred], m.gts[pr.gt], mode, row, [&](int, double mm) {
      sum += mm;
      ++n;
    });
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct EvalReport {
  double pck_abs = 0, pck_rel = 0, pck_occ = 0;   // percentages
  std::optional<double> mpjpe_rel, mpjpe_occ;     // mm
  int matched_count = 0, total_gt = 0, total_pred = 0;
  int false_positives = 0;  // predictions no ground truth claimed
  std::array<double, kJoints> per_joint_pck_rel{};
  std::array<long, kJoints> per_joint_total{};
};

// streaming reduction over frames: feed one matching (plus that frame's
// labels when occlusion metrics are wanted) at a time, read the report at
// the end. percentages are joint-weighted across frames, not frame-averaged.
struct EvalAccumulator {
  bool all_people = false;
  double thresh_mm = kPckThresholdMm;

  long correct_abs = 0, total_abs = 0;
  long correct_rel = 0, total_rel = 0;
  long correct_occ = 0, total_occ = 0;
  double sum_rel = 0, sum_occ = 0;
  long n_rel = 0, n_occ = 0;
  std::array<long, kJoints> joint_correct{}, joint_total{};
  int matched = 0, gts = 0, preds = 0, false_positives = 0;

  void add(const Matching& m, const std::vector<JointLabels>* labels = nullptr) {
    if (labels) detail::check_labels(EvalMode::occ, m, labels);
    matched += static_cast<int>(m.pairs.size());
    gts += static_cast<int>(m.gts.size());
    preds += static_cast<int>(m.preds.size());
    false_positives += static_cast<int>(m.unmatched_preds.size());
    for (const MatchedPair& pr : m.pairs) {
      const JointLabels* row = labels ? &(*labels)[pr.gt] : nullptr;
      detail::pair_errors(m.preds[pr.pred], m.gts[pr.gt], EvalMode::abs, nullptr,
                          [&](int, double mm) {
                            ++total_abs;
                            if (mm < thresh_mm) ++correct_abs;
                          });
      detail::pair_errors(m.preds[pr.pred], m.gts[pr.gt], EvalMode::rel, nullptr,
                          [&](int j, double mm) {
                            ++total_rel;
                            sum_rel += mm;
                            ++n_rel;
                            ++joint_total[j];
                            if (mm < thresh_mm) {
                              ++correct_rel;
                              ++joint_correct[j];
                            }
                          });
      if (row)
        detail::pair_errors(m.preds[pr.pred], m.gts[pr.gt], EvalMode::occ, row,
                            [&](int, double mm) {
                              ++total_occ;
                              sum_occ += mm;
                              ++n_occ;
                              if (mm < thresh_mm) ++correct_occ;
                            });
    }
    if (all_people)
      for (int gi : m.unmatched_gts) {
        total_abs += detail::evaluated_joints(EvalMode::abs, nullptr);
        total_rel += detail::evaluated_joints(EvalMode::rel, nullptr);
        for (int j = 0; j < kJoints; ++j)
          if (j != kPelvis) ++joint_total[j];
        if (labels) total_occ += detail::evaluated_joints(EvalMode::occ, &(*labels)[gi]);
      }
  }

  EvalReport report() const {
    auto pct = [](long c, long t) {
      return t == 0 ? 0.0 : 100.0 * static_cast<double>(c) / static_cast<double>(t);
    };
    EvalReport r;
    r.pck_abs = pct(correct_abs, total_abs);
    r.pck_rel = pct(correct_rel, total_rel);
    r.pck_occ = pct(correct_occ, total_occ);
    if (n_rel > 0) r.mpjpe_rel = sum_rel / static_cast<double>(n_rel);
    if (n_occ > 0) r.mpjpe_occ = sum_occ / static_cast<double>(n_occ);
    r.matched_count = matched;
    r.total_gt = gts;
    r.total_pred = preds;
    r.false_positives = false_positives;
    for (int j = 0; j < kJoints; ++j) {
      r.per_joint_pck_rel[j] = pct(joint_correct[j], joint_total[j]);
      r.per_joint_total[j] = joint_total[j];
    }
    return r;
  }
};

struct ComparisonRow {
  std::string label;
  EvalReport report;
};

namespace detail {

inline std::string fixed1(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

inline std::string opt_fixed1(const std::optional<double>& v) {
  return v ? fixed1(*v) : std::string("-");
}

}  // namespace detail

// aligned-text comparison table, one configuration per row
inline std::string format_comparison_table(const std::vector<ComparisonRow>& rows) {
  const std::array<std::string, 5> head = {"configuration", "pck_rel", "mpjpe_rel", "pck_occ",
                                           "mpjpe_occ"};
  std::vector<std::array<std::string, 5>> cells;
  for (const ComparisonRow& r : rows)
    cells.push_back({r.label, detail::fixed1(r.report.pck_rel),
                     detail::opt_fixed1(r.report.mpjpe_rel), detail::fixed1(r.report.pck_occ),
                     detail::opt_fixed1(r.report.mpjpe_occ)});
  std::array<size_t, 5> width{};
  for (int c = 0; c < 5; ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto line = [&](const std::array<std::string, 5>& row) {
    for (int c = 0; c < 5; ++c) {
      if (c) os << "  ";
      os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << "\n";
  };
  line(head);
  for (const auto& row : cells) line(row);
  return os.str();
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "configuration,pck_abs,pck_rel,pck_occ,mpjpe_rel,mpjpe_occ,matched,total_gt,total_pred\n";
  for (const ComparisonRow& r : rows) {
    os << r.label << ',' << detail::fixed1(r.report.pck_abs) << ','
       << detail::fixed1(r.report.pck_rel) << ',' << detail::fixed1(r.report.pck_occ) << ','
       << detail::opt_fixed1(r.report.mpjpe_rel) << ',' << detail::opt_fixed1(r.report.mpjpe_occ)
       << ',' << r.report.matched_count << ',' << r.report.total_gt << ',' << r.report.total_pred
       << "\n";
  }
  return os.str();
}

}  // namespace hupor
