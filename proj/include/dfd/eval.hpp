#pragma once

#include <map>
#include <string>
#include <vector>

#include "dfd/events.hpp"
#include "dfd/tensor.hpp"

namespace dfd {

/// Per-class median filter length in output frames (odd, >= 1).
struct MedianFilterPlan {
  int default_length = 7;
  std::map<std::string, int> lengths;

  int length_for(const std::string& cls) const;
  void validate() const;
};

void write_median_plan(const std::string& path, const MedianFilterPlan& plan);
MedianFilterPlan read_median_plan(const std::string& path);

/// Intersection ratio thresholds. A detection counts when enough of it lies
/// on same-class references; a reference is found when enough of it is
/// covered by counted detections.
struct MatchCriteria {
  double rho_dtc = 0.5;
  double rho_gtc = 0.5;

  void validate() const;
};

struct MatchCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

/// Sliding median with zero padding at both ends; length must be odd.
std::vector<double> median_filter_1d(const std::vector<double>& probs, int length);

/// Frame probabilities for one clip: [frames, n_classes].
struct ScoreGrid {
  std::string clip_id;
  Tensor probs;
  double frame_dur = 0.064;
};

/// Maximal runs of frames with prob > threshold become events,
/// [run_start * frame_dur, run_end * frame_dur).
EventList probs_to_events(const Tensor& probs, double threshold, double frame_dur,
                          const std::string& clip_id,
                          const std::vector<std::string>& classes);

/// DTC/GTC matching within the same clip and label. tp counts detected
/// references, fn the missed ones, fp the detections failing the DTC.
MatchCounts match_events(const EventList& dets, const EventList& refs,
                         const MatchCriteria& crit);

struct F1Result {
  std::map<std::string, double> per_class;
  double macro = 0.0;
};

/// F1 = 2tp / (2tp + fp + fn) per class; macro is the unweighted mean. When a
/// class list is given, a class with neither references nor detections scores
/// 1 by convention; otherwise classes are the observed labels.
F1Result intersection_f1(const EventList& dets, const EventList& refs,
                         const MatchCriteria& crit,
                         const std::vector<std::string>& classes = {});

/// Simplified intersection-ROC area: per threshold, decode events, average the
/// per-class true-positive ratio over classes that have references, and count
/// false positives per hour of audio across classes. The resulting operating
/// points form a non-decreasing support curve integrated up to max_efpr and
/// normalized by it. No cross-trigger or cross-class variance terms.
double psds_lite(const std::vector<ScoreGrid>& grids, const EventList& refs,
                 const std::vector<std::string>& classes, const MatchCriteria& crit,
                 const std::vector<double>& thresholds, double max_efpr);

/// Per class, exhaustively evaluates the intersection F1 of every candidate
/// median length on that class's tracks and keeps the argmax; ties go to the
/// shorter filter. Classes are independent by construction.
MedianFilterPlan classwise_mf_search(const std::vector<ScoreGrid>& grids,
                                     const EventList& refs,
                                     const std::vector<std::string>& classes,
                                     const std::vector<int>& candidate_lengths,
                                     const MatchCriteria& crit, double threshold = 0.5);

/// Median-filters each class column of a [frames, n_classes] grid.
Tensor apply_median_plan(const Tensor& probs, const std::vector<std::string>& classes,
                         const MedianFilterPlan& plan);

}  // namespace dfd
