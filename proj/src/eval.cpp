#include "dfd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dfd {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

bool same_key(const Event& a, const Event& b) {
  return a.clip_id == b.clip_id && a.label == b.label;
}

}  // namespace

int MedianFilterPlan::length_for(const std::string& cls) const {
  auto it = lengths.find(cls);
  return it == lengths.end() ? default_length : it->second;
}

void MedianFilterPlan::validate() const {
  require(default_length >= 1 && default_length % 2 == 1,
          "median filter length must be odd and >= 1");
  for (const auto& [cls, len] : lengths)
    require(len >= 1 && len % 2 == 1,
            "median filter length for class '" + cls + "' must be odd and >= 1");
}

void write_median_plan(const std::string& path, const MedianFilterPlan& plan) {
  plan.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write median plan: " + path);
  for (const auto& [cls, len] : plan.lengths) os << cls << '=' << len << '\n';
  if (!os) throw std::runtime_error("short write: " + path);
}

MedianFilterPlan read_median_plan(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open median plan: " + path);
  MedianFilterPlan plan;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed median plan line " + std::to_string(line_no));
    plan.lengths[line.substr(0, eq)] = std::stoi(line.substr(eq + 1));
  }
  plan.validate();
  return plan;
}

void MatchCriteria::validate() const {
  require(rho_dtc > 0.0 && rho_dtc <= 1.0, "rho_dtc must lie in (0,1]");
  require(rho_gtc > 0.0 && rho_gtc <= 1.0, "rho_gtc must lie in (0,1]");
}

std::vector<double> median_filter_1d(const std::vector<double>& probs, int length) {
  require(length >= 1 && length % 2 == 1, "median filter length must be odd and >= 1");
  if (length == 1) return probs;
  const int n = static_cast<int>(probs.size());
  const int half = length / 2;
  std::vector<double> out(n);
  std::vector<double> window(length);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < length; ++j) {
      const int src = i - half + j;
      window[j] = (src >= 0 && src < n) ? probs[src] : 0.0;
    }
    std::nth_element(window.begin(), window.begin() + half, window.end());
    out[i] = window[half];
  }
  return out;
}

EventList probs_to_events(const Tensor& probs, double threshold, double frame_dur,
                          const std::string& clip_id,
                          const std::vector<std::string>& classes) {
  require(probs.rank() == 2, "probabilities must be [frames, n_classes]");
  require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0,1)");
  require(frame_dur > 0.0, "frame duration must be positive");
  require(static_cast<int>(classes.size()) == probs.dim(1),
          "class list does not match grid width");
  const int T = probs.dim(0), C = probs.dim(1);
  EventList events;
  for (int c = 0; c < C; ++c) {
    int run_start = -1;
    for (int t = 0; t <= T; ++t) {
      const bool active = t < T && probs.at(t, c) > threshold;
      if (active && run_start < 0) run_start = t;
      if (!active && run_start >= 0) {
        events.push_back(Event{clip_id, classes[c], run_start * frame_dur,
                               t * frame_dur});
        run_start = -1;
      }
    }
  }
  return events;
}

MatchCounts match_events(const EventList& dets, const EventList& refs,
                         const MatchCriteria& crit) {
  crit.validate();
  std::vector<bool> dtc_pass(dets.size(), false);
  MatchCounts counts;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double inter = 0.0;
    for (const Event& r : refs)
      if (same_key(dets[d], r))
        inter += overlap(dets[d].onset, dets[d].offset, r.onset, r.offset);
    const double dur = dets[d].offset - dets[d].onset;
    dtc_pass[d] = dur > 0.0 && inter / dur >= crit.rho_dtc;
    if (!dtc_pass[d]) ++counts.fp;
  }
  for (const Event& r : refs) {
    double inter = 0.0;
    for (std::size_t d = 0; d < dets.size(); ++d)
      if (dtc_pass[d] && same_key(dets[d], r))
        inter += overlap(dets[d].onset, dets[d].offset, r.onset, r.offset);
    const double dur = r.offset - r.onset;
    if (dur > 0.0 && inter / dur >= crit.rho_gtc)
      ++counts.tp;
    else
      ++counts.fn;
  }
  return counts;
}

F1Result intersection_f1(const EventList& dets, const EventList& refs,
                         const MatchCriteria& crit,
                         const std::vector<std::string>& classes) {
  std::vector<std::string> class_list = classes;
  if (class_list.empty()) {
    std::set<std::string> seen;
    for (const Event& e : refs) seen.insert(e.label);
    for (const Event& e : dets) seen.insert(e.label);
    class_list.assign(seen.begin(), seen.end());
  }
  F1Result result;
  if (class_list.empty()) {
    result.macro = 1.0;  // nothing to detect, nothing detected
    return result;
  }
  double sum = 0.0;
  for (const std::string& cls : class_list) {
    EventList d, r;
    for (const Event& e : dets)
      if (e.label == cls) d.push_back(e);
    for (const Event& e : refs)
      if (e.label == cls) r.push_back(e);
    const MatchCounts counts = match_events(d, r, crit);
    const long long denom = 2 * counts.tp + counts.fp + counts.fn;
    const double f1 = denom == 0 ? 1.0 : 2.0 * counts.tp / static_cast<double>(denom);
    result.per_class[cls] = f1;
    sum += f1;
  }
  result.macro = sum / static_cast<double>(class_list.size());
  return result;
}

double psds_lite(const std::vector<ScoreGrid>& grids, const EventList& refs,
                 const std::vector<std::string>& classes, const MatchCriteria& crit,
                 const std::vector<double>& thresholds, double max_efpr) {
  require(!thresholds.empty(), "threshold list must not be empty");
  require(max_efpr > 0.0, "max_efpr must be positive");
  require(!classes.empty(), "class list must not be empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    require(thresholds[i] > 0.0 && thresholds[i] < 1.0, "thresholds must lie in (0,1)");
    if (i > 0) require(thresholds[i] >= thresholds[i - 1], "thresholds must be sorted");
  }

  double total_seconds = 0.0;
  for (const ScoreGrid& g : grids) total_seconds += g.probs.dim(0) * g.frame_dur;
  const double hours = total_seconds / 3600.0;
  require(hours > 0.0, "no scored audio");

  std::map<std::string, long long> ref_count;
  for (const Event& r : refs) ++ref_count[r.label];

  struct Point {
    double efpr;
    double tpr;
  };
  std::vector<Point> points;
  for (double threshold : thresholds) {
    EventList dets;
    for (const ScoreGrid& g : grids) {
      EventList d = probs_to_events(g.probs, threshold, g.frame_dur, g.clip_id, classes);
      dets.insert(dets.end(), d.begin(), d.end());
    }
    double tpr_sum = 0.0;
    long long ref_classes = 0, total_fp = 0;
    for (const std::string& cls : classes) {
      EventList d, r;
      for (const Event& e : dets)
        if (e.label == cls) d.push_back(e);
      for (const Event& e : refs)
        if (e.label == cls) r.push_back(e);
      const MatchCounts counts = match_events(d, r, crit);
      total_fp += counts.fp;
      auto it = ref_count.find(cls);
      if (it != ref_count.end() && it->second > 0) {
        tpr_sum += static_cast<double>(counts.tp) / static_cast<double>(it->second);
        ++ref_classes;
      }
    }
    const double tpr = ref_classes > 0 ? tpr_sum / static_cast<double>(ref_classes) : 0.0;
    points.push_back(Point{static_cast<double>(total_fp) / hours, tpr});
  }

  // support curve: best TPR reachable at or below each eFPR, integrated to max_efpr
  std::sort(points.begin(), points.end(),
            [](const Point& a, const Point& b) { return a.efpr < b.efpr; });
  double area = 0.0, level = 0.0, x = 0.0;
  for (const Point& p : points) {
    if (p.efpr > max_efpr) break;
    if (p.efpr > x) {
      area += level * (p.efpr - x);
      x = p.efpr;
    }
    level = std::max(level, p.tpr);
  }
  area += level * (max_efpr - x);
  return area / max_efpr;
}

MedianFilterPlan classwise_mf_search(const std::vector<ScoreGrid>& grids,
                                     const EventList& refs,
                                     const std::vector<std::string>& classes,
                                     const std::vector<int>& candidate_lengths,
                                     const MatchCriteria& crit, double threshold) {
  require(!candidate_lengths.empty(), "candidate length list must not be empty");
  for (int len : candidate_lengths)
    require(len >= 1 && len % 2 == 1, "candidate lengths must be odd and >= 1");
  std::vector<int> candidates = candidate_lengths;
  std::sort(candidates.begin(), candidates.end());

  MedianFilterPlan plan;
  plan.default_length = candidates.front();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    EventList class_refs;
    for (const Event& r : refs)
      if (r.label == classes[c]) class_refs.push_back(r);
    double best_f1 = -1.0;
    int best_len = candidates.front();
    for (int len : candidates) {
      EventList dets;
      for (const ScoreGrid& g : grids) {
        std::vector<double> track(g.probs.dim(0));
        for (int t = 0; t < g.probs.dim(0); ++t) track[t] = g.probs.at(t, static_cast<int>(c));
        const std::vector<double> filtered = median_filter_1d(track, len);
        Tensor column(Shape{g.probs.dim(0), 1}, filtered);
        EventList d = probs_to_events(column, threshold, g.frame_dur, g.clip_id,
                                      {classes[c]});
        dets.insert(dets.end(), d.begin(), d.end());
      }
      const MatchCounts counts = match_events(dets, class_refs, crit);
      const long long denom = 2 * counts.tp + counts.fp + counts.fn;
      const double f1 = denom == 0 ? 1.0 : 2.0 * counts.tp / static_cast<double>(denom);
      if (f1 > best_f1) {  // strict: ties keep the shorter length
        best_f1 = f1;
        best_len = len;
      }
    }
    plan.lengths[classes[c]] = best_len;
  }
  return plan;
}

Tensor apply_median_plan(const Tensor& probs, const std::vector<std::string>& classes,
                         const MedianFilterPlan& plan) {
  require(probs.rank() == 2, "grid must be [frames, n_classes]");
  require(static_cast<int>(classes.size()) == probs.dim(1),
          "class list does not match grid width");
  plan.validate();
  const int T = probs.dim(0), C = probs.dim(1);
  Tensor out(probs.shape());
  std::vector<double> track(T);
  for (int c = 0; c < C; ++c) {
    for (int t = 0; t < T; ++t) track[t] = probs.at(t, c);
    const std::vector<double> filtered = median_filter_1d(track, plan.length_for(classes[c]));
    for (int t = 0; t < T; ++t) out.at(t, c) = filtered[t];
  }
  return out;
}

}  // namespace dfd
