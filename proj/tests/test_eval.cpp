#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dfd/eval.hpp"
#include "dfd/rng.hpp"
#include "eval_oracles.hpp"
#include "oracles.hpp"

using namespace dfd;

namespace {

EventList random_scenario(Rng& rng, const std::vector<std::string>& classes,
                          int max_events, const std::string& clip_prefix) {
  EventList events;
  const int n = rng.uniform_int(0, max_events);
  for (int i = 0; i < n; ++i) {
    Event e;
    e.clip_id = clip_prefix + std::to_string(rng.uniform_int(0, 1));
    e.label = classes[rng.uniform_int(0, static_cast<int>(classes.size()) - 1)];
    e.onset = rng.uniform(0.0, 8.0);
    e.offset = e.onset + rng.uniform(0.05, 3.0);
    events.push_back(e);
  }
  return events;
}

}  // namespace

TEST_CASE("median filter basics") {
  std::vector<double> seq = {0.2, 0.9, 0.3, 0.8, 0.1};
  CHECK(median_filter_1d(seq, 1) == seq);

  std::vector<double> ones = {1, 1, 1};
  CHECK(median_filter_1d(ones, 3) == std::vector<double>{1, 1, 1});

  CHECK_THROWS_AS(median_filter_1d(seq, 2), std::invalid_argument);
  CHECK_THROWS_AS(median_filter_1d(seq, 0), std::invalid_argument);
}

TEST_CASE("median filter equals the brute-force windowed median") {
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(1, 40);
    std::vector<double> seq(n);
    for (double& v : seq) v = rng.uniform();
    const int len = 2 * rng.uniform_int(0, 5) + 1;
    CHECK(median_filter_1d(seq, len) == oracles::median_filter_reference(seq, len));
  }
}

TEST_CASE("probs_to_events decodes maximal runs") {
  const std::vector<std::string> classes = {"a", "b"};
  Tensor low = Tensor::full({6, 2}, 0.2);
  CHECK(probs_to_events(low, 0.5, 0.064, "c", classes).empty());

  Tensor grid = Tensor::full({8, 2}, 0.0);
  for (int t = 3; t <= 5; ++t) grid.at(t, 0) = 0.9;
  EventList events = probs_to_events(grid, 0.5, 0.064, "c", classes);
  REQUIRE(events.size() == 1);
  CHECK(events[0].label == "a");
  CHECK(events[0].onset == doctest::Approx(0.192).epsilon(1e-12));
  CHECK(events[0].offset == doctest::Approx(0.384).epsilon(1e-12));

  grid.at(1, 1) = 0.9;
  grid.at(3, 1) = 0.9;  // gap at frame 2 splits the run
  EventList two = probs_to_events(grid, 0.5, 0.064, "c", classes);
  int b_events = 0;
  for (const Event& e : two)
    if (e.label == "b") ++b_events;
  CHECK(b_events == 2);

  CHECK_THROWS_AS(probs_to_events(grid, 0.0, 0.064, "c", classes), std::invalid_argument);
}

TEST_CASE("match_events hand cases") {
  MatchCriteria crit;
  EventList det = {{"c", "a", 0.0, 1.0}};
  EventList ref = {{"c", "a", 0.5, 1.5}};
  MatchCounts m = match_events(det, ref, crit);
  CHECK(m.tp == 1);
  CHECK(m.fp == 0);
  CHECK(m.fn == 0);

  EventList same = {{"c", "a", 2.0, 3.0}};
  MatchCriteria strict{1.0, 1.0};
  MatchCounts ident = match_events(same, same, strict);
  CHECK(ident.tp == 1);

  EventList far = {{"c", "a", 5.0, 6.0}};
  MatchCounts miss = match_events(det, far, crit);
  CHECK(miss.fp == 1);
  CHECK(miss.fn == 1);
  CHECK(miss.tp == 0);

  // different clip or label never matches
  EventList other_clip = {{"d", "a", 0.5, 1.5}};
  MatchCounts mc = match_events(det, other_clip, crit);
  CHECK(mc.tp == 0);
  CHECK(mc.fp == 1);
  CHECK(mc.fn == 1);
}

TEST_CASE("match_events count identities on random scenarios") {
  Rng rng(52);
  const std::vector<std::string> classes = {"a", "b", "c"};
  for (int trial = 0; trial < 300; ++trial) {
    EventList dets = random_scenario(rng, classes, 5, "clip");
    EventList refs = random_scenario(rng, classes, 5, "clip");
    MatchCriteria crit{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
    MatchCounts m = match_events(dets, refs, crit);
    CHECK(m.tp + m.fn == static_cast<long long>(refs.size()));
    CHECK(m.tp <= static_cast<long long>(refs.size()));
    CHECK(m.fp <= static_cast<long long>(dets.size()));

    auto ref = eval_oracles::match_reference(dets, refs, crit.rho_dtc, crit.rho_gtc);
    CHECK(m.tp == ref.tp);
    CHECK(m.fp == ref.fp);
    CHECK(m.fn == ref.fn);
  }
}

TEST_CASE("intersection_f1 endpoints") {
  MatchCriteria crit;
  EventList refs = {{"c", "a", 0.0, 1.0}, {"c", "b", 2.0, 3.0}};
  F1Result perfect = intersection_f1(refs, refs, crit);
  CHECK(perfect.macro == 1.0);

  F1Result none = intersection_f1({}, refs, crit);
  CHECK(none.macro == 0.0);

  // empty class contributes 1 when a vocabulary is supplied
  F1Result with_vocab = intersection_f1(refs, refs, crit, {"a", "b", "silent"});
  CHECK(with_vocab.per_class.at("silent") == 1.0);
  CHECK(with_vocab.macro == 1.0);
}

TEST_CASE("intersection_f1 equals the brute-force recomputation") {
  Rng rng(53);
  const std::vector<std::string> classes = {"a", "b"};
  for (int trial = 0; trial < 300; ++trial) {
    EventList dets = random_scenario(rng, classes, 4, "k");
    EventList refs = random_scenario(rng, classes, 4, "k");
    MatchCriteria crit{0.5, 0.5};
    F1Result mine = intersection_f1(dets, refs, crit, classes);
    const double ref = eval_oracles::macro_f1_reference(dets, refs, 0.5, 0.5, classes);
    CHECK(mine.macro == doctest::Approx(ref).epsilon(1e-15));
  }
}

TEST_CASE("intersection_f1 is invariant to event order") {
  Rng rng(54);
  const std::vector<std::string> classes = {"a", "b", "c"};
  EventList dets = random_scenario(rng, classes, 6, "p");
  EventList refs = random_scenario(rng, classes, 6, "p");
  MatchCriteria crit;
  F1Result base = intersection_f1(dets, refs, crit, classes);
  std::reverse(dets.begin(), dets.end());
  std::rotate(refs.begin(), refs.begin() + refs.size() / 2, refs.end());
  F1Result shuffled = intersection_f1(dets, refs, crit, classes);
  CHECK(base.macro == shuffled.macro);
}

TEST_CASE("psds_lite endpoints") {
  const std::vector<std::string> classes = {"a", "b"};
  MatchCriteria crit;
  const std::vector<double> thresholds = {0.1, 0.3, 0.5, 0.7, 0.9};

  // perfect scorer: probabilities equal the 0/1 labels
  ScoreGrid g1{"c0", Tensor::zeros({10, 2}), 0.5};
  for (int t = 2; t <= 5; ++t) g1.probs.at(t, 0) = 1.0;
  ScoreGrid g2{"c1", Tensor::zeros({10, 2}), 0.5};
  for (int t = 4; t <= 7; ++t) g2.probs.at(t, 1) = 1.0;
  EventList refs = {{"c0", "a", 1.0, 3.0}, {"c1", "b", 2.0, 4.0}};
  CHECK(psds_lite({g1, g2}, refs, classes, crit, thresholds, 100.0) == 1.0);

  // all-zero scores
  ScoreGrid z1{"c0", Tensor::zeros({10, 2}), 0.5};
  ScoreGrid z2{"c1", Tensor::zeros({10, 2}), 0.5};
  CHECK(psds_lite({z1, z2}, refs, classes, crit, thresholds, 100.0) == 0.0);

  CHECK_THROWS_AS(psds_lite({g1}, refs, classes, crit, {}, 100.0), std::invalid_argument);
  CHECK_THROWS_AS(psds_lite({g1}, refs, classes, crit, {0.9, 0.1}, 100.0),
                  std::invalid_argument);
}

TEST_CASE("psds_lite matches a hand-integrated two-clip scenario") {
  // two 4-second clips at 0.5 s frames; one reference per clip
  const std::vector<std::string> classes = {"a", "b"};
  ScoreGrid c1{"c1", Tensor::full({8, 2}, 0.0), 0.5};
  // class a: real event frames 1..3 at 0.6, spurious frame 5 at 0.8
  c1.probs.at(0, 0) = 0.1;
  for (int t = 1; t <= 3; ++t) c1.probs.at(t, 0) = 0.6;
  c1.probs.at(4, 0) = 0.1;
  c1.probs.at(5, 0) = 0.8;
  ScoreGrid c2{"c2", Tensor::full({8, 2}, 0.0), 0.5};
  for (int t = 2; t <= 5; ++t) c2.probs.at(t, 1) = 0.6;  // real event
  c2.probs.at(0, 0) = 0.45;                              // spurious, class a
  EventList refs = {{"c1", "a", 0.5, 2.0}, {"c2", "b", 1.0, 3.0}};
  MatchCriteria crit;
  const std::vector<double> thresholds = {0.3, 0.5, 0.7};

  // theta=0.7: only the spurious det survives -> TPR 0, 1 FP (450/h)
  // theta=0.5: both real events + 1 FP      -> TPR 1, 450/h
  // theta=0.3: + second spurious det        -> TPR 1, 900/h
  // support curve: 0 until 450/h, then 1 -> (1000-450)/1000
  const double value = psds_lite({c1, c2}, refs, classes, crit, thresholds, 1000.0);
  CHECK(value == doctest::Approx(0.55).epsilon(1e-12));

  const double oracle = eval_oracles::psds_curve_reference(
      {{450.0, 0.0}, {450.0, 1.0}, {900.0, 1.0}}, 1000.0);
  CHECK(value == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("psds_lite never decreases when in-reference scores rise") {
  Rng rng(55);
  const std::vector<std::string> classes = {"a", "b"};
  const std::vector<double> thresholds = {0.2, 0.4, 0.6, 0.8};
  MatchCriteria crit;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ScoreGrid> grids;
    EventList refs;
    for (int clip = 0; clip < 2; ++clip) {
      ScoreGrid g{"clip" + std::to_string(clip), Tensor::zeros({12, 2}), 0.5};
      for (double& v : g.probs.data()) v = rng.uniform(0.0, 0.9);
      grids.push_back(g);
      const int cls = rng.uniform_int(0, 1);
      const int start = rng.uniform_int(0, 6);
      const int len = rng.uniform_int(2, 5);
      refs.push_back(Event{g.clip_id, classes[cls], start * 0.5, (start + len) * 0.5});
    }
    const double before = psds_lite(grids, refs, classes, crit, thresholds, 200.0);

    // raise scores inside the first reference event
    std::vector<ScoreGrid> raised = grids;
    raised[0].probs = grids[0].probs.clone();
    const Event& r = refs[0];
    const int cls = r.label == "a" ? 0 : 1;
    for (int t = static_cast<int>(r.onset / 0.5); t < static_cast<int>(r.offset / 0.5);
         ++t)
      raised[0].probs.at(t, cls) =
          std::min(0.95, raised[0].probs.at(t, cls) + rng.uniform(0.1, 0.5));
    const double after = psds_lite(raised, refs, classes, crit, thresholds, 200.0);
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("classwise search keeps the singleton candidate") {
  const std::vector<std::string> classes = {"a", "b"};
  ScoreGrid g{"c", Tensor::full({10, 2}, 0.1), 0.5};
  EventList refs = {{"c", "a", 0.0, 1.0}};
  MedianFilterPlan plan = classwise_mf_search({g}, refs, classes, {7}, {});
  CHECK(plan.lengths.at("a") == 7);
  CHECK(plan.lengths.at("b") == 7);
}

TEST_CASE("classwise search prefers the shortest filter on clean scores") {
  const std::vector<std::string> classes = {"a", "b"};
  ScoreGrid g{"c", Tensor::zeros({16, 2}), 0.5};
  for (int t = 2; t <= 6; ++t) g.probs.at(t, 0) = 1.0;
  for (int t = 9; t <= 13; ++t) g.probs.at(t, 1) = 1.0;
  EventList refs = {{"c", "a", 1.0, 3.5}, {"c", "b", 4.5, 7.0}};
  MedianFilterPlan plan = classwise_mf_search({g}, refs, classes, {1, 3, 5, 7}, {});
  CHECK(plan.lengths.at("a") == 1);
  CHECK(plan.lengths.at("b") == 1);
}

TEST_CASE("classwise search removes one-frame spikes where they hurt") {
  const std::vector<std::string> classes = {"noisy", "clean"};
  ScoreGrid g{"c", Tensor::zeros({40, 2}), 0.5};
  for (int t = 10; t <= 25; ++t) g.probs.at(t, 0) = 0.9;  // real event
  g.probs.at(3, 0) = 0.9;                                 // spikes
  g.probs.at(30, 0) = 0.9;
  g.probs.at(35, 0) = 0.9;
  for (int t = 8; t <= 15; ++t) g.probs.at(t, 1) = 0.8;
  EventList refs = {{"c", "noisy", 10 * 0.5, 26 * 0.5}, {"c", "clean", 8 * 0.5, 16 * 0.5}};
  const std::vector<int> candidates = {1, 3, 5, 7};
  MedianFilterPlan plan = classwise_mf_search({g}, refs, classes, candidates, {});
  CHECK(plan.lengths.at("noisy") > 1);
  CHECK(plan.lengths.at("clean") == 1);

  // exhaustive argmax per class using the independent oracle
  for (int c = 0; c < 2; ++c) {
    double best = -1.0;
    int best_len = 0;
    for (int len : candidates) {
      std::vector<double> track(40);
      for (int t = 0; t < 40; ++t) track[t] = g.probs.at(t, c);
      auto filtered = oracles::median_filter_reference(track, len);
      EventList dets;
      int run = -1;
      for (int t = 0; t <= 40; ++t) {
        const bool on = t < 40 && filtered[t] > 0.5;
        if (on && run < 0) run = t;
        if (!on && run >= 0) {
          dets.push_back(Event{"c", classes[c], run * 0.5, t * 0.5});
          run = -1;
        }
      }
      EventList cls_refs;
      for (const Event& r : refs)
        if (r.label == classes[c]) cls_refs.push_back(r);
      const double f1 =
          eval_oracles::f1_of(eval_oracles::match_reference(dets, cls_refs, 0.5, 0.5));
      if (f1 > best) {
        best = f1;
        best_len = len;
      }
    }
    CHECK(plan.lengths.at(classes[c]) == best_len);
  }
}

TEST_CASE("classwise search is independent across classes") {
  Rng rng(56);
  const std::vector<std::string> classes = {"a", "b"};
  ScoreGrid g{"c", Tensor::zeros({30, 2}), 0.5};
  for (double& v : g.probs.data()) v = rng.uniform(0.0, 1.0);
  EventList refs = {{"c", "a", 2.0, 5.0}, {"c", "b", 7.0, 9.0}};
  MedianFilterPlan base = classwise_mf_search({g}, refs, classes, {1, 3, 5}, {});

  ScoreGrid mutated{"c", g.probs.clone(), 0.5};
  for (int t = 0; t < 30; ++t) mutated.probs.at(t, 1) = rng.uniform(0.0, 1.0);
  MedianFilterPlan other = classwise_mf_search({mutated}, refs, classes, {1, 3, 5}, {});
  CHECK(base.lengths.at("a") == other.lengths.at("a"));
}

TEST_CASE("median plan file round trip and validation") {
  MedianFilterPlan plan;
  plan.lengths = {{"alarm", 3}, {"bark", 7}, {"bell", 1}};
  const std::string path =
      (std::filesystem::temp_directory_path() / "dfd_plan.txt").string();
  write_median_plan(path, plan);
  MedianFilterPlan back = read_median_plan(path);
  CHECK(back.lengths == plan.lengths);
  std::remove(path.c_str());

  MedianFilterPlan bad;
  bad.lengths = {{"alarm", 4}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("apply_median_plan filters per class") {
  const std::vector<std::string> classes = {"a", "b"};
  Tensor grid = Tensor::zeros({10, 2});
  grid.at(4, 0) = 1.0;  // single spike in class a
  grid.at(4, 1) = 1.0;
  MedianFilterPlan plan;
  plan.lengths = {{"a", 3}, {"b", 1}};
  Tensor out = apply_median_plan(grid, classes, plan);
  CHECK(out.at(4, 0) == 0.0);  // spike removed
  CHECK(out.at(4, 1) == 1.0);  // untouched
}
