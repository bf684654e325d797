#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "lowdose/config.hpp"
#include "lowdose/experiment.hpp"

using namespace lowdose;

namespace {

const GridSpec kScreen{8, 8, 1e-6};

ScreenDistribution random_screen(std::uint64_t seed, double T) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealMap m(kScreen);
  for (auto& v : m.storage())
    v = u(gen) * u(gen);
  return ScreenDistribution(m, T);
}

std::vector<DetectionEvent> random_events(std::uint64_t seed, std::size_t n, bool with_absorption) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> px(0, kScreen.size() - 1);
  std::bernoulli_distribution absorbed(with_absorption ? 0.3 : 0.0);
  std::vector<DetectionEvent> ev;
  for (std::size_t i = 0; i < n; ++i)
    ev.push_back(absorbed(gen) ? DetectionEvent::absorption() : DetectionEvent::detected(px(gen)));
  return ev;
}

// P(Right | events) as the direct product of floored likelihood ratios,
// long double, computed without the library's accumulator.
long double closed_form(long double prior, const std::vector<DetectionEvent>& ev, const ScreenDistribution& r,
                        const ScreenDistribution& w, double floor, UpdateMode mode) {
  long double lr = 1.0L;
  for (const auto& e : ev) {
    if (e.absorbed) {
      if (mode == UpdateMode::FullInformation)
        lr *= static_cast<long double>(1.0 - r.detect_prob()) / static_cast<long double>(1.0 - w.detect_prob());
      continue;
    }
    lr *= static_cast<long double>(std::max(r.pmf()[e.pixel], floor)) / std::max(w.pmf()[e.pixel], floor);
  }
  return prior * lr / (prior * lr + (1.0L - prior));
}

HypothesisPair chain_pair(std::size_t n) {
  ExperimentConfig cfg;
  cfg.grid_n = n;
  return hypothesis_pair(build_chain(cfg));
}

} // namespace

TEST(Pair, ValidatesInputs) {
  const auto r = random_screen(1, 1.0);
  EXPECT_THROW(HypothesisPair(r, ScreenDistribution(RealMap(GridSpec{4, 4, 1e-6}, 1.0), 1.0)), ShapeError);
  EXPECT_THROW(HypothesisPair(r, r, 0.0), DomainError);
  EXPECT_THROW(HypothesisPair(r, r, 1.0), DomainError);
  const HypothesisPair p(r, r);
  EXPECT_THROW((void)p.likelihood_ratio(DetectionEvent::detected(kScreen.size()), UpdateMode::DetectionsOnly), ShapeError);
}

TEST(Posterior, UninformativeEventKeepsPrior) {
  const auto r = random_screen(2, 1.0);
  const HypothesisPair p(r, r, 0.3);
  const double post = update_posterior(0.3, DetectionEvent::detected(5), p, UpdateMode::DetectionsOnly);
  EXPECT_NEAR(post, 0.3, 1e-15);
  EXPECT_EQ(update_posterior(0.5, DetectionEvent::detected(5), p, UpdateMode::DetectionsOnly), 0.5);
}

TEST(Posterior, RatioNineteenFromEvenPriorIsExactlyPointNineFive) {
  RealMap right(kScreen, 1.0), wrong(kScreen, 1.0);
  right[0] = 19.0;
  wrong[1] = 19.0;
  // pmf values 19/82 and 1/82: the ratio is 19 exactly
  const HypothesisPair p(ScreenDistribution(right, 1.0), ScreenDistribution(wrong, 1.0));
  ASSERT_EQ(p.likelihood_ratio(DetectionEvent::detected(0), UpdateMode::DetectionsOnly), 19.0);
  EXPECT_EQ(update_posterior(0.5, DetectionEvent::detected(0), p, UpdateMode::DetectionsOnly), 0.95);
  LogOdds lo(0.5);
  lo.add_ratio(19.0);
  EXPECT_EQ(lo.probability(), 0.95);
}

TEST(Posterior, TwoEventsCommute) {
  const HypothesisPair p(random_screen(3, 1.0), random_screen(4, 1.0));
  const std::vector<DetectionEvent> ab{DetectionEvent::detected(3), DetectionEvent::detected(40)};
  const std::vector<DetectionEvent> ba{ab[1], ab[0]};
  EXPECT_EQ(posterior_after(0.5, ab, p, UpdateMode::DetectionsOnly),
            posterior_after(0.5, ba, p, UpdateMode::DetectionsOnly));
}

TEST(Posterior, MatchesClosedFormProduct) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto r = random_screen(100 + s, 0.8);
    const auto w = random_screen(300 + s, 0.6);
    const double prior = 0.2 + 0.6 * static_cast<double>(s) / 100.0;
    const HypothesisPair p(r, w, prior);
    const auto ev = random_events(500 + s, 1 + s % 12, true);
    for (auto mode : {UpdateMode::DetectionsOnly, UpdateMode::FullInformation}) {
      const long double ref = closed_form(prior, ev, r, w, p.floor(), mode);
      const double got = posterior_after(prior, ev, p, mode);
      ASSERT_LE(std::abs((got - ref) / ref), 1e-12) << "sequence " << s;
    }
  }
}

TEST(Posterior, PermutationInvarianceIsExact) {
  std::mt19937_64 gen(77);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const HypothesisPair p(random_screen(700 + s, 0.9), random_screen(900 + s, 0.5));
    auto ev = random_events(1100 + s, 30, true);
    const double ref = posterior_after(0.5, ev, p, UpdateMode::FullInformation);
    for (int k = 0; k < 20; ++k) {
      std::shuffle(ev.begin(), ev.end(), gen);
      ASSERT_EQ(posterior_after(0.5, ev, p, UpdateMode::FullInformation), ref);
    }
  }
}

TEST(Posterior, FloorBoundsSingleEventEvidence) {
  RealMap right(kScreen, 0.0), wrong(kScreen, 1.0);
  right[9] = 1.0;
  const HypothesisPair p(ScreenDistribution(right, 1.0), ScreenDistribution(wrong, 1.0));
  const double r_hit = p.likelihood_ratio(DetectionEvent::detected(9), UpdateMode::DetectionsOnly);
  const double r_miss = p.likelihood_ratio(DetectionEvent::detected(10), UpdateMode::DetectionsOnly);
  EXPECT_DOUBLE_EQ(r_hit, 64.0);
  EXPECT_DOUBLE_EQ(r_miss, 1e-3);
  EXPECT_LT(update_posterior(0.5, DetectionEvent::detected(10), p, UpdateMode::DetectionsOnly), 1e-2);
  EXPECT_GT(update_posterior(0.5, DetectionEvent::detected(10), p, UpdateMode::DetectionsOnly), 0.0);
}

TEST(Posterior, AbsorptionEvidenceOnlyInFullInformationMode) {
  const HypothesisPair p(random_screen(5, 0.9), random_screen(6, 0.3));
  EXPECT_EQ(p.likelihood_ratio(DetectionEvent::absorption(), UpdateMode::DetectionsOnly), 1.0);
  EXPECT_NEAR(p.likelihood_ratio(DetectionEvent::absorption(), UpdateMode::FullInformation), 0.1 / 0.7, 1e-15);
}

TEST(Trial, IdenticalHypothesesNeverDecide) {
  const auto r = random_screen(7, 0.8);
  const HypothesisPair p(r, r);
  TrialOptions o;
  o.max_incident = 300;
  const auto t = run_trial(Orientation::Right, p, o, Rng(1));
  EXPECT_EQ(t.verdict, Verdict::Undecided);
  EXPECT_EQ(t.n_incident, 300u);
  for (const auto& step : t.trace)
    ASSERT_EQ(step.posterior_right, 0.5);
}

TEST(Trial, DeltaAgainstUniformDecidesAfterOneElectron) {
  RealMap delta(kScreen, 0.0);
  delta[20] = 1.0;
  const HypothesisPair p(ScreenDistribution(delta, 1.0), ScreenDistribution(RealMap(kScreen, 1.0), 1.0));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto t = run_trial(Orientation::Right, p, {}, Rng(s));
    EXPECT_EQ(t.verdict, Verdict::AcceptRight);
    EXPECT_EQ(t.n_detected, 1u);
  }
}

TEST(Trial, CountsNondecreasingAndPosteriorInsideUnitInterval) {
  const HypothesisPair p(random_screen(8, 0.7), random_screen(9, 0.7));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto t = run_trial(s % 2 ? Orientation::Wrong : Orientation::Right, p, {}, Rng(s));
    ASSERT_EQ(t.trace.size(), t.n_incident + 1);
    ASSERT_EQ(t.events.size(), t.n_incident);
    for (std::size_t i = 1; i < t.trace.size(); ++i) {
      ASSERT_GE(t.trace[i].n_detected, t.trace[i - 1].n_detected);
      ASSERT_EQ(t.trace[i].n_incident, t.trace[i - 1].n_incident + 1);
      ASSERT_GT(t.trace[i].posterior_right, 0.0);
      ASSERT_LT(t.trace[i].posterior_right, 1.0);
    }
    // the final posterior is reproducible from the event log
    ASSERT_EQ(posterior_after(0.5, t.events, p, UpdateMode::DetectionsOnly), t.final_posterior);
  }
}

TEST(Ensemble, SingleTrialHasZeroSpread) {
  const HypothesisPair p(random_screen(10, 0.8), random_screen(11, 0.8));
  EnsembleOptions o;
  o.n_trials = 1;
  const auto e = run_ensemble(Orientation::Right, p, o);
  EXPECT_EQ(e.stats.std_detected, 0.0);
  EXPECT_EQ(e.stats.std_incident, 0.0);
}

TEST(Ensemble, CountsAndRatesConsistent) {
  const HypothesisPair p(random_screen(12, 0.8), random_screen(13, 0.8));
  EnsembleOptions o;
  o.n_trials = 200;
  o.trial.max_incident = 5;
  for (auto truth : {Orientation::Right, Orientation::Wrong}) {
    const auto e = run_ensemble(truth, p, o);
    EXPECT_EQ(e.stats.n_decided + e.stats.n_undecided, o.n_trials);
    EXPECT_EQ(e.stats.n_accept_right + e.stats.n_accept_wrong, e.stats.n_decided);
    for (double r : {e.stats.accept_right_rate, e.stats.undecided_rate, e.stats.false_accept_rate,
                     e.stats.false_reject_rate})
      EXPECT_TRUE(r >= 0.0 && r <= 1.0);
    EXPECT_GE(e.stats.std_detected, 0.0);
  }
}

TEST(Ensemble, StatisticsIndependentOfOrderAndThreads) {
  const HypothesisPair p(random_screen(14, 0.6), random_screen(15, 0.9));
  EnsembleOptions o;
  o.n_trials = 64;
  const auto one = run_ensemble(Orientation::Wrong, p, o);
  o.threads = 4;
  const auto four = run_ensemble(Orientation::Wrong, p, o);
  ASSERT_EQ(one.trials.size(), four.trials.size());
  for (std::size_t i = 0; i < one.trials.size(); ++i) {
    ASSERT_EQ(one.trials[i].events, four.trials[i].events);
    ASSERT_EQ(one.trials[i].final_posterior, four.trials[i].final_posterior);
  }
  std::vector<TrialSummary> s;
  for (const auto& t : one.trials)
    s.push_back({t.n_detected, t.n_incident, t.verdict});
  std::reverse(s.begin(), s.end());
  const auto rev = summarize(Orientation::Wrong, s);
  EXPECT_EQ(rev.n_accept_right, one.stats.n_accept_right);
  EXPECT_DOUBLE_EQ(rev.mean_incident, one.stats.mean_incident);
  EXPECT_DOUBLE_EQ(rev.std_detected, one.stats.std_detected);
}

TEST(Ensemble, PopulationStandardDeviation) {
  const std::vector<TrialSummary> s{{1, 2, Verdict::AcceptRight}, {3, 6, Verdict::AcceptWrong},
                                    {9, 9, Verdict::Undecided}};
  const auto st = summarize(Orientation::Right, s);
  EXPECT_EQ(st.n_decided, 2u);
  EXPECT_DOUBLE_EQ(st.mean_detected, 2.0);
  EXPECT_DOUBLE_EQ(st.std_detected, 1.0);
  EXPECT_DOUBLE_EQ(st.std_incident, 2.0);
  // rates are over all trials, undecided included
  EXPECT_DOUBLE_EQ(st.false_reject_rate, 1.0 / 3.0);
}

TEST(Ensemble, MedianPosteriorRisesWithElectronCount) {
  const HypothesisPair p = chain_pair(128);
  EnsembleOptions o;
  o.n_trials = 400;
  o.trial.confidence = 0.999999;
  const auto e = run_ensemble(Orientation::Right, p, o);
  double prev = 0.0;
  for (std::size_t n : {1u, 2u, 4u, 8u, 16u}) {
    std::vector<double> post;
    for (const auto& t : e.trials) {
      double v = t.trace.front().posterior_right;
      for (const auto& step : t.trace)
        if (step.n_detected <= n)
          v = step.posterior_right;
      post.push_back(v);
    }
    std::nth_element(post.begin(), post.begin() + post.size() / 2, post.end());
    const double median = post[post.size() / 2];
    EXPECT_GE(median, prev) << n;
    prev = median;
  }
}

TEST(Ensemble, SeedsDeriveFromMaster) {
  EXPECT_EQ(trial_seed(1, Orientation::Right, 3), derive_seed(1, 0, 3));
  EXPECT_EQ(trial_seed(1, Orientation::Wrong, 3), derive_seed(1, 1, 3));
  EXPECT_THROW(run_ensemble(Orientation::Right, HypothesisPair(random_screen(1, 1.0), random_screen(2, 1.0)), EnsembleOptions{TrialOptions{}, 0}), DomainError);
}
