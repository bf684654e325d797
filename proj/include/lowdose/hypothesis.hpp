#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "lowdose/detection.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/random.hpp"
#include "lowdose/specimen.hpp"

namespace lowdose {

enum class UpdateMode {
  DetectionsOnly,  // absorbed electrons leave the posterior unchanged
  FullInformation, // absorption is evidence too: odds *= (1 - T_R) / (1 - T_W)
};

inline const char* to_string(UpdateMode m) {
  return m == UpdateMode::DetectionsOnly ? "detections-only" : "full-information";
}

enum class Verdict { AcceptRight, AcceptWrong, Undecided };

inline const char* to_string(Verdict v) {
  switch (v) {
  case Verdict::AcceptRight:
    return "accept-right";
  case Verdict::AcceptWrong:
    return "accept-wrong";
  default:
    return "undecided";
  }
}

/// Screen statistics of both orientations through the element designed for
/// Right. Likelihoods are floored at floor_factor / n_pixels so that a pixel
/// dark under one hypothesis cannot settle the test on its own.
class HypothesisPair {
public:
  static constexpr double default_floor_factor = 1e-3;
  static constexpr double absorption_floor = 1e-12;

  HypothesisPair(ScreenDistribution right, ScreenDistribution wrong, double prior_right = 0.5,
                 double floor_factor = default_floor_factor)
      : right_(std::move(right)), wrong_(std::move(wrong)), prior_right_(prior_right) {
    if (!right_.grid().same_shape(wrong_.grid()))
      throw ShapeError("hypothesis pair: screen grids differ");
    if (!(prior_right_ > 0.0 && prior_right_ < 1.0))
      throw DomainError("hypothesis pair: prior must lie in (0, 1)");
    if (!(floor_factor > 0.0))
      throw DomainError("hypothesis pair: likelihood floor factor must be positive");
    floor_ = floor_factor / static_cast<double>(right_.size());
  }

  [[nodiscard]] const ScreenDistribution& right() const { return right_; }
  [[nodiscard]] const ScreenDistribution& wrong() const { return wrong_; }
  [[nodiscard]] const ScreenDistribution& of(Orientation o) const {
    return o == Orientation::Right ? right_ : wrong_;
  }
  [[nodiscard]] double prior_right() const { return prior_right_; }
  [[nodiscard]] double floor() const { return floor_; }

  /// Likelihood ratio Right : Wrong carried by one event.
  [[nodiscard]] double likelihood_ratio(const DetectionEvent& e, UpdateMode mode) const {
    if (e.absorbed) {
      if (mode == UpdateMode::DetectionsOnly)
        return 1.0;
      return std::max(1.0 - right_.detect_prob(), absorption_floor) /
             std::max(1.0 - wrong_.detect_prob(), absorption_floor);
    }
    if (e.pixel >= right_.size())
      throw ShapeError("likelihood_ratio: event pixel " + std::to_string(e.pixel) + " outside the screen");
    return std::max(right_.pmf()[e.pixel], floor_) / std::max(wrong_.pmf()[e.pixel], floor_);
  }

private:
  ScreenDistribution right_;
  ScreenDistribution wrong_;
  double prior_right_;
  double floor_ = 0.0;
};

/// Posterior of Right held as log-odds in 64.64 fixed point. Each event adds
/// the integer image of log(ratio), so the state after a set of events does
/// not depend on their order, bit for bit.
class LogOdds {
public:
  LogOdds() = default;
  explicit LogOdds(double probability) {
    if (!(probability > 0.0 && probability < 1.0))
      throw DomainError("posterior: probability must lie in (0, 1)");
    acc_ = to_fixed(std::log(probability) - std::log1p(-probability));
  }

  void add_ratio(double ratio) { acc_ += to_fixed(std::log(ratio)); }

  [[nodiscard]] double log_odds() const { return static_cast<double>(acc_) * 0x1p-64; }

  [[nodiscard]] double probability() const {
    const double l = log_odds();
    if (l > 700.0)
      return 1.0;
    const double odds = std::exp(l);
    return odds / (1.0 + odds);
  }

private:
  static __int128 to_fixed(double x) { return static_cast<__int128>(x * 0x1p64); }
  __int128 acc_ = 0;
};

/// Bayes update of P(Right) for one event: odds *= likelihood ratio.
inline double update_posterior(double prior, const DetectionEvent& event, const HypothesisPair& pair,
                               UpdateMode mode) {
  LogOdds state(prior);
  state.add_ratio(pair.likelihood_ratio(event, mode));
  return state.probability();
}

/// P(Right) after a batch of events, in any order.
inline double posterior_after(double prior, const std::vector<DetectionEvent>& events,
                              const HypothesisPair& pair, UpdateMode mode) {
  LogOdds state(prior);
  for (const auto& e : events)
    state.add_ratio(pair.likelihood_ratio(e, mode));
  return state.probability();
}

struct TraceStep {
  std::size_t n_detected = 0;
  std::size_t n_incident = 0;
  double posterior_right = 0.5;
};

using PosteriorTrace = std::vector<TraceStep>;

struct TrialOptions {
  double confidence = 0.95;
  std::size_t max_incident = 100000;
  UpdateMode mode = UpdateMode::DetectionsOnly;
  bool record_events = true;
  bool record_trace = true;

  void validate() const {
    if (!(confidence > 0.5 && confidence < 1.0))
      throw DomainError("confidence must lie in (0.5, 1)");
    if (max_incident == 0)
      throw DomainError("max_incident must be positive");
  }
};

struct TrialResult {
  std::uint64_t seed = 0;
  Verdict verdict = Verdict::Undecided;
  std::size_t n_detected = 0;
  std::size_t n_incident = 0;
  double final_posterior = 0.5;
  PosteriorTrace trace;               // first row is the prior at (0, 0)
  std::vector<DetectionEvent> events; // one per incident electron
};

/// Sequential test: draw electrons from the truth distribution until
/// P(Right) >= confidence, P(Right) <= 1 - confidence, or max_incident.
inline TrialResult run_trial(Orientation truth, const HypothesisPair& pair, const TrialOptions& opt, Rng rng) {
  opt.validate();
  TrialResult r;
  r.seed = rng.seed();
  LogOdds state(pair.prior_right());
  double p = state.probability();
  const ScreenDistribution& source = pair.of(truth);
  if (opt.record_trace)
    r.trace.push_back({0, 0, p});
  const double lower = 1.0 - opt.confidence;
  while (r.n_incident < opt.max_incident) {
    const DetectionEvent e = sample_event(source, rng);
    ++r.n_incident;
    if (!e.absorbed)
      ++r.n_detected;
    state.add_ratio(pair.likelihood_ratio(e, opt.mode));
    p = state.probability();
    if (opt.record_events)
      r.events.push_back(e);
    if (opt.record_trace)
      r.trace.push_back({r.n_detected, r.n_incident, p});
    if (p >= opt.confidence) {
      r.verdict = Verdict::AcceptRight;
      break;
    }
    if (p <= lower) {
      r.verdict = Verdict::AcceptWrong;
      break;
    }
  }
  r.final_posterior = p;
  return r;
}

/// Ensemble summary. Means and standard deviations (population, ddof 0) are
/// taken over decided trials only.
struct TrialStatistics {
  std::size_t n_trials = 0;
  std::size_t n_decided = 0;
  std::size_t n_undecided = 0;
  std::size_t n_accept_right = 0;
  std::size_t n_accept_wrong = 0;
  double mean_detected = 0.0;
  double std_detected = 0.0;
  double mean_incident = 0.0;
  double std_incident = 0.0;
  double false_accept_rate = 0.0; // accept Right while truth is Wrong
  double false_reject_rate = 0.0; // accept Wrong while truth is Right
  double accept_right_rate = 0.0;
  double undecided_rate = 0.0;
};

struct TrialSummary {
  std::size_t n_detected = 0;
  std::size_t n_incident = 0;
  Verdict verdict = Verdict::Undecided;
};

/// Order-independent reduction over trial summaries.
inline TrialStatistics summarize(Orientation truth, const std::vector<TrialSummary>& trials) {
  TrialStatistics s;
  s.n_trials = trials.size();
  double sd = 0.0, sd2 = 0.0, si = 0.0, si2 = 0.0;
  for (const auto& t : trials) {
    if (t.verdict == Verdict::Undecided) {
      ++s.n_undecided;
      continue;
    }
    ++s.n_decided;
    (t.verdict == Verdict::AcceptRight ? s.n_accept_right : s.n_accept_wrong)++;
    const auto d = static_cast<double>(t.n_detected);
    const auto i = static_cast<double>(t.n_incident);
    sd += d;
    sd2 += d * d;
    si += i;
    si2 += i * i;
  }
  if (s.n_decided) {
    const auto n = static_cast<double>(s.n_decided);
    s.mean_detected = sd / n;
    s.mean_incident = si / n;
    s.std_detected = std::sqrt(std::max(0.0, sd2 / n - s.mean_detected * s.mean_detected));
    s.std_incident = std::sqrt(std::max(0.0, si2 / n - s.mean_incident * s.mean_incident));
  }
  if (s.n_trials) {
    const auto n = static_cast<double>(s.n_trials);
    s.accept_right_rate = static_cast<double>(s.n_accept_right) / n;
    s.undecided_rate = static_cast<double>(s.n_undecided) / n;
    if (truth == Orientation::Wrong)
      s.false_accept_rate = static_cast<double>(s.n_accept_right) / n;
    else
      s.false_reject_rate = static_cast<double>(s.n_accept_wrong) / n;
  }
  return s;
}

struct EnsembleOptions {
  TrialOptions trial;
  std::size_t n_trials = 500;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
};

struct EnsembleResult {
  Orientation truth = Orientation::Right;
  TrialStatistics stats;
  std::vector<TrialResult> trials;
};

/// Seed of trial i: derive_seed(master, stream, i) with stream 0 for truth
/// Right and 1 for truth Wrong.
inline std::uint64_t trial_seed(std::uint64_t master, Orientation truth, std::size_t index) {
  return derive_seed(master, truth == Orientation::Right ? 0 : 1, index);
}

/// Independent seeded trials. Each trial owns its generator, so the result
/// does not depend on the thread count or scheduling.
inline EnsembleResult run_ensemble(Orientation truth, const HypothesisPair& pair, const EnsembleOptions& opt) {
  if (opt.n_trials == 0)
    throw DomainError("run_ensemble: n_trials must be at least 1");
  opt.trial.validate();
  EnsembleResult out;
  out.truth = truth;
  out.trials.resize(opt.n_trials);
  const unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(opt.n_trials)));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < opt.n_trials; i += workers)
      out.trials[i] = run_trial(truth, pair, opt.trial, Rng(trial_seed(opt.master_seed, truth, i)));
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back(work, w);
  }
  std::vector<TrialSummary> summaries;
  summaries.reserve(out.trials.size());
  for (const auto& t : out.trials)
    summaries.push_back({t.n_detected, t.n_incident, t.verdict});
  out.stats = summarize(truth, summaries);
  return out;
}

} // namespace lowdose
