#pragma once

// Orchestration behind the command-line tool: build the optical chain from
// a config, run the experiments, write and re-check their artifacts.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lowdose/config.hpp"
#include "lowdose/io.hpp"

namespace lowdose {

// ---------------------------------------------------------------- orientation test

struct ChainRun {
  ExperimentConfig config;
  std::optional<ForwardModel> model;
  Phantom phantom;
  DiffractiveElement continuous;
  DiffractiveElement binary;  // on the fabrication pitch
  DiffractiveElement element; // the one used ("binary" or "continuous")
  SynthesisReport report;
  ScreenDistribution right;
  ScreenDistribution wrong;
  double t_spec = 0.0; // specimen transmission, Right (equal for Wrong)
  double t_doe = 0.0;  // element transmission of the Right object wave
  SpotMetrics spot_right;
  SpotMetrics spot_wrong;
};

inline ChainRun build_chain(const ExperimentConfig& cfg) {
  cfg.validate();
  ChainRun r;
  r.config = cfg;
  const OpticalChain chain = cfg.chain();
  r.phantom = generate_phantom(cfg.phantom_seed, chain.specimen_grid, cfg.phantom);
  r.model.emplace(r.phantom, chain, cfg.energy_ev, cfg.absorption_model());
  const ForwardModel& m = *r.model;
  const ComplexField psi_o = m.object_wave(Orientation::Right);
  r.continuous = synthesize_continuous(psi_o, m.target(), cfg.synthesis, &r.report);
  r.binary = pixelate(binarize(r.continuous, cfg.synthesis), cfg.resolved_fabrication_pixel());
  r.element = cfg.element == "binary" ? r.binary : pixelate(r.continuous, cfg.resolved_fabrication_pixel());
  r.right = m.screen(Orientation::Right, r.element);
  r.wrong = m.screen(Orientation::Wrong, r.element);
  r.t_spec = m.specimen_transmission(Orientation::Right);
  r.t_doe = transmission_fraction(psi_o, apply_element(psi_o, m.on_doe_grid(r.element)));
  const auto window = m.spot_window();
  r.spot_right = spot_metrics(r.right, window);
  r.spot_wrong = spot_metrics(r.wrong, window);
  return r;
}

inline HypothesisPair hypothesis_pair(const ChainRun& run) {
  return HypothesisPair(run.right, run.wrong, run.config.prior_right, run.config.likelihood_floor);
}

struct EnsemblePair {
  EnsembleResult right; // truth Right
  EnsembleResult wrong; // truth Wrong
};

inline EnsemblePair run_ensembles(const ChainRun& run, unsigned threads = 1) {
  const HypothesisPair pair = hypothesis_pair(run);
  EnsembleOptions eo;
  eo.trial = run.config.trial_options();
  eo.trial.record_events = true;
  eo.trial.record_trace = true;
  eo.n_trials = run.config.n_trials;
  eo.master_seed = run.config.master_seed;
  eo.threads = threads;
  return EnsemblePair{run_ensemble(Orientation::Right, pair, eo), run_ensemble(Orientation::Wrong, pair, eo)};
}

// ---------------------------------------------------------------- gratings

struct SweepRow {
  double energy_ev = 0.0;
  double wavelength = 0.0;
  AngleResult angle;
  double plane_angle_mrad = 0.0; // lambda / a
  ScreenDistribution pattern;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<OriginFit> fit; // over resolved single-grating points
};

inline SweepResult run_grating_sweep(const ExperimentConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const GratingSpec spec = cfg.resolved_grating();
  SweepResult out;
  out.rows.resize(cfg.grating_energies_ev.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(out.rows.size())));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < out.rows.size(); i += workers) {
      SweepRow& row = out.rows[i];
      row.energy_ev = cfg.grating_energies_ev[i];
      row.wavelength = electron_wavelength(row.energy_ev);
      row.plane_angle_mrad = 1e3 * grating_equation(row.wavelength, spec.slit_spacing);
      row.pattern = simulate_pattern(spec, cfg.projection, row.energy_ev, cfg.grating_grid(), cfg.illumination);
      row.angle = extract_first_order_angle(row.pattern, spec, cfg.projection, cfg.illumination, cfg.peaks);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back(work, w);
  }
  if (spec.n_gratings == 1) {
    std::vector<double> x, y;
    for (const auto& r : out.rows)
      if (!r.angle.merged) {
        x.push_back(r.wavelength);
        y.push_back(r.angle.angle_mrad);
      }
    if (x.size() >= 2)
      out.fit = fit_through_origin(x, y);
  }
  return out;
}

// ---------------------------------------------------------------- artifacts

namespace artifacts {

namespace fs = std::filesystem;

struct Stamp {
  Json config;      // resolved
  std::string hash; // config_hash(config)
};

inline Stamp stamp(const ExperimentConfig& cfg) {
  Stamp s;
  s.config = cfg.to_json();
  s.hash = config_hash(s.config);
  return s;
}

inline io::Comments comments(const Stamp& s) { return {"config_hash=" + s.hash}; }

inline void write_json(const fs::path& path, const Json& j) {
  io::write_file(path.string(), [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline Json stats_json(const TrialStatistics& s) {
  return {{"n_trials", s.n_trials},
          {"n_decided", s.n_decided},
          {"n_undecided", s.n_undecided},
          {"n_accept_right", s.n_accept_right},
          {"n_accept_wrong", s.n_accept_wrong},
          {"mean_detected", s.mean_detected},
          {"std_detected", s.std_detected},
          {"mean_incident", s.mean_incident},
          {"std_incident", s.std_incident},
          {"false_accept_rate", s.false_accept_rate},
          {"false_reject_rate", s.false_reject_rate},
          {"accept_right_rate", s.accept_right_rate},
          {"undecided_rate", s.undecided_rate}};
}

inline Json spot_json(const SpotMetrics& m) {
  return {{"window_mass", m.window_mass},
          {"area_fraction", m.area_fraction},
          {"mass_ratio", m.mass_ratio()},
          {"peak_gain", m.peak_gain}};
}

inline Json chain_json(const ChainRun& run) {
  return {{"t_spec", run.t_spec},
          {"t_doe", run.t_doe},
          {"detect_prob_right", run.right.detect_prob()},
          {"detect_prob_wrong", run.wrong.detect_prob()},
          {"open_fraction", run.binary.open_fraction()},
          {"support_fraction", static_cast<double>(run.binary.support_count()) /
                                   static_cast<double>(run.binary.transmission.size())},
          {"offset", run.report.offset},
          {"min_before_scale", run.report.min_before_scale},
          {"max_before_scale", run.report.max_before_scale},
          {"phantom_rotation_rms", normalized_rms_difference(run.phantom.thickness, rotate90(run.phantom.thickness))},
          {"spot_right", spot_json(run.spot_right)},
          {"spot_wrong", spot_json(run.spot_wrong)}};
}

inline void write_synthesis(const fs::path& dir, const ChainRun& run) {
  fs::create_directories(dir);
  const Stamp s = stamp(run.config);
  const auto c = comments(s);
  io::write_file((dir / "element_continuous.pgm").string(),
                 [&](std::ostream& os) { io::write_pgm16(os, run.continuous.transmission, c); }, true);
  io::write_file((dir / "element_binary.pbm").string(),
                 [&](std::ostream& os) { io::write_pbm(os, run.binary.transmission, c); }, true);
  io::write_file((dir / "element_holes.csv").string(),
                 [&](std::ostream& os) { write_hole_list(os, run.binary, c); });
  io::write_file((dir / "phantom_thickness.pgm").string(),
                 [&](std::ostream& os) { io::write_pgm16(os, run.phantom.thickness, c); }, true);
  io::write_file((dir / "screen_right.pgm").string(),
                 [&](std::ostream& os) { io::write_pgm16(os, run.right.intensity(), c); }, true);
  io::write_file((dir / "screen_wrong.pgm").string(),
                 [&](std::ostream& os) { io::write_pgm16(os, run.wrong.intensity(), c); }, true);
  Json j;
  j["config"] = s.config;
  j["config_hash"] = s.hash;
  j["synthesis"] = chain_json(run);
  write_json(dir / "synthesis.json", j);
}

/// Per-detected-count confidence curve: after k detected electrons each trial
/// holds the posterior of its last step with at most k detections (stopped
/// trials keep their final value).
inline void write_confidence_curve(std::ostream& os, const EnsembleResult& e, const io::Comments& c) {
  for (const auto& line : c)
    os << "# " << line << '\n';
  os << "n_detected,trials_running,mean_posterior,median_posterior\n";
  std::size_t k_max = 0;
  for (const auto& t : e.trials)
    k_max = std::max(k_max, t.n_detected);
  k_max = std::min<std::size_t>(k_max, 1000);
  std::vector<std::size_t> cursor(e.trials.size(), 0);
  std::vector<double> values(e.trials.size());
  for (std::size_t k = 0; k <= k_max; ++k) {
    std::size_t running = 0;
    for (std::size_t i = 0; i < e.trials.size(); ++i) {
      const auto& tr = e.trials[i].trace;
      while (cursor[i] + 1 < tr.size() && tr[cursor[i] + 1].n_detected <= k)
        ++cursor[i];
      values[i] = tr[cursor[i]].posterior_right;
      if (e.trials[i].verdict == Verdict::Undecided || e.trials[i].n_detected > k)
        ++running;
    }
    double mean = 0.0;
    for (double v : values)
      mean += v;
    mean /= static_cast<double>(values.size());
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    os << k << ',' << running << ',' << io::format_double(mean) << ',' << io::format_double(median) << '\n';
  }
}

inline void write_events(std::ostream& os, const EnsembleResult& e, const GridSpec& screen, const io::Comments& c) {
  for (const auto& line : c)
    os << "# " << line << '\n';
  os << "trial,event_index,outcome,x,y\n";
  for (std::size_t t = 0; t < e.trials.size(); ++t) {
    const auto& ev = e.trials[t].events;
    for (std::size_t k = 0; k < ev.size(); ++k) {
      os << t << ',' << k << ',';
      if (ev[k].absorbed)
        os << "absorbed,,\n";
      else
        os << "detected," << ev[k].pixel % screen.nx << ',' << ev[k].pixel / screen.nx << '\n';
    }
  }
}

inline void write_traces(std::ostream& os, const EnsembleResult& e, const io::Comments& c) {
  for (const auto& line : c)
    os << "# " << line << '\n';
  os << "trial,n_detected,n_incident,posterior\n";
  for (std::size_t t = 0; t < e.trials.size(); ++t)
    for (const auto& step : e.trials[t].trace)
      os << t << ',' << step.n_detected << ',' << step.n_incident << ',' << io::format_double(step.posterior_right)
         << '\n';
}

inline Json ensemble_json(const ChainRun& run, const EnsembleResult& e) {
  const double t = e.truth == Orientation::Right ? run.right.detect_prob() : run.wrong.detect_prob();
  std::size_t absorbed = 0, decided = 0;
  for (const auto& tr : e.trials)
    if (tr.verdict != Verdict::Undecided) {
      absorbed += tr.n_incident - tr.n_detected;
      ++decided;
    }
  const double mean_absorbed = decided ? static_cast<double>(absorbed) / static_cast<double>(decided) : 0.0;
  // Channel split of the absorbed electrons follows from the transmissions:
  // the specimen removes 1 - T_spec, the element T_spec - T.
  const double p_spec = 1.0 - run.t_spec;
  const double p_elem = std::max(0.0, run.t_spec - t);
  const double lost = p_spec + p_elem;
  std::vector<std::uint64_t> seeds;
  seeds.reserve(e.trials.size());
  for (const auto& tr : e.trials)
    seeds.push_back(tr.seed);
  return {{"truth", to_string(e.truth)},
          {"stats", stats_json(e.stats)},
          {"detect_prob", t},
          {"incident_over_detected", e.stats.mean_detected > 0.0 ? e.stats.mean_incident / e.stats.mean_detected : 0.0},
          {"channels",
           {{"p_absorbed_specimen", p_spec},
            {"p_absorbed_element", p_elem},
            {"p_detected", t},
            {"mean_absorbed", mean_absorbed},
            {"expected_mean_absorbed_specimen", lost > 0.0 ? mean_absorbed * p_spec / lost : 0.0},
            {"expected_mean_absorbed_element", lost > 0.0 ? mean_absorbed * p_elem / lost : 0.0}}},
          {"trial_seeds", seeds}};
}

inline void write_ensemble(const fs::path& dir, const ChainRun& run, const EnsemblePair& ens) {
  fs::create_directories(dir);
  const Stamp s = stamp(run.config);
  const auto c = comments(s);
  const GridSpec screen = run.right.grid();
  for (const EnsembleResult* e : {&ens.right, &ens.wrong}) {
    const std::string tag = to_string(e->truth);
    if (run.config.record_events)
      io::write_file((dir / ("events_" + tag + ".csv")).string(),
                     [&](std::ostream& os) { write_events(os, *e, screen, c); });
    io::write_file((dir / ("traces_" + tag + ".csv")).string(), [&](std::ostream& os) { write_traces(os, *e, c); });
    io::write_file((dir / ("confidence_" + tag + ".csv")).string(),
                   [&](std::ostream& os) { write_confidence_curve(os, *e, c); });
  }
  Json j;
  j["config"] = s.config;
  j["config_hash"] = s.hash;
  j["chain"] = chain_json(run);
  j["truth_right"] = ensemble_json(run, ens.right);
  j["truth_wrong"] = ensemble_json(run, ens.wrong);
  write_json(dir / "ensemble.json", j);
}

inline void write_sweep(const fs::path& dir, const ExperimentConfig& cfg, const SweepResult& sweep) {
  fs::create_directories(dir);
  const Stamp s = stamp(cfg);
  const auto c = comments(s);
  io::write_file((dir / "sweep.csv").string(), [&](std::ostream& os) {
    for (const auto& line : c)
      os << "# " << line << '\n';
    os << "energy_eV,wavelength_m,angle_mrad,merged_flag\n";
    for (const auto& r : sweep.rows)
      os << io::format_double(r.energy_ev) << ',' << io::format_double(r.wavelength) << ','
         << io::format_double(r.angle.angle_mrad) << ',' << (r.angle.merged ? 1 : 0) << '\n';
  });
  Json rows = Json::array();
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& r = sweep.rows[i];
    const std::string name = "pattern_" + std::to_string(i) + ".pgm";
    io::write_file((dir / name).string(), [&](std::ostream& os) { io::write_pgm16(os, r.pattern.intensity(), c); },
                   true);
    rows.push_back({{"energy_ev", r.energy_ev},
                    {"wavelength_m", r.wavelength},
                    {"merged", r.angle.merged},
                    {"angle_mrad", r.angle.angle_mrad},
                    {"lambda_over_a_mrad", r.plane_angle_mrad},
                    {"asymmetry_px", r.angle.asymmetry_px},
                    {"peaks_px", r.angle.peaks_px},
                    {"zeroth_px", r.angle.zeroth_px},
                    {"pattern", name}});
  }
  Json j;
  j["config"] = s.config;
  j["config_hash"] = s.hash;
  j["rows"] = rows;
  if (sweep.fit)
    j["fit"] = {{"slope_mrad_per_m", sweep.fit->slope}, {"r_squared", sweep.fit->r_squared}};
  else
    j["fit"] = nullptr;
  write_json(dir / "grating.json", j);
}

// ---------------------------------------------------------------- verification

struct Verification {
  bool ok = true;
  std::vector<std::string> messages;

  void fail(const std::string& m) {
    ok = false;
    messages.push_back("FAIL " + m);
  }
  void pass(const std::string& m) { messages.push_back("ok   " + m); }
};

inline std::string read_all(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Hash recorded in a text or PNM artifact ("# config_hash=..."), or empty.
inline std::string embedded_hash(const fs::path& p) {
  const std::string text = read_all(p);
  const std::string key = "# config_hash=";
  const auto at = text.find(key);
  if (at == std::string::npos)
    return {};
  const auto start = at + key.size();
  return text.substr(start, std::min<std::size_t>(16, text.size() - start));
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_table(const fs::path& p) {
  std::ifstream is(p);
  if (!is)
    throw io::IoError("cannot open '" + p.string() + "'");
  CsvTable t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    if (t.header.empty())
      t.header = io::split(line, ',');
    else
      t.rows.push_back(io::split(line, ','));
  }
  return t;
}

/// Rebuilds the per-trial summaries from the logs: counts from the event log
/// when present (else the last trace row), verdicts from the final posterior.
inline std::vector<TrialSummary> summaries_from_logs(const fs::path& traces, const std::optional<fs::path>& events,
                                                     double confidence, Verification& v) {
  std::map<std::size_t, TrialSummary> by_trial;
  const CsvTable tr = read_table(traces);
  for (const auto& row : tr.rows) {
    if (row.size() != 4)
      throw io::IoError("traces: malformed row");
    const auto trial = static_cast<std::size_t>(std::stoull(row[0]));
    auto& s = by_trial[trial];
    s.n_detected = std::stoull(row[1]);
    s.n_incident = std::stoull(row[2]);
    const double p = io::parse_double(row[3]);
    s.verdict = p >= confidence ? Verdict::AcceptRight : p <= 1.0 - confidence ? Verdict::AcceptWrong : Verdict::Undecided;
  }
  if (events) {
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts; // detected, incident
    const CsvTable ev = read_table(*events);
    for (const auto& row : ev.rows) {
      if (row.size() < 3)
        throw io::IoError("events: malformed row");
      auto& c = counts[static_cast<std::size_t>(std::stoull(row[0]))];
      ++c.second;
      if (row[2] == "detected")
        ++c.first;
    }
    bool agree = counts.size() == by_trial.size();
    for (auto& [trial, s] : by_trial) {
      const auto it = counts.find(trial);
      if (it == counts.end() || it->second.first != s.n_detected || it->second.second != s.n_incident)
        agree = false;
      else {
        s.n_detected = it->second.first;
        s.n_incident = it->second.second;
      }
    }
    if (agree)
      v.pass(events->filename().string() + " counts agree with the traces");
    else
      v.fail(events->filename().string() + " counts disagree with the traces");
  }
  std::vector<TrialSummary> out;
  for (const auto& [trial, s] : by_trial)
    out.push_back(s);
  return out;
}

/// Checks every artifact in `dir`: embedded hashes against the resolved
/// config they carry, and ensemble statistics against a recomputation from
/// the emitted logs.
inline Verification verify_directory(const fs::path& dir) {
  Verification v;
  if (!fs::is_directory(dir)) {
    v.fail("'" + dir.string() + "' is not a directory");
    return v;
  }
  std::string hash;
  Json config;
  for (const char* name : {"ensemble.json", "synthesis.json", "grating.json"}) {
    const fs::path p = dir / name;
    if (!fs::exists(p))
      continue;
    const Json j = Json::parse(read_all(p));
    const std::string recorded = j.value("config_hash", "");
    const std::string recomputed = config_hash(j.at("config"));
    if (recorded != recomputed) {
      v.fail(std::string(name) + ": config_hash " + recorded + " does not match the echoed config (" + recomputed + ")");
      continue;
    }
    if (!hash.empty() && hash != recorded)
      v.fail(std::string(name) + ": config differs from the other summaries in this directory");
    hash = recorded;
    config = j.at("config");
    v.pass(std::string(name) + ": config_hash " + recorded);
  }
  if (hash.empty()) {
    v.fail("no summary JSON found in '" + dir.string() + "'");
    return v;
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file())
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const std::string ext = p.extension().string();
    if (ext != ".csv" && ext != ".pgm" && ext != ".pbm")
      continue;
    const std::string h = embedded_hash(p);
    if (h == hash)
      v.pass(p.filename().string() + ": config_hash matches");
    else
      v.fail(p.filename().string() + ": embedded config_hash '" + h + "' != " + hash);
  }

  const fs::path ens = dir / "ensemble.json";
  if (fs::exists(ens)) {
    const Json j = Json::parse(read_all(ens));
    const double confidence = config.at("stats").at("confidence").get<double>();
    for (const char* tag : {"right", "wrong"}) {
      const fs::path traces = dir / (std::string("traces_") + tag + ".csv");
      const fs::path events = dir / (std::string("events_") + tag + ".csv");
      if (!fs::exists(traces)) {
        v.fail(traces.filename().string() + " missing");
        continue;
      }
      const auto summaries = summaries_from_logs(
          traces, fs::exists(events) ? std::optional<fs::path>(events) : std::nullopt, confidence, v);
      const Orientation truth = std::string(tag) == "right" ? Orientation::Right : Orientation::Wrong;
      const Json recomputed = stats_json(summarize(truth, summaries));
      const Json& recorded = j.at(std::string("truth_") + tag).at("stats");
      if (recomputed == recorded)
        v.pass(std::string("truth ") + tag + ": statistics recomputed from the logs match ensemble.json");
      else
        v.fail(std::string("truth ") + tag + ": recomputed statistics " + recomputed.dump() + " != recorded " +
               recorded.dump());
    }
  }
  return v;
}

} // namespace artifacts

} // namespace lowdose
