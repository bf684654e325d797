// lowdose: command-line front end.
//
// Exit codes: 0 success, 1 verification failed, 2 invalid input or
// configuration, 3 numerical or geometry error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lowdose/experiment.hpp"

namespace {

using namespace lowdose;

struct Common {
  std::string config_path;
  std::string out = "lowdose_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  unsigned threads = 1;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config_path);
  if (c.seed)
    cfg.master_seed = *c.seed;
  if (c.mode)
    cfg.mode = parse_update_mode(*c.mode);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Common& c, bool stats_flags) {
  sub->add_option("--config", c.config_path, "JSON config; missing keys take their defaults");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--threads", c.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  if (stats_flags) {
    sub->add_option("--seed", c.seed, "master seed of the Monte Carlo trials");
    sub->add_option("--mode", c.mode, "posterior update: detections-only | full-information");
  }
}

int cmd_wavelength(const std::vector<double>& energies) {
  for (double e : energies)
    (void)electron_wavelength(e);
  std::printf("energy_eV,wavelength_m,wavelength_pm\n");
  for (double e : energies) {
    const double l = electron_wavelength(e);
    std::printf("%.10g,%s,%.4f\n", e, io::format_double(l).c_str(), l * 1e12);
  }
  return 0;
}

int cmd_synthesize(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const ChainRun run = build_chain(cfg);
  artifacts::write_synthesis(c.out, run);
  std::printf("T_spec %.4f  T_DOE %.4f  open pixels %zu of %zu supported\n", run.t_spec, run.t_doe,
              static_cast<std::size_t>(run.binary.open_fraction() * static_cast<double>(run.binary.transmission.size()) + 0.5),
              run.binary.support_count());
  std::printf("spot window mass / area fraction: right %.2f  wrong %.2f\n", run.spot_right.mass_ratio(),
              run.spot_wrong.mass_ratio());
  std::printf("peak gain over mean screen intensity: right %.1f  wrong %.1f\n", run.spot_right.peak_gain,
              run.spot_wrong.peak_gain);
  std::printf("wrote %s\n", c.out.c_str());
  return 0;
}

int cmd_ensemble(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const ChainRun run = build_chain(cfg);
  const EnsemblePair ens = run_ensembles(run, c.threads);
  artifacts::write_ensemble(c.out, run, ens);
  std::printf("T_spec %.4f  T_DOE %.4f  T %.4f  mode %s\n", run.t_spec, run.t_doe, run.right.detect_prob(),
              to_string(cfg.mode));
  for (const EnsembleResult* e : {&ens.right, &ens.wrong}) {
    const auto& s = e->stats;
    std::printf("truth %-5s detected %.2f +- %.2f  incident %.2f +- %.2f  accept-right %.3f  undecided %zu/%zu\n",
                to_string(e->truth), s.mean_detected, s.std_detected, s.mean_incident, s.std_incident,
                s.accept_right_rate, s.n_undecided, s.n_trials);
  }
  std::printf("wrote %s\n", c.out.c_str());
  return 0;
}

int cmd_grating(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const SweepResult sweep = run_grating_sweep(cfg, c.threads);
  artifacts::write_sweep(c.out, cfg, sweep);
  std::printf("energy_eV  lambda_nm  angle_mrad  lambda/a_mrad  merged\n");
  for (const auto& r : sweep.rows)
    std::printf("%9.1f  %9.4f  %10.4f  %13.4f  %s\n", r.energy_ev, r.wavelength * 1e9, r.angle.angle_mrad,
                r.plane_angle_mrad, r.angle.merged ? "yes" : "no");
  if (sweep.fit)
    std::printf("fit through origin: slope %.4g mrad/m  R^2 %.5f\n", sweep.fit->slope, sweep.fit->r_squared);
  std::printf("wrote %s\n", c.out.c_str());
  return 0;
}

int cmd_verify(const std::string& dir) {
  const auto v = artifacts::verify_directory(dir);
  for (const auto& m : v.messages)
    std::printf("%s\n", m.c_str());
  std::printf("%s\n", v.ok ? "verified" : "verification FAILED");
  return v.ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-dose electron hypothesis testing with diffractive elements"};
  app.require_subcommand(1);

  std::vector<double> energies;
  auto* wl = app.add_subcommand("wavelength", "relativistic electron wavelength for each energy (eV)");
  wl->add_option("energies", energies, "kinetic energies in eV")->required();

  Common common;
  auto* syn = app.add_subcommand("synthesize", "synthesize the element and report the focal spot");
  add_common(syn, common, false);
  auto* ens = app.add_subcommand("ensemble", "Monte Carlo ensembles for truth right and wrong");
  add_common(ens, common, true);
  auto* gr = app.add_subcommand("grating", "point-projection grating diffraction sweep");
  add_common(gr, common, false);
  std::string verify_dir;
  auto* ver = app.add_subcommand("verify", "check config hashes and recompute statistics from the logs");
  ver->add_option("--out,dir", verify_dir, "directory written by another subcommand")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (wl->parsed())
      return cmd_wavelength(energies);
    if (syn->parsed())
      return cmd_synthesize(common);
    if (ens->parsed())
      return cmd_ensemble(common);
    if (gr->parsed())
      return cmd_grating(common);
    if (ver->parsed())
      return cmd_verify(verify_dir);
  } catch (const ValidationError& e) {
    std::cerr << "lowdose: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    if (wl->parsed()) {
      std::cerr << "lowdose: " << e.what() << '\n';
      return 2;
    }
    std::cerr << "lowdose: numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lowdose: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
