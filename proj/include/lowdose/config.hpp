#pragma once

// Experiment configuration: JSON in, fully resolved JSON out. Needs
// nlohmann/json on the include path.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowdose/beam.hpp"
#include "lowdose/detection.hpp"
#include "lowdose/doe.hpp"
#include "lowdose/errors.hpp"
#include "lowdose/gratings.hpp"
#include "lowdose/hypothesis.hpp"
#include "lowdose/specimen.hpp"

namespace lowdose {

using Json = nlohmann::json;

struct ExperimentConfig {
  // beam
  double energy_ev = 15e3;

  // planes
  std::size_t grid_n = 512;
  double specimen_pixel = 0.5e-9;
  std::optional<double> doe_pixel;       // default: 40 nm up to 50 keV, 20 nm above
  std::optional<double> specimen_to_doe; // default: from doe_pixel
  double doe_to_screen = 1.0;
  std::optional<long> focus_px_x;        // default: grid_n / 4
  long focus_px_y = 0;
  double spot_radius_px = 3.0;
  double beam_diameter_factor = 1.2;     // beam diameter / phantom extent
  double beam_edge_fraction = 0.1;

  // phantom
  std::uint64_t phantom_seed = 1;
  PhantomOptions phantom;

  // element
  SynthesisParams synthesis;
  std::string element = "binary"; // or "continuous"
  std::optional<double> fabrication_pixel; // default: doe pixel

  // absorption
  bool absorption = false;
  std::string mfp_table; // empty: built-in table

  // statistics
  double confidence = 0.95;
  std::size_t n_trials = 500;
  std::size_t max_incident = 100000;
  UpdateMode mode = UpdateMode::DetectionsOnly;
  std::uint64_t master_seed = 1;
  double prior_right = 0.5;
  double likelihood_floor = HypothesisPair::default_floor_factor;
  bool record_events = true;

  // gratings
  std::vector<double> grating_energies_ev{89.0, 107.0, 131.0, 149.0, 211.0, 282.0}; // 0.13 to 0.073 nm
  GratingSpec grating;
  double merge_energy_ev = 90.0; // default two-grating separation merges here
  ProjectionGeometry projection;
  Illumination illumination = Illumination::PointSource;
  std::size_t grating_grid_n = 1024;
  double grating_pixel = 2.5e-9;
  PeakOptions peaks;

  [[nodiscard]] double wavelength() const { return electron_wavelength(energy_ev); }

  [[nodiscard]] double resolved_doe_pixel() const {
    if (doe_pixel)
      return *doe_pixel;
    if (specimen_to_doe)
      return fresnel_output_pixel(GridSpec{grid_n, grid_n, specimen_pixel}, *specimen_to_doe, wavelength());
    return energy_ev <= 50e3 ? 40e-9 : 20e-9;
  }

  [[nodiscard]] OpticalChain chain() const {
    OpticalChain c;
    c.specimen_grid = GridSpec{grid_n, grid_n, specimen_pixel};
    c.beam_diameter = beam_diameter_factor * phantom.extent;
    c.beam_edge_fraction = beam_edge_fraction;
    c.specimen_to_doe = specimen_to_doe ? *specimen_to_doe
                                        : OpticalChain::distance_for_doe_pixel(c.specimen_grid, resolved_doe_pixel(),
                                                                               wavelength());
    c.doe_to_screen = doe_to_screen;
    c.focus_px_x = focus_px_x ? *focus_px_x : static_cast<long>(grid_n / 4);
    c.focus_px_y = focus_px_y;
    c.spot_radius_px = spot_radius_px;
    return c;
  }

  [[nodiscard]] double resolved_fabrication_pixel() const {
    return fabrication_pixel ? *fabrication_pixel : resolved_doe_pixel();
  }

  [[nodiscard]] AbsorptionModel absorption_model() const {
    AbsorptionModel m;
    m.enabled = absorption;
    if (!mfp_table.empty()) {
      std::ifstream is(mfp_table);
      if (!is)
        throw ValidationError("absorption.mfp_table: cannot open '" + mfp_table + "'");
      try {
        m.table = MeanFreePathTable::read_csv(is);
      } catch (const Error& e) {
        throw ValidationError(std::string("absorption.mfp_table: ") + e.what());
      }
    }
    return m;
  }

  [[nodiscard]] GratingSpec resolved_grating() const {
    GratingSpec g = grating;
    if (g.n_gratings == 2 && !(g.separation > 0.0))
      g.separation = merging_separation(g, projection, electron_wavelength(merge_energy_ev));
    return g;
  }

  [[nodiscard]] GridSpec grating_grid() const { return GridSpec{grating_grid_n, grating_grid_n, grating_pixel}; }

  [[nodiscard]] TrialOptions trial_options() const {
    TrialOptions t;
    t.confidence = confidence;
    t.max_incident = max_incident;
    t.mode = mode;
    return t;
  }

  void validate() const;
  [[nodiscard]] Json to_json() const;
  static ExperimentConfig from_json(const Json& j);
};

// ---------------------------------------------------------------- helpers

namespace detail {

inline void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object())
    throw ValidationError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k))
      throw ValidationError(where + ": unknown key '" + k + "'");
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null())
    return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_opt(const Json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null())
    return;
  T v{};
  read(obj, key, v, where);
  out = v;
}

inline void require(bool ok, const std::string& message) {
  if (!ok)
    throw ValidationError(message);
}

inline UpdateMode parse_mode(const std::string& s) {
  if (s == "detections-only")
    return UpdateMode::DetectionsOnly;
  if (s == "full-information")
    return UpdateMode::FullInformation;
  throw ValidationError("stats.mode: expected 'detections-only' or 'full-information', got '" + s + "'");
}

} // namespace detail

inline UpdateMode parse_update_mode(const std::string& s) { return detail::parse_mode(s); }

inline ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  using namespace detail;
  ExperimentConfig c;
  if (j.is_null())
    return c;
  reject_unknown(j, "config", {"beam", "planes", "phantom", "synthesis", "absorption", "stats", "grating"});

  if (j.contains("beam")) {
    const Json& b = j.at("beam");
    // wavelength_m and screen_pixel_m are derived; accepted so a resolved
    // config can be fed back in, and ignored.
    reject_unknown(b, "beam", {"energy_ev", "wavelength_m", "diameter_factor", "edge_fraction"});
    read(b, "energy_ev", c.energy_ev, "beam");
    read(b, "diameter_factor", c.beam_diameter_factor, "beam");
    read(b, "edge_fraction", c.beam_edge_fraction, "beam");
  }
  if (j.contains("planes")) {
    const Json& p = j.at("planes");
    reject_unknown(p, "planes", {"grid_n", "specimen_pixel_m", "doe_pixel_m", "specimen_to_doe_m", "doe_to_screen_m",
                                 "screen_pixel_m", "focus_px_x", "focus_px_y", "spot_radius_px"});
    read(p, "grid_n", c.grid_n, "planes");
    read(p, "specimen_pixel_m", c.specimen_pixel, "planes");
    read_opt(p, "doe_pixel_m", c.doe_pixel, "planes");
    read_opt(p, "specimen_to_doe_m", c.specimen_to_doe, "planes");
    read(p, "doe_to_screen_m", c.doe_to_screen, "planes");
    read_opt(p, "focus_px_x", c.focus_px_x, "planes");
    read(p, "focus_px_y", c.focus_px_y, "planes");
    read(p, "spot_radius_px", c.spot_radius_px, "planes");
  }
  if (j.contains("phantom")) {
    const Json& p = j.at("phantom");
    reject_unknown(p, "phantom", {"seed", "extent_m", "peak_thickness_m", "inner_potential_v", "density_scale",
                                  "min_lobes", "max_lobes"});
    read(p, "seed", c.phantom_seed, "phantom");
    read(p, "extent_m", c.phantom.extent, "phantom");
    read(p, "peak_thickness_m", c.phantom.peak_thickness, "phantom");
    read(p, "inner_potential_v", c.phantom.inner_potential, "phantom");
    read(p, "density_scale", c.phantom.density_scale, "phantom");
    read(p, "min_lobes", c.phantom.min_lobes, "phantom");
    read(p, "max_lobes", c.phantom.max_lobes, "phantom");
  }
  if (j.contains("synthesis")) {
    const Json& s = j.at("synthesis");
    reject_unknown(s, "synthesis", {"intensity_threshold_fraction", "offset", "fixed_offset", "binarize",
                                    "binarize_threshold", "element", "fabrication_pixel_m"});
    read(s, "intensity_threshold_fraction", c.synthesis.intensity_threshold_fraction, "synthesis");
    std::string offset = "minimal";
    read(s, "offset", offset, "synthesis");
    require(offset == "minimal" || offset == "fixed", "synthesis.offset: expected 'minimal' or 'fixed'");
    c.synthesis.offset_policy = offset == "minimal" ? OffsetPolicy::Minimal : OffsetPolicy::Fixed;
    read(s, "fixed_offset", c.synthesis.fixed_offset, "synthesis");
    std::string rule = "median";
    read(s, "binarize", rule, "synthesis");
    require(rule == "median" || rule == "fixed", "synthesis.binarize: expected 'median' or 'fixed'");
    c.synthesis.binarize_rule = rule == "median" ? BinarizeRule::Median : BinarizeRule::Fixed;
    read(s, "binarize_threshold", c.synthesis.binarize_threshold, "synthesis");
    read(s, "element", c.element, "synthesis");
    read_opt(s, "fabrication_pixel_m", c.fabrication_pixel, "synthesis");
  }
  if (j.contains("absorption")) {
    const Json& a = j.at("absorption");
    reject_unknown(a, "absorption", {"enabled", "mfp_table"});
    read(a, "enabled", c.absorption, "absorption");
    read(a, "mfp_table", c.mfp_table, "absorption");
    if (c.mfp_table == "builtin")
      c.mfp_table.clear();
  }
  if (j.contains("stats")) {
    const Json& s = j.at("stats");
    reject_unknown(s, "stats", {"confidence", "n_trials", "max_incident", "mode", "master_seed", "prior_right",
                                "likelihood_floor", "record_events"});
    read(s, "confidence", c.confidence, "stats");
    read(s, "n_trials", c.n_trials, "stats");
    read(s, "max_incident", c.max_incident, "stats");
    std::string mode = to_string(c.mode);
    read(s, "mode", mode, "stats");
    c.mode = parse_mode(mode);
    read(s, "master_seed", c.master_seed, "stats");
    read(s, "prior_right", c.prior_right, "stats");
    read(s, "likelihood_floor", c.likelihood_floor, "stats");
    read(s, "record_events", c.record_events, "stats");
  }
  if (j.contains("grating")) {
    const Json& g = j.at("grating");
    reject_unknown(g, "grating", {"energies_ev", "slit_spacing_m", "row_pitch_m", "hole_diameter_m", "rows", "cols",
                                  "n_gratings", "separation_m", "merge_energy_ev", "source_to_element_m",
                                  "source_to_screen_m", "illumination", "grid_n", "pixel_m", "smoothing_sigma_px",
                                  "min_relative_height", "min_separation_px"});
    read(g, "energies_ev", c.grating_energies_ev, "grating");
    read(g, "slit_spacing_m", c.grating.slit_spacing, "grating");
    read(g, "row_pitch_m", c.grating.row_pitch, "grating");
    read(g, "hole_diameter_m", c.grating.hole_diameter, "grating");
    read(g, "rows", c.grating.rows, "grating");
    read(g, "cols", c.grating.cols, "grating");
    read(g, "n_gratings", c.grating.n_gratings, "grating");
    read(g, "separation_m", c.grating.separation, "grating");
    read(g, "merge_energy_ev", c.merge_energy_ev, "grating");
    read(g, "source_to_element_m", c.projection.source_to_element, "grating");
    read(g, "source_to_screen_m", c.projection.source_to_screen, "grating");
    std::string il = "point";
    read(g, "illumination", il, "grating");
    require(il == "point" || il == "plane", "grating.illumination: expected 'point' or 'plane'");
    c.illumination = il == "point" ? Illumination::PointSource : Illumination::Plane;
    read(g, "grid_n", c.grating_grid_n, "grating");
    read(g, "pixel_m", c.grating_pixel, "grating");
    read(g, "smoothing_sigma_px", c.peaks.smoothing_sigma_px, "grating");
    read(g, "min_relative_height", c.peaks.min_relative_height, "grating");
    read(g, "min_separation_px", c.peaks.min_separation_px, "grating");
  }
  return c;
}

/// Every field, defaults and derived distances filled in. Keys are sorted by
/// the JSON library, so dump() is canonical.
inline Json ExperimentConfig::to_json() const {
  const OpticalChain ch = chain();
  const GratingSpec g = resolved_grating();
  Json j;
  j["beam"] = {{"energy_ev", energy_ev},
               {"wavelength_m", wavelength()},
               {"diameter_factor", beam_diameter_factor},
               {"edge_fraction", beam_edge_fraction}};
  j["planes"] = {{"grid_n", grid_n},
                 {"specimen_pixel_m", specimen_pixel},
                 {"doe_pixel_m", resolved_doe_pixel()},
                 {"specimen_to_doe_m", ch.specimen_to_doe},
                 {"doe_to_screen_m", doe_to_screen},
                 {"screen_pixel_m", ch.screen_grid(wavelength()).pixel_size},
                 {"focus_px_x", ch.focus_px_x},
                 {"focus_px_y", focus_px_y},
                 {"spot_radius_px", spot_radius_px}};
  j["phantom"] = {{"seed", phantom_seed},
                  {"extent_m", phantom.extent},
                  {"peak_thickness_m", phantom.peak_thickness},
                  {"inner_potential_v", phantom.inner_potential},
                  {"density_scale", phantom.density_scale},
                  {"min_lobes", phantom.min_lobes},
                  {"max_lobes", phantom.max_lobes}};
  j["synthesis"] = {{"intensity_threshold_fraction", synthesis.intensity_threshold_fraction},
                    {"offset", synthesis.offset_policy == OffsetPolicy::Minimal ? "minimal" : "fixed"},
                    {"fixed_offset", synthesis.fixed_offset},
                    {"binarize", synthesis.binarize_rule == BinarizeRule::Median ? "median" : "fixed"},
                    {"binarize_threshold", synthesis.binarize_threshold},
                    {"element", element},
                    {"fabrication_pixel_m", resolved_fabrication_pixel()}};
  j["absorption"] = {{"enabled", absorption}, {"mfp_table", mfp_table.empty() ? Json("builtin") : Json(mfp_table)}};
  j["stats"] = {{"confidence", confidence},
                {"n_trials", n_trials},
                {"max_incident", max_incident},
                {"mode", to_string(mode)},
                {"master_seed", master_seed},
                {"prior_right", prior_right},
                {"likelihood_floor", likelihood_floor},
                {"record_events", record_events}};
  j["grating"] = {{"energies_ev", grating_energies_ev},
                  {"slit_spacing_m", g.slit_spacing},
                  {"row_pitch_m", g.row_pitch},
                  {"hole_diameter_m", g.hole_diameter},
                  {"rows", g.rows},
                  {"cols", g.cols},
                  {"n_gratings", g.n_gratings},
                  {"separation_m", g.separation},
                  {"merge_energy_ev", merge_energy_ev},
                  {"source_to_element_m", projection.source_to_element},
                  {"source_to_screen_m", projection.source_to_screen},
                  {"illumination", illumination == Illumination::PointSource ? "point" : "plane"},
                  {"grid_n", grating_grid_n},
                  {"pixel_m", grating_pixel},
                  {"smoothing_sigma_px", peaks.smoothing_sigma_px},
                  {"min_relative_height", peaks.min_relative_height},
                  {"min_separation_px", peaks.min_separation_px}};
  return j;
}

/// Checks every field against the preconditions of the module that owns it,
/// before any computation. Geometry that only fails once sampled (band
/// limits, focus outside the screen) is reported as ValidationError too.
inline void ExperimentConfig::validate() const {
  using detail::require;
  require(energy_ev > 0.0, "beam.energy_ev must be positive");
  require(beam_diameter_factor >= 1.0, "beam.diameter_factor must be >= 1 (the beam must contain the specimen)");
  require(beam_edge_fraction >= 0.0 && beam_edge_fraction < 0.5, "beam.edge_fraction must lie in [0, 0.5)");
  require(grid_n >= 16 && (grid_n % 2) == 0, "planes.grid_n must be even and >= 16");
  require(specimen_pixel > 0.0, "planes.specimen_pixel_m must be positive");
  require(!doe_pixel || *doe_pixel > 0.0, "planes.doe_pixel_m must be positive");
  require(!specimen_to_doe || *specimen_to_doe > 0.0, "planes.specimen_to_doe_m must be positive");
  if (doe_pixel && specimen_to_doe) {
    const double implied = fresnel_output_pixel(GridSpec{grid_n, grid_n, specimen_pixel}, *specimen_to_doe, wavelength());
    require(std::abs(implied - *doe_pixel) <= 1e-9 * *doe_pixel,
            "planes: doe_pixel_m and specimen_to_doe_m disagree (the element pixel is lambda z / (N dx) = " +
                std::to_string(implied) + " m); give only one");
  }
  require(doe_to_screen > 0.0, "planes.doe_to_screen_m must be positive");
  require(spot_radius_px > 0.0, "planes.spot_radius_px must be positive");

  require(phantom.extent > 0.0, "phantom.extent_m must be positive");
  require(phantom.peak_thickness > 0.0, "phantom.peak_thickness_m must be positive");
  require(phantom.inner_potential > 0.0, "phantom.inner_potential_v must be positive");
  require(phantom.density_scale > 0.0, "phantom.density_scale must be positive");
  require(phantom.min_lobes >= 1 && phantom.max_lobes >= phantom.min_lobes,
          "phantom: need 1 <= min_lobes <= max_lobes");
  require(phantom.extent <= 0.75 * static_cast<double>(grid_n) * specimen_pixel,
          "phantom.extent_m leaves less than a 25% guard band in the specimen field of view");

  require(synthesis.intensity_threshold_fraction >= 0.0 && synthesis.intensity_threshold_fraction < 1.0,
          "synthesis.intensity_threshold_fraction must lie in [0, 1)");
  require(element == "binary" || element == "continuous", "synthesis.element: expected 'binary' or 'continuous'");
  require(!fabrication_pixel || *fabrication_pixel > 0.0, "synthesis.fabrication_pixel_m must be positive");

  require(confidence > 0.5 && confidence < 1.0, "stats.confidence must lie in (0.5, 1)");
  require(n_trials >= 1, "stats.n_trials must be >= 1");
  require(max_incident >= 1, "stats.max_incident must be >= 1");
  require(prior_right > 0.0 && prior_right < 1.0, "stats.prior_right must lie in (0, 1)");
  require(likelihood_floor > 0.0, "stats.likelihood_floor must be positive");

  require(!grating_energies_ev.empty(), "grating.energies_ev must not be empty");
  for (double e : grating_energies_ev)
    require(e > 0.0, "grating.energies_ev must be positive");
  require(merge_energy_ev > 0.0, "grating.merge_energy_ev must be positive");
  require(grating_grid_n >= 16 && (grating_grid_n % 2) == 0, "grating.grid_n must be even and >= 16");
  require(grating_pixel > 0.0, "grating.pixel_m must be positive");
  require(peaks.smoothing_sigma_px >= 0.0 && peaks.min_separation_px >= 0.0 && peaks.min_relative_height >= 0.0,
          "grating peak options must be non-negative");

  try {
    const OpticalChain ch = chain();
    ch.validate(wavelength());
    pixel_ratio(ch.doe_grid(wavelength()).pixel_size, resolved_fabrication_pixel());
    const AbsorptionModel am = absorption_model();
    if (absorption)
      (void)am.table.at(energy_ev);
    projection.validate();
    resolved_grating().validate();
    for (double e : grating_energies_ev)
      grating_equation(electron_wavelength(e), grating.slit_spacing);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

// ---------------------------------------------------------------- hashing

/// FNV-1a 64 over the canonical dump of the resolved config, as 16 hex digits.
inline std::string config_hash(const Json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline ExperimentConfig load_config(const std::string& path) {
  if (path.empty())
    return {};
  std::ifstream is(path);
  if (!is)
    throw ValidationError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(is, nullptr, true, true);
  } catch (const Json::exception& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

} // namespace lowdose
