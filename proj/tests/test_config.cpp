#include <gtest/gtest.h>

#include <filesystem>

#include "lowdose/config.hpp"
#include "lowdose/experiment.hpp"

using namespace lowdose;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.grid_n = 128;
  c.n_trials = 20;
  c.grating_energies_ev = {149.0};
  c.grating_grid_n = 512;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lowdose_test_" + name);
  fs::remove_all(p);
  return p;
}

} // namespace

TEST(Config, DefaultsValidate) {
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
  const ExperimentConfig c;
  EXPECT_NEAR(c.resolved_doe_pixel(), 40e-9, 0);
  ExperimentConfig hi;
  hi.energy_ev = 100e3;
  EXPECT_NEAR(hi.resolved_doe_pixel(), 20e-9, 0);
  EXPECT_NEAR(c.chain().doe_grid(c.wavelength()).pixel_size, 40e-9, 1e-20);
}

TEST(Config, JsonRoundTripIsStable) {
  ExperimentConfig c = small_config();
  c.absorption = true;
  c.mode = UpdateMode::FullInformation;
  const Json j = c.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(config_hash(back.to_json()), config_hash(j));
}

TEST(Config, HashChangesWithAnyField) {
  const ExperimentConfig a;
  ExperimentConfig b;
  b.master_seed = 2;
  EXPECT_NE(config_hash(a.to_json()), config_hash(b.to_json()));
  EXPECT_EQ(config_hash(a.to_json()).size(), 16u);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(ExperimentConfig::from_json(Json::parse(R"({"beem": {}})")), ValidationError);
  EXPECT_THROW(ExperimentConfig::from_json(Json::parse(R"({"stats": {"trials": 5}})")), ValidationError);
  EXPECT_THROW(ExperimentConfig::from_json(Json::parse(R"({"stats": {"n_trials": "five"}})")), ValidationError);
  EXPECT_THROW(ExperimentConfig::from_json(Json::parse(R"({"stats": {"mode": "sometimes"}})")), ValidationError);
}

TEST(Config, InvalidFieldsRejectedBeforeCompute) {
  int line = 0;
  auto bad = [&](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ValidationError) << "case " << line;
    ++line;
  };
  bad([](ExperimentConfig& c) { c.energy_ev = -1; });
  bad([](ExperimentConfig& c) { c.confidence = 1.2; });
  bad([](ExperimentConfig& c) { c.prior_right = 0.0; });
  bad([](ExperimentConfig& c) { c.grid_n = 15; });
  bad([](ExperimentConfig& c) { c.phantom.extent = 300e-9; });
  bad([](ExperimentConfig& c) { c.focus_px_x = 400; });
  bad([](ExperimentConfig& c) { c.doe_pixel = 40e-9; c.specimen_to_doe = 1e-3; });
  bad([](ExperimentConfig& c) { c.fabrication_pixel = 50e-9; });
  bad([](ExperimentConfig& c) { c.grating.hole_diameter = 200e-9; });
  bad([](ExperimentConfig& c) { c.absorption = true; c.energy_ev = 50.0; });
  bad([](ExperimentConfig& c) { c.element = "phase"; });
  bad([](ExperimentConfig& c) { c.mfp_table = "/nonexistent/mfp.csv"; });
}

TEST(Config, LoadsFileWithComments) {
  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  const fs::path p = dir / "c.json";
  std::ofstream(p) << "{\n  // energy\n  \"beam\": {\"energy_ev\": 100000},\n  \"stats\": {\"mode\": \"full-information\"}\n}\n";
  const auto c = load_config(p.string());
  EXPECT_EQ(c.energy_ev, 100e3);
  EXPECT_EQ(c.mode, UpdateMode::FullInformation);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ValidationError);
  EXPECT_EQ(parse_update_mode("detections-only"), UpdateMode::DetectionsOnly);
}

TEST(Artifacts, EnsembleOutputsVerifyAndRecompute) {
  const ExperimentConfig cfg = small_config();
  const ChainRun run = build_chain(cfg);
  const auto ens = run_ensembles(run);
  const fs::path dir = scratch("ens");
  artifacts::write_synthesis(dir, run);
  artifacts::write_ensemble(dir, run, ens);
  const auto v = artifacts::verify_directory(dir);
  for (const auto& m : v.messages)
    SCOPED_TRACE(m);
  EXPECT_TRUE(v.ok);

  // every artifact carries the hash
  const std::string hash = config_hash(cfg.to_json());
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string text = artifacts::read_all(e.path());
    EXPECT_NE(text.find(hash), std::string::npos) << e.path();
  }
}

TEST(Artifacts, TamperedLogFailsVerification) {
  const ExperimentConfig cfg = small_config();
  const ChainRun run = build_chain(cfg);
  const auto ens = run_ensembles(run);
  const fs::path dir = scratch("tamper");
  artifacts::write_ensemble(dir, run, ens);
  // drop the last trace row of the Right ensemble
  const fs::path traces = dir / "traces_right.csv";
  std::string text = artifacts::read_all(traces);
  text.erase(text.find_last_of('\n', text.size() - 2) + 1);
  std::ofstream(traces, std::ios::trunc) << text;
  EXPECT_FALSE(artifacts::verify_directory(dir).ok);
}

TEST(Artifacts, RepeatedRunsAreByteIdentical) {
  const ExperimentConfig cfg = small_config();
  const fs::path a = scratch("rep_a"), b = scratch("rep_b");
  for (const auto& dir : {a, b}) {
    const ChainRun run = build_chain(cfg);
    artifacts::write_synthesis(dir, run);
    artifacts::write_ensemble(dir, run, run_ensembles(run, dir == a ? 1 : 3));
    artifacts::write_sweep(dir, cfg, run_grating_sweep(cfg));
  }
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++n;
    EXPECT_EQ(artifacts::read_all(e.path()), artifacts::read_all(b / e.path().filename())) << e.path();
  }
  EXPECT_GT(n, 10u);
}
