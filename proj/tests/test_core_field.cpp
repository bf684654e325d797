#include <gtest/gtest.h>

#include <random>

#include "lowdose/beam.hpp"
#include "lowdose/io.hpp"
#include "lowdose/propagation.hpp"
#include "lowdose/random.hpp"
#include "oracles.hpp"

using namespace lowdose;

namespace {

ComplexField random_field(const GridSpec& g, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexField f(g);
  for (auto& v : f.storage())
    v = {n(gen), n(gen)};
  return f;
}

// Random field with spectral support inside |f| < fmax.
ComplexField band_limited_field(const GridSpec& g, std::uint64_t seed, double fraction) {
  ComplexField f = random_field(g, seed);
  auto s = f.storage();
  fft::transform(s, g.nx, g.ny, fft::Direction::Forward);
  for (std::size_t ky = 0; ky < g.ny; ++ky)
    for (std::size_t kx = 0; kx < g.nx; ++kx) {
      const double fx = std::min(kx, g.nx - kx) / (0.5 * g.nx);
      const double fy = std::min(ky, g.ny - ky) / (0.5 * g.ny);
      if (fx * fx + fy * fy > fraction * fraction)
        s[ky * g.nx + kx] = 0.0;
    }
  fft::transform(s, g.nx, g.ny, fft::Direction::Backward);
  return ComplexField(g, std::move(s));
}

ComplexField gaussian_spot(const GridSpec& g, double w) {
  return ComplexField::generate(g, [&](double x, double y) { return Complex{std::exp(-(x * x + y * y) / (w * w)), 0.0}; });
}

} // namespace

TEST(Wavelength, MatchesIndependentFormula) {
  for (double e : {1.0, 90.0, 149.0, 15e3, 100e3, 300e3})
    EXPECT_NEAR(electron_wavelength(e) / oracle::electron_wavelength(e), 1.0, 1e-12) << e;
}

TEST(Wavelength, FrozenValues) {
  EXPECT_NEAR(electron_wavelength(149.0), 1.00465e-10, 1e-15);
  EXPECT_NEAR(electron_wavelength(90.0), 1.29271e-10, 1e-15);
  EXPECT_NEAR(electron_wavelength(100e3), 3.701437e-12, 1e-18);
  EXPECT_NEAR(electron_wavelength(15e3), 9.94104e-12, 1e-17);
}

TEST(Wavelength, SweepEnergiesSpanTargetRange) {
  EXPECT_GT(electron_wavelength(149.0), 0.073e-9);
  EXPECT_LT(electron_wavelength(149.0), 0.13e-9);
}

TEST(Wavelength, StrictlyDecreasing) {
  double prev = electron_wavelength(1.0);
  for (int i = 1; i < 1000; ++i) {
    const double e = 1.0 + (300e3 - 1.0) * i / 999.0;
    const double l = electron_wavelength(e);
    ASSERT_LT(l, prev) << e;
    prev = l;
  }
}

TEST(Wavelength, RejectsNonPositive) {
  EXPECT_THROW(electron_wavelength(0.0), DomainError);
  EXPECT_THROW(electron_wavelength(-5.0), DomainError);
  EXPECT_THROW(electron_wavelength(std::nan("")), DomainError);
}

TEST(AngularSpectrum, ZeroDistanceIsIdentity) {
  const GridSpec g{32, 32, 0.5e-9};
  const auto f = random_field(g, 3);
  const auto out = propagate_angular_spectrum(f, 0.0, 1e-11);
  EXPECT_EQ(out.storage(), f.storage());
}

TEST(AngularSpectrum, PlaneWaveStaysUniform) {
  const GridSpec g{64, 64, 0.5e-9};
  const auto out = propagate_angular_spectrum(plane_wave(g), 1e-6, 1e-11);
  for (const auto& v : out.values())
    EXPECT_NEAR(std::abs(v), 1.0, 1e-12);
}

TEST(AngularSpectrum, MatchesBruteForceDft) {
  const GridSpec g{12, 12, 0.5e-9};
  const double lambda = 1e-11, z = 2e-7;
  const auto f = random_field(g, 11);
  std::vector<oracle::cplx> in(f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    in[i] = {f[i].real(), f[i].imag()};
  const auto ref = oracle::angular_spectrum(in, g.nx, g.pixel_size, lambda, z);
  const auto out = propagate_angular_spectrum(f, z, lambda);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(out[i].real(), static_cast<double>(ref[i].real()), 1e-12);
    EXPECT_NEAR(out[i].imag(), static_cast<double>(ref[i].imag()), 1e-12);
  }
}

TEST(AngularSpectrum, UnitaryOnHundredRandomFields) {
  const GridSpec g{128, 128, 0.5e-9};
  const double lambda = electron_wavelength(15e3);
  const double z = 0.5 * angular_spectrum_max_distance(g, lambda);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto f = random_field(g, 100 + s);
    const double before = total_intensity(f);
    const double after = total_intensity(propagate_angular_spectrum(f, z, lambda));
    ASSERT_LE(std::abs(after - before) / before, 1e-10) << "seed " << s;
  }
}

TEST(AngularSpectrum, Semigroup) {
  const GridSpec g{128, 128, 0.5e-9};
  const double lambda = electron_wavelength(15e3);
  const double zmax = angular_spectrum_max_distance(g, lambda);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = band_limited_field(g, 300 + s, 0.5);
    const double z1 = 0.3 * zmax, z2 = 0.45 * zmax;
    const auto two = propagate_angular_spectrum(propagate_angular_spectrum(f, z1, lambda), z2, lambda);
    const auto one = propagate_angular_spectrum(f, z1 + z2, lambda);
    EXPECT_LE(rms_difference(two, one), 1e-8);
  }
}

TEST(AngularSpectrum, ForwardBackRoundTrip) {
  const GridSpec g{128, 128, 0.5e-9};
  const double lambda = electron_wavelength(15e3);
  const double z = 0.9 * angular_spectrum_max_distance(g, lambda);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = random_field(g, 500 + s);
    const auto back = propagate_angular_spectrum(propagate_angular_spectrum(f, z, lambda), -z, lambda);
    EXPECT_LE(rms_difference(back, f), 1e-8);
  }
  const auto spot = gaussian_spot(g, 5e-9);
  const auto back = propagate_angular_spectrum(propagate_angular_spectrum(spot, z, lambda), -z, lambda);
  EXPECT_LE(rms_difference(back, spot), 1e-8);
}

TEST(AngularSpectrum, RejectsAliasedDistance) {
  const GridSpec g{64, 64, 0.5e-9};
  const double lambda = 1e-11;
  const double zmax = angular_spectrum_max_distance(g, lambda);
  EXPECT_NEAR(zmax / (64 * 0.25e-18 / lambda), 1.0, 1e-3);
  EXPECT_THROW(propagate_angular_spectrum(random_field(g, 1), 1.1 * zmax, lambda), GeometryError);
  EXPECT_THROW(propagate_angular_spectrum(random_field(g, 1), 1e-7, 0.0), DomainError);
}

TEST(Fresnel, OutputPixelMatchesDoeExample) {
  const GridSpec g{512, 512, 0.5e-9};
  EXPECT_NEAR(fresnel_output_pixel(g, 1.024e-3, 10e-12), 40e-9, 1e-20);
  const auto out = propagate_fresnel_scaled(ComplexField(g, Complex{1, 0}), 1.024e-3, 10e-12);
  EXPECT_NEAR(out.pixel_size(), 40e-9, 1e-20);
}

TEST(Fresnel, ParsevalOnRandomField) {
  const GridSpec g{64, 64, 0.5e-9};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto f = random_field(g, 700 + s);
    const double ratio = total_intensity(propagate_fresnel_scaled(f, 1e-3, 1e-11)) / total_intensity(f);
    EXPECT_NEAR(ratio, 1.0, 1e-8);
  }
}

TEST(Fresnel, PointSourceSpreadsSymmetrically) {
  const GridSpec g{64, 64, 0.5e-9};
  ComplexField f(g);
  f(32, 32) = 1.0;
  f(31, 32) = f(33, 32) = f(32, 31) = f(32, 33) = 0.5;
  const auto I = intensity(propagate_fresnel_scaled(f, 1e-3, 1e-11));
  double asym = 0.0, peak = 0.0;
  for (std::size_t iy = 1; iy < 64; ++iy)
    for (std::size_t ix = 1; ix < 64; ++ix) {
      peak = std::max(peak, I(ix, iy));
      asym = std::max(asym, std::abs(I(ix, iy) - I(64 - ix, iy)));
      asym = std::max(asym, std::abs(I(ix, iy) - I(iy, ix)));
    }
  EXPECT_LE(asym / peak, 1e-6);
}

TEST(Fresnel, RejectsNonPositiveDistance) {
  const GridSpec g{16, 16, 1e-9};
  EXPECT_THROW(propagate_fresnel_scaled(ComplexField(g), 0.0, 1e-11), DomainError);
  EXPECT_THROW(propagate_fresnel_scaled(ComplexField(g), -1.0, 1e-11), DomainError);
  EXPECT_THROW(propagate_fresnel_scaled(ComplexField(GridSpec{16, 8, 1e-9}), 1.0, 1e-11), ShapeError);
}

TEST(PointSource, PhaseMatchesAnalyticCurvature) {
  const GridSpec g{128, 128, 2.5e-9};
  const double z = 360e-6, lambda = 0.1e-9;
  const auto f = point_source_illumination(g, z, lambda);
  EXPECT_EQ(f(64, 64), Complex(1.0, 0.0));
  for (std::size_t iy = 0; iy < g.ny; iy += 7)
    for (std::size_t ix = 0; ix < g.nx; ix += 5) {
      const double r2 = g.x(ix) * g.x(ix) + g.y(iy) * g.y(iy);
      const double expect = std::remainder(M_PI * r2 / (lambda * z), 2 * M_PI);
      EXPECT_NEAR(std::remainder(std::arg(f(ix, iy)) - expect, 2 * M_PI), 0.0, 1e-9);
      EXPECT_NEAR(std::abs(f(ix, iy)), 1.0, 1e-15);
    }
}

TEST(PointSource, PhaseDoublesAtRootTwoRadius) {
  const GridSpec g{64, 64, 1e-9};
  const double z = 1.0, lambda = 1e-10;
  const auto f = point_source_illumination(g, z, lambda);
  // r = 5 px, then r = 5 sqrt(2) px; both phases stay below pi
  EXPECT_NEAR(2.0 * std::arg(f(37, 32)), std::arg(f(37, 37)), 1e-12);
}

TEST(PointSource, InfiniteDistanceIsPlaneWave) {
  const GridSpec g{16, 16, 1e-9};
  const auto f = point_source_illumination(g, std::numeric_limits<double>::infinity(), 1e-10);
  for (const auto& v : f.values())
    EXPECT_EQ(v, Complex(1.0, 0.0));
  EXPECT_THROW(point_source_illumination(g, -1.0, 1e-10), DomainError);
}

TEST(MapIo, CsvRoundTripIsExact) {
  const GridSpec g{7, 5, 0.37e-9};
  RealMap m = RealMap::generate(g, [](double x, double y) { return std::sin(1e9 * x) * std::exp(1e9 * y) + 1e-17; });
  std::stringstream ss;
  io::write_csv(ss, m, {"config_hash=abc"});
  const RealMap back = io::read_csv(ss);
  EXPECT_EQ(back.storage(), m.storage());
  EXPECT_EQ(back.pixel_size(), m.pixel_size());
}

TEST(MapIo, Pgm16RoundTripWithinQuantisation) {
  const GridSpec g{9, 4, 1e-9};
  RealMap m = RealMap::generate(g, [](double x, double y) { return 3.0 + std::cos(1e9 * (x + 2 * y)); });
  std::stringstream ss;
  io::write_pgm16(ss, m);
  const RealMap back = io::read_pgm16(ss);
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_NEAR(back[i], m[i], 4.0 / 65535.0);
  EXPECT_EQ(back.pixel_size(), 1e-9);
}

TEST(MapIo, RejectsMalformedCsv) {
  std::stringstream ss("nx,ny,pixel_size\n2,2,1e-9\n1,2\n3,4,5\n");
  EXPECT_THROW(io::read_csv(ss), io::IoError);
}

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(1, 0, 0), derive_seed(1, 0, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i)
    ASSERT_EQ(a.uniform(), b.uniform());
}
