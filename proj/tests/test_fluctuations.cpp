#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "obsfield/fluctuations.hpp"
#include "testutil.hpp"

using namespace obsfield;

namespace {

VectorX<double> linspace(double lo, double hi, Index n) {
  VectorX<double> v(n);
  for (Index i = 0; i < n; ++i) v[i] = lo + (hi - lo) * double(i) / double(n - 1);
  return v;
}

// least-squares slope of y against x
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("minimize_short_time returns the normalized Gaussian minimizer") {
  const double dt = 0.01, hbar = 1.0, dx = 1.0;
  const double sigma = std::sqrt(hbar * dt / (2.0 * dx));
  const VectorX<double> grid = linspace(-8.0 * sigma, 8.0 * sigma, 1201);

  SUBCASE("variance equals hbar dt/(2 dx)") {
    const auto density = minimize_short_time(grid, 0.0, dt, hbar, dx);
    CHECK(std::abs(density.variance() - 0.005) < 1e-6);
    CHECK(density.mean() == doctest::Approx(0.0).epsilon(1e-12));
    const double total = density.weights.sum() * density.step();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("the potential offset cancels against normalization") {
    const auto base = minimize_short_time(grid, 0.0, dt, hbar, dx);
    const auto offset = minimize_short_time(grid, 1e6, dt, hbar, dx);
    CHECK((base.weights - offset.weights).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("variance grows monotonically with hbar dt") {
    const VectorX<double> wide = linspace(-600.0, 600.0, 120001);
    double prev = -1.0;
    for (double h : {1.0, 1e2, 1e4, 1e6}) {
      const auto density = minimize_short_time(wide, 0.0, dt, h, dx);
      CHECK(density.variance() > prev);
      // exponent 1/(hbar dt) -> 0 flattens toward the prior at rate hbar dt/2
      CHECK(density.variance() == doctest::Approx(h * dt / 2.0).epsilon(1e-6));
      prev = density.variance();
    }
  }
  SUBCASE("narrow grid trips the boundary mass check") {
    const VectorX<double> narrow = linspace(-2.0 * sigma, 2.0 * sigma, 101);
    CHECK_THROWS_AS(minimize_short_time(narrow, 0.0, dt, hbar, dx), std::runtime_error);
  }
  SUBCASE("nonuniform grid is rejected") {
    VectorX<double> bad = linspace(-0.5, 0.5, 101);
    bad[50] += 1e-3;
    CHECK_THROWS_AS(minimize_short_time(bad, 0.0, dt, hbar, dx), std::invalid_argument);
  }
}

TEST_CASE("sample_fluctuations is reproducible and matches the target moments") {
  const LatticeSpec spec(4, 0.5, 8.0, 3);
  const double dt = 0.01, hbar = 1.0;

  SUBCASE("same seed, same batch") {
    const auto a = sample_fluctuations(spec, dt, hbar, 2000, 1234);
    const auto b = sample_fluctuations(spec, dt, hbar, 2000, 1234);
    CHECK((a.omegas - b.omegas).cwiseAbs().maxCoeff() == 0.0);
    const auto c = sample_fluctuations(spec, dt, hbar, 2000, 1235);
    CHECK((a.omegas - c.omegas).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("per-site variance and cross covariance") {
    const Index n = 200000;
    const auto batch = sample_fluctuations(spec, dt, hbar, n, 42);
    const auto mom = batch_moments(batch, spec);
    const double target = hbar * dt / (2.0 * spec.dx);  // 0.01
    for (Index i = 0; i < spec.n_sites; ++i) {
      CHECK(std::abs(mom.mean[i]) < 4.0 * mom.mean_se[i]);
      CHECK(std::abs(mom.covariance(i, i) - target) < 4.0 * mom.covariance_se(i, i));
      for (Index j = 0; j < i; ++j)
        CHECK(std::abs(mom.covariance(i, j)) < 4.0 * mom.covariance_se(i, j));
    }
  }
  SUBCASE("skewness and excess kurtosis vanish") {
    const Index n = 200000;
    const auto batch = sample_fluctuations(spec, dt, hbar, n, 77);
    for (Index i = 0; i < spec.n_sites; ++i) {
      const ArrayX<double> col = batch.omegas.col(i).array();
      const double mu = col.mean();
      const double s2 = (col - mu).square().mean();
      const double skew = (col - mu).cube().mean() / std::pow(s2, 1.5);
      const double kurt = (col - mu).square().square().mean() / (s2 * s2) - 3.0;
      CHECK(std::abs(skew) < 4.0 * std::sqrt(6.0 / double(n)));
      CHECK(std::abs(kurt) < 4.0 * std::sqrt(24.0 / double(n)));
    }
  }
}

TEST_CASE("batch_moments handles degenerate and invalid batches") {
  const LatticeSpec spec(2, 1.0, 8.0, 3);
  SUBCASE("constant batch has zero covariance") {
    FluctuationBatch batch;
    batch.omegas = MatrixX<double>::Ones(10, 2) * 0.3;
    batch.dt = 0.01;
    batch.hbar = 1.0;
    const auto mom = batch_moments(batch, spec);
    CHECK(mom.covariance.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(mom.mean[0] == doctest::Approx(0.3));
  }
  SUBCASE("one sample is not enough") {
    FluctuationBatch batch;
    batch.omegas = MatrixX<double>::Zero(1, 2);
    batch.dt = 0.01;
    batch.hbar = 1.0;
    CHECK_THROWS_AS(batch_moments(batch, spec), std::invalid_argument);
  }
}

TEST_CASE("smeared uncertainty relation") {
  const LatticeSpec spec(2, 1.0, 8.0, 3);
  const double dt = 0.01, hbar = 1.0;
  const Index n = 100000;
  const auto batch = sample_fluctuations(spec, dt, hbar, n, 2024);

  SUBCASE("proportional test functions saturate the bound") {
    const VectorX<double> f = (VectorX<double>(2) << 1.0, 0.5).finished();
    const auto u = smeared_uncertainty(batch, f, f, spec);
    CHECK(u.bound == doctest::Approx(0.5 * (1.0 + 0.25)));
    CHECK(std::abs(u.product() - u.bound) < 3.0 * u.product_se);
    // closed-form RMS of the smeared field fluctuation
    const double sf2 = hbar * dt / 2.0 * spec.dx * f.squaredNorm();
    CHECK(std::abs(u.sigma_phi * u.sigma_phi - sf2) < 4.0 * sf2 * std::sqrt(2.0 / double(n - 1)));
  }
  SUBCASE("disjoint supports give a strict inequality") {
    const VectorX<double> f = (VectorX<double>(2) << 1.0, 0.0).finished();
    const VectorX<double> g = (VectorX<double>(2) << 0.0, 1.0).finished();
    const auto u = smeared_uncertainty(batch, f, g, spec);
    CHECK(u.bound == doctest::Approx(0.0));
    CHECK(u.product() > 0.0);
  }
  SUBCASE("Cauchy-Schwarz ratio for f=(1,1), g=(1,2)") {
    const VectorX<double> f = (VectorX<double>(2) << 1.0, 1.0).finished();
    const VectorX<double> g = (VectorX<double>(2) << 1.0, 2.0).finished();
    const auto u = smeared_uncertainty(batch, f, g, spec);
    const double ratio = u.product() / u.bound;
    CHECK(std::abs(ratio - std::sqrt(10.0) / 3.0) < 3.0 * u.product_se / u.bound);
  }
  SUBCASE("negative test functions are rejected") {
    const VectorX<double> f = (VectorX<double>(2) << 1.0, -0.1).finished();
    const VectorX<double> g = VectorX<double>::Ones(2);
    CHECK_THROWS_AS(smeared_uncertainty(batch, f, g, spec), std::invalid_argument);
  }
}

TEST_CASE("uncertainty product is bounded below for random nonnegative pairs") {
  const LatticeSpec spec(4, 1.0, 8.0, 3);
  const auto batch = sample_fluctuations(spec, 0.01, 1.0, 100000, 5150);
  NormalStream rng(991);
  for (int trial = 0; trial < 20; ++trial) {
    VectorX<double> f(4), g(4);
    for (Index i = 0; i < 4; ++i) {
      f[i] = std::abs(rng.next());
      g[i] = std::abs(rng.next());
    }
    const auto u = smeared_uncertainty(batch, f, g, spec);
    CHECK(u.product() >= u.bound - 4.0 * u.product_se);
  }
}

TEST_CASE("minimizer density and sampled fluctuations agree in KS distance") {
  const double dt = 0.01, hbar = 1.0, dx = 1.0;
  const double sigma = std::sqrt(hbar * dt / (2.0 * dx));
  const LatticeSpec spec(1, dx, 8.0, 3);
  const Index n = 100000;
  const auto batch = sample_fluctuations(spec, dt, hbar, n, 31);
  const auto density = minimize_short_time(linspace(-8 * sigma, 8 * sigma, 2001), 0.0, dt, hbar, dx);
  const VectorX<double> cdf = density.cdf();

  std::vector<double> samples(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) samples[static_cast<std::size_t>(s)] = batch.omegas(s, 0);
  std::sort(samples.begin(), samples.end());

  auto model_cdf = [&](double x) {
    if (x <= density.omega_grid[0]) return 0.0;
    if (x >= density.omega_grid[density.omega_grid.size() - 1]) return 1.0;
    const double pos = (x - density.omega_grid[0]) / density.step();
    const Index j = static_cast<Index>(std::floor(pos));
    const double f = pos - double(j);
    return cdf[j] * (1.0 - f) + cdf[j + 1] * f;
  };
  double ks = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double fx = model_cdf(samples[static_cast<std::size_t>(i)]);
    ks = std::max(ks, std::abs(fx - double(i) / double(n)));
    ks = std::max(ks, std::abs(fx - double(i + 1) / double(n)));
  }
  CHECK(ks < 0.01);
}

TEST_CASE("minimizer variance scales linearly in dt and hbar, inversely in dx") {
  auto variance_for = [](double dt, double hbar, double dx) {
    const double sigma = std::sqrt(hbar * dt / (2.0 * dx));
    return minimize_short_time(linspace(-8 * sigma, 8 * sigma, 2001), 0.0, dt, hbar, dx).variance();
  };
  const std::vector<double> decade{1.0, 1.78, 3.16, 5.62, 10.0};

  std::vector<double> lx, ly;
  for (double f : decade) {
    lx.push_back(std::log(0.002 * f));
    ly.push_back(std::log(variance_for(0.002 * f, 1.0, 1.0)));
  }
  CHECK(std::abs(fit_slope(lx, ly) - 1.0) < 0.02);

  lx.clear(), ly.clear();
  for (double f : decade) {
    lx.push_back(std::log(f));
    ly.push_back(std::log(variance_for(0.01, f, 1.0)));
  }
  CHECK(std::abs(fit_slope(lx, ly) - 1.0) < 0.02);

  lx.clear(), ly.clear();
  for (double f : decade) {
    lx.push_back(std::log(f));
    ly.push_back(std::log(variance_for(0.01, 1.0, f)));
  }
  CHECK(std::abs(fit_slope(lx, ly) + 1.0) < 0.02);
}
