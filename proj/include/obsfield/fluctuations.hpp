#ifndef OBSFIELD_FLUCTUATIONS_HPP
#define OBSFIELD_FLUCTUATIONS_HPP

#include "obsfield/lattice.hpp"

namespace obsfield {

/// Seeded Monte-Carlo samples of the field fluctuation omega over one short
/// time step dt: one row per sample, one column per lattice site.
template <class Scalar = double>
struct FluctuationBatchT {
  MatrixX<Scalar> omegas;  // n_samples x n_sites
  Scalar dt = Scalar(0);
  Scalar hbar = Scalar(1);
  std::uint64_t seed = 0;

  Index n_samples() const { return omegas.rows(); }
};

using FluctuationBatch = FluctuationBatchT<double>;

/// Normalized single-site transition density p[omega] on a uniform grid.
template <class Scalar = double>
struct DiscreteTransitionDensityT {
  VectorX<Scalar> omega_grid;
  VectorX<Scalar> weights;  // density values; sum(weights)*step == 1

  Scalar step() const { return omega_grid[1] - omega_grid[0]; }

  Scalar mean() const {
    KahanSum<Scalar> acc;
    for (Index k = 0; k < omega_grid.size(); ++k) acc.add(weights[k] * omega_grid[k]);
    return acc.value() * step();
  }

  Scalar variance() const {
    const Scalar mu = mean();
    KahanSum<Scalar> acc;
    for (Index k = 0; k < omega_grid.size(); ++k) {
      const Scalar d = omega_grid[k] - mu;
      acc.add(weights[k] * d * d);
    }
    return acc.value() * step();
  }

  /// Cumulative distribution at grid nodes (trapezoid), for KS-style checks.
  VectorX<Scalar> cdf() const {
    VectorX<Scalar> out(omega_grid.size());
    KahanSum<Scalar> acc;
    out[0] = Scalar(0);
    for (Index k = 1; k < omega_grid.size(); ++k) {
      acc.add(Scalar(0.5) * (weights[k - 1] + weights[k]) * step());
      out[k] = acc.value();
    }
    return out;
  }
};

using DiscreteTransitionDensity = DiscreteTransitionDensityT<double>;

/// Variational short-time minimizer: minimizes
///   I = (1/(hbar dt)) E_p[ omega^2 dx + 2 V dx dt^2 ] + E_p[ ln(p/sigma) ]
/// over normalized densities on the grid. The stationarity condition is
/// solved in closed form, p ~ exp(-omega^2 dx/(hbar dt)); the omega-independent
/// offset 2 V dx dt^2 is an additive constant in the exponent and cancels
/// exactly against the normalization, so it never enters the weights.
template <class Scalar>
DiscreteTransitionDensityT<Scalar> minimize_short_time(const VectorX<Scalar>& omega_grid,
                                                       Scalar v_offset, Scalar dt, Scalar hbar,
                                                       Scalar dx) {
  if (omega_grid.size() < 3)
    throw std::invalid_argument("minimize_short_time: grid needs at least 3 points");
  if (!(dt > Scalar(0)) || !(hbar > Scalar(0)) || !(dx > Scalar(0)))
    throw std::invalid_argument("minimize_short_time: dt, hbar, dx must be positive");
  if (!std::isfinite(static_cast<double>(v_offset)))
    throw std::invalid_argument("minimize_short_time: v_offset must be finite");
  const Index m = omega_grid.size();
  const Scalar h = omega_grid[1] - omega_grid[0];
  if (!(h > Scalar(0)))
    throw std::invalid_argument("minimize_short_time: grid must be increasing");
  for (Index k = 1; k < m; ++k)
    if (std::abs(static_cast<double>(omega_grid[k] - omega_grid[k - 1] - h)) >
        1e-9 * static_cast<double>(h))
      throw std::invalid_argument("minimize_short_time: grid must be uniform");

  const Scalar beta = dx / (hbar * dt);
  ArrayX<Scalar> expo(m);
  for (Index k = 0; k < m; ++k) expo[k] = -beta * omega_grid[k] * omega_grid[k];
  const Scalar shift = expo.maxCoeff();

  DiscreteTransitionDensityT<Scalar> density;
  density.omega_grid = omega_grid;
  density.weights.resize(m);
  KahanSum<Scalar> norm;
  for (Index k = 0; k < m; ++k) {
    density.weights[k] = std::exp(expo[k] - shift);
    norm.add(density.weights[k]);
  }
  density.weights /= norm.value() * h;

  const Scalar boundary_mass = (density.weights[0] + density.weights[m - 1]) * h;
  if (boundary_mass >= Scalar(1e-10))
    throw std::runtime_error("minimize_short_time: grid too narrow, boundary mass check failed");
  return density;
}

/// Draws i.i.d. per-site Gaussian fluctuations with variance hbar*dt/(2*dx).
/// Reproducible: (seed, n_samples, spec) pins the batch exactly.
template <class Scalar>
FluctuationBatchT<Scalar> sample_fluctuations(const LatticeSpecT<Scalar>& spec, Scalar dt,
                                              Scalar hbar, Index n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("sample_fluctuations: n_samples must be >= 1");
  if (!(dt > Scalar(0)) || !(hbar > Scalar(0)))
    throw std::invalid_argument("sample_fluctuations: dt and hbar must be positive");
  FluctuationBatchT<Scalar> batch;
  batch.dt = dt;
  batch.hbar = hbar;
  batch.seed = seed;
  batch.omegas.resize(n_samples, spec.n_sites);
  const Scalar sigma = std::sqrt(hbar * dt / (Scalar(2) * spec.dx));
  NormalStream rng(seed);
  for (Index s = 0; s < n_samples; ++s)
    for (Index i = 0; i < spec.n_sites; ++i)
      batch.omegas(s, i) = sigma * static_cast<Scalar>(rng.next());
  return batch;
}

template <class Scalar = double>
struct BatchMomentsT {
  VectorX<Scalar> mean;
  MatrixX<Scalar> covariance;   // unbiased
  VectorX<Scalar> mean_se;
  MatrixX<Scalar> covariance_se;  // Gaussian large-n standard errors
};

using BatchMoments = BatchMomentsT<double>;

/// Sample mean and unbiased covariance of a batch, with standard errors.
template <class Scalar>
BatchMomentsT<Scalar> batch_moments(const FluctuationBatchT<Scalar>& batch,
                                    const LatticeSpecT<Scalar>& spec) {
  if (batch.omegas.cols() != spec.n_sites)
    throw std::invalid_argument("batch_moments: batch does not match spec");
  const Index n = batch.n_samples();
  if (n < 2) throw std::invalid_argument("batch_moments: need at least 2 samples");

  BatchMomentsT<Scalar> mom;
  mom.mean = batch.omegas.colwise().mean();
  MatrixX<Scalar> centered = batch.omegas.rowwise() - mom.mean.transpose();
  mom.covariance = (centered.adjoint() * centered) / Scalar(n - 1);
  mom.mean_se = (mom.covariance.diagonal().array() / Scalar(n)).sqrt();
  mom.covariance_se.resize(spec.n_sites, spec.n_sites);
  for (Index i = 0; i < spec.n_sites; ++i)
    for (Index j = 0; j < spec.n_sites; ++j) {
      const Scalar cii = mom.covariance(i, i), cjj = mom.covariance(j, j),
                   cij = mom.covariance(i, j);
      mom.covariance_se(i, j) = std::sqrt((cii * cjj + cij * cij) / Scalar(n - 1));
    }
  return mom;
}

template <class Scalar = double>
struct SmearedUncertaintyT {
  Scalar sigma_phi = Scalar(0);  // RMS of the f-smeared field fluctuation
  Scalar sigma_pi = Scalar(0);   // RMS of the g-smeared momentum fluctuation
  Scalar bound = Scalar(0);      // (hbar/2) <f|g>
  Scalar product_se = Scalar(0);

  Scalar product() const { return sigma_phi * sigma_pi; }
};

using SmearedUncertainty = SmearedUncertaintyT<double>;

/// Uncertainty relation with spatial test functions:
///   sigma(dphi(f)) * sigma(dpi(g)) >= (hbar/2) <f|g>,
/// where dphi(f) = dx*sum(omega_i f_i) and dpi = omega/dt. The two RMS values
/// are sample standard deviations over the batch.
template <class Scalar>
SmearedUncertaintyT<Scalar> smeared_uncertainty(const FluctuationBatchT<Scalar>& batch,
                                                const VectorX<Scalar>& f, const VectorX<Scalar>& g,
                                                const LatticeSpecT<Scalar>& spec) {
  detail::check_size(f, spec, "smeared_uncertainty");
  detail::check_size(g, spec, "smeared_uncertainty");
  if ((f.array() < Scalar(0)).any() || (g.array() < Scalar(0)).any())
    throw std::invalid_argument("smeared_uncertainty: test functions must be nonnegative");
  const Index n = batch.n_samples();
  if (n < 2) throw std::invalid_argument("smeared_uncertainty: need at least 2 samples");

  const VectorX<Scalar> sf = spec.dx * (batch.omegas * f);
  const VectorX<Scalar> sg = spec.dx * (batch.omegas * g);
  auto rms = [n](const VectorX<Scalar>& v) {
    const Scalar mu = v.mean();
    return std::sqrt((v.array() - mu).square().sum() / Scalar(n - 1));
  };

  SmearedUncertaintyT<Scalar> u;
  u.sigma_phi = rms(sf);
  u.sigma_pi = rms(sg) / batch.dt;
  u.bound = (batch.hbar / Scalar(2)) * inner_product(f, g, spec);
  // Conservative: exact asymptotic when f and g are proportional, upper bound
  // otherwise.
  u.product_se = u.sigma_phi * u.sigma_pi * std::sqrt(Scalar(2) / Scalar(n - 1));
  return u;
}

}  // namespace obsfield

#endif  // OBSFIELD_FLUCTUATIONS_HPP
