#ifndef OBSFIELD_CLASSICAL_HPP
#define OBSFIELD_CLASSICAL_HPP

#include <functional>
#include <utility>
#include <vector>

#include "obsfield/lattice.hpp"

namespace obsfield {

/// Phase-space point of the classical field: (phi, pi = phidot) at time t.
template <class Scalar = double>
struct ClassicalStateT {
  FieldConfigT<Scalar> phi;
  FieldConfigT<Scalar> pi;
  Scalar t = Scalar(0);
};

using ClassicalState = ClassicalStateT<double>;

template <class Scalar = double>
struct TrajectoryT {
  std::vector<ClassicalStateT<Scalar>> states;
  Scalar dt = Scalar(0);
};

using Trajectory = TrajectoryT<double>;

/// Spatially integrated Lagrangian dx*sum(pi^2/2) - potential_integral.
template <class Scalar>
Scalar lagrangian(const ClassicalStateT<Scalar>& state, const LatticeSpecT<Scalar>& spec,
                  const PotentialSpecT<Scalar>& pot) {
  detail::check_size(state.pi.values, spec, "lagrangian");
  const Scalar kinetic = Scalar(0.5) * spec.dx * state.pi.values.squaredNorm();
  return kinetic - potential_integral(state.phi, spec, pot);
}

/// H = dx*sum(pi^2/2) + potential_integral; conserved by evolve_kg up to
/// integrator error.
template <class Scalar>
Scalar hamiltonian(const ClassicalStateT<Scalar>& state, const LatticeSpecT<Scalar>& spec,
                   const PotentialSpecT<Scalar>& pot) {
  detail::check_size(state.pi.values, spec, "hamiltonian");
  const Scalar kinetic = Scalar(0.5) * spec.dx * state.pi.values.squaredNorm();
  return kinetic + potential_integral(state.phi, spec, pot);
}

/// Leapfrog stability bound dt < dx/sqrt(1 + (m dx/2)^2) for the highest
/// lattice mode (the user-facing rule of thumb is dt < dx).
template <class Scalar>
Scalar kg_stable_dt(const LatticeSpecT<Scalar>& spec, const PotentialSpecT<Scalar>& pot) {
  using std::sqrt;
  const Scalar half_mdx = Scalar(0.5) * sqrt(pot.m2) * spec.dx;
  return spec.dx / sqrt(Scalar(1) + half_mdx * half_mdx);
}

namespace detail {
template <class Scalar>
VectorX<Scalar> kg_force(const VectorX<Scalar>& phi, const LatticeSpecT<Scalar>& spec,
                         const PotentialSpecT<Scalar>& pot) {
  const Index n = spec.n_sites;
  const Scalar inv_dx2 = Scalar(1) / (spec.dx * spec.dx);
  VectorX<Scalar> f(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar lap = (phi[(i + 1) % n] - Scalar(2) * phi[i] + phi[(i + n - 1) % n]) * inv_dx2;
    f[i] = lap - pot.site_derivative(phi[i]);
  }
  return f;
}
}  // namespace detail

/// Klein-Gordon evolution by symplectic leapfrog (kick-drift-kick).
/// Returns the whole trajectory, steps+1 states at uniform spacing dt.
template <class Scalar>
TrajectoryT<Scalar> evolve_kg(const ClassicalStateT<Scalar>& initial,
                              const LatticeSpecT<Scalar>& spec, const PotentialSpecT<Scalar>& pot,
                              Scalar dt, Index steps) {
  detail::check_size(initial.phi.values, spec, "evolve_kg");
  detail::check_size(initial.pi.values, spec, "evolve_kg");
  if (!(dt > Scalar(0))) throw std::invalid_argument("evolve_kg: dt must be positive");
  if (dt >= kg_stable_dt(spec, pot))
    throw std::invalid_argument("evolve_kg: dt exceeds the lattice stability bound");
  if (steps < 0) throw std::invalid_argument("evolve_kg: steps must be >= 0");

  TrajectoryT<Scalar> traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back(initial);

  VectorX<Scalar> phi = initial.phi.values;
  VectorX<Scalar> pi = initial.pi.values;
  VectorX<Scalar> f = detail::kg_force(phi, spec, pot);
  for (Index s = 0; s < steps; ++s) {
    pi += (dt / Scalar(2)) * f;
    phi += dt * pi;
    f = detail::kg_force(phi, spec, pot);
    pi += (dt / Scalar(2)) * f;
    ClassicalStateT<Scalar> st;
    st.phi.values = phi;
    st.pi.values = pi;
    st.t = initial.t + Scalar(s + 1) * dt;
    traj.states.push_back(std::move(st));
  }
  return traj;
}

/// Quadratic generator family S[phi,t] = dx * a(t) * sum(phi_i^2)/2 + c(t),
/// the verification vehicle for the Hamilton-Jacobi residual. a and c are
/// supplied together with their time derivatives.
template <class Scalar = double>
struct QuadraticGeneratorT {
  std::function<Scalar(Scalar)> a;
  std::function<Scalar(Scalar)> a_dot;
  std::function<Scalar(Scalar)> c;
  std::function<Scalar(Scalar)> c_dot;

  Scalar value(const FieldConfigT<Scalar>& config, const LatticeSpecT<Scalar>& spec,
               Scalar t) const {
    return spec.dx * a(t) * config.values.squaredNorm() / Scalar(2) + c(t);
  }
  /// delta S / delta phi(x_i) = a(t) * phi_i.
  Scalar momentum(Scalar phi_i, Scalar t) const { return a(t) * phi_i; }
};

using QuadraticGenerator = QuadraticGeneratorT<double>;

/// Left-hand side of the classical Hamilton-Jacobi equation at one
/// configuration: dS/dt + dx*sum( (dS/dphi)^2/2 ) + potential_integral.
/// Zero for exact solutions.
template <class Scalar>
Scalar hj_residual(const QuadraticGeneratorT<Scalar>& gen, const FieldConfigT<Scalar>& config,
                   const LatticeSpecT<Scalar>& spec, const PotentialSpecT<Scalar>& pot, Scalar t) {
  detail::check_size(config.values, spec, "hj_residual");
  const Scalar s_dot =
      spec.dx * gen.a_dot(t) * config.values.squaredNorm() / Scalar(2) + gen.c_dot(t);
  KahanSum<Scalar> flow;
  for (Index i = 0; i < spec.n_sites; ++i) {
    const Scalar p = gen.momentum(config.values[i], t);
    flow.add(Scalar(0.5) * p * p);
  }
  return s_dot + spec.dx * flow.value() + potential_integral(config, spec, pot);
}

/// Pointwise residual of the continuity equation on the tensor grid:
/// drho/dt + (1/dx) sum_i d_i( rho d_i S ). rho_dot is supplied by the caller.
template <class Scalar>
ArrayX<Scalar> continuity_residual(const ArrayX<Scalar>& rho, const ArrayX<Scalar>& rho_dot,
                                   const ArrayX<Scalar>& s, const TensorGridLayoutT<Scalar>& layout) {
  detail::check_grid(rho, layout, "continuity_residual");
  detail::check_grid(rho_dot, layout, "continuity_residual");
  detail::check_grid(s, layout, "continuity_residual");
  if ((rho < Scalar(0)).any())
    throw std::invalid_argument("continuity_residual: rho must be nonnegative");
  ArrayX<Scalar> res = rho_dot;
  for (Index a = 0; a < layout.axes(); ++a) {
    const ArrayX<Scalar> flux = rho * axis_diff1(s, layout, a);
    res += axis_diff1(flux, layout, a) / layout.spec().dx;
  }
  return res;
}

template <class Scalar = double>
struct McEstimateT {
  Scalar value = Scalar(0);
  Scalar std_error = Scalar(0);
};

using McEstimate = McEstimateT<double>;

namespace detail {
/// Cumulative node distribution for sampling configurations from a density
/// grid with the trapezoid measure.
template <class Scalar>
std::vector<double> node_cdf(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout) {
  std::vector<double> cdf(static_cast<std::size_t>(rho.size()));
  double run = 0.0;
  for (Index n = 0; n < rho.size(); ++n) {
    const double w = static_cast<double>(layout.trapezoid_weight(n) * rho[n]);
    run += w > 0.0 ? w : 0.0;
    cdf[static_cast<std::size_t>(n)] = run;
  }
  for (auto& c : cdf) c /= run;
  return cdf;
}

template <class Scalar>
void check_normalized(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                      const char* who) {
  const Scalar total = trapezoid_integral(rho, layout);
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-8)
    throw std::invalid_argument(std::string(who) + ": rho is not normalized");
}
}  // namespace detail

/// Monte-Carlo estimate of the ensemble action
///   S_c = int Dphi dt rho [ dS/dt + dx*sum( (dS/dphi)^2/2 ) + int V ]
/// with configurations drawn from the (stationary) density grid and the time
/// integral done by the trapezoid rule on n_time+1 nodes.
template <class Scalar>
McEstimateT<Scalar> ensemble_action(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                                    const QuadraticGeneratorT<Scalar>& gen,
                                    const PotentialSpecT<Scalar>& pot, Scalar t0, Scalar t1,
                                    Index samples, std::uint64_t seed, Index n_time = 16) {
  detail::check_grid(rho, layout, "ensemble_action");
  if (samples < 1) throw std::invalid_argument("ensemble_action: samples must be >= 1");
  if (!(t1 > t0)) throw std::invalid_argument("ensemble_action: empty time window");
  if (n_time < 1) throw std::invalid_argument("ensemble_action: n_time must be >= 1");
  detail::check_normalized(rho, layout, "ensemble_action");

  const auto cdf = detail::node_cdf(rho, layout);
  NormalStream rng(seed);
  const Scalar ht = (t1 - t0) / Scalar(n_time);

  // Per-sample time integral of the HJ integrand at a fixed configuration.
  auto window_integral = [&](const FieldConfigT<Scalar>& cfg) {
    const Scalar pot_term = potential_integral(cfg, layout.spec(), pot);
    const Scalar sumsq = cfg.values.squaredNorm();
    KahanSum<Scalar> acc;
    for (Index j = 0; j <= n_time; ++j) {
      const Scalar t = t0 + Scalar(j) * ht;
      const Scalar a = gen.a(t);
      const Scalar integrand = layout.spec().dx * gen.a_dot(t) * sumsq / Scalar(2) + gen.c_dot(t) +
                               layout.spec().dx * Scalar(0.5) * a * a * sumsq + pot_term;
      acc.add((j == 0 || j == n_time ? Scalar(0.5) : Scalar(1)) * integrand);
    }
    return ht * acc.value();
  };

  KahanSum<Scalar> sum, sumsq;
  for (Index s = 0; s < samples; ++s) {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const Index node = static_cast<Index>(it - cdf.begin());
    const Scalar v = window_integral(layout.config_at(std::min(node, layout.size() - 1)));
    sum.add(v);
    sumsq.add(v * v);
  }
  McEstimateT<Scalar> est;
  est.value = sum.value() / Scalar(samples);
  if (samples > 1) {
    const Scalar var =
        (sumsq.value() - Scalar(samples) * est.value * est.value) / Scalar(samples - 1);
    est.std_error = std::sqrt(std::max(var, Scalar(0)) / Scalar(samples));
  }
  return est;
}

}  // namespace obsfield

#endif  // OBSFIELD_CLASSICAL_HPP
