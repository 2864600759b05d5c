#ifndef OBSFIELD_MADELUNG_HPP
#define OBSFIELD_MADELUNG_HPP

#include <string>

#include "obsfield/schrodinger.hpp"

namespace obsfield {

/// Polar representation of the wave functional: probability density rho and
/// phase/action grid S with Psi = sqrt(rho) exp(i S / hbar). S carries the
/// canonical gauge fixed by decompose (principal phase at the density peak)
/// and is meaningful only where rho exceeds node_threshold().
template <class Scalar = double>
struct MadelungStateT {
  ArrayX<Scalar> rho;
  ArrayX<Scalar> s;
  TensorGridLayoutT<Scalar> layout;
  Scalar hbar = Scalar(1);
  Scalar t = Scalar(0);

  MadelungStateT() = default;
  MadelungStateT(ArrayX<Scalar> density, ArrayX<Scalar> phase, TensorGridLayoutT<Scalar> lay,
                 Scalar planck, Scalar time = Scalar(0), bool validate = true)
      : rho(std::move(density)), s(std::move(phase)), layout(std::move(lay)), hbar(planck), t(time) {
    if (rho.size() != layout.size() || s.size() != layout.size())
      throw std::invalid_argument("MadelungState: grid size mismatch");
    if (!(hbar > Scalar(0))) throw std::invalid_argument("MadelungState: hbar must be positive");
    if (validate) {
      if ((rho < Scalar(0)).any())
        throw std::invalid_argument("MadelungState: rho must be nonnegative");
      if (std::abs(static_cast<double>(grid_total(rho, layout)) - 1.0) > 1e-10)
        throw std::invalid_argument("MadelungState: rho is not normalized");
    }
  }

  Scalar node_threshold() const { return Scalar(1e-12) * rho.maxCoeff(); }

  Eigen::Array<bool, Eigen::Dynamic, 1> valid_mask() const {
    const Scalar thr = node_threshold();
    Eigen::Array<bool, Eigen::Dynamic, 1> mask(rho.size());
    for (Index n = 0; n < rho.size(); ++n) mask[n] = rho[n] >= thr;
    return mask;
  }
};

using MadelungState = MadelungStateT<double>;

template <class Scalar = double>
struct MaskedGridT {
  ArrayX<Scalar> values;
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;

  Scalar max_abs() const {
    Scalar worst = Scalar(0);
    for (Index n = 0; n < values.size(); ++n)
      if (valid[n]) worst = std::max(worst, std::abs(values[n]));
    return worst;
  }
};

using MaskedGrid = MaskedGridT<double>;

namespace detail {

/// Throws when a below-threshold run sits strictly between above-threshold
/// nodes on some axis line: an interior node of the density, where the polar
/// representation breaks down.
template <class Scalar>
void check_bulk_holes(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                      Scalar threshold, const char* who) {
  const Index m = layout.points_per_axis();
  for (Index a = 0; a < layout.axes(); ++a) {
    bool hole = false;
    for_each_line(layout, a, [&](Index base, Index s) {
      Index first = -1, last = -1;
      for (Index k = 0; k < m; ++k)
        if (rho[base + k * s] >= threshold) {
          if (first < 0) first = k;
          last = k;
        }
      for (Index k = first; k >= 0 && k <= last; ++k)
        if (rho[base + k * s] < threshold) hole = true;
    });
    if (hole)
      throw std::runtime_error(std::string(who) + ": node encountered (density vanishes inside the bulk)");
  }
}

/// Spectral second derivative along one axis (exact for band-limited data;
/// valid for grids that decay at the truncation edge).
template <class Scalar>
ArrayX<Scalar> axis_diff2_spectral(const ArrayX<Scalar>& grid,
                                   const TensorGridLayoutT<Scalar>& layout, Index axis) {
  const ArrayX<Scalar> k2 =
      fft_wavenumbers<Scalar>(layout.points_per_axis(), layout.step()).square();
  const ArrayXc<Scalar> filter = (-k2).template cast<std::complex<Scalar>>();
  ArrayXc<Scalar> tmp = grid.template cast<std::complex<Scalar>>();
  Eigen::FFT<Scalar> fft;
  apply_axis_filter(fft, tmp, layout, axis, filter);
  return tmp.real();
}

template <class Scalar>
ArrayX<Scalar> second_derivative(const ArrayX<Scalar>& grid,
                                 const TensorGridLayoutT<Scalar>& layout, Index axis,
                                 KineticMode mode) {
  return mode == KineticMode::spectral ? axis_diff2_spectral(grid, layout, axis)
                                       : axis_diff2(grid, layout, axis);
}

}  // namespace detail

/// Polar decomposition Psi = sqrt(rho) e^{iS/hbar}. The phase is unwrapped
/// axis by axis outward from the maximum-|Psi| node (the canonical gauge; S is
/// defined up to a global additive constant). Below the node threshold the
/// last bulk value is held. Throws if an unwrap path crosses a node.
template <class Scalar>
MadelungStateT<Scalar> decompose(const WavefunctionalT<Scalar>& psi) {
  const auto& layout = psi.layout;
  const Index m = layout.points_per_axis();
  ArrayX<Scalar> rho = psi.density();
  detail::check_bulk_holes(rho, layout, Scalar(1e-12) * rho.maxCoeff(),
                           "decompose: phase unwrapping failure");

  Index center = 0;
  rho.maxCoeff(&center);
  const Scalar amp_threshold = Scalar(1e-6) * std::abs(psi.amplitudes[center]);

  ArrayX<Scalar> theta = ArrayX<Scalar>::Zero(layout.size());
  theta[center] = std::arg(psi.amplitudes[center]);

  auto unwrap_line = [&](Index seed, Index axis) {
    const Index s = layout.stride(axis);
    const Index k0 = layout.axis_index(seed, axis);
    const Index base = seed - k0 * s;
    auto sweep = [&](Index from, Index to, Index dir) {
      Scalar held = theta[base + from * s];
      bool past_frontier = std::abs(psi.amplitudes[base + from * s]) < amp_threshold;
      for (Index k = from + dir; dir > 0 ? k <= to : k >= to; k += dir) {
        const Index node = base + k * s;
        const Index prev = node - dir * s;
        if (std::abs(psi.amplitudes[node]) < amp_threshold) {
          past_frontier = true;
          theta[node] = held;
          continue;
        }
        if (past_frontier)
          throw std::runtime_error(
              "decompose: phase unwrapping failure (amplitude vanishes along an unwrap path)");
        theta[node] = theta[prev] + std::arg(psi.amplitudes[node] * std::conj(psi.amplitudes[prev]));
        held = theta[node];
      }
    };
    sweep(k0, m - 1, +1);
    sweep(k0, 0, -1);
  };

  std::vector<Index> seeds{center};
  for (Index a = 0; a < layout.axes(); ++a) {
    std::vector<Index> next;
    next.reserve(seeds.size() * static_cast<std::size_t>(m));
    for (Index seed : seeds) {
      unwrap_line(seed, a);
      const Index s = layout.stride(a);
      const Index base = seed - layout.axis_index(seed, a) * s;
      for (Index k = 0; k < m; ++k) next.push_back(base + k * s);
    }
    seeds.swap(next);
  }

  MadelungStateT<Scalar> ms;
  ms.rho = std::move(rho);
  ms.s = psi.hbar * theta;
  ms.layout = layout;
  ms.hbar = psi.hbar;
  ms.t = psi.t;
  return ms;
}

/// Inverse of decompose: Psi = sqrt(rho) e^{iS/hbar}, renormalized.
template <class Scalar>
WavefunctionalT<Scalar> compose(const MadelungStateT<Scalar>& ms) {
  VectorXc<Scalar> amps(ms.layout.size());
  for (Index n = 0; n < ms.layout.size(); ++n) {
    const Scalar r = std::sqrt(std::max(ms.rho[n], Scalar(0)));
    const Scalar phase = ms.s[n] / ms.hbar;
    amps[n] = std::polar(r, phase);
  }
  return WavefunctionalT<Scalar>(std::move(amps), ms.layout, ms.hbar, ms.t);
}

/// Bohm quantum potential density at one spatial site,
///   -(hbar^2 / 2R) delta^2 R / delta phi(x_site)^2,
/// on the valid (above-threshold) part of the grid.
template <class Scalar>
MaskedGridT<Scalar> bohm_potential(const MadelungStateT<Scalar>& ms, Index site,
                                   KineticMode mode = KineticMode::spectral) {
  if (site < 0 || site >= ms.layout.axes())
    throw std::invalid_argument("bohm_potential: site out of range");
  detail::check_bulk_holes(ms.rho, ms.layout, ms.node_threshold(), "bohm_potential");
  const ArrayX<Scalar> r = ms.rho.sqrt();
  const ArrayX<Scalar> d2r = detail::second_derivative(r, ms.layout, site, mode);
  const Scalar dx2 = ms.layout.spec().dx * ms.layout.spec().dx;
  MaskedGridT<Scalar> out;
  out.valid = ms.valid_mask();
  out.values = ArrayX<Scalar>::Zero(ms.layout.size());
  for (Index n = 0; n < ms.layout.size(); ++n)
    if (out.valid[n])
      out.values[n] = -ms.hbar * ms.hbar / (Scalar(2) * r[n]) * d2r[n] / dx2;
  return out;
}

/// Max-norm residual of the curvature identity
///   (1/rho drho)^2 - (2/rho) d2rho + (4/R) d2R = 0,  R = sqrt(rho),
/// per site over valid nodes. The rho derivatives are realized through the
/// discrete chain rule on R (drho = 2R dR, d2rho = 2 dR^2 + 2R d2R), the same
/// compatible form the variational manipulations rely on, so the residual
/// measures rounding of the assembled pipelines rather than stencil error.
template <class Scalar>
Scalar curvature_identity_residual(const MadelungStateT<Scalar>& ms) {
  const ArrayX<Scalar> r = ms.rho.sqrt();
  const auto mask = ms.valid_mask();
  const Scalar inv_dx2 = Scalar(1) / (ms.layout.spec().dx * ms.layout.spec().dx);
  Scalar worst = Scalar(0);
  for (Index a = 0; a < ms.layout.axes(); ++a) {
    const ArrayX<Scalar> dr = axis_diff1(r, ms.layout, a);
    const ArrayX<Scalar> d2r = axis_diff2(r, ms.layout, a);
    for (Index n = 0; n < ms.layout.size(); ++n) {
      if (!mask[n]) continue;
      const Scalar drho = Scalar(2) * r[n] * dr[n];
      const Scalar d2rho = Scalar(2) * dr[n] * dr[n] + Scalar(2) * r[n] * d2r[n];
      const Scalar t1 = drho / ms.rho[n];
      const Scalar resid =
          (t1 * t1 - Scalar(2) * d2rho / ms.rho[n] + Scalar(4) * d2r[n] / r[n]) * inv_dx2;
      worst = std::max(worst, std::abs(resid));
    }
  }
  return worst;
}

/// Pointwise residual of the (alpha-)quantum Hamilton-Jacobi equation:
///   dS/dt + int [ (1/2)(dS/dphi)^2 + V - (alpha hbar^2 / 2R) d^2R/dphi^2 ] d3x.
/// s_dot comes from the caller (analytic families or trajectory differences).
template <class Scalar>
MaskedGridT<Scalar> qhj_residual(const MadelungStateT<Scalar>& ms, const ArrayX<Scalar>& s_dot,
                                 const PotentialSpecT<Scalar>& pot, Scalar alpha,
                                 KineticMode mode = KineticMode::spectral) {
  detail::check_grid(s_dot, ms.layout, "qhj_residual");
  if (!(alpha > Scalar(0))) throw std::invalid_argument("qhj_residual: alpha must be positive");
  detail::check_bulk_holes(ms.rho, ms.layout, ms.node_threshold(), "qhj_residual");
  const Scalar dx = ms.layout.spec().dx;

  ArrayX<Scalar> flow = ArrayX<Scalar>::Zero(ms.layout.size());
  for (Index a = 0; a < ms.layout.axes(); ++a)
    flow += axis_diff1(ms.s, ms.layout, a).square();
  flow /= Scalar(2) * dx;

  const ArrayX<Scalar> r = ms.rho.sqrt();
  ArrayX<Scalar> bohm_int = ArrayX<Scalar>::Zero(ms.layout.size());
  for (Index a = 0; a < ms.layout.axes(); ++a)
    bohm_int += detail::second_derivative(r, ms.layout, a, mode);

  const ArrayX<Scalar> v = potential_grid(ms.layout, pot);
  MaskedGridT<Scalar> out;
  out.valid = ms.valid_mask();
  out.values = ArrayX<Scalar>::Zero(ms.layout.size());
  const Scalar bohm_coeff = alpha * ms.hbar * ms.hbar / (Scalar(2) * dx);
  for (Index n = 0; n < ms.layout.size(); ++n)
    if (out.valid[n])
      out.values[n] = s_dot[n] + flow[n] + v[n] - bohm_coeff * bohm_int[n] / r[n];
  return out;
}

/// Gauge-free dS/dt grid from two wave functionals a time 2*half_step apart:
/// pointwise phase difference, principal value.
template <class Scalar>
ArrayX<Scalar> phase_rate(const WavefunctionalT<Scalar>& earlier,
                          const WavefunctionalT<Scalar>& later, Scalar interval) {
  if (!earlier.layout.same_as(later.layout))
    throw std::invalid_argument("phase_rate: layout mismatch");
  ArrayX<Scalar> out(earlier.layout.size());
  for (Index n = 0; n < out.size(); ++n)
    out[n] = earlier.hbar *
             std::arg(later.amplitudes[n] * std::conj(earlier.amplitudes[n])) / interval;
  return out;
}

/// Direct integration of the coupled continuity + quantum Hamilton-Jacobi
/// system, independent of the Schrodinger-picture propagator. Works in
/// (ln R, S) variables with finite-difference stencils and classic RK4:
///   da/dt = -(1/2dx) sum_i [ 2 (d_i a)(d_i S) + d_i^2 S ]
///   dS/dt = -[ (1/2dx) sum_i (d_i S)^2 + int V - (hbar^2/2dx) sum_i (d_i^2 a + (d_i a)^2) ].
/// Restricted to nodeless states; aborts when nodes form in the initial bulk.
template <class Scalar>
MadelungStateT<Scalar> evolve_madelung(const MadelungStateT<Scalar>& ms,
                                       const PotentialSpecT<Scalar>& pot, Scalar dt, Index steps) {
  if (!(dt > Scalar(0))) throw std::invalid_argument("evolve_madelung: dt must be positive");
  if (steps < 0) throw std::invalid_argument("evolve_madelung: steps must be >= 0");
  if (!(ms.rho > Scalar(0)).all())
    throw std::invalid_argument("evolve_madelung: initial state must be strictly nodeless");
  const Scalar h = ms.layout.step();
  const Scalar dx = ms.layout.spec().dx;
  const Scalar dt_bound = dx * h * h / ms.hbar;
  if (!(dt <= dt_bound))
    throw std::invalid_argument("evolve_madelung: dt exceeds the dispersive stability bound " +
                                std::to_string(static_cast<double>(dt_bound)));
  if (steps == 0) return ms;

  const auto& layout = ms.layout;
  const ArrayX<Scalar> v = potential_grid(layout, pot);
  const Scalar hbar2 = ms.hbar * ms.hbar;

  ArrayX<Scalar> a = Scalar(0.5) * ms.rho.log();
  ArrayX<Scalar> s = ms.s;

  struct Rhs {
    ArrayX<Scalar> da, ds;
  };
  auto rhs = [&](const ArrayX<Scalar>& av, const ArrayX<Scalar>& sv) {
    Rhs r{ArrayX<Scalar>::Zero(layout.size()), ArrayX<Scalar>::Zero(layout.size())};
    for (Index ax = 0; ax < layout.axes(); ++ax) {
      const ArrayX<Scalar> d1a = axis_diff1(av, layout, ax);
      const ArrayX<Scalar> d1s = axis_diff1(sv, layout, ax);
      const ArrayX<Scalar> d2a = axis_diff2(av, layout, ax);
      const ArrayX<Scalar> d2s = axis_diff2(sv, layout, ax);
      r.da += Scalar(2) * d1a * d1s + d2s;
      r.ds += d1s.square() - hbar2 * (d2a + d1a.square());
    }
    r.da /= Scalar(-2) * dx;
    r.ds = -(r.ds / (Scalar(2) * dx) + v);
    return r;
  };

  // Node detection: a below-threshold run strictly inside the above-threshold
  // bulk of an axis line means the density is vanishing in the interior, where
  // the polar representation breaks down. Tail drain from packet translation
  // is not node formation and stays legal.
  auto detect_nodes = [&](Index step) {
    if (!a.allFinite())
      throw std::runtime_error("evolve_madelung: state blew up at step " +
                               std::to_string(step + 1));
    const Scalar a_cut = a.maxCoeff() - Scalar(13.815510557964274);  // rho < 1e-12 max(rho)
    const Index m = layout.points_per_axis();
    for (Index ax = 0; ax < layout.axes(); ++ax) {
      Index holes = 0;
      detail::for_each_line(layout, ax, [&](Index base, Index str) {
        Index first = -1, last = -1;
        for (Index k = 0; k < m; ++k)
          if (a[base + k * str] >= a_cut) {
            if (first < 0) first = k;
            last = k;
          }
        for (Index k = first; k >= 0 && k <= last; ++k)
          if (a[base + k * str] < a_cut) ++holes;
      });
      if (holes > 0)
        throw std::runtime_error("evolve_madelung: node formation detected at step " +
                                 std::to_string(step + 1) + " (" + std::to_string(holes) +
                                 " interior nodes below threshold)");
    }
  };

  ArrayX<Scalar> a2(layout.size()), s2(layout.size());
  for (Index step = 0; step < steps; ++step) {
    const Rhs k1 = rhs(a, s);
    a2 = a + Scalar(0.5) * dt * k1.da;
    s2 = s + Scalar(0.5) * dt * k1.ds;
    const Rhs k2 = rhs(a2, s2);
    a2 = a + Scalar(0.5) * dt * k2.da;
    s2 = s + Scalar(0.5) * dt * k2.ds;
    const Rhs k3 = rhs(a2, s2);
    a2 = a + dt * k3.da;
    s2 = s + dt * k3.ds;
    const Rhs k4 = rhs(a2, s2);
    a += dt / Scalar(6) * (k1.da + Scalar(2) * k2.da + Scalar(2) * k3.da + k4.da);
    s += dt / Scalar(6) * (k1.ds + Scalar(2) * k2.ds + Scalar(2) * k3.ds + k4.ds);
    detect_nodes(step);
  }

  MadelungStateT<Scalar> out;
  out.rho = (Scalar(2) * a).exp();
  out.s = std::move(s);
  out.layout = layout;
  out.hbar = ms.hbar;
  out.t = ms.t + Scalar(steps) * dt;
  return out;
}

}  // namespace obsfield

#endif  // OBSFIELD_MADELUNG_HPP
