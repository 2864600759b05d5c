#ifndef OBSFIELD_SCHRODINGER_HPP
#define OBSFIELD_SCHRODINGER_HPP

#include <complex>
#include <limits>
#include <utility>
#include <vector>
#include <unsupported/Eigen/FFT>

#include "obsfield/lattice.hpp"

namespace obsfield {

template <class Scalar>
using VectorXc = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
template <class Scalar>
using ArrayXc = Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1>;

enum class KineticMode { spectral, fd2 };

namespace detail {

/// Angular wavenumbers of the periodic field-value grid, FFT bin order.
template <class Scalar>
ArrayX<Scalar> fft_wavenumbers(Index m, Scalar step) {
  ArrayX<Scalar> k(m);
  const Scalar base = Scalar(2) * Scalar(EIGEN_PI) / (Scalar(m) * step);
  for (Index j = 0; j < m; ++j) {
    const Index shifted = j <= m / 2 ? j : j - m;
    k[j] = base * Scalar(shifted);
  }
  return k;
}

/// Applies a per-k complex multiplier along one grid axis via FFT.
template <class Scalar>
void apply_axis_filter(Eigen::FFT<Scalar>& fft, ArrayXc<Scalar>& grid,
                       const TensorGridLayoutT<Scalar>& layout, Index axis,
                       const ArrayXc<Scalar>& filter) {
  const Index m = layout.points_per_axis();
  VectorXc<Scalar> line(m), freq(m);
  for_each_line(layout, axis, [&](Index base, Index s) {
    for (Index k = 0; k < m; ++k) line[k] = grid[base + k * s];
    fft.fwd(freq, line);
    freq.array() *= filter;
    fft.inv(line, freq);
    for (Index k = 0; k < m; ++k) grid[base + k * s] = line[k];
  });
}

}  // namespace detail

/// Per-node value of the spatial potential integral int V d3x (gradient term
/// included), evaluated at the field configuration of each grid node.
template <class Scalar>
ArrayX<Scalar> potential_grid(const TensorGridLayoutT<Scalar>& layout,
                              const PotentialSpecT<Scalar>& pot) {
  const Index n_sites = layout.axes();
  const Scalar dx = layout.spec().dx;
  ArrayX<Scalar> v(layout.size());
  VectorX<Scalar> cfg(n_sites);
  for (Index n = 0; n < layout.size(); ++n) {
    for (Index a = 0; a < n_sites; ++a) cfg[a] = layout.coordinate(n, a);
    Scalar acc = Scalar(0);
    for (Index i = 0; i < n_sites; ++i) {
      const Scalar d = (cfg[(i + 1) % n_sites] - cfg[i]) / dx;
      acc += Scalar(0.5) * d * d + pot.site_value(cfg[i]);
    }
    v[n] = dx * acc;
  }
  return v;
}

/// Grid realization of H = int [ -(hbar^2/2) delta^2/delta phi^2 + V ] d3x,
///   H = -(kinetic_coeff/(2 dx)) sum_i d^2/dphi_i^2 + dx sum_i V_i,
/// with kinetic_coeff = hbar^2, or alpha*hbar^2 for the generalized family.
/// The kinetic term acts spectrally per field axis; a second-order central
/// difference path is kept as a cross-check.
template <class Scalar = double>
class HamiltonianT {
 public:
  HamiltonianT(TensorGridLayoutT<Scalar> layout, const PotentialSpecT<Scalar>& pot, Scalar hbar,
               KineticMode mode = KineticMode::spectral, Scalar alpha = Scalar(1))
      : layout_(std::move(layout)),
        hbar_(hbar),
        mode_(mode),
        kinetic_coeff_(alpha * hbar * hbar),
        potential_(potential_grid(layout_, pot)) {
    if (!(hbar > Scalar(0))) throw std::invalid_argument("Hamiltonian: hbar must be positive");
    if (!(alpha > Scalar(0))) throw std::invalid_argument("Hamiltonian: alpha must be positive");
    k2_ = detail::fft_wavenumbers<Scalar>(layout_.points_per_axis(), layout_.step()).square();
  }

  const TensorGridLayoutT<Scalar>& layout() const { return layout_; }
  const ArrayX<Scalar>& potential() const { return potential_; }
  const ArrayX<Scalar>& k_squared() const { return k2_; }
  Scalar hbar() const { return hbar_; }
  Scalar kinetic_coeff() const { return kinetic_coeff_; }

  VectorXc<Scalar> apply(const VectorXc<Scalar>& psi) const {
    if (psi.size() != layout_.size())
      throw std::invalid_argument("Hamiltonian::apply: grid size mismatch");
    const Scalar c = kinetic_coeff_ / (Scalar(2) * layout_.spec().dx);
    ArrayXc<Scalar> kin = ArrayXc<Scalar>::Zero(layout_.size());
    if (mode_ == KineticMode::spectral) {
      Eigen::FFT<Scalar> fft;
      const ArrayXc<Scalar> filter = (c * k2_).template cast<std::complex<Scalar>>();
      for (Index a = 0; a < layout_.axes(); ++a) {
        ArrayXc<Scalar> tmp = psi.array();
        detail::apply_axis_filter(fft, tmp, layout_, a, filter);
        kin += tmp;
      }
    } else {
      // central second difference, zero beyond the truncation edge
      const Index m = layout_.points_per_axis();
      const Scalar w = c / (layout_.step() * layout_.step());
      for (Index a = 0; a < layout_.axes(); ++a) {
        detail::for_each_line(layout_, a, [&](Index base, Index s) {
          for (Index k = 0; k < m; ++k) {
            const std::complex<Scalar> left =
                k > 0 ? psi[base + (k - 1) * s] : std::complex<Scalar>(0);
            const std::complex<Scalar> right =
                k + 1 < m ? psi[base + (k + 1) * s] : std::complex<Scalar>(0);
            kin[base + k * s] -= w * (left - Scalar(2) * psi[base + k * s] + right);
          }
        });
      }
    }
    VectorXc<Scalar> out = kin.matrix();
    out.array() += potential_.template cast<std::complex<Scalar>>() * psi.array();
    return out;
  }

  /// Real part of <psi|H|psi> / <psi|psi>.
  Scalar expectation(const VectorXc<Scalar>& psi) const {
    const VectorXc<Scalar> hp = apply(psi);
    return psi.dot(hp).real() / psi.squaredNorm();
  }

 private:
  TensorGridLayoutT<Scalar> layout_;
  Scalar hbar_;
  KineticMode mode_;
  Scalar kinetic_coeff_;
  ArrayX<Scalar> potential_;
  ArrayX<Scalar> k2_;
};

using Hamiltonian = HamiltonianT<double>;

/// State of the functional Schrodinger picture: complex amplitudes on the
/// tensor grid of field values, unit norm in the uniform grid measure, with
/// negligible amplitude at the truncation boundary.
template <class Scalar = double>
struct WavefunctionalT {
  VectorXc<Scalar> amplitudes;
  TensorGridLayoutT<Scalar> layout;
  Scalar hbar = Scalar(1);
  Scalar t = Scalar(0);

  WavefunctionalT() = default;
  WavefunctionalT(VectorXc<Scalar> amps, TensorGridLayoutT<Scalar> lay, Scalar planck,
                  Scalar time = Scalar(0), bool check_boundary = true)
      : amplitudes(std::move(amps)), layout(std::move(lay)), hbar(planck), t(time) {
    if (amplitudes.size() != layout.size())
      throw std::invalid_argument("Wavefunctional: amplitude grid does not match layout");
    if (!(hbar > Scalar(0))) throw std::invalid_argument("Wavefunctional: hbar must be positive");
    normalize();
    if (check_boundary) {
      const Scalar peak = amplitudes.cwiseAbs().maxCoeff();
      Scalar worst = Scalar(0);
      for (Index n = 0; n < layout.size(); ++n)
        if (layout.node_on_boundary(n)) worst = std::max(worst, std::abs(amplitudes[n]));
      if (worst >= Scalar(1e-8) * peak)
        throw std::invalid_argument(
            "Wavefunctional: amplitude at the truncation boundary exceeds 1e-8 of the peak");
    }
  }

  Scalar norm_sq() const {
    KahanSum<Scalar> acc;
    for (Index n = 0; n < amplitudes.size(); ++n) acc.add(std::norm(amplitudes[n]));
    return acc.value() * layout.measure();
  }

  void normalize() {
    const Scalar n2 = norm_sq();
    if (!(n2 > Scalar(0))) throw std::invalid_argument("Wavefunctional: zero norm");
    amplitudes /= std::sqrt(n2);
  }

  ArrayX<Scalar> density() const {
    ArrayX<Scalar> rho(amplitudes.size());
    for (Index n = 0; n < amplitudes.size(); ++n) rho[n] = std::norm(amplitudes[n]);
    return rho;
  }
};

using Wavefunctional = WavefunctionalT<double>;

/// |<a|b>| with the grid measure; 1 for equal states up to a global phase.
template <class Scalar>
Scalar fidelity(const WavefunctionalT<Scalar>& a, const WavefunctionalT<Scalar>& b) {
  if (!a.layout.same_as(b.layout)) throw std::invalid_argument("fidelity: layout mismatch");
  return std::abs(a.amplitudes.dot(b.amplitudes)) * a.layout.measure();
}

/// <phi_site> under |psi|^2.
template <class Scalar>
Scalar site_mean(const WavefunctionalT<Scalar>& psi, Index site) {
  KahanSum<Scalar> acc;
  for (Index n = 0; n < psi.amplitudes.size(); ++n)
    acc.add(std::norm(psi.amplitudes[n]) * psi.layout.coordinate(n, site));
  return acc.value() * psi.layout.measure();
}

/// Exact free-field ground state data: kernel A = sqrt(K) of the coupling
/// matrix K = m^2 + discrete Laplacian, and the energy (hbar/2) sum omega_k.
template <class Scalar = double>
struct GaussianKernelStateT {
  MatrixX<Scalar> kernel;
  Scalar energy = Scalar(0);
  VectorX<Scalar> mode_frequencies;
};

using GaussianKernelState = GaussianKernelStateT<double>;

template <class Scalar>
MatrixX<Scalar> coupling_matrix(const LatticeSpecT<Scalar>& spec, Scalar m2) {
  const Index n = spec.n_sites;
  const Scalar inv_dx2 = Scalar(1) / (spec.dx * spec.dx);
  MatrixX<Scalar> k = MatrixX<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) k(i, i) += m2;
  // one pass over directed bonds covers every lattice size, including the
  // doubly counted n=2 pair and the self-bond-free n=1 chain
  for (Index i = 0; i < n; ++i) {
    const Index j = (i + 1) % n;
    k(i, i) += inv_dx2;
    k(j, j) += inv_dx2;
    k(i, j) -= inv_dx2;
    k(j, i) -= inv_dx2;
  }
  return k;
}

template <class Scalar>
GaussianKernelStateT<Scalar> free_field_oracle(const LatticeSpecT<Scalar>& spec, Scalar m2,
                                               Scalar hbar) {
  if (!(hbar > Scalar(0))) throw std::invalid_argument("free_field_oracle: hbar must be positive");
  const MatrixX<Scalar> k = coupling_matrix(spec, m2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(k);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("free_field_oracle: eigendecomposition failed");
  const VectorX<Scalar> lambda = es.eigenvalues();
  if (lambda.minCoeff() <= Scalar(0))
    throw std::invalid_argument("free_field_oracle: singular coupling matrix (massless zero mode)");
  GaussianKernelStateT<Scalar> state;
  state.mode_frequencies = lambda.array().sqrt();
  state.kernel =
      es.eigenvectors() * state.mode_frequencies.asDiagonal() * es.eigenvectors().transpose();
  state.energy = hbar / Scalar(2) * state.mode_frequencies.sum();
  return state;
}

/// Ground-state wave functional of the free-field oracle on the tensor grid:
/// psi(phi) ~ exp( -(dx/(2 hbar)) phi^T sqrt(K) phi ), optionally displaced.
template <class Scalar>
WavefunctionalT<Scalar> oracle_wavefunctional(const TensorGridLayoutT<Scalar>& layout,
                                              const GaussianKernelStateT<Scalar>& oracle,
                                              Scalar hbar,
                                              const VectorX<Scalar>* displacement = nullptr) {
  const Index n_sites = layout.axes();
  VectorXc<Scalar> amps(layout.size());
  VectorX<Scalar> cfg(n_sites);
  const Scalar pref = layout.spec().dx / (Scalar(2) * hbar);
  for (Index n = 0; n < layout.size(); ++n) {
    for (Index a = 0; a < n_sites; ++a) cfg[a] = layout.coordinate(n, a);
    if (displacement) cfg -= *displacement;
    amps[n] = std::exp(-pref * cfg.dot(oracle.kernel * cfg));
  }
  return WavefunctionalT<Scalar>(std::move(amps), layout, hbar);
}

namespace detail {

/// One Strang split step, shared by real- and imaginary-time propagation.
/// time_scale is the hbar multiplying i d/dt (sqrt(alpha)*hbar in the
/// generalized family); kinetic_coeff multiplies -(1/2) delta^2/delta phi^2.
template <class Scalar>
class SplitStepper {
 public:
  SplitStepper(const TensorGridLayoutT<Scalar>& layout, const ArrayX<Scalar>& v_grid,
               Scalar kinetic_coeff, Scalar time_scale, Scalar dt, bool imaginary)
      : layout_(layout) {
    const ArrayX<Scalar> k2 =
        fft_wavenumbers<Scalar>(layout.points_per_axis(), layout.step()).square();
    const Scalar ck = kinetic_coeff / (Scalar(2) * layout.spec().dx);
    const std::complex<Scalar> unit =
        imaginary ? std::complex<Scalar>(-1, 0) : std::complex<Scalar>(0, -1);
    half_kin_.resize(k2.size());
    for (Index j = 0; j < k2.size(); ++j)
      half_kin_[j] = std::exp(unit * (ck * k2[j] * dt / (Scalar(2) * time_scale)));
    full_pot_.resize(v_grid.size());
    for (Index n = 0; n < v_grid.size(); ++n)
      full_pot_[n] = std::exp(unit * (v_grid[n] * dt / time_scale));
  }

  void step(ArrayXc<Scalar>& amps) {
    kinetic_half(amps);
    amps *= full_pot_;
    kinetic_half(amps);
  }

 private:
  void kinetic_half(ArrayXc<Scalar>& amps) {
    for (Index a = 0; a < layout_.axes(); ++a)
      apply_axis_filter(fft_, amps, layout_, a, half_kin_);
  }

  const TensorGridLayoutT<Scalar>& layout_;
  ArrayXc<Scalar> half_kin_, full_pot_;
  Eigen::FFT<Scalar> fft_;
};

template <class Scalar>
WavefunctionalT<Scalar> propagate(const WavefunctionalT<Scalar>& psi,
                                  const PotentialSpecT<Scalar>& pot, Scalar kinetic_coeff,
                                  Scalar time_scale, Scalar dt, Index steps, const char* who) {
  if (!(dt > Scalar(0))) throw std::invalid_argument(std::string(who) + ": dt must be positive");
  if (steps < 0) throw std::invalid_argument(std::string(who) + ": steps must be >= 0");
  WavefunctionalT<Scalar> out = psi;
  if (steps == 0) return out;
  const ArrayX<Scalar> v = potential_grid(psi.layout, pot);
  SplitStepper<Scalar> stepper(psi.layout, v, kinetic_coeff, time_scale, dt, false);
  ArrayXc<Scalar> amps = out.amplitudes.array();
  const Scalar measure = psi.layout.measure();
  Scalar prev = amps.matrix().squaredNorm() * measure;
  for (Index s = 0; s < steps; ++s) {
    stepper.step(amps);
    const Scalar n2 = amps.matrix().squaredNorm() * measure;
    if (!(std::abs(n2 - prev) <= Scalar(1e-12)))
      throw std::runtime_error(std::string(who) + ": per-step norm drift guard tripped");
    prev = n2;
  }
  out.amplitudes = amps.matrix();
  out.t += Scalar(steps) * dt;
  return out;
}

}  // namespace detail

/// Unitary propagation of the wave functional by Strang-split spectral steps.
template <class Scalar>
WavefunctionalT<Scalar> evolve(const WavefunctionalT<Scalar>& psi,
                               const PotentialSpecT<Scalar>& pot, Scalar dt, Index steps) {
  return detail::propagate(psi, pot, psi.hbar * psi.hbar, psi.hbar, dt, steps, "evolve");
}

/// Propagation under the alpha-generalized equation
///   i sqrt(alpha) hbar dPsi/dt = [ int -(alpha hbar^2/2) delta^2/delta phi^2 + V ] Psi.
/// Coefficients are formed from (alpha, hbar) directly; at alpha = 1 the step
/// is bit-identical to evolve.
template <class Scalar>
WavefunctionalT<Scalar> evolve_generalized(const WavefunctionalT<Scalar>& psi,
                                           const PotentialSpecT<Scalar>& pot, Scalar alpha,
                                           Scalar dt, Index steps) {
  if (!(alpha > Scalar(0)))
    throw std::invalid_argument("evolve_generalized: alpha must be positive");
  return detail::propagate(psi, pot, alpha * psi.hbar * psi.hbar, std::sqrt(alpha) * psi.hbar, dt,
                           steps, "evolve_generalized");
}

enum class GroundStateMethod { imaginary_time, eigensolve };

template <class Scalar = double>
struct GroundStateResultT {
  WavefunctionalT<Scalar> psi;
  Scalar energy = Scalar(0);
  Scalar residual = Scalar(0);       // ||H psi - E psi|| / ||psi||
  std::vector<Scalar> energy_trace;  // imaginary-time path only
  Index iterations = 0;
};

using GroundStateResult = GroundStateResultT<double>;

namespace detail {

template <class Scalar>
Scalar state_residual(const HamiltonianT<Scalar>& h, const VectorXc<Scalar>& psi, Scalar energy) {
  return (h.apply(psi) - energy * psi).norm() / psi.norm();
}

/// Matrix-free Lanczos with full reorthogonalization. apply() maps real grids
/// to real grids, so the recursion runs in real arithmetic.
template <class Scalar>
std::pair<Scalar, VectorX<Scalar>> lanczos_ground(const HamiltonianT<Scalar>& h,
                                                  const VectorX<Scalar>& start, Index max_iter,
                                                  Scalar tol) {
  auto apply_real = [&](const VectorX<Scalar>& x) {
    VectorXc<Scalar> xc = x.template cast<std::complex<Scalar>>();
    return VectorX<Scalar>(h.apply(xc).real());
  };
  auto ritz_pair = [](const std::vector<Scalar>& alpha, const std::vector<Scalar>& beta,
                      const std::vector<VectorX<Scalar>>& basis) {
    const Index kdim = static_cast<Index>(alpha.size());
    MatrixX<Scalar> tri = MatrixX<Scalar>::Zero(kdim, kdim);
    for (Index i = 0; i < kdim; ++i) {
      tri(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < kdim) tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(tri);
    VectorX<Scalar> vec = VectorX<Scalar>::Zero(basis.front().size());
    for (Index i = 0; i < kdim; ++i)
      vec += es.eigenvectors()(i, 0) * basis[static_cast<std::size_t>(i)];
    return std::make_pair(es.eigenvalues()(0), vec);
  };

  std::vector<VectorX<Scalar>> basis;
  std::vector<Scalar> alpha, beta;
  VectorX<Scalar> v = start / start.norm();
  for (Index it = 0; it < max_iter; ++it) {
    basis.push_back(v);
    VectorX<Scalar> w = apply_real(v);
    const Scalar a = v.dot(w);
    alpha.push_back(a);
    w -= a * v;
    if (it > 0) w -= beta.back() * basis[basis.size() - 2];
    for (const auto& b : basis) w -= b.dot(w) * b;  // full reorthogonalization
    const Scalar bnorm = w.norm();

    // residual of the lowest Ritz pair: beta_k * |last eigenvector entry|
    const Index kdim = static_cast<Index>(alpha.size());
    MatrixX<Scalar> tri = MatrixX<Scalar>::Zero(kdim, kdim);
    for (Index i = 0; i < kdim; ++i) {
      tri(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < kdim) tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(tri);
    const Scalar ritz = es.eigenvalues()(0);
    const Scalar res_est = bnorm * std::abs(es.eigenvectors()(kdim - 1, 0));
    if (res_est < tol * std::max(Scalar(1), std::abs(ritz)) || bnorm < tol * Scalar(1e-2))
      return ritz_pair(alpha, beta, basis);
    beta.push_back(bnorm);
    v = w / bnorm;
  }
  return ritz_pair(alpha, beta, basis);
}

}  // namespace detail

/// Numerical ground state of the grid Hamiltonian. `eigensolve` runs
/// matrix-free Lanczos; `imaginary_time` runs split-step imaginary-time
/// propagation with per-step renormalization, an annealed step schedule, and a
/// final residual-driven refinement. Both must reach
/// ||H psi - E psi||/||psi|| < 1e-6 or they throw.
template <class Scalar>
GroundStateResultT<Scalar> ground_state(const TensorGridLayoutT<Scalar>& layout,
                                        const PotentialSpecT<Scalar>& pot, Scalar hbar,
                                        GroundStateMethod method, Index max_iterations = 200000) {
  if (pot.lambda4 < Scalar(0))
    throw std::invalid_argument("ground_state: potential must be bounded below (lambda4 >= 0)");
  if (pot.lambda4 == Scalar(0) && pot.lambda3 != Scalar(0))
    throw std::invalid_argument("ground_state: cubic coupling without quartic is unbounded below");
  const HamiltonianT<Scalar> h(layout, pot, hbar);

  // smooth positive start with a deliberately mismatched width; overlap with
  // the ground state is guaranteed
  VectorX<Scalar> start(layout.size());
  for (Index n = 0; n < layout.size(); ++n) {
    Scalar ss = Scalar(0);
    for (Index a = 0; a < layout.axes(); ++a) {
      const Scalar c = layout.coordinate(n, a);
      ss += c * c;
    }
    start[n] = std::exp(-ss / (Scalar(2.6) * hbar));
  }

  GroundStateResultT<Scalar> result;
  if (method == GroundStateMethod::eigensolve) {
    auto [energy, vec] = detail::lanczos_ground<Scalar>(h, start, 400, Scalar(1e-11));
    result.energy = energy;
    if (vec[layout.size() / 2] < Scalar(0)) vec = -vec;  // positive gauge
    VectorXc<Scalar> amps = vec.template cast<std::complex<Scalar>>();
    result.residual = detail::state_residual(h, amps, energy);
    if (!(result.residual < Scalar(1e-6)))
      throw std::runtime_error("ground_state: eigensolve did not converge to residual < 1e-6");
    result.psi = WavefunctionalT<Scalar>(std::move(amps), layout, hbar);
    return result;
  }

  ArrayXc<Scalar> amps = start.template cast<std::complex<Scalar>>().array();
  const Scalar measure = layout.measure();
  auto renorm = [&]() { amps /= std::sqrt(amps.matrix().squaredNorm() * measure); };
  renorm();

  Scalar energy = h.expectation(amps.matrix());
  result.energy_trace.push_back(energy);
  Index used = 0;
  const Scalar taus[] = {Scalar(0.5), Scalar(0.1), Scalar(0.02), Scalar(0.004), Scalar(0.001)};
  for (Scalar tau : taus) {
    detail::SplitStepper<Scalar> stepper(layout, h.potential(), hbar * hbar, hbar, tau, true);
    for (;;) {
      if (used >= max_iterations)
        throw std::runtime_error("ground_state: imaginary time did not converge");
      stepper.step(amps);
      renorm();
      ++used;
      const Scalar e = h.expectation(amps.matrix());
      const Scalar change = std::abs(e - energy);
      energy = e;
      result.energy_trace.push_back(e);
      if (change < Scalar(1e-10) * std::max(Scalar(1), std::abs(e))) break;
    }
  }
  // the energy settles before the state does; polish until the residual is in
  {
    const Scalar tau = taus[sizeof(taus) / sizeof(taus[0]) - 1];
    detail::SplitStepper<Scalar> stepper(layout, h.potential(), hbar * hbar, hbar, tau, true);
    Scalar res = detail::state_residual(h, VectorXc<Scalar>(amps.matrix()), energy);
    while (!(res < Scalar(5e-7))) {
      if (used >= max_iterations)
        throw std::runtime_error("ground_state: imaginary time did not converge");
      for (Index b = 0; b < 50 && used < max_iterations; ++b, ++used) {
        stepper.step(amps);
        renorm();
      }
      energy = h.expectation(amps.matrix());
      result.energy_trace.push_back(energy);
      res = detail::state_residual(h, VectorXc<Scalar>(amps.matrix()), energy);
    }
  }
  result.energy = energy;
  result.iterations = used;
  result.residual = detail::state_residual(h, VectorXc<Scalar>(amps.matrix()), energy);
  if (!(result.residual < Scalar(1e-6)))
    throw std::runtime_error("ground_state: imaginary time did not reach residual < 1e-6");
  result.psi = WavefunctionalT<Scalar>(amps.matrix(), layout, hbar);
  return result;
}

}  // namespace obsfield

#endif  // OBSFIELD_SCHRODINGER_HPP
