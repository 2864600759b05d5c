#ifndef OBSFIELD_INFOMETRICS_HPP
#define OBSFIELD_INFOMETRICS_HPP

#include <atomic>
#include <mutex>
#include <thread>

#include "obsfield/classical.hpp"
#include "obsfield/lattice.hpp"

namespace obsfield {

enum class DivergenceKind { kl, renyi, tsallis };

template <class Scalar = double>
struct DivergenceEstimateT {
  Scalar value = Scalar(0);
  Scalar std_error = Scalar(0);
  DivergenceKind kind = DivergenceKind::kl;
  Scalar alpha = Scalar(1);
  Index n_samples = 0;
};

using DivergenceEstimate = DivergenceEstimateT<double>;

namespace detail {

template <class Scalar>
void check_density(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                   const char* who) {
  check_grid(rho, layout, who);
  if ((rho < Scalar(0)).any())
    throw std::invalid_argument(std::string(who) + ": density must be nonnegative");
  check_normalized(rho, layout, who);
}

/// Trapezoid-weighted mass sitting on the boundary shell of the grid. Densities
/// handled here are assumed negligible at the truncation edge; this guards it.
template <class Scalar>
Scalar boundary_mass(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout) {
  KahanSum<Scalar> acc;
  for (Index n = 0; n < rho.size(); ++n)
    if (layout.node_on_boundary(n)) acc.add(layout.trapezoid_weight(n) * rho[n]);
  return acc.value() * layout.measure();
}

template <class Scalar>
void check_boundary_mass(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                         const char* who) {
  if (boundary_mass(rho, layout) >= Scalar(1e-10))
    throw std::runtime_error(std::string(who) + ": density mass at the truncation boundary exceeds 1e-10");
}

/// sum_w rho1 ln(rho1/rho2). Nodes with rho1 <= floor contribute zero;
/// rho1 above floor with rho2 <= 0 is a support violation.
template <class Scalar>
Scalar kl_core(const ArrayX<Scalar>& rho1, const ArrayX<Scalar>& rho2,
               const TensorGridLayoutT<Scalar>& layout, Scalar floor1) {
  KahanSum<Scalar> acc;
  for (Index n = 0; n < rho1.size(); ++n) {
    const Scalar r1 = rho1[n];
    if (r1 <= floor1) continue;
    const Scalar r2 = rho2[n];
    if (!(r2 > Scalar(0)))
      throw std::runtime_error("kl_divergence: support violation (rho1 > 0 where rho2 = 0)");
    acc.add(layout.trapezoid_weight(n) * r1 * std::log(r1 / r2));
  }
  return acc.value() * layout.measure();
}

/// integral of rho1^alpha rho2^(1-alpha), evaluated in log space.
template <class Scalar>
Scalar power_integral(const ArrayX<Scalar>& rho1, const ArrayX<Scalar>& rho2,
                      const TensorGridLayoutT<Scalar>& layout, Scalar alpha, Scalar floor1) {
  KahanSum<Scalar> acc;
  for (Index n = 0; n < rho1.size(); ++n) {
    const Scalar r1 = rho1[n];
    if (r1 <= floor1) continue;
    const Scalar r2 = rho2[n];
    if (!(r2 > Scalar(0)))
      throw std::runtime_error("renyi/tsallis divergence: support violation (rho1 > 0 where rho2 = 0)");
    acc.add(layout.trapezoid_weight(n) *
            std::exp(alpha * std::log(r1) + (Scalar(1) - alpha) * std::log(r2)));
  }
  return acc.value() * layout.measure();
}

template <class Scalar>
void check_alpha(Scalar alpha, const char* who) {
  if (!(alpha > Scalar(0)) || alpha == Scalar(1))
    throw std::invalid_argument(std::string(who) + ": alpha must lie in (0,1) or (1,inf)");
}

/// Resample each axis line of the grid at positions shifted by omega (one
/// offset per site), Catmull-Rom cubic. Points outside the truncated grid
/// read as zero; small interpolation undershoots are clamped to zero.
template <class Scalar>
ArrayX<Scalar> shift_grid(const ArrayX<Scalar>& grid, const TensorGridLayoutT<Scalar>& layout,
                          const VectorX<Scalar>& omega) {
  ArrayX<Scalar> cur = grid;
  const Index m = layout.points_per_axis();
  const Scalar h = layout.step();
  ArrayX<Scalar> next(grid.size());
  for (Index a = 0; a < layout.axes(); ++a) {
    const Scalar u0 = omega[a] / h;
    for_each_line(layout, a, [&](Index base, Index s) {
      auto at = [&](Index k) {
        return (k < 0 || k >= m) ? Scalar(0) : cur[base + k * s];
      };
      for (Index k = 0; k < m; ++k) {
        const Scalar pos = Scalar(k) + u0;
        const Scalar fl = std::floor(pos);
        const Index j = static_cast<Index>(fl);
        const Scalar f = pos - fl;
        const Scalar p0 = at(j - 1), p1 = at(j), p2 = at(j + 1), p3 = at(j + 2);
        const Scalar v =
            Scalar(0.5) *
            (Scalar(2) * p1 +
             f * ((p2 - p0) +
                  f * ((Scalar(2) * p0 - Scalar(5) * p1 + Scalar(4) * p2 - p3) +
                       f * (Scalar(3) * (p1 - p2) + p3 - p0))));
        next[base + k * s] = v > Scalar(0) ? v : Scalar(0);
      }
    });
    cur.swap(next);
  }
  return cur;
}

}  // namespace detail

/// Kullback-Leibler divergence between two normalized density grids,
/// trapezoid quadrature over configuration space. Nonnegative, zero iff equal.
template <class Scalar>
Scalar kl_divergence(const ArrayX<Scalar>& rho1, const ArrayX<Scalar>& rho2,
                     const TensorGridLayoutT<Scalar>& layout) {
  detail::check_density(rho1, layout, "kl_divergence");
  detail::check_density(rho2, layout, "kl_divergence");
  detail::check_boundary_mass(rho1, layout, "kl_divergence");
  return detail::kl_core(rho1, rho2, layout, Scalar(0));
}

/// Renyi divergence of order alpha: ln( int rho1^a rho2^(1-a) )/(a-1).
template <class Scalar>
Scalar renyi_divergence(const ArrayX<Scalar>& rho1, const ArrayX<Scalar>& rho2, Scalar alpha,
                        const TensorGridLayoutT<Scalar>& layout) {
  detail::check_alpha(alpha, "renyi_divergence");
  detail::check_density(rho1, layout, "renyi_divergence");
  detail::check_density(rho2, layout, "renyi_divergence");
  detail::check_boundary_mass(rho1, layout, "renyi_divergence");
  return std::log(detail::power_integral(rho1, rho2, layout, alpha, Scalar(0))) / (alpha - Scalar(1));
}

/// Tsallis divergence of order alpha: ( int rho1^a rho2^(1-a) - 1 )/(a-1);
/// a monotone map of the Renyi value, same small-divergence limit.
template <class Scalar>
Scalar tsallis_divergence(const ArrayX<Scalar>& rho1, const ArrayX<Scalar>& rho2, Scalar alpha,
                          const TensorGridLayoutT<Scalar>& layout) {
  detail::check_alpha(alpha, "tsallis_divergence");
  detail::check_density(rho1, layout, "tsallis_divergence");
  detail::check_density(rho2, layout, "tsallis_divergence");
  detail::check_boundary_mass(rho1, layout, "tsallis_divergence");
  return (detail::power_integral(rho1, rho2, layout, alpha, Scalar(0)) - Scalar(1)) /
         (alpha - Scalar(1));
}

/// Fisher-form functional (hbar/4) int (1/rho) (delta rho/delta phi)^2 d3x Dphi,
/// the dt->0 limit of the fluctuation-averaged divergence per unit time.
template <class Scalar>
Scalar fisher_functional(const ArrayX<Scalar>& rho, const TensorGridLayoutT<Scalar>& layout,
                         Scalar hbar) {
  detail::check_density(rho, layout, "fisher_functional");
  for (Index n = 0; n < rho.size(); ++n)
    if (!(rho[n] > Scalar(0)) && !layout.node_on_boundary(n))
      throw std::invalid_argument("fisher_functional: nonpositive rho on an interior node");
  const Scalar dx = layout.spec().dx;
  KahanSum<Scalar> acc;
  for (Index a = 0; a < layout.axes(); ++a) {
    const ArrayX<Scalar> d = axis_diff1(rho, layout, a);
    for (Index n = 0; n < rho.size(); ++n)
      if (rho[n] > Scalar(0))
        acc.add(layout.trapezoid_weight(n) * d[n] * d[n] / rho[n]);
  }
  return hbar / (Scalar(4) * dx) * acc.value() * layout.measure();
}

/// One-step fluctuation information: Monte-Carlo average over sampled omega of
/// the chosen divergence between rho(.) and the interpolated rho(.+omega).
/// Callers assemble time windows by multiplying with the step count.
template <class Scalar>
DivergenceEstimateT<Scalar> fluctuation_information(const ArrayX<Scalar>& rho,
                                                    const TensorGridLayoutT<Scalar>& layout,
                                                    Scalar dt, Scalar hbar, DivergenceKind kind,
                                                    Scalar alpha, Index n_samples,
                                                    std::uint64_t seed, Index shards = 1,
                                                    Index threads = 1) {
  detail::check_density(rho, layout, "fluctuation_information");
  detail::check_boundary_mass(rho, layout, "fluctuation_information");
  if (n_samples < 1) throw std::invalid_argument("fluctuation_information: n_samples must be >= 1");
  if (shards < 1 || shards > n_samples)
    throw std::invalid_argument("fluctuation_information: invalid shard count");
  if (kind != DivergenceKind::kl) detail::check_alpha(alpha, "fluctuation_information");
  const Scalar sigma = std::sqrt(hbar * dt / (Scalar(2) * layout.spec().dx));
  if (!(sigma <= Scalar(10) * layout.step()))
    throw std::runtime_error("fluctuation_information: fluctuation scale too large for the grid step");

  const Scalar floor1 = Scalar(1e-12) * rho.maxCoeff();
  auto one_sample = [&](NormalStream& rng) {
    VectorX<Scalar> omega(layout.axes());
    for (Index i = 0; i < layout.axes(); ++i) omega[i] = sigma * static_cast<Scalar>(rng.next());
    const ArrayX<Scalar> shifted = detail::shift_grid(rho, layout, omega);
    switch (kind) {
      case DivergenceKind::kl:
        return detail::kl_core(rho, shifted, layout, floor1);
      case DivergenceKind::renyi:
        return std::log(detail::power_integral(rho, shifted, layout, alpha, floor1)) /
               (alpha - Scalar(1));
      case DivergenceKind::tsallis:
        return (detail::power_integral(rho, shifted, layout, alpha, floor1) - Scalar(1)) /
               (alpha - Scalar(1));
    }
    return Scalar(0);
  };

  std::vector<Scalar> shard_sum(static_cast<std::size_t>(shards), Scalar(0));
  std::vector<Scalar> shard_sumsq(static_cast<std::size_t>(shards), Scalar(0));
  std::vector<Index> shard_n(static_cast<std::size_t>(shards), 0);
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto run_shard = [&](Index sh) {
    try {
      NormalStream rng(mix_seed(seed, static_cast<std::uint64_t>(sh)));
      const Index lo = sh * n_samples / shards;
      const Index hi = (sh + 1) * n_samples / shards;
      KahanSum<Scalar> sum, sumsq;
      for (Index s = lo; s < hi; ++s) {
        const Scalar d = one_sample(rng);
        sum.add(d);
        sumsq.add(d * d);
      }
      shard_sum[static_cast<std::size_t>(sh)] = sum.value();
      shard_sumsq[static_cast<std::size_t>(sh)] = sumsq.value();
      shard_n[static_cast<std::size_t>(sh)] = hi - lo;
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  if (threads <= 1 || shards == 1) {
    for (Index sh = 0; sh < shards; ++sh) run_shard(sh);
  } else {
    std::vector<std::thread> pool;
    std::atomic<Index> cursor{0};
    const Index workers = std::min<Index>(threads, shards);
    for (Index w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (Index sh = cursor.fetch_add(1); sh < shards; sh = cursor.fetch_add(1)) run_shard(sh);
      });
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  KahanSum<Scalar> sum, sumsq;
  Index total = 0;
  for (Index sh = 0; sh < shards; ++sh) {
    sum.add(shard_sum[static_cast<std::size_t>(sh)]);
    sumsq.add(shard_sumsq[static_cast<std::size_t>(sh)]);
    total += shard_n[static_cast<std::size_t>(sh)];
  }

  DivergenceEstimateT<Scalar> est;
  est.kind = kind;
  est.alpha = kind == DivergenceKind::kl ? Scalar(1) : alpha;
  est.n_samples = total;
  est.value = sum.value() / Scalar(total);
  if (total > 1) {
    const Scalar var = (sumsq.value() - Scalar(total) * est.value * est.value) / Scalar(total - 1);
    est.std_error = std::sqrt(std::max(var, Scalar(0)) / Scalar(total));
  }
  return est;
}

/// Ratios I_f^alpha / I_f^KL along a decreasing dt sequence; converges to
/// alpha as dt -> 0. Each dt reuses one omega batch for both divergences
/// (common random numbers), so the ratio is not washed out by MC noise.
template <class Scalar>
std::vector<Scalar> alpha_ratio_check(const ArrayX<Scalar>& rho,
                                      const TensorGridLayoutT<Scalar>& layout,
                                      const std::vector<Scalar>& dt_sequence, Scalar hbar,
                                      DivergenceKind kind, Scalar alpha, Index n_samples,
                                      std::uint64_t seed) {
  if (kind == DivergenceKind::kl)
    throw std::invalid_argument("alpha_ratio_check: kind must be renyi or tsallis");
  detail::check_alpha(alpha, "alpha_ratio_check");
  detail::check_density(rho, layout, "alpha_ratio_check");
  detail::check_boundary_mass(rho, layout, "alpha_ratio_check");
  if (dt_sequence.empty()) throw std::invalid_argument("alpha_ratio_check: empty dt sequence");
  for (std::size_t i = 1; i < dt_sequence.size(); ++i)
    if (!(dt_sequence[i] < dt_sequence[i - 1]))
      throw std::invalid_argument("alpha_ratio_check: dt sequence must be decreasing");

  const Scalar floor1 = Scalar(1e-12) * rho.maxCoeff();
  std::vector<Scalar> ratios;
  ratios.reserve(dt_sequence.size());
  for (std::size_t i = 0; i < dt_sequence.size(); ++i) {
    const Scalar dt = dt_sequence[i];
    const Scalar sigma = std::sqrt(hbar * dt / (Scalar(2) * layout.spec().dx));
    if (!(sigma <= Scalar(10) * layout.step()))
      throw std::runtime_error("alpha_ratio_check: fluctuation scale too large for the grid step");
    NormalStream rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    KahanSum<Scalar> sum_alpha, sum_kl;
    VectorX<Scalar> omega(layout.axes());
    for (Index s = 0; s < n_samples; ++s) {
      for (Index k = 0; k < layout.axes(); ++k) omega[k] = sigma * static_cast<Scalar>(rng.next());
      const ArrayX<Scalar> shifted = detail::shift_grid(rho, layout, omega);
      sum_kl.add(detail::kl_core(rho, shifted, layout, floor1));
      const Scalar p = detail::power_integral(rho, shifted, layout, alpha, floor1);
      sum_alpha.add(kind == DivergenceKind::renyi ? std::log(p) / (alpha - Scalar(1))
                                                  : (p - Scalar(1)) / (alpha - Scalar(1)));
    }
    ratios.push_back(sum_alpha.value() / sum_kl.value());
  }
  return ratios;
}

/// Total observability I = i_path + i_fluct with i_path = (2/hbar) S_c and
/// i_fluct the Fisher-form information accumulated over the window.
template <class Scalar = double>
struct ObservabilityBreakdownT {
  Scalar i_path = Scalar(0);
  Scalar i_fluct = Scalar(0);
  Scalar total = Scalar(0);
  Scalar i_path_se = Scalar(0);
};

using ObservabilityBreakdown = ObservabilityBreakdownT<double>;

template <class Scalar>
ObservabilityBreakdownT<Scalar> total_observability(const ArrayX<Scalar>& rho,
                                                    const TensorGridLayoutT<Scalar>& layout,
                                                    const QuadraticGeneratorT<Scalar>& gen,
                                                    const PotentialSpecT<Scalar>& pot, Scalar hbar,
                                                    Scalar t0, Scalar t1, Index samples,
                                                    std::uint64_t seed, Index n_time = 16) {
  const McEstimateT<Scalar> action =
      ensemble_action(rho, layout, gen, pot, t0, t1, samples, seed, n_time);
  ObservabilityBreakdownT<Scalar> b;
  b.i_path = Scalar(2) / hbar * action.value;
  b.i_path_se = Scalar(2) / hbar * action.std_error;
  b.i_fluct = (t1 - t0) * fisher_functional(rho, layout, hbar);
  b.total = b.i_path + b.i_fluct;
  return b;
}

}  // namespace obsfield

#endif  // OBSFIELD_INFOMETRICS_HPP
