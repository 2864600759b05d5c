#ifndef OBSFIELD_LATTICE_HPP
#define OBSFIELD_LATTICE_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "obsfield/core.hpp"

namespace obsfield {

enum class Boundary { periodic };

/// Spatial discretization of the equal-time slice: a periodic 1-D chain of
/// n_sites points with spacing dx, plus the per-site field-value grid used by
/// tensor-grid functionals (n_phi points on [-phi_max, phi_max]).
template <class Scalar = double>
struct LatticeSpecT {
  Index n_sites = 1;
  Scalar dx = Scalar(1);
  Boundary boundary = Boundary::periodic;
  Scalar phi_max = Scalar(8);
  Index n_phi = 33;

  // Hard cap on n_phi^n_sites; the constructor rejects specs above it.
  static constexpr Index kDefaultNodeBudget = Index(1) << 24;

  LatticeSpecT() = default;
  LatticeSpecT(Index sites, Scalar spacing, Scalar field_max, Index field_points,
               Index node_budget = kDefaultNodeBudget)
      : n_sites(sites), dx(spacing), phi_max(field_max), n_phi(field_points) {
    if (n_sites < 1) throw std::invalid_argument("LatticeSpec: n_sites must be >= 1");
    if (!(dx > Scalar(0)) || !std::isfinite(static_cast<double>(dx)))
      throw std::invalid_argument("LatticeSpec: dx must be positive and finite");
    if (n_phi < 3) throw std::invalid_argument("LatticeSpec: n_phi must be >= 3");
    if (!(phi_max > Scalar(0)) || !std::isfinite(static_cast<double>(phi_max)))
      throw std::invalid_argument("LatticeSpec: phi_max must be positive and finite");
    Index total = 1;
    for (Index i = 0; i < n_sites; ++i) {
      if (total > node_budget / n_phi)
        throw std::invalid_argument("LatticeSpec: tensor grid n_phi^n_sites exceeds node budget");
      total *= n_phi;
    }
  }

  Index grid_size() const {
    Index total = 1;
    for (Index i = 0; i < n_sites; ++i) total *= n_phi;
    return total;
  }
  Scalar phi_step() const { return Scalar(2) * phi_max / Scalar(n_phi - 1); }
  Scalar phi_value(Index k) const { return -phi_max + Scalar(k) * phi_step(); }
};

using LatticeSpec = LatticeSpecT<double>;

/// One field value per lattice site: a point in configuration space.
template <class Scalar = double>
struct FieldConfigT {
  VectorX<Scalar> values;

  FieldConfigT() = default;
  explicit FieldConfigT(VectorX<Scalar> v) : values(std::move(v)) {
    if (!values.allFinite()) throw std::invalid_argument("FieldConfig: entries must be finite");
  }
};

using FieldConfig = FieldConfigT<double>;

/// Polynomial self-interaction: V(phi) = m2/2 phi^2 + lambda3 phi^3 + lambda4 phi^4.
/// The spatial gradient contribution is accounted for separately.
template <class Scalar = double>
struct PotentialSpecT {
  Scalar m2 = Scalar(0);
  Scalar lambda3 = Scalar(0);
  Scalar lambda4 = Scalar(0);

  PotentialSpecT() = default;
  PotentialSpecT(Scalar mass2, Scalar l3, Scalar l4) : m2(mass2), lambda3(l3), lambda4(l4) {
    if (!std::isfinite(static_cast<double>(m2)) || !std::isfinite(static_cast<double>(lambda3)) ||
        !std::isfinite(static_cast<double>(lambda4)))
      throw std::invalid_argument("PotentialSpec: couplings must be finite");
    if (m2 < Scalar(0)) throw std::invalid_argument("PotentialSpec: m2 must be >= 0");
  }

  Scalar site_value(Scalar phi) const {
    const Scalar p2 = phi * phi;
    return Scalar(0.5) * m2 * p2 + lambda3 * p2 * phi + lambda4 * p2 * p2;
  }
  Scalar site_derivative(Scalar phi) const {
    return m2 * phi + Scalar(3) * lambda3 * phi * phi + Scalar(4) * lambda4 * phi * phi * phi;
  }
};

using PotentialSpec = PotentialSpecT<double>;

namespace detail {
template <class Scalar>
inline void check_size(const VectorX<Scalar>& v, const LatticeSpecT<Scalar>& spec, const char* who) {
  if (v.size() != spec.n_sites)
    throw std::invalid_argument(std::string(who) + ": size does not match spec.n_sites");
}
}  // namespace detail

/// Sum over directed bonds of the squared forward difference ((phi_{i+1}-phi_i)/dx)^2.
/// Periodic wrap; for n_sites == 2 the single bond pair is counted twice.
template <class Scalar>
Scalar grad_sq(const FieldConfigT<Scalar>& config, const LatticeSpecT<Scalar>& spec) {
  detail::check_size(config.values, spec, "grad_sq");
  const Index n = spec.n_sites;
  KahanSum<Scalar> acc;
  for (Index i = 0; i < n; ++i) {
    const Scalar d = (config.values[(i + 1) % n] - config.values[i]) / spec.dx;
    acc.add(d * d);
  }
  return acc.value();
}

/// Discretized spatial integral of the potential energy density,
/// dx * sum_i [ (grad phi)^2_i / 2 + V(phi_i) ].
template <class Scalar>
Scalar potential_integral(const FieldConfigT<Scalar>& config, const LatticeSpecT<Scalar>& spec,
                          const PotentialSpecT<Scalar>& pot) {
  detail::check_size(config.values, spec, "potential_integral");
  KahanSum<Scalar> acc;
  acc.add(Scalar(0.5) * grad_sq(config, spec));
  for (Index i = 0; i < spec.n_sites; ++i) acc.add(pot.site_value(config.values[i]));
  return spec.dx * acc.value();
}

/// <f|g> = dx * sum_i f_i g_i for functions sampled on the sites.
template <class Scalar>
Scalar inner_product(const VectorX<Scalar>& f, const VectorX<Scalar>& g,
                     const LatticeSpecT<Scalar>& spec) {
  detail::check_size(f, spec, "inner_product");
  detail::check_size(g, spec, "inner_product");
  KahanSum<Scalar> acc;
  for (Index i = 0; i < spec.n_sites; ++i) acc.add(f[i] * g[i]);
  return spec.dx * acc.value();
}

// ---------------------------------------------------------------------------
// Tensor grids over field configurations.
//
// A grid assigns one value per field configuration node. Nodes are flattened
// row-major with site 0 slowest: node = sum_i k_i * n_phi^(n_sites-1-i).
// ---------------------------------------------------------------------------

template <class Scalar = double>
class TensorGridLayoutT {
 public:
  TensorGridLayoutT() = default;
  explicit TensorGridLayoutT(LatticeSpecT<Scalar> spec) : spec_(std::move(spec)) {
    size_ = spec_.grid_size();
    strides_.resize(static_cast<std::size_t>(spec_.n_sites));
    Index s = 1;
    for (Index a = spec_.n_sites - 1; a >= 0; --a) {
      strides_[static_cast<std::size_t>(a)] = s;
      s *= spec_.n_phi;
    }
  }

  const LatticeSpecT<Scalar>& spec() const { return spec_; }
  Index size() const { return size_; }
  Index axes() const { return spec_.n_sites; }
  Index points_per_axis() const { return spec_.n_phi; }
  Index stride(Index axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  Scalar step() const { return spec_.phi_step(); }

  /// Configuration-space cell volume step^n_sites (uniform grid measure).
  Scalar measure() const {
    Scalar m = Scalar(1);
    for (Index a = 0; a < axes(); ++a) m *= step();
    return m;
  }

  Index axis_index(Index node, Index axis) const {
    return (node / stride(axis)) % spec_.n_phi;
  }
  Scalar coordinate(Index node, Index axis) const {
    return spec_.phi_value(axis_index(node, axis));
  }

  /// Field configuration sitting at a grid node.
  FieldConfigT<Scalar> config_at(Index node) const {
    VectorX<Scalar> v(axes());
    for (Index a = 0; a < axes(); ++a) v[a] = coordinate(node, a);
    return FieldConfigT<Scalar>(std::move(v));
  }

  bool node_on_boundary(Index node) const {
    for (Index a = 0; a < axes(); ++a) {
      const Index k = axis_index(node, a);
      if (k == 0 || k == spec_.n_phi - 1) return true;
    }
    return false;
  }

  /// Tensor-product trapezoid weight (relative to the uniform measure):
  /// 1/2 for each axis sitting on a grid edge.
  Scalar trapezoid_weight(Index node) const {
    Scalar w = Scalar(1);
    for (Index a = 0; a < axes(); ++a) {
      const Index k = axis_index(node, a);
      if (k == 0 || k == spec_.n_phi - 1) w *= Scalar(0.5);
    }
    return w;
  }

  bool same_as(const TensorGridLayoutT& other) const {
    return spec_.n_sites == other.spec_.n_sites && spec_.n_phi == other.spec_.n_phi &&
           spec_.dx == other.spec_.dx && spec_.phi_max == other.spec_.phi_max;
  }

 private:
  LatticeSpecT<Scalar> spec_;
  Index size_ = 0;
  std::vector<Index> strides_;
};

using TensorGridLayout = TensorGridLayoutT<double>;

namespace detail {
template <class Scalar>
inline void check_grid(const ArrayX<Scalar>& g, const TensorGridLayoutT<Scalar>& layout,
                       const char* who) {
  if (g.size() != layout.size())
    throw std::invalid_argument(std::string(who) + ": grid size does not match layout");
}

/// Visit every 1-D line of the grid along `axis`. fn(base, stride) is called
/// once per line; node k of the line is base + k*stride.
template <class Scalar, class Fn>
void for_each_line(const TensorGridLayoutT<Scalar>& layout, Index axis, Fn&& fn) {
  const Index m = layout.points_per_axis();
  const Index stride = layout.stride(axis);
  const Index block = stride * m;
  const Index n_outer = layout.size() / block;
  for (Index o = 0; o < n_outer; ++o)
    for (Index i = 0; i < stride; ++i) fn(o * block + i, stride);
}
}  // namespace detail

/// d/dphi_axis on the grid: central differences inside, 3-point one-sided at
/// the edges (both exact on quadratics).
template <class Scalar>
ArrayX<Scalar> axis_diff1(const ArrayX<Scalar>& grid, const TensorGridLayoutT<Scalar>& layout,
                          Index axis) {
  detail::check_grid(grid, layout, "axis_diff1");
  const Index m = layout.points_per_axis();
  const Scalar h = layout.step();
  ArrayX<Scalar> out(grid.size());
  detail::for_each_line(layout, axis, [&](Index base, Index s) {
    auto at = [&](Index k) { return grid[base + k * s]; };
    out[base] = (Scalar(-3) * at(0) + Scalar(4) * at(1) - at(2)) / (Scalar(2) * h);
    for (Index k = 1; k + 1 < m; ++k)
      out[base + k * s] = (at(k + 1) - at(k - 1)) / (Scalar(2) * h);
    out[base + (m - 1) * s] =
        (Scalar(3) * at(m - 1) - Scalar(4) * at(m - 2) + at(m - 3)) / (Scalar(2) * h);
  });
  return out;
}

/// d^2/dphi_axis^2 on the grid: central inside, one-sided at the edges
/// (4-point when available, exact on cubics; 3-point fallback at n_phi == 3).
template <class Scalar>
ArrayX<Scalar> axis_diff2(const ArrayX<Scalar>& grid, const TensorGridLayoutT<Scalar>& layout,
                          Index axis) {
  detail::check_grid(grid, layout, "axis_diff2");
  const Index m = layout.points_per_axis();
  const Scalar h2 = layout.step() * layout.step();
  ArrayX<Scalar> out(grid.size());
  detail::for_each_line(layout, axis, [&](Index base, Index s) {
    auto at = [&](Index k) { return grid[base + k * s]; };
    if (m >= 4) {
      out[base] = (Scalar(2) * at(0) - Scalar(5) * at(1) + Scalar(4) * at(2) - at(3)) / h2;
      out[base + (m - 1) * s] =
          (Scalar(2) * at(m - 1) - Scalar(5) * at(m - 2) + Scalar(4) * at(m - 3) - at(m - 4)) / h2;
    } else {
      out[base] = (at(0) - Scalar(2) * at(1) + at(2)) / h2;
      out[base + (m - 1) * s] = out[base];
    }
    for (Index k = 1; k + 1 < m; ++k)
      out[base + k * s] = (at(k + 1) - Scalar(2) * at(k) + at(k - 1)) / h2;
  });
  return out;
}

/// Lattice functional derivative delta/delta phi(x_site) = (1/dx) d/dphi_site.
template <class Scalar>
ArrayX<Scalar> functional_derivative(const ArrayX<Scalar>& grid,
                                     const TensorGridLayoutT<Scalar>& layout, Index site) {
  if (site < 0 || site >= layout.axes())
    throw std::invalid_argument("functional_derivative: site out of range");
  return (axis_diff1(grid, layout, site) / layout.spec().dx).eval();
}

/// Plain grid sum times the uniform measure.
template <class Scalar>
Scalar grid_total(const ArrayX<Scalar>& values, const TensorGridLayoutT<Scalar>& layout) {
  detail::check_grid(values, layout, "grid_total");
  KahanSum<Scalar> acc;
  for (Index n = 0; n < values.size(); ++n) acc.add(values[n]);
  return acc.value() * layout.measure();
}

/// Tensor-product trapezoid quadrature of a grid function over configuration
/// space. Agrees with grid_total up to the (negligible) boundary shell.
template <class Scalar>
Scalar trapezoid_integral(const ArrayX<Scalar>& values, const TensorGridLayoutT<Scalar>& layout) {
  detail::check_grid(values, layout, "trapezoid_integral");
  KahanSum<Scalar> acc;
  for (Index n = 0; n < values.size(); ++n) acc.add(layout.trapezoid_weight(n) * values[n]);
  return acc.value() * layout.measure();
}

}  // namespace obsfield

#endif  // OBSFIELD_LATTICE_HPP
