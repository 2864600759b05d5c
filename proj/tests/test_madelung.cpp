#include "doctest.h"

#include <cmath>
#include <complex>

#include "obsfield/madelung.hpp"
#include "testutil.hpp"

using namespace obsfield;

namespace {

double l2_density_distance(const ArrayX<double>& a, const ArrayX<double>& b,
                           const TensorGridLayout& layout) {
  return std::sqrt(grid_total(ArrayX<double>((a - b).square()), layout));
}

Wavefunctional free_ground_state(const TensorGridLayout& layout, double m2, double hbar,
                                 double displacement = 0.0) {
  const auto oracle = free_field_oracle(layout.spec(), m2, hbar);
  if (displacement == 0.0) return oracle_wavefunctional(layout, oracle, hbar);
  const VectorX<double> shift = VectorX<double>::Constant(layout.axes(), displacement);
  return oracle_wavefunctional(layout, oracle, hbar, &shift);
}

}  // namespace

TEST_CASE("MadelungState validates its grids") {
  const auto layout = test::make_layout(1, 1.0, 8.0, 65);
  ArrayX<double> rho = test::gaussian_density(layout, 0.0, 0.5);
  rho /= grid_total(rho, layout);
  const ArrayX<double> zero = ArrayX<double>::Zero(layout.size());
  CHECK_NOTHROW(MadelungState(rho, zero, layout, 1.0));
  CHECK_THROWS_AS(MadelungState(2.0 * rho, zero, layout, 1.0), std::invalid_argument);
  ArrayX<double> negative = rho;
  negative[0] = -1e-3;
  CHECK_THROWS_AS(MadelungState(negative, zero, layout, 1.0), std::invalid_argument);
}

TEST_CASE("decompose on reference states") {
  SUBCASE("real positive Gaussian has zero phase") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 128);
    const auto psi = free_ground_state(layout, 1.0, 1.0);
    const auto ms = decompose(psi);
    CHECK((ms.rho - psi.density()).abs().maxCoeff() < 1e-15);
    CHECK(ms.s.abs().maxCoeff() < 1e-12);
    CHECK(grid_total(ms.rho, layout) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("momentum boost appears as a linear phase slope") {
    const auto layout = test::make_layout(2, 0.5, 8.0, 33);
    auto psi = free_ground_state(layout, 1.0, 1.0);
    const VectorX<double> k = (VectorX<double>(2) << 0.7, -0.3).finished();
    for (Index n = 0; n < layout.size(); ++n) {
      double phase = 0.0;
      for (Index a = 0; a < 2; ++a) phase += k[a] * layout.coordinate(n, a) * layout.spec().dx;
      psi.amplitudes[n] *= std::polar(1.0, phase);
    }
    const auto ms = decompose(psi);
    const auto mask = ms.valid_mask();
    for (Index a = 0; a < 2; ++a) {
      const ArrayX<double> slope = axis_diff1(ms.s, layout, a);
      const double expected = ms.hbar * k[a] * layout.spec().dx;
      for (Index n = 0; n < layout.size(); ++n) {
        if (!mask[n] || layout.node_on_boundary(n)) continue;
        // skip nodes whose stencil neighbours left the bulk
        bool interior_ok = true;
        for (Index d = -1; d <= 1; d += 2)
          if (!mask[n + d * layout.stride(a)]) interior_ok = false;
        if (!interior_ok) continue;
        CHECK(std::abs(slope[n] - expected) < 1e-9);
      }
    }
  }
  SUBCASE("stationary state phase decreases at rate E0") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 128);
    const PotentialSpec pot(1.0, 0.0, 0.0);
    const auto psi0 = free_ground_state(layout, 1.0, 1.0);
    const auto psi1 = evolve(psi0, pot, 1e-3, 1000);
    const auto ms0 = decompose(psi0);
    const auto ms1 = decompose(psi1);
    const auto mask = ms0.valid_mask();
    for (Index n = 0; n < layout.size(); ++n)
      if (mask[n]) CHECK(std::abs((ms1.s[n] - ms0.s[n]) + 0.5) < 1e-5);
  }
  SUBCASE("round trip preserves the state up to a global phase") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 128);
    auto psi = free_ground_state(layout, 1.0, 1.0, 1.0);
    psi = evolve(psi, PotentialSpec(1.0, 0.0, 0.0), 1e-3, 500);  // genuinely complex state
    const auto back = compose(decompose(psi));
    CHECK(fidelity(psi, back) > 1.0 - 1e-10);
  }
  SUBCASE("a noded state cannot be unwrapped") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 129);  // odd: phi = 0 is a grid node
    VectorXc<double> amps(layout.size());
    for (Index n = 0; n < layout.size(); ++n) {
      const double phi = layout.coordinate(n, 0);
      amps[n] = phi * std::exp(-0.5 * phi * phi);  // first excited state shape
    }
    const Wavefunctional psi(amps, layout, 1.0);
    CHECK_THROWS_AS(decompose(psi), std::runtime_error);
  }
}

TEST_CASE("bohm_potential matches analytic derivatives") {
  SUBCASE("Gaussian rho = e^{-phi^2} at the origin") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 129);
    const ArrayX<double> rho = test::gaussian_density(layout, 0.0, 0.5);  // shape e^{-phi^2}
    const MadelungState ms(rho, ArrayX<double>::Zero(layout.size()), layout, 1.0);
    const auto bohm = bohm_potential(ms, 0);
    const Index center = (layout.size() - 1) / 2;
    CHECK(bohm.valid[center]);
    CHECK(bohm.values[center] == doctest::Approx(0.5).epsilon(1e-6));
    // fd2 cross-check path agrees
    const auto bohm_fd = bohm_potential(ms, 0, KineticMode::fd2);
    CHECK(bohm_fd.values[center] == doctest::Approx(0.5).epsilon(1e-3));
  }
  SUBCASE("uniform patch has zero quantum potential") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 65);
    const double h = layout.step();
    const ArrayX<double> flat =
        ArrayX<double>::Constant(layout.size(), 1.0 / (h * double(layout.size() - 1)));
    const MadelungState ms(flat, ArrayX<double>::Zero(layout.size()), layout, 1.0);
    CHECK(bohm_potential(ms, 0).max_abs() < 1e-10);
    CHECK(bohm_potential(ms, 0, KineticMode::fd2).max_abs() < 1e-10);
  }
  SUBCASE("doubling hbar quadruples the grid") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 129);
    const ArrayX<double> rho = test::gaussian_density(layout, 0.0, 0.5);
    const ArrayX<double> zero = ArrayX<double>::Zero(layout.size());
    const auto b1 = bohm_potential(MadelungState(rho, zero, layout, 1.0), 0);
    const auto b2 = bohm_potential(MadelungState(rho, zero, layout, 2.0), 0);
    const double scale = b1.max_abs();
    for (Index n = 0; n < layout.size(); ++n)
      if (b1.valid[n]) CHECK(std::abs(b2.values[n] - 4.0 * b1.values[n]) < 1e-12 * scale);
  }
}

TEST_CASE("curvature identity holds to rounding on smooth densities") {
  SUBCASE("Gaussian") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 128);
    const ArrayX<double> rho = test::gaussian_density(layout, 0.0, 0.5);
    const MadelungState ms(rho, ArrayX<double>::Zero(layout.size()), layout, 1.0);
    CHECK(curvature_identity_residual(ms) < 1e-6);
  }
  SUBCASE("quartic exponential") {
    const auto layout = test::make_layout(1, 1.0, 4.0, 128);
    ArrayX<double> rho(layout.size());
    for (Index n = 0; n < layout.size(); ++n) {
      const double phi = layout.coordinate(n, 0);
      rho[n] = std::exp(-phi * phi * phi * phi);
    }
    rho /= grid_total(rho, layout);
    const MadelungState ms(rho, ArrayX<double>::Zero(layout.size()), layout, 1.0);
    CHECK(curvature_identity_residual(ms) < 1e-5);
  }
  SUBCASE("constant patch gives exactly zero") {
    const auto layout = test::make_layout(1, 1.0, 8.0, 65);
    const double h = layout.step();
    const ArrayX<double> flat =
        ArrayX<double>::Constant(layout.size(), 1.0 / (h * double(layout.size() - 1)));
    const MadelungState ms(flat, ArrayX<double>::Zero(layout.size()), layout, 1.0);
    CHECK(curvature_identity_residual(ms) == 0.0);
  }
}

TEST_CASE("qhj_residual certifies quantum Hamilton-Jacobi solutions") {
  const auto layout = test::make_layout(1, 1.0, 8.0, 128);
  const PotentialSpec pot(1.0, 0.0, 0.0);

  SUBCASE("free ground-state pair solves the alpha = 1 equation") {
    const auto ms = decompose(free_ground_state(layout, 1.0, 1.0));
    const ArrayX<double> s_dot = ArrayX<double>::Constant(layout.size(), -0.5);
    const auto res = qhj_residual(ms, s_dot, pot, 1.0);
    CHECK(res.max_abs() < 1e-5);
  }
  SUBCASE("removing the Bohm term breaks the balance") {
    const auto ms = decompose(free_ground_state(layout, 1.0, 1.0));
    const ArrayX<double> s_dot = ArrayX<double>::Constant(layout.size(), -0.5);
    const auto res = qhj_residual(ms, s_dot, pot, 1e-12);
    CHECK(res.max_abs() > 1e-2);
  }
  SUBCASE("residual is linear in alpha") {
    const auto ms = decompose(free_ground_state(layout, 1.0, 1.0));
    const ArrayX<double> s_dot = ArrayX<double>::Constant(layout.size(), -0.5);
    const auto r1 = qhj_residual(ms, s_dot, pot, 1.0);
    const auto r2 = qhj_residual(ms, s_dot, pot, 2.0);
    const auto r4 = qhj_residual(ms, s_dot, pot, 4.0);
    double scale = 0.0, worst = 0.0;
    for (Index n = 0; n < layout.size(); ++n) {
      if (!r1.valid[n]) continue;
      scale = std::max(scale, std::abs(r2.values[n] - r1.values[n]));
      worst = std::max(worst, std::abs((r4.values[n] - r2.values[n]) -
                                       2.0 * (r2.values[n] - r1.values[n])));
    }
    CHECK(worst < 1e-12 * std::max(scale, 1.0));
  }
  SUBCASE("alpha = 4 with the rescaled-hbar ground state") {
    // ground state of hbar_alpha = 2 solves the alpha = 4 equation at hbar = 1
    const auto psi2 = free_ground_state(layout, 1.0, 2.0);
    MadelungState ms(psi2.density(), ArrayX<double>::Zero(layout.size()), layout, 1.0);
    const ArrayX<double> s_dot = ArrayX<double>::Constant(layout.size(), -1.0);  // E0 = hbar_a m/2
    const auto res = qhj_residual(ms, s_dot, pot, 4.0);
    CHECK(res.max_abs() < 1e-5);
  }
}

TEST_CASE("evolve_madelung integrates the polar system directly") {
  const auto layout = test::make_layout(1, 1.0, 8.0, 128);
  const PotentialSpec pot(1.0, 0.0, 0.0);

  SUBCASE("stationary ground state: frozen density, linear phase") {
    const auto ms0 = decompose(free_ground_state(layout, 1.0, 1.0));
    const auto ms1 = evolve_madelung(ms0, pot, 1e-3, 200);
    CHECK((ms1.rho - ms0.rho).abs().maxCoeff() < 1e-9);
    const auto mask = ms0.valid_mask();
    for (Index n = 0; n < layout.size(); ++n)
      if (mask[n]) CHECK(std::abs(ms1.s[n] - (-0.5 * 0.2)) < 1e-9);
    CHECK(ms1.t == doctest::Approx(0.2));
  }
  SUBCASE("coherent state returns after one period") {
    const auto ms0 = decompose(free_ground_state(layout, 1.0, 1.0, 1.0));
    const double period = 2.0 * EIGEN_PI;
    const Index steps = 1257;
    const auto ms1 = evolve_madelung(ms0, pot, period / double(steps), steps);
    CHECK(l2_density_distance(ms1.rho, ms0.rho, layout) < 1e-3);
    CHECK(std::abs(grid_total(ms1.rho, layout) - 1.0) < 1e-8);
  }
  SUBCASE("zero steps is the identity") {
    const auto ms0 = decompose(free_ground_state(layout, 1.0, 1.0));
    const auto same = evolve_madelung(ms0, pot, 1e-3, 0);
    CHECK((same.rho - ms0.rho).abs().maxCoeff() == 0.0);
    CHECK((same.s - ms0.s).abs().maxCoeff() == 0.0);
  }
  SUBCASE("a contracting phase drains the tails and trips the node guard") {
    ArrayX<double> rho = test::gaussian_density(layout, 0.0, 0.5);
    ArrayX<double> s(layout.size());
    for (Index n = 0; n < layout.size(); ++n) {
      const double phi = layout.coordinate(n, 0);
      s[n] = -phi * phi;
    }
    const MadelungState ms(rho, s, layout, 1.0);
    CHECK_THROWS_AS(evolve_madelung(ms, pot, 1e-3, 4000), std::runtime_error);
  }
  SUBCASE("time step beyond the dispersive bound is rejected") {
    const auto ms0 = decompose(free_ground_state(layout, 1.0, 1.0));
    CHECK_THROWS_AS(evolve_madelung(ms0, pot, 0.02, 10), std::invalid_argument);
  }
}

TEST_CASE("both propagation routes agree on the coherent state") {
  const auto layout = test::make_layout(1, 1.0, 8.0, 128);
  const PotentialSpec pot(1.0, 0.0, 0.0);
  const auto psi0 = free_ground_state(layout, 1.0, 1.0, 1.0);

  const auto route_a = evolve(psi0, pot, 1e-3, 1000);
  const auto route_b = evolve_madelung(decompose(psi0), pot, 1e-3, 1000);
  CHECK(l2_density_distance(route_a.density(), route_b.rho, layout) < 1e-4);

  // phases agree up to the global gauge constant
  const auto ms_a = decompose(route_a);
  const auto mask = ms_a.valid_mask();
  double offset = 0.0;
  Index count = 0;
  for (Index n = 0; n < layout.size(); ++n)
    if (mask[n]) {
      offset += ms_a.s[n] - route_b.s[n];
      ++count;
    }
  offset /= double(count);
  double worst = 0.0;
  for (Index n = 0; n < layout.size(); ++n)
    if (mask[n]) worst = std::max(worst, std::abs(ms_a.s[n] - route_b.s[n] - offset));
  CHECK(worst < 1e-3);
}

TEST_CASE("phase_rate extracts dS/dt from a trajectory") {
  const auto layout = test::make_layout(1, 1.0, 8.0, 128);
  const PotentialSpec pot(1.0, 0.0, 0.0);
  const auto psi0 = free_ground_state(layout, 1.0, 1.0);
  const auto early = evolve(psi0, pot, 1e-3, 100);
  const auto late = evolve(early, pot, 1e-3, 100);
  const ArrayX<double> rate = phase_rate(early, late, 0.1);
  const auto mask = decompose(psi0).valid_mask();
  for (Index n = 0; n < layout.size(); ++n)
    if (mask[n]) CHECK(std::abs(rate[n] + 0.5) < 1e-4);
}
