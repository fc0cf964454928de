#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vpharm/catalog.hpp"
#include "vpharm/operator.hpp"

using namespace vpharm;

namespace {

const std::vector<Exponent>& exponents() {
  static const std::vector<Exponent> ps{Exponent::finite(1.0), Exponent::finite(1.3), Exponent::finite(1.5),
                                        Exponent::finite(2.0), Exponent::finite(3.0), Exponent::finite(4.0),
                                        Exponent::finite(10.0), Exponent::infinity()};
  return ps;
}

OperatorConfig<2> config(Exponent p, double eps, int radial = 4, int angular = 16) {
  OperatorConfig<2> c;
  c.p = p;
  c.eps = eps;
  c.quadrature = build_ball_quadrature<2>(radial, angular);
  return c;
}

GridPtr<2> disk_grid(double h) { return make_grid(Domain<2>::disk({0.0, 0.0}, 1.0), h); }

SmoothProbe<2> gamma_probe(double alpha) { return radial_power_entry<2>(alpha).probe; }

}  // namespace

TEST(ApplyMu, ConstantsAreFixed) {
  const auto grid = disk_grid(1.0 / 16);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>&) { return -2.75; });
  for (Exponent p : exponents()) {
    const auto out = apply_mu(config(p, 0.2), f);
    for (std::size_t s = 0; s < out.size(); ++s) EXPECT_NEAR(out[s], -2.75, 1e-12) << p.to_string();
  }
}

TEST(ApplyMu, AffineExactOnSquare) {
  // Every cell of the square is uncut.
  const auto grid = make_grid(Domain<2>::rectangle({0.0, 0.0}, {1.0, 1.0}), 1.0 / 16);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = coef(rng), b = coef(rng), c = coef(rng);
    const auto f = GridField<2>::from_function(grid, [&](const Point<2>& x) { return a + b * x[0] + c * x[1]; });
    for (Exponent p : exponents()) EXPECT_LE(sup_diff(apply_mu(config(p, 0.15), f), f), 1e-10) << p.to_string();
  }
}

TEST(ApplyMu, AffineNearlyExactOnDisk) {
  // Cut cells interpolate linearly between nodes and boundary samples, so an
  // affine field stays affine except where the nearest-sample fallback is used.
  const auto grid = disk_grid(1.0 / 16);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return 0.5 - x[0] + 2.0 * x[1]; });
  for (Exponent p : {Exponent::finite(1.5), Exponent::finite(2.0), Exponent::infinity()})
    EXPECT_LE(sup_diff(apply_mu(config(p, 0.2), f), f), 1e-10) << p.to_string();
}

TEST(ApplyMu, CubicVanishesAtCenterOfDisk) {
  const auto grid = disk_grid(1.0 / 32);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return x[0] * x[0] * x[0] - x[1] * x[1] * x[1]; });
  for (Exponent p : exponents()) {
    const auto cfg = config(p, 1.0, 8, 32);
    EXPECT_LE(std::abs(mu_at_point(cfg, f, {0.0, 0.0})), 1e-8) << p.to_string();
    EXPECT_LE(std::abs(mu_of_function(cfg, cubic_entry<2>().probe.value, {0.0, 0.0}, 1.0)), 1e-8);
  }
}

TEST(ApplyMu, BoundaryIsIdentity) {
  const auto grid = make_grid(Domain<2>::annulus({0.0, 0.0}, 1.0, 2.0), 1.0 / 8);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return std::sin(3.0 * x[0]) + x[1]; });
  const auto out = apply_mu(config(Exponent::finite(3.0), 0.2), f);
  for (std::size_t s = grid->interior_count(); s < f.size(); ++s) EXPECT_EQ(out[s], f[s]);
}

TEST(ApplyMu, ThreadCountDoesNotChangeBits) {
  const auto grid = disk_grid(1.0 / 24);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return std::exp(x[0]) * std::cos(2.0 * x[1]); });
  for (Exponent p : {Exponent::finite(1.3), Exponent::finite(4.0)}) {
    const auto a = BallOperator<2>(config(p, 0.2), grid, 1).apply_mu(f);
    const auto b = BallOperator<2>(config(p, 0.2), grid, 3).apply_mu(f);
    for (std::size_t s = 0; s < a.size(); ++s) ASSERT_EQ(a[s], b[s]);
  }
}

TEST(ApplyMu, GridMismatch) {
  const auto f = GridField<2>::from_function(disk_grid(0.25), [](const Point<2>&) { return 0.0; });
  const BallOperator<2> op(config(Exponent::finite(2.0), 0.2), disk_grid(0.125));
  EXPECT_THROW(op.apply_mu(f), GridMismatch);
}

TEST(ApplyMu, Monotone) {
  const auto grid = disk_grid(1.0 / 16);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0), bump(0.0, 0.5);
  for (Exponent p : exponents()) {
    GridField<2> f1(grid), f2(grid);
    for (std::size_t s = 0; s < f1.size(); ++s) {
      f1[s] = u(rng);
      f2[s] = f1[s] + bump(rng);
    }
    const BallOperator<2> op(config(p, 0.25), grid);
    const auto m1 = op.apply_mu(f1), m2 = op.apply_mu(f2);
    for (std::size_t s = 0; s < f1.size(); ++s) EXPECT_LE(m1[s], m2[s] + 1e-10) << p.to_string();
  }
}

TEST(ApplyMu, ConstantAdditivity) {
  const auto grid = disk_grid(1.0 / 16);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridField<2> f(grid), g(grid);
  for (std::size_t s = 0; s < f.size(); ++s) {
    f[s] = u(rng);
    g[s] = f[s] + 0.625;
  }
  for (Exponent p : exponents()) {
    const BallOperator<2> op(config(p, 0.25), grid);
    const auto a = op.apply_mu(f), b = op.apply_mu(g);
    for (std::size_t s = 0; s < f.size(); ++s) EXPECT_NEAR(b[s], a[s] + 0.625, 1e-10) << p.to_string();
  }
}

TEST(ApplyMu, ConvexBelowConcaveAbove) {
  const auto grid = make_grid(Domain<2>::polygon({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}), 1.0 / 16);
  const auto convex = GridField<2>::from_function(grid, [](const Point<2>& x) { return dot<2>(x, x); });
  const auto concave = GridField<2>::from_function(grid, [](const Point<2>& x) { return -std::hypot(x[0] - 0.3, 2.0 * x[1]); });
  for (Exponent p : exponents()) {
    const BallOperator<2> op(config(p, 0.3), grid);
    const auto a = op.apply_mu(convex), b = op.apply_mu(concave);
    for (std::size_t i = 0; i < grid->interior_count(); ++i) {
      EXPECT_LE(convex[i], a[i] + 1e-8) << p.to_string();
      EXPECT_GE(concave[i], b[i] - 1e-8) << p.to_string();
    }
  }
}

TEST(ApplyMu, OutputWithinSampleRange) {
  const auto grid = disk_grid(1.0 / 16);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridField<2> f(grid);
  for (std::size_t s = 0; s < f.size(); ++s) f[s] = u(rng);
  std::vector<double> lattice(grid->lattice_size()), samples;
  grid->scatter(f.values(), lattice);
  for (Exponent p : exponents()) {
    const BallOperator<2> op(config(p, 0.3), grid);
    const auto out = op.apply_mu(f);
    for (std::size_t i = 0; i < grid->interior_count(); ++i) {
      op.gather(lattice, f.values(), i, samples);
      EXPECT_GE(out[i], *std::min_element(samples.begin(), samples.end()));
      EXPECT_LE(out[i], *std::max_element(samples.begin(), samples.end()));
    }
  }
}

TEST(ApplyMu, SmallRadiusNodesApproachIdentity) {
  const auto grid = disk_grid(1.0 / 64);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return std::sin(4.0 * x[0]) * x[1]; });
  const BallOperator<2> op(config(Exponent::finite(3.0), 0.2), grid);
  const auto out = op.apply_mu(f);
  for (std::size_t i = 0; i < grid->interior_count(); ++i)
    if (op.radius(i) < 1e-3) {
      EXPECT_NEAR(out[i], f[i], 0.05);
    }
  EXPECT_GT(op.min_radius(), 0.0);
  EXPECT_LT(op.min_radius(), 1.0 / 64);
}

TEST(ApplyEta, Examples) {
  OperatorConfig<2> cfg = config(Exponent::finite(4.0), 1.0, 8, 32);
  const auto abs_z = [](const Point<2>& z) { return norm<2>(z); };
  EXPECT_NEAR(mean_of_function(cfg, abs_z, {0.0, 0.0}, 1.0, MeanKind::eta), 11.0 / 18.0, 1e-13);

  const auto grid = disk_grid(1.0 / 16);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return x[0] * x[1] + std::cos(x[0]); });
  const auto two = config(Exponent::finite(2.0), 0.25);
  const BallOperator<2> op(two, grid);
  const auto eta = op.apply_eta(f);
  std::vector<double> lattice(grid->lattice_size()), samples;
  grid->scatter(f.values(), lattice);
  for (std::size_t i = 0; i < grid->interior_count(); ++i) {
    op.gather(lattice, f.values(), i, samples);
    double mean = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) mean += two.quadrature.weights[k] * samples[k];
    EXPECT_NEAR(eta[i], mean, 1e-14);
  }
  const auto c = GridField<2>::from_function(grid, [](const Point<2>&) { return 4.5; });
  for (double v : apply_eta(config(Exponent::finite(7.0), 0.2), c).values()) EXPECT_NEAR(v, 4.5, 1e-12);
  EXPECT_THROW(apply_eta(config(Exponent::infinity(), 0.2), c), UnsupportedP);
}

TEST(GtpLaplacian, PowerOfDistance) {
  for (double alpha : {0.5, 1.0, 2.5}) {
    const auto probe = gamma_probe(alpha);
    for (double p : {1.2, 2.0, 3.0, 7.0}) {
      for (const Point<2> y : {Point<2>{0.7, -0.2}, Point<2>{-1.5, 2.0}}) {
        const double expected = alpha * (alpha * (p - 1.0) + p - 2.0) / p * std::pow(norm<2>(y), -(alpha + 2.0));
        EXPECT_NEAR(gtp_laplacian(probe, y, Exponent::finite(p)), expected, 1e-12 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST(GtpLaplacian, AffineAndIsotropicQuadratic) {
  const auto affine = affine_entry<2>().probe;
  SmoothProbe<2> half_square{
      [](const Point<2>& x) { return 0.5 * dot<2>(x, x); }, [](const Point<2>& x) { return x; },
      [](const Point<2>&) { return std::array<Point<2>, 2>{Point<2>{1.0, 0.0}, Point<2>{0.0, 1.0}}; }};
  for (Exponent p : exponents()) {
    EXPECT_EQ(gtp_laplacian(affine, {0.2, 0.9}, p), 0.0);
    const double expected = p.is_infinite() ? 1.0 : (2.0 + p.value() - 2.0) / p.value();
    EXPECT_NEAR(gtp_laplacian(half_square, {0.3, -0.4}, p), expected, 1e-14);
  }
  EXPECT_THROW(gtp_laplacian(half_square, {0.0, 0.0}, Exponent::finite(2.0)), VanishingGradient);
}

TEST(SmoothProbe, FiniteDifferenceConsistency) {
  for (const auto& name : catalog_names()) {
    const auto probe = catalog_entry<2>(name, 1.0).probe;
    EXPECT_NO_THROW(probe.validate({0.8, 0.6})) << name;
  }
  auto broken = catalog_entry<2>("quadratic").probe;
  broken.hessian = [](const Point<2>&) { return std::array<Point<2>, 2>{Point<2>{2.0, 0.0}, Point<2>{0.0, 2.0}}; };
  EXPECT_THROW(broken.validate({0.3, 0.2}), ConfigError);
}

TEST(Amvp, QuadraticAtSamplePoint) {
  const auto disk = Domain<2>::disk({0.0, 0.0}, 1.0);
  const auto probe = catalog_entry<2>("quadratic").probe;
  const auto cfg = config(Exponent::finite(2.0), 0.05, 8, 32);
  EXPECT_NEAR(amvp_target(probe, {0.3, 0.2}, cfg.p), 0.75, 1e-14);
  EXPECT_NEAR(amvp_ratio(cfg, disk, probe, {0.3, 0.2}), 0.75, 0.02);
}

TEST(Amvp, AffineRatioVanishes) {
  const auto disk = Domain<2>::disk({0.0, 0.0}, 1.0);
  const auto probe = affine_entry<2>().probe;
  for (Exponent p : exponents()) {
    const auto cfg = config(p, 0.1);
    EXPECT_NEAR(amvp_ratio(cfg, disk, probe, {0.1, -0.3}), 0.0, 1e-10) << p.to_string();
  }
  SmoothProbe<2> flat{[](const Point<2>&) { return 1.0; }, [](const Point<2>&) { return Point<2>{0.0, 0.0}; },
                      [](const Point<2>&) { return std::array<Point<2>, 2>{}; }};
  EXPECT_THROW(amvp_ratio(config(Exponent::finite(2.0), 0.1), disk, flat, {0.0, 0.0}), VanishingGradient);
  EXPECT_THROW(amvp_ratio(config(Exponent::finite(2.0), 0.1), disk, probe, {1.0, 0.0}), ZeroRadius);
}

TEST(Amvp, ErrorShrinksAlongDyadicEps) {
  // The singular weight |a.z|^(p-2) for p < 2 and the sphere sup for p = inf
  // need a dense rule before the o(eps^2) term dominates the quadrature error.
  const auto disk = Domain<2>::disk({0.0, 0.0}, 1.0);
  const auto probe = catalog_entry<2>("quadratic").probe;
  const std::vector<Point<2>> points{{0.3, 0.2}, {-0.5, 0.1}, {0.2, -0.45}, {-0.35, -0.35}};
  for (Exponent p : {Exponent::finite(1.5), Exponent::finite(2.0), Exponent::finite(3.0), Exponent::infinity()}) {
    std::vector<double> errors;
    for (double eps : {0.2, 0.1, 0.05, 0.025}) {
      const auto cfg = config(p, eps, 64, 1024);
      double worst = 0.0;
      for (const auto& x : points)
        worst = std::max(worst, std::abs(amvp_ratio(cfg, disk, probe, x) - amvp_target(probe, x, p)));
      errors.push_back(worst);
    }
    EXPECT_TRUE(nonincreasing(errors)) << p.to_string();
    if (p.is_infinite()) EXPECT_LE(errors.back(), 2e-3);
    else if (p.value() == 2.0) EXPECT_LE(errors.back(), kAmvpResolution);
    else EXPECT_LE(errors.back(), 2e-4) << p.to_string();
  }
}

TEST(Amvp, Nonincreasing) {
  EXPECT_TRUE(nonincreasing({0.3, 0.2, 0.2, 0.1}));
  EXPECT_FALSE(nonincreasing({0.3, 0.2, 0.25}));
  EXPECT_TRUE(nonincreasing({5e-14, 8e-14, 2e-13}));
  EXPECT_FALSE(nonincreasing({5e-14, 1e-6}));
}

TEST(Amvp, CriticalRadialPowerHasZeroLimit) {
  // alpha = (N - p)/(p - 1) = 1 for N = 2, p = 1.5; any other alpha has a
  // clearly nonzero limit at the same point.
  const auto annulus = Domain<2>::annulus({0.0, 0.0}, 1.0, 2.0);
  const Exponent p = Exponent::finite(1.5);
  const Point<2> x{1.3, 0.6};
  EXPECT_NEAR(amvp_target(gamma_probe(1.0), x, p), 0.0, 1e-15);
  EXPECT_GT(std::abs(amvp_target(gamma_probe(2.0), x, p)), 0.02);
  for (double eps : {0.2, 0.1, 0.05, 0.025})
    EXPECT_LE(std::abs(amvp_ratio(config(p, eps, 64, 1024), annulus, gamma_probe(1.0), x)), 2e-4);
}

TEST(ResidualA, BoundaryAndInterior) {
  const auto grid = disk_grid(1.0 / 32);
  const auto f = GridField<2>::from_function(grid, [](const Point<2>& x) { return x[0] - x[1]; });
  const auto cfg = config(Exponent::finite(3.0), 0.1);
  EXPECT_DOUBLE_EQ(residual_A(cfg, 0.7, {1.0, 0.0}, f, 0.5), 0.1 * 0.2);
  EXPECT_EQ(residual_A(cfg, 0.5, {0.0, 1.0}, f, 0.5), 0.0);
  EXPECT_THROW(residual_A(cfg, 0.5, {1.0, 0.0}, f, 0.5, PointKind::interior), ZeroRadius);
  // Affine data is a fixed point, so the interior residual vanishes at s = f(x).
  EXPECT_NEAR(residual_A(cfg, 0.25 - 0.5, {0.25, 0.5}, f, 0.0), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(residual_prefactor(cfg), 2.0 * 5.0 * 0.1 / 3.0);
  EXPECT_DOUBLE_EQ(residual_prefactor(config(Exponent::infinity(), 0.1)), 0.2);
}

TEST(ResidualA, ScaledResidualApproachesMinusLaplacian) {
  // x y + x is reproduced exactly by bilinear interpolation, so only the
  // expansion error of the mean remains.
  const auto grid = disk_grid(1.0 / 32);
  SmoothProbe<2> probe{[](const Point<2>& x) { return x[0] * x[1] + x[0]; },
                       [](const Point<2>& x) { return Point<2>{x[1] + 1.0, x[0]}; },
                       [](const Point<2>&) { return std::array<Point<2>, 2>{Point<2>{0.0, 1.0}, Point<2>{1.0, 0.0}}; }};
  const auto f = GridField<2>::from_function(grid, probe.value);
  const Point<2> x{0.3, 0.2};
  const Exponent p = Exponent::finite(3.0);
  const double target = -gtp_laplacian(probe, x, p);
  EXPECT_GT(std::abs(target), 0.1);
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto cfg = config(p, eps, 8, 32);
    const double err = std::abs(residual_A(cfg, probe.value(x), x, f, 0.0) / eps - target);
    EXPECT_LT(err, previous);
    previous = err;
  }
  EXPECT_LE(previous, 0.01);
}

TEST(ResidualA, NodesAtConstantFixedPoint) {
  const auto grid = make_grid(Domain<2>::annulus({0.0, 0.0}, 1.0, 2.0), 1.0 / 8);
  const auto u = GridField<2>::from_function(grid, [](const Point<2>&) { return 3.0; });
  const BallOperator<2> op(config(Exponent::finite(1.5), 0.2), grid);
  for (double r : residual_A_nodes(op, u, u)) EXPECT_NEAR(r, 0.0, 1e-9);
}
