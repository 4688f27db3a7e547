// DC functions, entropies, Fisher information and the convexity right-hand side.

#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <twisted/entropies.hpp>
#include <twisted/transport.hpp>

using namespace twisted;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
Vec v3(double a, double b, double c) { return (Vec(3) << a, b, c).finished(); }

// Uniform density on [0,1]² cells of E2 with per-cell ρ from `fn`.
DensityMeasure grid_density(int cells, const std::function<double(const Vec&)>& fn, const Vec& shift = Vec::Zero(2)) {
    auto E = ManifoldModel::euclidean(2);
    auto g = discretize(E, Region::box(shift, shift + v2(1, 1)), cells);
    std::vector<double> rho;
    for (auto& p : g.points) rho.push_back(fn(p - shift));
    return DensityMeasure::from_cells(g.points, g.cell_mass, rho);
}

} // namespace

TEST(DCFunction, RenyiValues) {
    auto H = DCFunction::renyi(2);
    EXPECT_EQ(H.U(0.0), 0.0);
    EXPECT_NEAR(H.U(1.0), 0.0, 1e-15);
    // 2·2·(1 - 2^{-1/2}) = 4 - 2√2
    EXPECT_NEAR(H.U(2.0), 1.1715728752538097, 1e-14);
    EXPECT_NEAR(0.5 * H.U(2.0), 0.585786437626905, 1e-14);
    auto H3 = DCFunction::renyi(3);
    EXPECT_NEAR(H3.U(8.0), 3 * 8 * (1 - 0.5), 1e-13);
}

TEST(DCFunction, RenyiCompanionIsAffine) {
    for (int n : {2, 3}) {
        auto H = DCFunction::renyi(n);
        for (double r : {0.1, 0.7, 1.0, 2.5, 9.0}) {
            EXPECT_NEAR(H.phi(r), n * (1 - r), 1e-12);
            // φ_U(r) = rⁿ U(r⁻ⁿ)
            EXPECT_NEAR(H.phi(r), std::pow(r, n) * H.U(std::pow(r, -n)), 1e-11 * (1 + std::abs(H.phi(r))));
        }
    }
}

TEST(DCFunction, CompanionsAgreeWithTheDefinition) {
    std::vector<DCFunction> fs = {DCFunction::renyi_N(2, 3.5), DCFunction::porous_medium(2, 2.0), DCFunction::porous_medium(3, 0.8)};
    for (auto& U : fs) {
        const int n = U.dim();
        for (double r : {0.2, 0.9, 1.7, 4.0}) {
            double want = std::pow(r, n) * U.U(std::pow(r, -n));
            EXPECT_NEAR(U.phi(r), want, 1e-11 * (1 + std::abs(want))) << U.name();
        }
    }
}

TEST(DCFunction, CatalogMembersSatisfyTheDcConditions) {
    std::vector<DCFunction> good = {DCFunction::renyi(2),        DCFunction::renyi(3),           DCFunction::renyi_N(2, 5),
                                    DCFunction::porous_medium(2, 2), DCFunction::porous_medium(2, 0.6), DCFunction::zero(3),
                                    DCFunction::user(2, "x^2"),  DCFunction::user(2, "x*log(x)")};
    for (auto& U : good) EXPECT_TRUE(U.check().ok()) << U.name() << " " << U.params().dump();
}

TEST(DCFunction, ViolationsAreFlagged) {
    auto concave = DCFunction::user(2, "sqrt(x)");
    auto c = concave.check();
    EXPECT_FALSE(c.u_convex);
    EXPECT_FALSE(c.ok());
    EXPECT_THROW(DCFunction::renyi_N(3, 2.0), InputDomainError);
    EXPECT_THROW(DCFunction::porous_medium(2, 0.4), InputDomainError);
    EXPECT_THROW(DCFunction::porous_medium(2, 1.0), InputDomainError);
    EXPECT_THROW(DCFunction::renyi(2).U(-1.0), InputDomainError);
    EXPECT_THROW(DCFunction::renyi(2).phi(0.0), InputDomainError);
    EXPECT_THROW(dc_from_spec("tsallis", {}, 2), ConfigurationError);
}

TEST(DCFunction, SpecRoundTrip) {
    for (auto& U : {DCFunction::renyi_N(2, 4), DCFunction::porous_medium(3, 1.5), DCFunction::user(2, "x^3")}) {
        auto back = dc_from_spec(U.name(), U.params(), U.dim());
        for (double r : {0.3, 2.0}) EXPECT_EQ(back.U(r), U.U(r));
    }
    EXPECT_GE(dc_catalog().size(), 5u);
}

TEST(Entropy, ReferenceMeasureHasZeroRenyiEntropy) {
    auto mu = grid_density(16, [](const Vec&) { return 1.0; });
    EXPECT_NEAR(mu.normalization(), 1.0, 1e-14);
    EXPECT_NEAR(renyi_entropy(mu, 2), 0.0, 1e-14);
    EXPECT_EQ(entropy_U(mu, DCFunction::zero(2)), 0.0);
}

TEST(Entropy, StepDensityMatchesClosedForm) {
    // ρ = 2 on half the square, 0 elsewhere: H = ½ · 2·2·(1 - 2^{-1/2})
    auto mu = grid_density(8, [](const Vec& p) { return p[0] < 0.5 ? 2.0 : 0.0; });
    EXPECT_NEAR(renyi_entropy(mu, 2), 0.585786437626905, 1e-13);
}

TEST(Entropy, InvariantUnderRelabellingAndSplitting) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.2, 2.0);
    std::vector<Vec> pts;
    std::vector<double> ref, rho;
    for (int i = 0; i < 12; ++i) {
        pts.push_back(v2(i, 0));
        ref.push_back(U(rng));
        rho.push_back(U(rng));
    }
    auto mu = DensityMeasure::from_cells(pts, ref, rho);
    auto H = DCFunction::porous_medium(2, 2.0);
    double base = entropy_U(mu, H);

    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec> p2;
    std::vector<double> r2, q2;
    for (int k : perm) {
        p2.push_back(pts[k]);
        r2.push_back(ref[k]);
        q2.push_back(rho[k]);
    }
    EXPECT_NEAR(entropy_U(DensityMeasure::from_cells(p2, r2, q2), H), base, 1e-13);

    // each cell halved in reference mass, density unchanged
    std::vector<Vec> p3;
    std::vector<double> r3, q3;
    for (int k = 0; k < 12; ++k)
        for (int h = 0; h < 2; ++h) {
            p3.push_back(pts[k]);
            r3.push_back(ref[k] / 2);
            q3.push_back(rho[k]);
        }
    EXPECT_NEAR(entropy_U(DensityMeasure::from_cells(p3, r3, q3), H), base, 1e-13);
}

TEST(Entropy, DensityValidation) {
    EXPECT_THROW(DensityMeasure::from_cells({v2(0, 0)}, {1.0}, {-1.0}), InputDomainError);
    EXPECT_THROW(DensityMeasure::from_cells({v2(0, 0)}, {1.0}, {0.0}), InputDomainError);
    EXPECT_THROW(DensityMeasure::from_cells({v2(0, 0)}, {1.0, 2.0}, {1.0}), InputDomainError);
    DensityMeasure bare;
    EXPECT_THROW(bare.rho(), InputDomainError);
}

TEST(GeneralizedMean, Examples) {
    EXPECT_DOUBLE_EQ(generalized_mean(1, 0.5, 1, 3), 2.0);
    EXPECT_NEAR(generalized_mean(0, 0.5, 1, 3), std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(generalized_mean(-1, 0.5, 1, 3), 1.5, 1e-15);
    EXPECT_EQ(generalized_mean(INFINITY, 0.3, 1, 3), 3.0);
    EXPECT_EQ(generalized_mean(-INFINITY, 0.3, 1, 3), 1.0);
    EXPECT_EQ(generalized_mean(2, 0.3, 0, 3), 0.0);
    EXPECT_EQ(generalized_mean(2, 0.0, 1, 3), 1.0);
    EXPECT_THROW(generalized_mean(1, 1.5, 1, 3), InputDomainError);
    EXPECT_THROW(generalized_mean(1, 0.5, -1, 3), InputDomainError);
}

TEST(GeneralizedMean, MonotoneInTheExponent) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.01, 5);
    std::vector<double> ps = {-INFINITY, -4, -1, -0.3, 0, 0.2, 1, 3, INFINITY};
    for (int rep = 0; rep < 50; ++rep) {
        double a = U(rng), b = U(rng), t = U(rng) / 5;
        for (std::size_t k = 1; k < ps.size(); ++k)
            EXPECT_LE(generalized_mean(ps[k - 1], t, a, b), generalized_mean(ps[k], t, a, b) * (1 + 1e-14));
        // p → 0 limit
        EXPECT_NEAR(generalized_mean(1e-6, t, a, b), generalized_mean(0, t, a, b), 1e-4 * generalized_mean(0, t, a, b));
    }
}

TEST(ConvexitySum, UnitBetasGiveTheLinearInterpolation) {
    auto mu0 = grid_density(6, [](const Vec& p) { return 1 + p[0]; });
    auto mu1 = grid_density(6, [](const Vec& p) { return 2 - p[1]; });
    const auto& r0 = mu0.rho();
    const auto& r1 = mu1.rho();
    // with β = β̄ = 1 each side's φ-form is Σ mass U(ρ)/ρ = Σ ref U(ρ)
    auto H = DCFunction::renyi(2);
    for (double t : {0.0, 0.3, 1.0}) {
        std::vector<ConvexityTerm> a, b;
        for (std::size_t i = 0; i < r0.size(); ++i) a.push_back({mu0.measure.mass[i], r0[i], 1.0, Extended(1.0), Extended(1.0)});
        for (std::size_t i = 0; i < r1.size(); ++i) b.push_back({mu1.measure.mass[i], 1.0, r1[i], Extended(1.0), Extended(1.0)});
        double lhs = (1 - t) * convexity_sum(a, 0.0, H).value + t * convexity_sum(b, 1.0, H).value;
        double want = (1 - t) * entropy_U(mu0, H) + t * entropy_U(mu1, H);
        EXPECT_NEAR(lhs, want, 1e-13) << t;
    }
}

TEST(ConvexitySum, CountsTinyDensities) {
    auto H = DCFunction::renyi(2);
    std::vector<ConvexityTerm> terms = {{0.5, 1e-13, 1.0, Extended(1.0), Extended(1.0)}, {0.5, 1.0, 1.0, Extended(1.0), Extended(1.0)}};
    EXPECT_EQ(convexity_sum(terms, 0.5, H).tiny_density_atoms, 1);
}

TEST(ConvexityRhs, FlatTranslateReducesToTheEntropy) {
    auto E = ManifoldModel::euclidean(2);
    auto rho = [](const Vec& p) { return 1 + 0.5 * p[0] * p[1]; };
    auto mu0 = grid_density(6, rho), mu1 = grid_density(6, rho, v2(0.4, 0.2));
    auto pi = solve_ot(E, mu0.measure, mu1.measure);
    auto H = DCFunction::renyi(2);
    for (double t : {0.25, 0.5, 0.75})
        EXPECT_NEAR(convexity_rhs(E, mu0, mu1, pi, 0.0, t, H), entropy_U(mu0, H), 1e-12);
}

TEST(ConvexityRhs, NonincreasingInKappa) {
    auto S = ManifoldModel::sphere(2);
    auto disc = [&](const Vec& c) {
        auto g = discretize(S, Region::ball(S, c, 0.3), 8);
        std::vector<double> rho(g.points.size(), 1.0);
        return DensityMeasure::from_cells(g.points, g.cell_mass, rho);
    };
    auto mu0 = disc(v3(std::sin(0.8), 0, std::cos(0.8))), mu1 = disc(v3(0, std::sin(1.2), std::cos(1.2)));
    auto pi = solve_ot(S, mu0.measure, mu1.measure);
    auto H = DCFunction::renyi(2);
    double prev = INFINITY;
    for (double k : {-1.0, 0.0, 0.5, 1.0}) {
        double r = convexity_rhs(S, mu0, mu1, pi, k, 0.5, H);
        EXPECT_LE(r, prev + 1e-12) << k;
        prev = r;
    }
}

TEST(FisherInformation, ConstantDensityIsZero) {
    auto S = ManifoldModel::sphere(2).normalized();
    auto one = ScalarField::constant(1.0);
    AxialPlan plan(S, one, one, 64);
    EXPECT_NEAR(fisher_information(plan.source(), S), 0.0, 1e-14);
    DensityMeasure no_field = grid_density(4, [](const Vec&) { return 1.0; });
    EXPECT_THROW(fisher_information(no_field, ManifoldModel::euclidean(2)), ConfigurationError);
}

TEST(FisherInformation, ZonalDensityMatchesQuadrature) {
    // ρ = 1 + z/2 on the normalized unit sphere: |∇ρ| = sin θ / 2, dm = sin θ dθ / 2 after the azimuth
    auto S = ManifoldModel::sphere(2).normalized();
    auto rho = ScalarField::linear(v3(0, 0, 0.5), 1.0);
    auto integrand = [](double th) {
        double r = 1 + 0.5 * std::cos(th);
        return 0.25 / (r * r) * 0.25 * sqr(std::sin(th)) * 0.5 * std::sin(th);
    };
    double oracle = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, kPi, 10, 1e-14);
    AxialPlan plan(S, rho, rho, 2000);
    EXPECT_NEAR(fisher_information(plan.source(), S), oracle, 1e-5 * oracle);
}
