// Discrete optimal transport against brute-force and one-dimensional oracles.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include <twisted/discrete_ot.hpp>

using namespace twisted;

namespace {

Vec v1(double a) { return (Vec(1) << a).finished(); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

std::vector<Vec> line_points(std::initializer_list<double> xs) {
    std::vector<Vec> out;
    for (double x : xs) out.push_back(v1(x));
    return out;
}

// Uniform n-to-n optimum is attained at a permutation.
double brute_force_cost(const ManifoldModel& m, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    const int n = int(mu.size());
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0;
        for (int i = 0; i < n; ++i) c += transport_cost(m, mu.points[i], nu.points[p[i]]);
        best = std::min(best, c / n);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

// Quantile coupling on the line: optimal for any strictly convex cost of x - y.
double quantile_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    auto order = [](const DiscreteMeasure& d) {
        std::vector<int> o(d.size());
        std::iota(o.begin(), o.end(), 0);
        std::sort(o.begin(), o.end(), [&](int a, int b) { return d.points[a][0] < d.points[b][0]; });
        return o;
    };
    auto oa = order(mu), ob = order(nu);
    std::vector<double> a(oa.size()), b(ob.size());
    for (std::size_t k = 0; k < oa.size(); ++k) a[k] = mu.mass[oa[k]];
    for (std::size_t k = 0; k < ob.size(); ++k) b[k] = nu.mass[ob[k]];
    double cost = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double w = std::min(a[i], b[j]);
        cost += w * 0.5 * sqr(mu.points[oa[i]][0] - nu.points[ob[j]][0]);
        a[i] -= w;
        b[j] -= w;
        if (a[i] <= 1e-15) ++i;
        if (j < b.size() && b[j] <= 1e-15) ++j;
    }
    return cost;
}

std::vector<double> random_masses(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.1, 1.0);
    std::vector<double> w(n);
    double s = 0;
    for (auto& x : w) s += (x = U(rng));
    for (auto& x : w) x /= s;
    // exact unit total for validate()
    double r = 1.0;
    for (std::size_t k = 0; k + 1 < n; ++k) r -= w[k];
    w.back() = r;
    return w;
}

DiscreteMeasure random_measure(const ManifoldModel& m, std::size_t n, std::mt19937_64& rng) {
    std::vector<Vec> pts;
    for (std::size_t k = 0; k < n; ++k) pts.push_back(m.geometry().sample_point(rng));
    return {pts, random_masses(n, rng), std::nullopt};
}

} // namespace

TEST(SolveOt, TwoPointExample) {
    auto L = ManifoldModel::euclidean(1);
    auto mu = DiscreteMeasure::uniform(line_points({0, 1}));
    auto nu = DiscreteMeasure::uniform(line_points({2, 3}));
    auto pi = solve_ot(L, mu, nu);
    // monotone pairing: Σ d² = 8 over two atoms of mass 1/2, halved
    EXPECT_NEAR(pi.cost, 2.0, 1e-14);
    EXPECT_NEAR(wasserstein2(L, mu, nu), 2.0, 1e-14);
    for (auto& e : pi.support) EXPECT_EQ(e.i, e.j);
    // crossed pairing costs (9 + 1)/4
    EXPECT_GT(0.25 * (9 + 1), pi.cost);
}

TEST(SolveOt, DiracsAndIdentity) {
    auto S = ManifoldModel::sphere(2);
    Vec x = (Vec(3) << 0, 0, 1).finished(), y = (Vec(3) << 1, 0, 0).finished();
    EXPECT_NEAR(wasserstein2(S, DiscreteMeasure::dirac(x), DiscreteMeasure::dirac(y)), kPi / 2, 1e-14);

    std::mt19937_64 rng(5);
    auto mu = random_measure(S, 12, rng);
    auto pi = solve_ot(S, mu, mu);
    EXPECT_NEAR(pi.cost, 0.0, 1e-15);
    for (auto& e : pi.support) EXPECT_EQ(e.i, e.j);
}

TEST(SolveOt, ExhaustiveOnTheLineAndCircle) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-2, 2), C(0, 3);
    auto L = ManifoldModel::euclidean(1);
    auto circle = ManifoldModel::circle(3.0);
    for (int n = 1; n <= 8; ++n)
        for (int rep = 0; rep < 6; ++rep) {
            std::vector<Vec> a, b, ca, cb;
            for (int k = 0; k < n; ++k) {
                a.push_back(v1(U(rng)));
                b.push_back(v1(U(rng)));
                ca.push_back(v1(C(rng)));
                cb.push_back(v1(C(rng)));
            }
            auto mu = DiscreteMeasure::uniform(a), nu = DiscreteMeasure::uniform(b);
            EXPECT_NEAR(solve_ot(L, mu, nu).cost, brute_force_cost(L, mu, nu), 1e-12) << n;
            auto cmu = DiscreteMeasure::uniform(ca), cnu = DiscreteMeasure::uniform(cb);
            EXPECT_NEAR(solve_ot(circle, cmu, cnu).cost, brute_force_cost(circle, cmu, cnu), 1e-12) << n;
        }
}

TEST(SolveOt, ExhaustiveOnTheSphere) {
    std::mt19937_64 rng(12);
    auto S = ManifoldModel::sphere(2);
    for (int n = 2; n <= 7; ++n) {
        std::vector<Vec> a, b;
        for (int k = 0; k < n; ++k) {
            a.push_back(S.geometry().sample_point(rng));
            b.push_back(S.geometry().sample_point(rng));
        }
        auto mu = DiscreteMeasure::uniform(a), nu = DiscreteMeasure::uniform(b);
        EXPECT_NEAR(solve_ot(S, mu, nu).cost, brute_force_cost(S, mu, nu), 1e-12) << n;
    }
}

TEST(SolveOt, QuantileCouplingWithUnequalMasses) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> N(0, 1);
    auto L = ManifoldModel::euclidean(1);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t na = 1 + rng() % 10, nb = 1 + rng() % 10;
        std::vector<Vec> a, b;
        for (std::size_t k = 0; k < na; ++k) a.push_back(v1(N(rng)));
        for (std::size_t k = 0; k < nb; ++k) b.push_back(v1(N(rng) + 1));
        DiscreteMeasure mu{a, random_masses(na, rng), std::nullopt}, nu{b, random_masses(nb, rng), std::nullopt};
        EXPECT_NEAR(solve_ot(L, mu, nu).cost, quantile_cost(mu, nu), 1e-12);
    }
}

TEST(SolveOt, MarginalsAndCostOnRandomInstances) {
    std::mt19937_64 rng(17);
    std::vector<ManifoldModel> models = {ManifoldModel::sphere(2), ManifoldModel::euclidean(2), ManifoldModel::flat_torus({2.0, 3.0}),
                                         ManifoldModel::hyperbolic(2)};
    for (auto& m : models)
        for (std::size_t n : {3, 17, 64, 150}) {
            auto mu = random_measure(m, n, rng), nu = random_measure(m, n + rng() % 7, rng);
            auto pi = solve_ot(m, mu, nu);
            EXPECT_LE(marginal_error(pi, mu, nu), 1e-10) << to_string(m.kind()) << " " << n;
            EXPECT_NEAR(recompute_cost(m, pi, mu, nu), pi.cost, 1e-12 * (1 + pi.cost));
            // a basic solution has at most a + b - 1 positive entries
            EXPECT_LE(pi.support.size(), mu.size() + nu.size() - 1);
            for (auto& e : pi.support) EXPECT_GT(e.mass, 0.0);
        }
}

TEST(SolveOt, NoCheaperProductOrGreedyCoupling) {
    std::mt19937_64 rng(19);
    auto S = ManifoldModel::sphere(2);
    for (int rep = 0; rep < 10; ++rep) {
        auto mu = random_measure(S, 20, rng), nu = random_measure(S, 25, rng);
        double opt = solve_ot(S, mu, nu).cost;
        double product = 0;
        for (std::size_t i = 0; i < mu.size(); ++i)
            for (std::size_t j = 0; j < nu.size(); ++j) product += mu.mass[i] * nu.mass[j] * transport_cost(S, mu.points[i], nu.points[j]);
        EXPECT_LE(opt, product + 1e-14);
    }
}

TEST(Wasserstein, TriangleInequalityAndSymmetry) {
    std::mt19937_64 rng(23);
    auto S = ManifoldModel::sphere(2);
    for (int rep = 0; rep < 10; ++rep) {
        auto a = random_measure(S, 15, rng), b = random_measure(S, 11, rng), c = random_measure(S, 9, rng);
        double ab = wasserstein2(S, a, b), bc = wasserstein2(S, b, c), ac = wasserstein2(S, a, c);
        EXPECT_LE(ac, ab + bc + 1e-12);
        EXPECT_NEAR(ab, wasserstein2(S, b, a), 1e-12);
    }
}

TEST(Interpolation, EndpointsAndMidpointOfDiracs) {
    auto E = ManifoldModel::euclidean(2);
    auto mu = DiscreteMeasure::dirac(v2(0, 0)), nu = DiscreteMeasure::dirac(v2(2, 0));
    auto pi = solve_ot(E, mu, nu);
    auto half = displacement_interpolate(E, mu, nu, pi, 0.5);
    ASSERT_EQ(half.size(), 1u);
    EXPECT_NEAR((half.points[0] - v2(1, 0)).norm(), 0.0, 1e-15);
    EXPECT_EQ(displacement_interpolate(E, mu, nu, pi, 0.0).points[0], mu.points[0]);
    EXPECT_EQ(displacement_interpolate(E, mu, nu, pi, 1.0).points[0], nu.points[0]);
    EXPECT_THROW(displacement_interpolate(E, mu, nu, pi, 1.5), InputDomainError);
}

TEST(Interpolation, IsAConstantSpeedGeodesic) {
    std::mt19937_64 rng(29);
    auto S = ManifoldModel::sphere(2);
    for (int rep = 0; rep < 6; ++rep) {
        // concentrated measures keep every pair away from the cut locus
        Vec c0 = S.geometry().sample_point(rng), c1 = S.geometry().sample_point(rng);
        if (S.geometry().distance(c0, c1) > 2.0) continue;
        auto cluster = [&](const Vec& c) {
            std::vector<Vec> pts;
            for (int k = 0; k < 10; ++k) pts.push_back(S.geometry().exp(c, 0.3 * S.geometry().sample_unit_tangent(c, rng) * (k / 10.0)).point);
            return DiscreteMeasure{pts, random_masses(10, rng), std::nullopt};
        };
        auto mu = cluster(c0), nu = cluster(c1);
        auto pi = solve_ot(S, mu, nu);
        double w = std::sqrt(2 * pi.cost);
        for (double t : {0.25, 0.5, 0.8}) {
            auto mt = displacement_interpolate(S, mu, nu, pi, t);
            EXPECT_NEAR(std::abs(mt.total() - 1.0), 0.0, 1e-12);
            EXPECT_NEAR(wasserstein2(S, mu, mt), t * w, 1e-6 * w);
            EXPECT_NEAR(wasserstein2(S, mt, nu), (1 - t) * w, 1e-6 * w);
        }
    }
}

TEST(MidpointSet, LineExampleMergesDuplicates) {
    auto L = ManifoldModel::euclidean(1);
    auto Z = midpoint_set(L, line_points({0, 1}), line_points({2, 3}), 0.5);
    std::vector<double> z;
    for (auto& p : Z) z.push_back(p[0]);
    std::sort(z.begin(), z.end());
    ASSERT_EQ(z.size(), 3u);
    EXPECT_DOUBLE_EQ(z[0], 1.0);
    EXPECT_DOUBLE_EQ(z[1], 1.5);
    EXPECT_DOUBLE_EQ(z[2], 2.0);
    EXPECT_EQ(midpoint_set(L, line_points({0, 1}), line_points({2, 3}), 0.0).size(), 2u);
}

TEST(MidpointSet, SquaresHaveTheMinkowskiMidpointArea) {
    // Z_{1/2}([0,1]², [0,2]²) = [0,1.5]²
    auto E = ManifoldModel::euclidean(2);
    double prev = std::numeric_limits<double>::infinity();
    for (int cells : {8, 16, 32}) {
        auto X = discretize(E, Region::box(v2(0, 0), v2(1, 1)), cells);
        auto Y = discretize(E, Region::box(v2(0, 0), v2(2, 2)), cells);
        EXPECT_NEAR(X.mass(), 1.0, 1e-12);
        EXPECT_NEAR(Y.mass(), 4.0, 1e-12);
        double err = std::abs(midpoint_set_measure(E, X, Y, 0.5).measure - 2.25);
        EXPECT_LE(err, prev + 1e-12);
        prev = err;
    }
    EXPECT_LE(prev, 2e-2);
}

TEST(Regions, SphereGridMassAndBall) {
    auto S = ManifoldModel::sphere(2);
    auto axes = S.geometry().chart_axes();
    Vec lo(2), hi(2);
    for (int k = 0; k < 2; ++k) {
        lo[k] = axes[k].lo;
        hi[k] = axes[k].hi;
    }
    EXPECT_NEAR(discretize(S, Region::box(lo, hi), 64).mass(), 4 * kPi, 5e-3);
    Vec north = (Vec(3) << 0, 0, 1).finished();
    auto ball = discretize(S, Region::ball(S, north, 0.5), 48);
    // cap area 2π(1 - cos r)
    EXPECT_NEAR(ball.mass(), 2 * kPi * (1 - std::cos(0.5)), 3e-2);
    for (auto& p : ball.points) EXPECT_LT(S.geometry().distance(north, p), 0.5);
}

TEST(Measures, CsvAndJsonRoundTrip) {
    std::mt19937_64 rng(31);
    auto S = ManifoldModel::sphere(2);
    auto mu = random_measure(S, 7, rng);
    auto back = measure_from_csv("# header comment\n" + to_csv(mu));
    ASSERT_EQ(back.size(), mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_EQ(back.points[i], mu.points[i]);
        EXPECT_EQ(back.mass[i], mu.mass[i]);
    }
    mu.rho = std::vector<double>(7, 0.5);
    auto j = measure_from_json(to_json(mu));
    EXPECT_EQ(j.points, mu.points);
    EXPECT_EQ(j.mass, mu.mass);
    ASSERT_TRUE(j.rho.has_value());
    EXPECT_EQ(*j.rho, *mu.rho);
    EXPECT_THROW(measure_from_csv("1,2,0.5\n1,0.5\n"), InputDomainError);
}

TEST(Measures, ValidationAndCap) {
    auto E = ManifoldModel::euclidean(2);
    DiscreteMeasure bad{{v2(0, 0), v2(1, 0)}, {0.5, 0.6}, std::nullopt};
    EXPECT_THROW(bad.validate(E), InputDomainError);
    DiscreteMeasure neg{{v2(0, 0), v2(1, 0)}, {1.5, -0.5}, std::nullopt};
    EXPECT_THROW(neg.validate(E), InputDomainError);
    auto S = ManifoldModel::sphere(2);
    EXPECT_THROW(DiscreteMeasure::dirac(v2(0, 1)).validate(S), InputDomainError);
    EXPECT_THROW(DiscreteMeasure::dirac((Vec(3) << 0, 0, 2).finished()).validate(S), InputDomainError);

    std::vector<Vec> five;
    for (int k = 0; k < 5; ++k) five.push_back(v2(k, 0));
    auto mu = DiscreteMeasure::uniform(five);
    EXPECT_THROW(solve_ot(E, mu, mu, OtOptions{4}), ConfigurationError);
    EXPECT_NO_THROW(solve_ot(E, mu, mu, OtOptions{5}));
}
