// Transport rays: Jacobi propagation, Riccati inequalities, concavity lemmas
// and the Jacobian inequality.

#include <cmath>
#include <optional>
#include <random>

#include <gtest/gtest.h>

#include <twisted/jacobi_riccati.hpp>

using namespace twisted;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
Vec v3(double a, double b, double c) { return (Vec(3) << a, b, c).finished(); }

Mat diag(std::initializer_list<double> d) {
    Vec v(static_cast<int>(d.size()));
    int i = 0;
    for (double x : d) v[i++] = x;
    return v.asDiagonal();
}

// Random potential at x: gradient of length <= len, symmetric Hessian with
// entries in [-h, h].
PotentialSpec random_potential(const ManifoldModel& m, const Vec& x, std::mt19937_64& rng, double len, double h) {
    std::uniform_real_distribution<double> U(-1, 1);
    const auto& g = m.geometry();
    const int n = m.dim();
    Vec dir = g.sample_unit_tangent(x, rng);
    Mat A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = h * U(rng);
    return {len * std::abs(U(rng)) * dir, 0.5 * (A + A.transpose())};
}

// Rays through a focal point inside [0,1] are rejected; callers skip them.
std::optional<TransportRay> try_ray(const ManifoldModel& m, const Vec& x, const PotentialSpec& phi) {
    try {
        return propagate_ray(m, x, phi);
    } catch (const RejectedRayError&) {
        return std::nullopt;
    }
}

} // namespace

TEST(Propagate, FlatDeterminantIsProductOfLinearFactors) {
    auto E = ManifoldModel::euclidean(3);
    Mat H = diag({0.4, -1.1, 0.7});
    auto ray = propagate_ray(E, v3(0.1, 0.2, 0.3), {v3(0.2, -0.5, 0.1), H});
    for (std::size_t k = 0; k < ray.s.t.size(); ++k) {
        double t = ray.s.t[k];
        double want = (1 - 0.4 * t) * (1 + 1.1 * t) * (1 - 0.7 * t);
        EXPECT_NEAR(ray.s.det[k], want, 1e-10 * want);
    }
}

TEST(Propagate, IdentityRay) {
    auto E = ManifoldModel::euclidean(2);
    auto ray = propagate_ray(E, v2(0.3, -0.2), {Vec::Zero(2), Mat::Zero(2, 2)});
    for (std::size_t k = 0; k < ray.s.t.size(); ++k) {
        EXPECT_NEAR(ray.s.J[k], 1.0, 1e-14);
        EXPECT_NEAR(ray.s.D[k], 1.0, 1e-14);
        EXPECT_NEAR(ray.s.Dbar[k], 1.0, 1e-14);
    }
}

TEST(Propagate, SphereIsotropicRayMatchesSineJacobiFields) {
    auto S = ManifoldModel::sphere(2);
    Vec x = v3(0, 0, 1);
    // det stays positive on [0,1] for these pairs
    for (double d : {0.5, 1.0, 1.2})
        for (double lam : {-0.5, 0.0, 0.2}) {
            auto ray = propagate_ray(S, x, {v3(-d, 0, 0), lam * Mat::Identity(2, 2)});
            EXPECT_NEAR(ray.length(), d, 1e-14);
            for (std::size_t k = 0; k < ray.s.t.size(); ++k) {
                double t = ray.s.t[k];
                // along-ray factor 1 - tλ; transverse y'' + d² y = 0, y(0) = 1, y'(0) = -λ
                double want = (1 - t * lam) * (std::cos(d * t) - lam * std::sin(d * t) / d);
                EXPECT_NEAR(ray.s.det[k], want, 1e-8) << d << " " << lam << " " << t;
            }
        }
}

TEST(Propagate, HyperbolicIsotropicRayMatchesSinhJacobiFields) {
    auto H = ManifoldModel::hyperbolic(3);
    Vec x = H.geometry().base_point();
    const double d = 1.2, lam = 0.2;
    Vec grad = Vec::Zero(4);
    grad[1] = -d;
    auto ray = propagate_ray(H, x, {grad, lam * Mat::Identity(3, 3)});
    for (std::size_t k = 0; k < ray.s.t.size(); ++k) {
        double t = ray.s.t[k];
        double y = std::cosh(d * t) - lam * std::sinh(d * t) / d;
        EXPECT_NEAR(ray.s.det[k], (1 - t * lam) * y * y, 1e-8);
    }
}

TEST(Propagate, InitialValuesAreExact) {
    std::mt19937_64 rng(3);
    auto m = ManifoldModel::sphere(2).with_weight(ScalarField::linear(v3(0.3, 0.1, -0.2)));
    Vec x = m.geometry().sample_point(rng);
    auto ray = propagate_ray(m, x, random_potential(m, x, rng, 1.0, 0.3));
    EXPECT_EQ(ray.s.h[0], 0.0);
    EXPECT_EQ(ray.s.l[0], 0.0);
    EXPECT_EQ(ray.s.D[0], 1.0);
    EXPECT_EQ(ray.s.Dbar[0], 1.0);
    EXPECT_EQ(ray.s.J[0], 1.0);
}

TEST(Propagate, FactorizationOfTheWeightedJacobian) {
    std::mt19937_64 rng(4);
    std::vector<ManifoldModel> models = {
        ManifoldModel::sphere(2).with_weight(ScalarField::bump(0.3, v3(0, 0, 1), 0.5)),
        ManifoldModel::sphere(3).with_weight(ScalarField::linear((Vec(4) << 0.2, -0.1, 0.3, 0.1).finished())),
        ManifoldModel::euclidean(2).with_weight(ScalarField::radial_quadratic(0.8, Vec::Zero(2))),
        ManifoldModel::hyperbolic(2).with_weight(ScalarField::linear(v3(0, 0.3, -0.2))),
        ManifoldModel::spheroid(1.0, 0.7).with_weight(ScalarField::linear(v3(0.1, 0.2, 0.3)))};
    for (auto& m : models) {
        const int n = m.dim();
        for (int k = 0; k < 3; ++k) {
            Vec x = m.geometry().sample_point(rng);
            auto opt = try_ray(m, x, random_potential(m, x, rng, 0.8, 0.3));
            if (!opt) continue;
            const auto& ray = *opt;
            for (std::size_t i = 0; i < ray.s.t.size(); ++i) {
                double f = std::pow(ray.s.D[i], n - 1) * ray.s.Dbar[i];
                EXPECT_NEAR(ray.s.J[i], f, 1e-8 * ray.s.J[i]) << to_string(m.kind());
                double direct = std::exp(-ray.s.f[i] + ray.s.f[0]) * ray.s.det[i];
                EXPECT_NEAR(ray.s.J[i], direct, 1e-8 * direct);
            }
        }
    }
}

TEST(Propagate, NonPositiveDeterminantIsRejected) {
    auto E = ManifoldModel::euclidean(2);
    // det = 1 - 3t crosses zero at t = 1/3
    EXPECT_THROW(propagate_ray(E, v2(0, 0), {v2(0.1, 0), diag({3.0, 0.0})}), RejectedRayError);
    // focal point on the sphere: transverse cos t - 2 sin t vanishes before t = 1
    EXPECT_THROW(propagate_ray(ManifoldModel::sphere(2), v3(0, 0, 1), {v3(-1, 0, 0), 2.0 * Mat::Identity(2, 2)}), RejectedRayError);
    auto S = ManifoldModel::sphere(2);
    EXPECT_THROW(propagate_ray(S, v3(0, 0, 1), {v3(-3.2, 0, 0), Mat::Zero(2, 2)}), DegeneratePairError);
}

TEST(RiccatiUnweighted, IsotropicFlatRayIsEquality) {
    auto E = ManifoldModel::euclidean(2);
    for (double lam : {-0.5, 0.3, 0.6}) {
        auto ray = propagate_ray(E, v2(0, 0), {v2(0.4, 0.3), lam * Mat::Identity(2, 2)});
        auto r = check_riccati_unweighted(ray);
        EXPECT_EQ(r.status, Status::pass);
        EXPECT_LE(std::abs(r.margin), 1e-9) << lam;
    }
}

TEST(RiccatiUnweighted, PlanarRayHasOneTransverseDirection) {
    // n = 2: h is the log of a 1x1 determinant, so the inequality saturates
    auto E = ManifoldModel::euclidean(2);
    auto ray = propagate_ray(E, v2(0, 0), {v2(0.0, -0.5), diag({0.5, 0.0})});
    auto r = check_riccati_unweighted(ray);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_LE(std::abs(r.margin), 1e-9);
}

TEST(RiccatiUnweighted, AnisotropicTransverseHessianIsStrict) {
    auto E = ManifoldModel::euclidean(3);
    auto ray = propagate_ray(E, v3(0, 0, 0), {v3(0, 0, -0.5), diag({0.5, 0.0, 0.0})});
    auto r = check_riccati_unweighted(ray);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_GT(r.margin, 1e-3);
}

TEST(RiccatiUnweighted, SphereRays) {
    std::mt19937_64 rng(7);
    auto S = ManifoldModel::sphere(2);
    int checked = 0;
    for (int k = 0; k < 10; ++k) {
        Vec x = S.geometry().sample_point(rng);
        auto ray = try_ray(S, x, random_potential(S, x, rng, 1.5, 0.4));
        if (!ray) continue;
        ++checked;
        auto r = check_riccati_unweighted(*ray);
        EXPECT_GE(r.margin, -1e-5);
        EXPECT_EQ(r.status, Status::pass);
    }
    EXPECT_GE(checked, 5);
}

TEST(RiccatiUnweighted, CoarseGridIsAConfigurationError) {
    auto E = ManifoldModel::euclidean(2);
    auto ray = propagate_ray(E, v2(0, 0), {v2(0.1, 0), Mat::Zero(2, 2)}, 17);
    EXPECT_THROW(check_riccati_unweighted(ray), ConfigurationError);
    EXPECT_THROW(check_riccati_weighted(ray), ConfigurationError);
}

TEST(RiccatiWeighted, ZeroWeightReducesToUnweighted) {
    std::mt19937_64 rng(9);
    for (auto& m : {ManifoldModel::sphere(2), ManifoldModel::hyperbolic(3), ManifoldModel::euclidean(2)}) {
        Vec x = m.geometry().sample_point(rng);
        auto ray = try_ray(m, x, random_potential(m, x, rng, 1.0, 0.3));
        if (!ray) continue;
        EXPECT_NEAR(check_riccati_weighted(*ray).margin, check_riccati_unweighted(*ray).margin, 1e-9);
    }
}

TEST(RiccatiWeighted, WeightedFlatRays) {
    auto lin = ManifoldModel::euclidean(2).with_weight(ScalarField::linear(v2(0.7, -0.4)));
    auto r1 = check_riccati_weighted(propagate_ray(lin, v2(0.1, 0.1), {v2(0.5, 0.2), 0.3 * Mat::Identity(2, 2)}));
    EXPECT_GE(r1.margin, -1e-5);
    auto quad = ManifoldModel::euclidean(2).with_weight(ScalarField::radial_quadratic(1.0, Vec::Zero(2)));
    auto r2 = check_riccati_weighted(propagate_ray(quad, v2(0.2, -0.1), {v2(0.1, 0.05), diag({0.2, -0.1})}));
    EXPECT_GE(r2.margin, -1e-5);
}

TEST(ComparisonLemma, ExtremalSolutionIsEquality) {
    const int N = 129;
    for (double kappa : {0.5, 1.0}) {
        double d = 1.0, a = 2.0;
        KappaProfile K(kappa);
        std::vector<double> D(N);
        for (int i = 0; i < N; ++i) D[i] = K.s(a * i / (N - 1) * d) / d;
        auto r = check_comparison_lemma(D, a, kappa, d);
        EXPECT_EQ(r.status, Status::pass);
        EXPECT_NEAR(r.margin, 0.0, 1e-12);
    }
}

TEST(ComparisonLemma, ConstantAndSine) {
    std::vector<double> one(65, 1.0);
    auto r = check_comparison_lemma(one, 1.0, 0.0, 1.0);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_NEAR(r.margin, 0.0, 1e-15);

    const int N = 129;
    std::vector<double> s(N);
    for (int i = 0; i < N; ++i) s[i] = std::sin(kPi / 2 * i / (N - 1));
    auto q = check_comparison_lemma(s, kPi / 2, 1.0, 1.0);
    EXPECT_EQ(q.status, Status::pass);
    EXPECT_GE(q.margin, -1e-12);
}

TEST(ComparisonLemma, StrictlyConcaveProfileHasPositiveMargin) {
    const int N = 129;
    std::vector<double> D(N);
    for (int i = 0; i < N; ++i) {
        double s = double(i) / (N - 1);
        D[i] = 1 + s - s * s;
    }
    auto r = check_comparison_lemma(D, 1.0, 0.0, 1.0);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_GT(r.margin, 0.0);
}

TEST(ComparisonLemma, HypothesesAndPremise) {
    std::vector<double> one(65, 1.0);
    EXPECT_EQ(check_comparison_lemma(one, 2.0, 3.0, 1.0).status, Status::hypothesis_unmet);
    std::vector<double> convex(65);
    for (int i = 0; i < 65; ++i) convex[i] = sqr(i / 64.0);
    EXPECT_EQ(check_comparison_lemma(convex, 1.0, 0.0, 1.0).status, Status::not_applicable);
    EXPECT_THROW(check_comparison_lemma(std::vector<double>(9, 1.0), 1.0, 0.0, 1.0), ConfigurationError);
}

TEST(DConcavity, FlatAndSphereAndWeighted) {
    auto E = ManifoldModel::euclidean(2);
    auto r1 = check_D_concavity(propagate_ray(E, v2(0, 0), {v2(0.3, -0.4), diag({0.5, -0.8})}), 0.0);
    EXPECT_EQ(r1.status, Status::pass);
    EXPECT_GE(r1.margin, -1e-12);

    std::mt19937_64 rng(15);
    auto S = ManifoldModel::sphere(2);
    int checked = 0;
    for (int k = 0; k < 8; ++k) {
        Vec x = S.geometry().sample_point(rng);
        auto ray = try_ray(S, x, random_potential(S, x, rng, 1.5, 0.4));
        if (!ray) continue;
        ++checked;
        auto r = check_D_concavity(*ray, 1.0);
        EXPECT_EQ(r.status, Status::pass);
        EXPECT_GE(r.margin, -1e-6);
    }
    EXPECT_GE(checked, 4);
    auto lin = ManifoldModel::euclidean(2).with_weight(ScalarField::linear(v2(0.7, -0.4)));
    auto r3 = check_D_concavity(propagate_ray(lin, v2(0, 0), {v2(0.5, 0.5), diag({0.3, -0.2})}), 0.0);
    EXPECT_EQ(r3.status, Status::pass);
    EXPECT_GE(r3.margin, -1e-6);
}

TEST(DConcavity, CurvatureBoundMustHoldAlongTheRay) {
    auto S = ManifoldModel::sphere(2);
    auto ray = propagate_ray(S, v3(0, 0, 1), {v3(-1, 0, 0), Mat::Zero(2, 2)});
    EXPECT_EQ(check_D_concavity(ray, 1.5).status, Status::hypothesis_unmet);
    EXPECT_EQ(check_jacobian_inequality(ray, 1.5).status, Status::hypothesis_unmet);
}

TEST(DbarConcavity, ZeroAndDiagonalPotentialsAreEqualities) {
    auto E = ManifoldModel::euclidean(2);
    auto zero = propagate_ray(E, v2(0, 0), {v2(0.5, 0), Mat::Zero(2, 2)});
    EXPECT_NEAR(check_Dbar_concavity(zero).margin, 0.0, 1e-14);

    const double lam = 0.6;
    auto ray = propagate_ray(E, v2(0, 0), {v2(0, -0.5), diag({-0.4, lam})});
    for (std::size_t k = 0; k < ray.s.t.size(); ++k) EXPECT_NEAR(ray.s.Dbar[k], 1 - ray.s.t[k] * lam, 1e-10);
    auto r = check_Dbar_concavity(ray);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_LE(std::abs(r.margin), 1e-9);
}

TEST(DbarConcavity, SphereAndHyperbolicRays) {
    std::mt19937_64 rng(17);
    for (auto& m : {ManifoldModel::sphere(2), ManifoldModel::sphere(3), ManifoldModel::hyperbolic(2)}) {
        for (int k = 0; k < 4; ++k) {
            Vec x = m.geometry().sample_point(rng);
            auto ray = try_ray(m, x, random_potential(m, x, rng, 1.2, 0.4));
            if (!ray) continue;
            auto r = check_Dbar_concavity(*ray);
            EXPECT_GE(r.margin, -1e-6) << to_string(m.kind());
        }
    }
}

TEST(JacobianInequality, DiagonalFlatExample) {
    auto E = ManifoldModel::euclidean(2);
    auto ray = propagate_ray(E, v2(0, 0), {Vec::Zero(2), diag({0.0, -3.0})});
    EXPECT_NEAR(ray.s.det.back(), 4.0, 1e-12);
    EXPECT_NEAR(ray.s.J[64], 2.5, 1e-12);
    EXPECT_NEAR(std::sqrt(ray.s.J[64]), 1.5811388300841898, 1e-12);
    auto r = check_jacobian_inequality(ray, 0.0);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_GE(r.margin, 0.0);
}

TEST(JacobianInequality, HomothetyIsEquality) {
    auto E = ManifoldModel::euclidean(3);
    auto ray = propagate_ray(E, v3(0, 0, 0), {v3(0.2, 0.1, 0), -0.7 * Mat::Identity(3, 3)});
    auto r = check_jacobian_inequality(ray, 0.0);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_LE(std::abs(r.margin), 1e-9);
}

TEST(JacobianInequality, SphereRaysAtTheCurvatureBound) {
    std::mt19937_64 rng(19);
    auto S = ManifoldModel::sphere(2);
    int checked = 0;
    for (int k = 0; k < 10; ++k) {
        Vec x = S.geometry().sample_point(rng);
        auto ray = try_ray(S, x, random_potential(S, x, rng, 1.5, 0.4));
        if (!ray) continue;
        ++checked;
        auto r = check_jacobian_inequality(*ray, 1.0);
        EXPECT_EQ(r.status, Status::pass);
        EXPECT_GE(r.margin, -1e-6);
    }
    EXPECT_GE(checked, 5);
}

TEST(JacobianInequality, WeightedSphereAtAdmissibleKappa) {
    std::mt19937_64 rng(23);
    auto m = ManifoldModel::sphere(2).with_weight(ScalarField::bump(0.1, v3(0, 0, 1), 0.5));
    double kappa = admissible_kappa(m, 512, 3) * (1 - 1e-3);
    int checked = 0;
    for (int k = 0; k < 8; ++k) {
        Vec x = m.geometry().sample_point(rng);
        auto ray = try_ray(m, x, random_potential(m, x, rng, 1.2, 0.3));
        if (!ray) continue;
        auto r = check_jacobian_inequality(*ray, kappa);
        if (r.status == Status::hypothesis_unmet) continue;
        ++checked;
        EXPECT_EQ(r.status, Status::pass);
        EXPECT_GE(r.margin, -1e-6);
    }
    EXPECT_GE(checked, 4);
}
