#include "brt/field.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using namespace brt;

constexpr double kTight = 1e-12;

double smooth_bump(double u) {
    const double v = (u - 0.5) / 0.6;
    if (std::abs(v) >= 0.5) return 0.0;
    const double c = std::cos(pi * v);
    return c * c;
}

sigma_field smooth_sigma(double scale = 0.8) {
    return sigma_field::isotropic(
        [scale](point2 p) { return scale * smooth_bump(p.x1) * smooth_bump(p.x2); }, 0.2);
}

TEST(Sample, LinearReproduction) {
    const grid_function g =
        make_unit_grid(32, [](point2 p) { return 2.0 * p.x1 - 3.0 * p.x2 + 0.25; });
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (int i = 0; i < 500; ++i) {
        const point2 p{u(rng), u(rng)};
        EXPECT_NEAR(sample(g, p), 2.0 * p.x1 - 3.0 * p.x2 + 0.25, kTight);
    }
}

TEST(Sample, ZeroOutsideRimClampedInside) {
    const grid_function g = make_unit_grid(8, [](point2 p) { return p.x1 + p.x2; });
    EXPECT_EQ(sample(g, {-0.01, 0.5}), 0.0);
    EXPECT_EQ(sample(g, {0.5, 1.01}), 0.0);
    const double h = 1.0 / 8.0;
    EXPECT_NEAR(sample(g, {0.01, 0.5}), sample(g, {h / 2.0, 0.5}), kTight);
    EXPECT_NEAR(sample(g, {0.5, 0.999}), sample(g, {0.5, 1.0 - h / 2.0}), kTight);
}

TEST(LineIntegral, ConstantChord) {
    const grid_function g = make_unit_grid(16, [](point2) { return 1.0; });
    EXPECT_NEAR(line_integral(g, {0.0, 0.5}, {1.0, 0.5}), 1.0, kTight);
    EXPECT_NEAR(line_integral(g, {0.0, 0.25}, {0.75, 1.0}), 0.75 * std::sqrt(2.0), kTight);
}

TEST(LineIntegral, LinearChord) {
    const grid_function g = make_unit_grid(64, [](point2 p) { return p.x1; });
    EXPECT_NEAR(line_integral(g, {0.0, 0.5}, {1.0, 0.5}), 0.5, 1e-10);
}

TEST(LineIntegral, DiskIndicator) {
    const int n = 128;
    const grid_function g = make_unit_grid(n, [](point2 p) {
        return norm(p - point2{0.5, 0.5}) <= 0.25 ? 1.0 : 0.0;
    });
    EXPECT_NEAR(line_integral(g, {0.0, 0.5}, {1.0, 0.5}), 0.5, 2.0 / n);
}

TEST(LineIntegral, OutsideSegmentsVanish) {
    const grid_function g = make_unit_grid(8, [](point2) { return 1.0; });
    EXPECT_EQ(line_integral(g, {1.5, 0.0}, {1.5, 1.0}), 0.0);
    EXPECT_NEAR(line_integral(g, {-0.5, 0.5}, {0.5, 0.5}), 0.5, kTight);
}

TEST(SigmaField, BoxAttenuationProfile) {
    const sigma_field sigma = sigma_field::box(1.0, {0.25, 0.25}, {0.75, 0.75});
    const broken_ray r = trace_broken_ray({{0.0, 0.5}, 0.0}, access_set::full(), 0);
    const attenuation_profile a = make_attenuation(r, sigma);
    EXPECT_NEAR(a.at(0.5), 0.25, kTight);
    EXPECT_NEAR(a.at(1.0), 0.5, kTight);
    EXPECT_NEAR(weight_w(a, 0.5), std::exp(-0.25), kTight);
    EXPECT_NEAR(weight_w(a, 1.0), std::exp(-0.5), kTight);
}

TEST(SigmaField, LinearCoefficientIntegratesExactly) {
    const sigma_field sigma = sigma_field::isotropic([](point2 p) { return p.x1; }, 0.2);
    const broken_ray r = trace_broken_ray({{0.0, 0.5}, 0.0}, access_set::full(), 0);
    const attenuation_profile a = make_attenuation(r, sigma);
    EXPECT_NEAR(a.total(), 0.5, kTight);
    EXPECT_NEAR(a.at(0.25), 0.25 * 0.25 / 2.0, kTight);
}

TEST(SigmaField, MidpointErrorQuartersOnHalving) {
    const sigma_field sigma = sigma_field::isotropic(
        [](point2 p) { return std::sin(pi * p.x1); }, 0.2);
    const broken_ray r = trace_broken_ray({{0.0, 0.5}, 0.0}, access_set::full(), 0);
    const double exact = 2.0 / pi;
    const double e1 = std::abs(make_attenuation(r, sigma, 1.0 / 8.0).total() - exact);
    const double e2 = std::abs(make_attenuation(r, sigma, 1.0 / 16.0).total() - exact);
    EXPECT_GE(e1 / e2, 3.5);
}

TEST(SigmaField, MonotoneAndMultiplicative) {
    const sigma_field sigma = smooth_sigma();
    const broken_ray r = trace_broken_ray({{0.0, 0.25}, pi / 4.0}, access_set::opposite(), 3);
    const attenuation_profile a = make_attenuation(r, sigma);
    double prev_t = 0.0, prev_a = a.at(0.0);
    for (int i = 0; i <= 100; ++i) {
        const double t = r.total_length * i / 100.0;
        const double cur = a.at(t);
        // Between lattice points the partial-interval midpoint evaluation can
        // dip by O(h^2 |sigma'|), about 8e-6 here.
        EXPECT_GE(cur, prev_a - 1e-5);
        EXPECT_NEAR(weight_w(a, t), weight_w(a, prev_t) * std::exp(-(cur - prev_a)), kTight);
        prev_t = t;
        prev_a = cur;
    }
}

TEST(SigmaField, GridMarginValidation) {
    grid_function bad = make_unit_grid(32);
    bad.at(1, 16) = 0.5;
    EXPECT_THROW(sigma_field::from_grid(std::move(bad)), std::invalid_argument);

    grid_function good = make_unit_grid(32, [](point2 p) {
        return 0.5 * smooth_bump(p.x1) * smooth_bump(p.x2);
    });
    EXPECT_NO_THROW(sigma_field::from_grid(std::move(good)));
}

TEST(SupportRegion, Contains) {
    const support_region K{0.2};
    EXPECT_TRUE(K.contains({0.5, 0.5}));
    EXPECT_TRUE(K.contains({0.2, 0.8}));
    EXPECT_FALSE(K.contains({0.1, 0.5}));
    EXPECT_NEAR(K.boundary_distance(), 0.2, kTight);
}

struct ray_and_point {
    broken_ray ray;
    std::size_t j;
    double t;
    point2 x;
};

std::vector<ray_and_point> corner_free_samples(int count, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> us(0.0, 4.0);
    std::uniform_real_distribution<double> uphi(-1.4, 1.4);
    std::uniform_real_distribution<double> ut(0.05, 0.95);
    const access_set E = access_set::adjacent();
    std::vector<ray_and_point> out;
    while (static_cast<int>(out.size()) < count) {
        const double s = us(rng);
        if (!E.contains(s) || E.boundary_distance(s) < 1e-6) continue;
        const boundary_point bp = point_to_param(boundary_param(s));
        const double theta = wrap_angle(inward_normal_angle(bp.edge) + uphi(rng));
        const broken_ray r = trace_broken_ray({bp.p, theta}, E, 4);
        if (!r.regular || !r.corner_events.empty() || !r.near_corner_pairs.empty()) continue;
        ray_and_point rp;
        rp.t = ut(rng) * r.total_length;
        double acc = 0.0;
        std::size_t j = 0;
        while (j + 1 < r.segments.size() && acc + r.segments[j].length <= rp.t)
            acc += r.segments[j++].length;
        rp.j = j;
        rp.x = r.segments[j].entry + (rp.t - acc) * direction(r.segments[j].dir);
        rp.ray = r;
        out.push_back(std::move(rp));
    }
    return out;
}

TEST(WeightWReg, MatchesAccumulatedWeightOnRays) {
    const sigma_field sigma = smooth_sigma();
    for (const ray_and_point& rp : corner_free_samples(1000, 41)) {
        const attenuation_profile a = make_attenuation(rp.ray, sigma);
        const double w = weight_w(a, rp.t);
        const double wr = weight_w_reg(sigma, rp.x, rp.ray.segments[rp.j].dir, rp.ray.tiles,
                                       rp.j);
        EXPECT_NEAR(wr, w, 1e-8);
    }
}

TEST(WeightWReg, MatchesForGridCoefficient) {
    const sigma_field sigma = sigma_field::from_grid(make_unit_grid(64, [](point2 p) {
        return 0.6 * smooth_bump(p.x1) * smooth_bump(p.x2);
    }));
    for (const ray_and_point& rp : corner_free_samples(20, 43)) {
        const attenuation_profile a = make_attenuation(rp.ray, sigma);
        const double w = weight_w(a, rp.t);
        const double wr = weight_w_reg(sigma, rp.x, rp.ray.segments[rp.j].dir, rp.ray.tiles,
                                       rp.j);
        EXPECT_NEAR(wr, w, 1e-8);
    }
}

TEST(WeightWReg, BallisticIsBackwardAttenuation) {
    const sigma_field sigma = smooth_sigma();
    const broken_ray r = trace_broken_ray({{0.0, 0.5}, 0.0}, access_set::full(), 0);
    const attenuation_profile a = make_attenuation(r, sigma);
    const point2 x{0.6, 0.5};
    const double wr = weight_w_reg(sigma, x, 0.0, r.tiles, 0);
    EXPECT_NEAR(wr, weight_w(a, 0.6), 1e-10);
}

}  // namespace
