#include "doctest.h"

#include "cforge/conformal.hpp"
#include "cforge/error.hpp"
#include "cforge/quadrature.hpp"

#include <cmath>
#include <random>

using namespace cforge;

namespace {

const double kPi = std::acos(-1.0);
const cplx kI(0.0, 1.0);

Rational q(long p, long d = 1) {
    Rational r(p, d);
    r.canonicalize();
    return r;
}

// {x > 4, |y| < π/2} with the upper half narrowed to y < π/4 for 4 < x < 6.
RectilinearTract stepped_tract() {
    return RectilinearTract({{q(6), q(1, 2)}, {q(6), q(1, 4)}, {q(4), q(1, 4)}, {q(4), q(-1, 2)}});
}

// Reflection-symmetric: a neck |y| < π/4 for 4 < x < 6 opening to |y| < π/2.
RectilinearTract necked_tract() {
    return RectilinearTract(
        {{q(6), q(1, 2)}, {q(6), q(1, 4)}, {q(4), q(1, 4)}, {q(4), q(-1, 4)}, {q(6), q(-1, 4)}, {q(6), q(-1, 2)}});
}

// Oracle for the half-strip {x > 4, |y| < π/2}: sinh(z - 4) maps it onto H with F(∞) = ∞; the only
// automorphism of H then giving F(5) = 5 with F'(5) > 0 is multiplication by 5/sinh(1).
cplx strip_oracle(cplx z) { return 5.0 * std::sinh(z - 4.0) / std::sinh(1.0); }

std::vector<cplx> interior_samples(const RectilinearTract& t, double x_lo, double x_hi, int nx, int ny, double margin) {
    std::vector<cplx> out;
    const double y_lo = kPi * to_double(t.min_y()), y_hi = kPi * to_double(t.max_y());
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            cplx z(x_lo + (i + 0.5) * (x_hi - x_lo) / nx, y_lo + (j + 0.5) * (y_hi - y_lo) / ny);
            if (contains(t, z) && boundary_distance(t, z) > margin) out.push_back(z);
        }
    return out;
}

} // namespace

TEST_CASE("Gauss-Jacobi rules integrate polynomials against the weight exactly") {
    auto gl = gauss_legendre(8);
    double s = 0;
    for (int i = 0; i < 8; ++i) s += gl.weights[i] * std::pow(gl.nodes[i], 14);
    CHECK(s == doctest::Approx(2.0 / 15).epsilon(1e-14));
    auto gj = gauss_jacobi(8, 0.0, -0.5);
    double s0 = 0, s3 = 0;
    for (int i = 0; i < 8; ++i) {
        s0 += gj.weights[i];
        s3 += gj.weights[i] * std::pow(gj.nodes[i], 3);
    }
    CHECK(s0 == doctest::Approx(2 * std::sqrt(2.0)).epsilon(1e-14));
    CHECK(s3 == doctest::Approx(-0.72730983207759172).epsilon(1e-13));
    CHECK_THROWS_AS(gauss_jacobi(4, -1.0, 0.0), ParameterError);
    CHECK_THROWS_AS(gauss_jacobi(0, 0.0, 0.0), ParameterError);
}

TEST_CASE("half-plane hyperbolic metric") {
    CHECK(halfplane_distance(1.0, 1.0) == 0.0);
    CHECK(halfplane_distance(1.0, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(halfplane_distance(cplx(1, 3), cplx(2, -1)) == doctest::Approx(halfplane_distance(cplx(2, -1), cplx(1, 3))));
    CHECK(halfplane_density(cplx(4, 7)) == 0.25);
    CHECK_THROWS_AS(halfplane_distance(cplx(0, 1), 1.0), DomainError);
    auto F = right_half_plane_map(Normalization::fixed_point(1.0));
    CHECK_THROWS_AS(hyperbolic_distance(F, cplx(-1, 0), 1.0), DomainError);
}

TEST_CASE("normalized self-map of the half-plane is the identity") {
    auto F = right_half_plane_map(Normalization::fixed_point(1.0));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(0.01, 30), uy(-30, 30);
    for (int k = 0; k < 200; ++k) {
        cplx z(ux(rng), uy(rng));
        CHECK(std::abs(F(z) - z) < 1e-12 * (1 + std::abs(z)));
        CHECK(std::abs(F.derivative(z) - 1.0) < 1e-12);
        CHECK(std::abs(F.inverse(z) - z) < 1e-12 * (1 + std::abs(z)));
    }
    auto G = right_half_plane_map(Normalization::fixed_point(cplx(2, 3)));
    CHECK(std::abs(G(cplx(2, 3)) - cplx(2, 3)) < 1e-12);
    CHECK(std::abs(G(cplx(7, -1)) - cplx(7, -1)) < 1e-12);
}

TEST_CASE("closed-form half-strip matches the oracle") {
    auto F = half_strip_map(4, q(-1, 2).get_d(), 0.5, Normalization::fixed_point(5.0));
    const cplx v = F(cplx(6, 0.5));
    CHECK(v.real() == doctest::Approx(13.541806567045846).epsilon(1e-13));
    CHECK(v.imag() == doctest::Approx(7.673974062005904).epsilon(1e-13));
    for (double x : {4.5, 7.0, 15.0})
        for (double y : {-1.2, 0.0, 0.9}) {
            cplx z(x, y);
            CHECK(std::abs(F(z) - strip_oracle(z)) <= 1e-12 * std::abs(strip_oracle(z)));
            CHECK(std::abs(half_strip_closed_form(4.0, 5.0, z) - strip_oracle(z)) <= 1e-12 * std::abs(strip_oracle(z)));
        }
}

TEST_CASE("Schwarz-Christoffel half-strip agrees with the closed form to 1e-6 on Re <= 20") {
    auto t = half_strip(q(4), q(1, 2));
    auto F = map_to_halfplane(t, Normalization::fixed_point(5.0), 1e-6, 20.0);
    CHECK(F.accuracy().achieved <= 1e-6);
    CHECK(F.accuracy().backend == "schwarz-christoffel");
    double worst = 0;
    int n = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            cplx z(4.2 + 15.8 * (i + 0.5) / 10, kPi * (-0.45 + 0.9 * (j + 0.5) / 10));
            worst = std::max(worst, std::abs(F(z) - strip_oracle(z)));
            ++n;
        }
    CHECK(n == 100);
    CHECK(worst <= 1e-6);
    CHECK(std::abs(F(5.0) - 5.0) <= 1e-9);
    CHECK(std::abs(std::arg(F.derivative(5.0))) <= 1e-9);
}

TEST_CASE("Schwarz-Christoffel invariants on a stepped tract") {
    auto t = stepped_tract();
    REQUIRE(validate_tract(t).ok());
    auto F = map_to_halfplane(t, Normalization::fixed_point(7.0), 1e-6, 20.0);
    const double acc = std::max(F.accuracy().achieved, 1e-12);
    auto& sc = dynamic_cast<const SchwarzChristoffel&>(F.uniformizer());
    CHECK(sc.prevertices().size() == 4);
    CHECK(sc.vertex_error() < 1e-10);

    SUBCASE("normalization") {
        CHECK(std::abs(F(7.0) - 7.0) <= acc);
        CHECK(std::abs(std::arg(F.derivative(7.0))) <= 1e-8);
    }
    SUBCASE("round trip, images in H, Cauchy-Riemann") {
        for (const cplx& z : interior_samples(t, 4.05, 20, 16, 9, 1e-2)) {
            cplx f = F(z);
            CHECK(f.real() > 0);
            CHECK(std::abs(F.inverse(f) - z) <= 2 * acc / std::max(1e-300, std::abs(F.derivative(z))) + 1e-9);
            const double h = 1e-5;
            cplx dx = (F(z + h) - F(z - h)) / (2 * h);
            cplx dy = (F(z + kI * h) - F(z - kI * h)) / (2 * h);
            // Cauchy-Riemann: ∂F/∂y = i ∂F/∂x.
            CHECK(std::abs(dy - kI * dx) <= 1e-6 * std::abs(dx));
            CHECK(std::abs(dx - F.derivative(z)) <= 1e-6 * std::abs(dx));
        }
    }
    SUBCASE("expansion inequality |F'| >= Re F / 2") {
        for (const cplx& z : interior_samples(t, 4.01, 20, 40, 25, 0.0)) CHECK(std::abs(F.derivative(z)) >= F(z).real() / 2 - 1e-8);
    }
    SUBCASE("density sandwich") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> ux(4.0, 14.0), uy(-kPi / 2, kPi / 2);
        int n = 0;
        while (n < 1000) {
            cplx z(ux(rng), uy(rng));
            if (!contains(t, z)) continue;
            double d = boundary_distance(t, z);
            double rho = F.density(z);
            CHECK(rho >= 1 / (2 * d) * (1 - 1e-9));
            CHECK(rho <= 2 / d * (1 + 1e-9));
            ++n;
        }
    }
    SUBCASE("sampled injectivity") {
        auto pts = interior_samples(t, 4.05, 12, 12, 9, 1e-2);
        double min_gap = INFINITY;
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = a + 1; b < pts.size(); ++b) min_gap = std::min(min_gap, std::abs(F(pts[a]) - F(pts[b])));
        CHECK(min_gap > 100 * acc);
    }
}

TEST_CASE("reflection-symmetric tract maps the real axis increasingly into itself") {
    auto t = necked_tract();
    auto F = map_to_halfplane(t, Normalization::fixed_point(8.0), 1e-6, 20.0);
    double prev = 0;
    for (double x = 4.1; x <= 20; x += 0.3) {
        cplx f = F(x);
        CHECK(std::abs(f.imag()) <= 1e-7 * std::max(1.0, f.real()));
        CHECK(f.real() > prev);
        prev = f.real();
        cplx z(x, 0.3);
        if (contains(t, z)) CHECK(std::abs(F(std::conj(z)) - std::conj(F(z))) <= 1e-7 * std::abs(F(z)));
    }
    CHECK_THROWS_AS(F(cplx(5, 1.0)), DomainError);
}

TEST_CASE("map_to_halfplane errors") {
    auto t = half_strip(q(4), q(1, 2));
    CHECK_THROWS_AS(map_to_halfplane(t, Normalization::fixed_point(5.0), 0.0), ParameterError);
    CHECK_THROWS_AS(map_to_halfplane(t, Normalization::fixed_point(3.0), 1e-6), DomainError);
    try {
        map_to_halfplane(t, Normalization::fixed_point(5.0), 1e-30, 20.0);
        FAIL("expected an accuracy error");
    } catch (const AccuracyError& e) {
        CHECK(e.achieved() > 1e-30);
    }
    // Passages of length 10 and height π/5 crowd the prevertices beyond double precision.
    RectilinearTract winding({{q(2, 5), q(6, 5)}, {q(2, 5), q(1)}, {q(10), q(1)}, {q(10), q(0)}, {q(0), q(0)},
                              {q(0), q(2, 5)}, {q(48, 5), q(2, 5)}, {q(48, 5), q(3, 5)}, {q(0), q(3, 5)}, {q(0), q(8, 5)}});
    CHECK_THROWS_AS(map_to_halfplane(winding, Normalization::fixed_point(cplx(5, 1.4 * kPi)), 1e-6), AccuracyError);
}

TEST_CASE("infinity-and-point normalization") {
    auto t = stepped_tract();
    auto F = map_to_halfplane(t, Normalization::infinity_and(7.0, cplx(3, 1)), 1e-6);
    CHECK(std::abs(F(7.0) - cplx(3, 1)) < 1e-8);
    // The tract end goes to ∞: |F| grows along the real axis.
    CHECK(std::abs(F(30.0)) > 1e6);
}

TEST_CASE("expansion constant") {
    auto t = half_strip(q(1), q(1, 2));
    auto F = half_strip_map(1, -0.5, 0.5, Normalization::fixed_point(5.0));
    auto e = expansion_constant(F, t, 1, 20);
    CHECK(e.lambda > 1);
    CHECK(e.lambda <= e.sampled_min);
    auto near = expansion_constant(F, t, 10, 20);
    auto far = expansion_constant(F, t, 100, 110);
    CHECK(far.lambda > near.lambda);
    CHECK(far.lambda > 50);

    auto I = right_half_plane_map(Normalization::fixed_point(1.0));
    CHECK_THROWS_AS(expansion_constant_halfplane(I, 1, 10), NotDisjointTypeError);
    auto touching = half_strip(q(0), q(1, 2));
    CHECK_THROWS_AS(expansion_constant(half_strip_map(0, -0.5, 0.5, Normalization::fixed_point(5.0)), touching, 1, 5),
                    PreconditionError);
}

TEST_CASE("decoration diameters") {
    auto I = right_half_plane_map(Normalization::fixed_point(1.0));
    auto rep = decoration_diameters(I, {1.0, 37.0}, INFINITY, 0.0, INFINITY, 64);
    REQUIRE(rep.diameters.size() == 2);
    CHECK(rep.diameters[0] == doctest::Approx(rep.diameters[1]).epsilon(1e-10));
    // Endpoints at angle ±(π/2 - π/128): distance 2 asinh(tan θ).
    CHECK(rep.diameters[0] == doctest::Approx(2 * std::asinh(std::tan(kPi / 2 - kPi / 128))).epsilon(1e-10));

    auto S = half_strip_map(4, -0.5, 0.5, Normalization::fixed_point(5.0));
    auto strip = decoration_diameters(S, {10, 1e2, 1e3, 1e4, 1e6}, 3.0);
    CHECK(strip.bounded_by_K);
    for (double d : strip.diameters) CHECK(d < 3.0);

    auto single = decoration_diameters(S, {50.0});
    CHECK(single.diameters.size() == 1);
    CHECK(single.diameters[0] >= 0);
    CHECK_THROWS_AS(decoration_diameters(S, {5.0}, 3.0, 10.0, 100.0), AccuracyError);
}

TEST_CASE("harmonic measure by finite differences") {
    SUBCASE("disk arc from the centre") {
        auto d = PlanarDomain::disk(0.0, 1.0);
        BoundaryArc arc;
        arc.angles = std::make_pair(0.0, kPi / 2);
        auto r = harmonic_measure(d, arc, 0.0, 0.02);
        CHECK(r.value == doctest::Approx(0.25).epsilon(0.02));
        arc.angles = std::make_pair(0.3, 0.3 + 2.0);
        CHECK(harmonic_measure(d, arc, 0.0, 0.02).value == doctest::Approx(2.0 / (2 * kPi)).epsilon(0.02));
    }
    SUBCASE("square side from the centre") {
        auto d = PlanarDomain::polygon({0.0, 1.0, cplx(1, 1), cplx(0, 1)});
        BoundaryArc arc{{{0.0, 1.0}}, std::nullopt};
        auto r = harmonic_measure(d, arc, cplx(0.5, 0.5), 0.02);
        CHECK(std::abs(r.value - 0.25) < 2e-3);
        double walk = harmonic_measure_walk(d, arc, cplx(0.5, 0.5), 20000, 42);
        CHECK(std::abs(walk - r.value) < 0.015);
    }
    SUBCASE("symmetric truncated half-strip") {
        auto d = PlanarDomain::truncated_tract(half_strip(q(1), q(1, 2)), 8.0);
        BoundaryArc top{{{cplx(1, kPi / 2), cplx(8, kPi / 2)}}, std::nullopt};
        BoundaryArc bottom{{{cplx(1, -kPi / 2), cplx(8, -kPi / 2)}}, std::nullopt};
        auto a = harmonic_measure(d, top, 3.0, 0.05);
        auto b = harmonic_measure(d, bottom, 3.0, 0.05);
        CHECK(std::abs(a.value - b.value) < 1e-10);
        CHECK(a.value > 0);
        CHECK(a.value < 0.5);
    }
    SUBCASE("errors") {
        auto d = PlanarDomain::polygon({0.0, 1.0, cplx(1, 1), cplx(0, 1)});
        BoundaryArc off{{{cplx(0.2, 0.5), cplx(0.8, 0.5)}}, std::nullopt};
        CHECK_THROWS_AS(harmonic_measure(d, off, cplx(0.5, 0.5)), GeometryError);
        BoundaryArc side{{{0.0, 1.0}}, std::nullopt};
        CHECK_THROWS_AS(harmonic_measure(d, side, cplx(2, 0.5)), DomainError);
    }
}
