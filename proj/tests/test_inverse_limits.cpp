#include "doctest.h"

#include "cforge/error.hpp"
#include "cforge/inverse_limits.hpp"

#include <random>
#include <sstream>

using namespace cforge;

namespace {

Rational q(long p, long d = 1) {
    Rational r(p, d);
    r.canonicalize();
    return r;
}

InverseSystem<double> halving_system(double K) {
    InverseSystem<double> sys;
    sys.bond = [](std::size_t, const double& x) { return x / 2; };
    sys.dist = [](std::size_t, const double& x, const double& y) { return std::abs(x - y); };
    sys.certificate = ExpansionCertificate{2.0, K};
    return sys;
}

std::vector<double> to_doubles(const std::vector<Rational>& v) {
    std::vector<double> out;
    for (const auto& r : v) out.push_back(to_double(r));
    return out;
}

} // namespace

TEST_CASE("shadowing a constant pseudo-orbit of the halving system") {
    const double c = 1e-2;
    auto sys = halving_system(c / 2);
    std::function<double(std::size_t)> pseudo = [c](std::size_t) { return c; };
    auto r = shadow(sys, pseudo, 20, c / 2, 1e-15);
    for (double x : r.orbit.coords) CHECK(std::abs(x) < 1e-12);
    CHECK(r.bound == doctest::Approx(c).epsilon(1e-12));
    CHECK(std::abs(r.max_deviation - r.bound) < 1e-12);
    CHECK(r.max_deviation <= r.bound + 1e-15);
}

TEST_CASE("a true orbit is its own shadow") {
    auto g = one_point_composant_map();
    auto gam = make_expanding(std::vector<PLMap>(10, g), 1, 2);
    auto sys = interval_system({g}, to_doubles(gam), ExpansionCertificate{2.0, 1.0});
    auto orbits = truncated_limit({g}, 10, 17);
    for (const auto& o : orbits) {
        std::vector<double> x = to_doubles(o.coords);
        auto r = shadow(sys, x, 5, 0.0, 1e-12);
        for (std::size_t j = 0; j <= 5; ++j) CHECK(r.orbit.coords[j] == x[j]);
        CHECK(r.max_deviation == 0.0);
    }
}

TEST_CASE("shadow rejects defects above M and reports non-convergence") {
    auto sys = halving_system(1.0);
    std::vector<double> bad{0.0, 1.0, 0.0};
    CHECK_THROWS_AS(shadow(sys, bad, 1, 0.1, 1e-9), PreconditionError);

    InverseSystem<double> id;
    id.bond = [](std::size_t, const double& x) { return x; };
    id.dist = [](std::size_t, const double& x, const double& y) { return std::abs(x - y); };
    id.certificate = ExpansionCertificate{2.0, 1.0};
    std::function<double(std::size_t)> drift = [](std::size_t j) { return 0.5 * double(j); };
    CHECK_THROWS_AS(shadow(id, drift, 0, 0.5, 1e-9, std::nullopt, 100), ConvergenceError);
    CHECK_THROWS_AS(shadow(id, std::vector<double>{0.0, 0.5, 1.0}, 0, 0.5, 1e-9), ConvergenceError);
}

TEST_CASE("make_expanding on the identity system") {
    auto gam = make_expanding(std::vector<PLMap>(4, PLMap::identity()), 1, 2);
    REQUIRE(gam.size() == 5);
    CHECK(gam[0] == 1);
    CHECK(gam[1] == 2);
    CHECK(gam[2] == 8);
    CHECK(gam[3] == 18);   // 2·3 / (342/1024) rounded up beats λ·γ_2 = 16
    CHECK(gam[4] == 36);
    CHECK(backward_shrinking_separation(std::vector<PLMap>(3, PLMap::identity()), 3) == q(342, 1024));
}

TEST_CASE("make_expanding on g satisfies the expansion inequality") {
    auto g = one_point_composant_map();
    const std::size_t n = 8;
    auto gam = make_expanding(std::vector<PLMap>(n, g), 1, 2);
    for (std::size_t j = 1; j <= n; ++j) CHECK(gam[j] >= 4 * gam[j - 1]);
    auto sys = interval_system({g}, to_doubles(gam), ExpansionCertificate{2.0, 1.0});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t j = 1; j <= n; ++j) {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i < 10000 / int(n); ++i) pairs.emplace_back(u(rng), u(rng));
        CHECK(expansion_slack(sys, j, pairs) >= -1e-9);
    }
}

TEST_CASE("make_expanding parameter checks") {
    auto g = one_point_composant_map();
    CHECK_THROWS_AS(make_expanding({g}, 1, 1), ParameterError);
    CHECK_THROWS_AS(make_expanding({g}, 0, 2), ParameterError);
    CHECK_THROWS_AS(make_expanding({PLMap({0, 1}, {0, q(1, 2)})}, 1, 2), PreconditionError);
}

TEST_CASE("hand-checked expansion certificates") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 500; ++i) pairs.emplace_back(u(rng), u(rng));

    std::vector<double> pow2s;
    for (int j = 0; j <= 6; ++j) pow2s.push_back(std::ldexp(1.0, j));
    auto id = interval_system({PLMap::identity()}, pow2s, ExpansionCertificate{2.0, 0.5});
    for (std::size_t j = 1; j <= 6; ++j) CHECK(expansion_slack(id, j, pairs) >= -1e-12);

    auto half = interval_system({PLMap({0, 1}, {0, q(1, 2)})}, {1.0}, ExpansionCertificate{2.0, 0.5});
    for (std::size_t j = 1; j <= 6; ++j) CHECK(expansion_slack(half, j, pairs) >= -1e-12);

    auto too_fast = interval_system({PLMap::identity()}, {1.0}, ExpansionCertificate{2.0, 0.1});
    CHECK(expansion_slack(too_fast, 1, pairs) < 0);
}

TEST_CASE("truncated limits") {
    auto g = one_point_composant_map();
    auto flat = truncated_limit({g}, 0, 3);
    REQUIRE(flat.size() == 3);
    CHECK(flat[0].coords == std::vector<Rational>{0});
    CHECK(flat[1].coords == std::vector<Rational>{q(1, 2)});
    CHECK(flat[2].coords == std::vector<Rational>{1});

    auto deep = truncated_limit({g}, 2, 5);
    CHECK(deep.back().coords == std::vector<Rational>{1, 1, 1});

    for (const auto& o : truncated_limit({g}, 12, 257)) {
        for (std::size_t j = 1; j < o.coords.size(); ++j) CHECK(g(o.coords[j]) == o.coords[j - 1]);
        if (o.coords[0] > q(1, 4))
            for (std::size_t j = 1; j < o.coords.size(); ++j) CHECK((o.coords[j] > o.coords[j - 1] || o.coords[j - 1] == 1));
    }
    CHECK_THROWS_AS(truncated_limit({g}, 1, 1), ParameterError);
}

TEST_CASE("projection fibers shrink with the level") {
    auto g = one_point_composant_map();
    const std::size_t depth = 8;
    auto gam = to_doubles(make_expanding(std::vector<PLMap>(depth, g), 1, 2));
    auto orbits = truncated_limit({g}, depth, 257);
    double previous = INFINITY;
    for (std::size_t j = 0; j <= depth; ++j) {
        double worst = 0.0;
        for (const auto& o : orbits) worst = std::max(worst, projection_fiber_diameter(orbits, gam, j, o.coords[j]).diameter);
        CHECK(worst <= previous);
        previous = worst;
    }
    CHECK(previous == 0.0);
}

TEST_CASE("identity system fibers scale like 2^-j") {
    std::vector<double> pow2s;
    for (int j = 0; j <= 8; ++j) pow2s.push_back(std::ldexp(1.0, j));
    auto orbits = truncated_limit({PLMap::identity()}, 8, 1025);
    const double tol = 0.25;
    for (std::size_t j = 0; j <= 8; ++j) {
        auto f = projection_fiber_diameter(orbits, pow2s, j, q(1, 2), tol);
        CHECK_FALSE(f.empty);
        CHECK(f.diameter <= 2 * tol * std::ldexp(1.0, -int(j)) + 1e-12);
        CHECK(f.diameter >= tol * std::ldexp(1.0, -int(j)));
    }
    CHECK(projection_fiber_diameter(orbits, pow2s, 3, q(1, 3)).empty);
}

TEST_CASE("identity bridge between equal systems") {
    auto g = one_point_composant_map();
    auto gam = to_doubles(make_expanding(std::vector<PLMap>(6, g), 1, 2));
    auto sys = interval_system({g}, gam, ExpansionCertificate{2.0, 1.0});
    PseudoConjugacy<double, double> pc;
    pc.psi = [](std::size_t, const double& x) { return x; };
    pc.M = 0.0;
    std::function<std::vector<double>(std::size_t)> samples = [](std::size_t) {
        std::vector<double> v;
        for (int i = 0; i <= 32; ++i) v.push_back(i / 32.0);
        return v;
    };
    auto check = check_pseudo_conjugacy(sys, sys, pc, 6, samples, samples);
    CHECK(check.violated.empty());
    CHECK(check.worst_a == 0.0);

    auto orbit = truncated_limit({g}, 6, 9)[7];
    BackwardOrbit<double> x{to_doubles(orbit.coords), 0.0};
    auto val = conjugacy_eval(sys, sys, pc, x, 2, 6);
    CHECK(val.value == x.coords[2]);
    CHECK(val.bound == doctest::Approx(2.0));
    for (double inc : val.increments) CHECK(inc == 0.0);

    pc.psi = [](std::size_t, const double& x) { return 1.0 - x; };
    pc.M = 0.01;
    CHECK(check_pseudo_conjugacy(sys, sys, pc, 6, samples, samples).violated == "(a)");
}

TEST_CASE("orbit CSV export") {
    std::ostringstream os;
    write_orbits_csv(os, truncated_limit({one_point_composant_map()}, 1, 2));
    CHECK(os.str() == "x_0,x_1\n1/4,0\n1,1\n");
}

namespace {

double circle_distance(double x, double y) {
    double d = std::abs(x - y);
    d -= std::floor(d);
    return std::min(d, 1.0 - d);
}

// Angle doubling with d_j = 4^j times the circle distance: expanding with λ = 2.
InverseSystem<double> doubling_system() {
    InverseSystem<double> sys;
    sys.bond = [](std::size_t, const double& x) {
        double y = 2 * x;
        return y - std::floor(y);
    };
    sys.dist = [](std::size_t j, const double& x, const double& y) {
        return std::ldexp(circle_distance(x, y), 2 * int(j));
    };
    sys.certificate = ExpansionCertificate{2.0, 0.5};
    return sys;
}

} // namespace

TEST_CASE("doubling model against a perturbed copy of itself") {
    auto sys = doubling_system();
    const double M = 0.2;
    const std::size_t depth = 12, n = 3;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
    std::vector<double> delta(depth + 1);
    for (std::size_t j = 0; j <= depth; ++j) delta[j] = s(rng) * M / (4 * std::ldexp(1.0, 2 * int(j)));
    PseudoConjugacy<double, double> pc;
    pc.psi = [delta](std::size_t j, const double& x) {
        double y = x + delta[j];
        return y - std::floor(y);
    };
    pc.M = M;
    std::function<std::vector<double>(std::size_t)> samples = [](std::size_t) {
        std::vector<double> v;
        for (int i = 0; i < 64; ++i) v.push_back(i / 64.0);
        return v;
    };
    CHECK(check_pseudo_conjugacy(sys, sys, pc, depth, samples, samples).violated.empty());
    for (int trial = 0; trial < 100; ++trial) {
        BackwardOrbit<double> x;
        x.coords.resize(depth + 1);
        x.coords[depth] = u(rng);
        for (std::size_t j = depth; j > 0; --j) x.coords[j - 1] = sys.bond(j, x.coords[j]);
        auto val = conjugacy_eval(sys, sys, pc, x, n, depth, samples, samples);
        CHECK(val.bound == doctest::Approx(2 * std::max(M, 0.5)));
        CHECK(sys.dist(n, val.value, x.coords[n]) <= val.bound);
        for (std::size_t i = 1; i < val.envelope.size(); ++i) CHECK(val.envelope[i] <= val.envelope[i - 1]);
    }
}

TEST_CASE("a bridge violating density is reported as condition (b)") {
    auto sys = doubling_system();
    PseudoConjugacy<double, double> pc;
    pc.psi = [](std::size_t, const double&) { return 0.0; };
    pc.M = 0.01;
    std::function<std::vector<double>(std::size_t)> samples = [](std::size_t) { return std::vector<double>{0.0, 0.5}; };
    BackwardOrbit<double> x{{0.0, 0.0}, 0.0};
    try {
        conjugacy_eval(sys, sys, pc, x, 0, 1, samples, samples);
        FAIL("expected a certificate error");
    } catch (const CertificateError& e) {
        CHECK(std::string(e.what()).find("(b)") != std::string::npos);
    }
    CHECK_THROWS_AS(conjugacy_eval(sys, sys, pc, x, 1, 0), ParameterError);
}

TEST_CASE("shadow outputs for one pseudo-orbit agree within 2 tol") {
    auto sys = halving_system(0.05);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    std::vector<double> noise(400);
    for (auto& v : noise) v = u(rng);
    std::function<double(std::size_t)> pseudo = [&noise](std::size_t j) { return noise.at(j); };
    const double tol = 1e-10;
    auto a = shadow(sys, pseudo, 10, 0.1, tol);
    auto b = shadow(sys, pseudo, 30, 0.1, tol);
    for (std::size_t j = 0; j <= 10; ++j) CHECK(std::abs(a.orbit.coords[j] - b.orbit.coords[j]) <= 2 * tol);
    for (std::size_t j = 0; j <= 10; ++j) CHECK(std::abs(a.orbit.coords[j] - noise[j]) <= a.bound);
}

TEST_CASE("a pullback sweep contracts large residuals by λ on the doubling model") {
    auto sys = doubling_system();
    // Candidate orbit with a residual of 0.3 (in d_{X_{j-1}}) between every pair of levels.
    const std::size_t depth = 8;
    std::vector<double> x(depth + 1);
    x[depth] = 0.3;
    for (std::size_t j = depth; j > 0; --j) x[j - 1] = sys.bond(j, x[j]) + 0.3 / std::ldexp(1.0, 2 * int(j - 1));
    for (auto& v : x) v -= std::floor(v);
    double before = orbit_residual(sys, x);
    // One sweep: replace x_{j-1} by f_j(x_j) from the top, so the deviation from the old coordinates shrinks.
    std::vector<double> y = x;
    for (std::size_t j = depth; j > 0; --j) y[j - 1] = sys.bond(j, y[j]);
    CHECK(orbit_residual(sys, y) == doctest::Approx(0.0).epsilon(1e-9));
    double moved = 0.0;
    for (std::size_t j = 0; j <= depth; ++j) moved = std::max(moved, sys.dist(j, x[j], y[j]));
    CHECK(moved <= 2 * before / (2 - 1) + 1e-9);
}
