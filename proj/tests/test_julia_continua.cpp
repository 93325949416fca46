#include "doctest.h"

#include "cforge/error.hpp"
#include "cforge/julia_continua.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace cforge;

namespace {

const double kPi = std::acos(-1.0);
const cplx kI(0.0, 1.0);

// Inverse branch of 5 sinh(z - 4)/sinh(1) onto the translate by 2πim, written out independently.
cplx strip_inverse(cplx zeta, long m) { return 4.0 + std::asinh(zeta * std::sinh(1.0) / 5.0) + kI * (2.0 * kPi * m); }

ExternalAddress zeros() { return ExternalAddress::constant({"T", 0}); }

} // namespace

TEST_CASE("external addresses") {
    auto p = ExternalAddress(std::vector<AddressEntry>{{"T", 3}, {"T", 0}, {"T", 1}}, 2);
    CHECK(p.at(0).m == 3);
    CHECK(p.at(1).m == 0);
    CHECK(p.at(2).m == 1);
    CHECK(p.at(3).m == 0);
    CHECK(p.at(4).m == 1);
    CHECK(p.bounded());
    auto f = ExternalAddress::prefix({{"T", 0}, {"T", 5}}, false);
    CHECK_FALSE(f.bounded());
    CHECK(f.defined_length() == 2);
    CHECK_THROWS_AS(f.at(2), PreconditionError);
    CHECK_THROWS_AS(ExternalAddress({}, std::nullopt), ParameterError);
    CHECK_THROWS_AS(ExternalAddress({{"T", 0}}, 2), ParameterError);

    SUBCASE("shifting keeps the periodic tail") {
        auto s = p.shifted({1, 1, 1, 1});
        for (std::size_t j = 0; j < 12; ++j) CHECK(s.at(j).m == p.at(j).m + (j < 4 ? 1 : 0));
        CHECK_THROWS_AS(f.shifted({0, 0, 0}), PreconditionError);
    }
    SUBCASE("JSON round trip") {
        nlohmann::json j = p;
        auto back = address_from_json(j);
        CHECK(back.entries() == p.entries());
        CHECK(back.period() == p.period());
        CHECK_THROWS_AS(address_from_json(nlohmann::json::parse(R"({"entries": 3})")), InputError);
        CHECK_THROWS_AS(address_from_json(nlohmann::json::parse(R"({"entries": [], "period": null})")), InputError);
    }
}

TEST_CASE("half-strip model orbits") {
    auto m = half_strip_model();
    CHECK(m->expansion() > 4.0);
    auto o = orbit(*m, 5.0, 4);
    for (const cplx& z : o.points) CHECK(std::abs(z - 5.0) < 1e-12);
    SUBCASE("real seeds right of the fixed point increase to infinity") {
        auto r = orbit(*m, 5.1, 10);
        for (std::size_t k = 1; k + 1 < r.points.size(); ++k) CHECK(r.points[k].real() > r.points[k - 1].real());
        CHECK(r.overflow);
    }
    SUBCASE("the model commutes with translation by 2πi") {
        for (cplx z : {cplx(4.5, 0.3), cplx(7.0, -1.2), cplx(5.2, 1.5)}) {
            cplx a = m->eval(z), b = m->eval(z + kI * (2.0 * kPi * 3));
            CHECK(std::abs(a - b) < 1e-9 * std::abs(a));
            CHECK(m->locate(z + kI * (2.0 * kPi * 3))->m == 3);
        }
    }
    SUBCASE("outside the tracts") {
        CHECK_FALSE(m->locate(cplx(3.0, 0.0)));
        CHECK_FALSE(m->locate(cplx(6.0, 2.0)));
        CHECK_THROWS_AS(orbit(*m, cplx(3.0, 0.0), 2), DomainError);
        auto r = orbit(*m, cplx(4.2, 0.0), 5);
        CHECK(r.escaped);
    }
}

TEST_CASE("direct models") {
    auto s = lambda_sin_model(1.0);
    auto r = orbit(*s, 1.0, 60);
    CHECK(std::abs(r.points.back()) < 0.25);
    auto i = orbit(*s, cplx(0.0, 3.0), 3);
    CHECK(std::abs(i.points[1] - cplx(0.0, std::sinh(3.0))) < 1e-12);
    CHECK(std::abs(i.points[2]) > 1e4);
    CHECK(i.overflow);
    CHECK_THROWS_AS(s->inverse_branch({"C", 0}, 1.0), PreconditionError);
    CHECK_THROWS_AS(continuum_depth_n(*s, zeros(), 1, 0.1), PreconditionError);
    auto e = lambda_exp_model(0.25);
    auto er = orbit(*e, 0.0, 80);
    CHECK(std::abs(er.points.back() - er.points[er.points.size() - 2]) < 1e-9);
}

TEST_CASE("model construction checks") {
    auto bad = [](RectilinearTract t) {
        TractPrototype p{"T", t, std::make_shared<const ConformalMap>(right_half_plane_map(Normalization::fixed_point(5.0))),
                         cplx(5.0, 0.0)};
        return LogModel("bad", {p});
    };
    CHECK_THROWS_AS(bad(half_strip(Rational(-1), Rational(1, 2))), PreconditionError);
    CHECK_THROWS_AS(bad(half_strip(Rational(1), Rational(3, 2))), PreconditionError);
    auto two = two_tract_model();
    CHECK(two->expansion() > 1.0);
    CHECK(two->locate(cplx(5.0, kPi / 2))->tract == "T");
    CHECK(two->locate(cplx(5.0, -kPi / 2))->tract == "S");
    CHECK(two->locate(cplx(5.0, -kPi / 2 + 2 * kPi))->tract == "S");
    CHECK_FALSE(two->locate(cplx(5.0, 0.0)));
}

TEST_CASE("inverse branches invert the model (property)") {
    auto m = half_strip_model();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> re(0.1, 40.0), im(-30.0, 30.0);
    std::uniform_int_distribution<long> mm(-3, 3);
    for (int i = 0; i < 200; ++i) {
        cplx zeta(re(rng), im(rng));
        AddressEntry e{"T", mm(rng)};
        cplx z = m->inverse_branch(e, zeta);
        CHECK(m->in_translate(e, z));
        CHECK(std::abs(m->eval(z) - zeta) < 1e-9 * std::max(1.0, std::abs(zeta)));
        CHECK(std::abs(z - strip_inverse(zeta, e.m)) < 1e-12 * std::abs(z));
    }
}

TEST_CASE("expansion constant bounds the hyperbolic derivative (property)") {
    auto m = half_strip_model();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> re(4.01, 16.0), im(-1.55, 1.55);
    for (int i = 0; i < 500; ++i) {
        cplx z(re(rng), im(rng));
        double norm = std::abs(m->derivative(z)) * z.real() / m->eval(z).real();
        CHECK(norm >= m->expansion());
    }
}

TEST_CASE("finite-depth continua") {
    auto m = half_strip_model();
    auto c0 = continuum_depth_n(*m, zeros(), 0, 0.25);
    // 32 columns in (4, 12) and 13 rows in (-π/2, π/2) at step 1/4.
    CHECK(c0.points.size() == 32 * 13);
    for (const auto& p : c0.points) CHECK(contains(half_strip(Rational(4), Rational(1, 2)), p.chain[0]));

    auto s = ExternalAddress::periodic({{"T", 0}, {"T", -1}, {"T", 2}});
    auto c3 = continuum_depth_n(*m, s, 3, 0.25);
    CHECK(c3.points.size() == c0.points.size());
    for (const auto& p : c3.points) {
        CHECK(p.residual < 1e-12);
        for (std::size_t k = 0; k <= 3; ++k) CHECK(m->in_translate(s.at(k), p.chain[k]));
    }
    SUBCASE("nesting: deeper clouds lie near shallower ones") {
        auto c2 = continuum_depth_n(*m, s, 2, 0.25);
        for (std::size_t i = 0; i < c3.points.size(); i += 17) {
            double best = INFINITY;
            for (const auto& q : c2.points) best = std::min(best, halfplane_distance(c3.point(i), q.chain[0]));
            CHECK(best < 0.5);
        }
    }
    SUBCASE("the constant-zero continuum reaches the fixed point 5") {
        auto c = continuum_depth_n(*m, zeros(), 4, 0.25);
        double best = INFINITY;
        for (const auto& p : c.points) best = std::min(best, std::abs(p.chain[0] - 5.0));
        CHECK(best < 0.05);
    }
    CHECK_THROWS_AS(continuum_depth_n(*m, zeros(), 1, 0.0), ParameterError);
    CHECK_THROWS_AS(continuum_depth_n(*m, ExternalAddress::prefix({{"T", 0}}, true), 2, 0.25), PreconditionError);
}

TEST_CASE("bounded-orbit points") {
    auto m = half_strip_model();
    auto b = bounded_orbit_point(*m, zeros());
    CHECK(std::abs(b.z0 - 5.0) < 1e-12);
    CHECK(b.max_deviation <= b.bound + 1e-12);

    auto s = ExternalAddress::periodic({{"T", 0}, {"T", 1}});
    auto p = bounded_orbit_point(*m, s);
    cplx oracle = 5.0;
    for (int i = 0; i < 200; ++i) oracle = strip_inverse(strip_inverse(oracle, 1), 0);
    CHECK(std::abs(p.z0 - oracle) < 1e-10);
    CHECK(p.period_residual < 1e-9);
    CHECK(p.max_deviation <= p.bound);
    for (std::size_t k = 0; k < p.orbit.size(); ++k) CHECK(m->in_translate(s.at(k), p.orbit[k]));

    SUBCASE("orbits with different addresses separate") {
        CHECK(halfplane_distance(b.orbit[1], p.orbit[1]) > 1.0);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(bounded_orbit_point(*m, ExternalAddress::prefix({{"T", 0}}, false)), PreconditionError);
        CHECK_THROWS_AS(bounded_orbit_point(*lambda_sin_model(1.0), zeros()), PreconditionError);
        CHECK_THROWS_AS(bounded_orbit_point(*m, ExternalAddress::prefix({{"T", 0}, {"T", 1}}, true)),
                        ConvergenceError);
    }
}

TEST_CASE("fast-escaping membership") {
    auto m = half_strip_model();
    const cplx z0 = 5.0;
    auto inside = fast_escaping_membership(*m, zeros(), z0, z0, 0.3, 3);
    CHECK_FALSE(inside.member);
    auto far = fast_escaping_membership(*m, zeros(), 11.0, z0, 0.3, 3);
    CHECK(far.member);
    CHECK(far.trace.size() == 3);
    SUBCASE("a point walled off by the disc is not a member") {
        auto r = fast_escaping_membership(*m, zeros(), cplx(4.05, 1.5), cplx(5.5, 0.0), 1.7, 1, 0.02);
        CHECK_FALSE(r.member);
        CHECK(r.trace[0].reason.find("no grid path") != std::string::npos);
    }
    SUBCASE("membership at depth n implies membership at smaller depths (property)") {
        for (double x : {5.2, 5.5, 6.0, 7.0, 9.0}) {
            bool prev = true;
            for (std::size_t d = 1; d <= 4; ++d) {
                bool now = fast_escaping_membership(*m, zeros(), x, z0, 0.3, d).member;
                if (!prev) CHECK_FALSE(now);
                prev = now;
            }
        }
    }
    CHECK(fast_escaping_membership(*m, zeros(), z0, z0, 0.3, 0).member);
    CHECK_THROWS_AS(fast_escaping_membership(*m, zeros(), z0, z0, 0.0, 2), ParameterError);
}

TEST_CASE("translation conjugacy") {
    auto m = half_strip_model();
    auto c = continuum_depth_n(*m, zeros(), 5, 0.6);
    REQUIRE(c.points.size() >= 20);
    SUBCASE("zero offsets give the identity") {
        auto t = translation_conjugacy(*m, zeros(), std::vector<long>(6, 0), c, 1.0);
        for (std::size_t i = 0; i < c.points.size(); ++i) CHECK(std::abs(t.images[i] - c.point(i)) < 1e-12);
        CHECK(t.worst < 1e-10);
    }
    SUBCASE("bounded offsets stay within C") {
        std::vector<long> off{0, 1, 1, 0, 1, 0};
        auto t = translation_conjugacy(*m, zeros(), off, c, 1.0);
        CHECK(t.verified);
        const double L = t.lambda;
        const double rho = 2.0 * std::asinh(kPi / 1.0);
        CHECK(t.rho == doctest::Approx(rho));
        CHECK(t.C == doctest::Approx((L * rho / (L - 1) + rho) * L / (L - 1)));
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            // θ(z) follows the shifted address.
            cplx w = t.images[i];
            for (std::size_t k = 0; k < 5; ++k) {
                CHECK(m->in_translate(t.target.at(k), w, 1e-9));
                w = m->eval(w);
            }
        }
    }
    SUBCASE("offsets too large for delta name the offending point") {
        std::vector<long> off{0, 0, 50, 0, 0, 0};
        try {
            translation_conjugacy(*m, zeros(), off, c, 1.0);
            FAIL("expected PreconditionError");
        } catch (const PreconditionError& e) {
            CHECK(std::string(e.what()).find("j = 2") != std::string::npos);
        }
        CHECK_THROWS_AS(translation_conjugacy(*m, zeros(), {0, 1}, c, 1.0), ParameterError);
    }
}

TEST_CASE("short preimages") {
    auto m = half_strip_model();
    auto r = find_short_preimage(*m, "T", 100.0, 1.0);
    CHECK(r.m_lo == 16);
    CHECK(r.m_hi == 32);
    CHECK(r.diameters.size() == 17);
    std::vector<double> d = r.diameters;
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    CHECK(r.diameter <= d[d.size() / 2]);
    CHECK(r.diameter == *std::min_element(r.diameters.begin(), r.diameters.end()));
    CHECK_THROWS_AS(find_short_preimage(*m, "T", 0.5, 1.0), ParameterError);
    CHECK_THROWS_AS(find_short_preimage(*m, "U", 100.0, 1.0), ParameterError);
}

TEST_CASE("anguine data and epsilon-maps") {
    auto m = half_strip_model();
    auto a = real_part_anguine(*m, "T");
    // Vertical sections of the half-strip have H-diameter 2 asinh(π/(2x)), largest at x = 4.
    CHECK(*a.K == doctest::Approx(2.0 * std::asinh(kPi / 8.0)).epsilon(1e-2));
    CHECK(*a.K >= 2.0 * std::asinh(kPi / (2.0 * 4.005)));
    auto c = continuum_depth_n(*m, zeros(), 3, 0.2);
    for (std::size_t j = 0; j <= 3; ++j) {
        auto e = epsilon_map(*m, a, c, j);
        CHECK(e.values.size() == c.points.size());
        CHECK(e.fiber_bound == doctest::Approx(*a.K / std::pow(m->expansion(), double(j))));
    }
    auto e3 = epsilon_map(*m, a, c, 3, 0.01);
    CHECK(e3.measured <= e3.fiber_bound + 2 * 0.01 * 1.0);
    CloudPoint inf{{cplx(5.0, 0.0), kInfinity}, 0.0};
    CHECK(std::isinf(epsilon_value(a, inf, 1)));
    AnguineData bare{a.phi, std::nullopt};
    CHECK_THROWS_AS(epsilon_map(*m, bare, c, 1), PreconditionError);
    CHECK_THROWS_AS(epsilon_map(*m, a, c, 4), ParameterError);
}

TEST_CASE("Rogers map extraction") {
    CHECK(rogers_depth(4.5596) == 4);
    CHECK(rogers_depth(65.0) == 2);
    CHECK(rogers_depth(64.0) == 3);
    CHECK_THROWS_AS(rogers_depth(1.0), ParameterError);
    auto m = half_strip_model();
    auto a = real_part_anguine(*m, "T", 5.0);
    const std::size_t n = rogers_depth(m->expansion());
    auto r = extract_rogers_map(*m, a, 5.0, n);
    CHECK(r.values.front() == 0.0);
    CHECK(r.normalized(Rational(0)) == Rational(0));
    CHECK(r.slopes_ok);
    CHECK(r.below_diagonal);
    CHECK(r.fixed_point_residual < 1e-12);
    for (std::size_t j = 1; j < r.zeta.size(); ++j) CHECK(a.phi(r.zeta[j]) > a.phi(r.zeta[j - 1]));
    CHECK_THROWS_AS(extract_rogers_map(*m, a, 5.0, 2), PreconditionError);
    CHECK_THROWS_AS(extract_rogers_map(*m, real_part_anguine(*m, "T", 0.0), 5.0, n), PreconditionError);
    CHECK_THROWS_AS(extract_rogers_map(*two_tract_model(), a, 5.0, n), PreconditionError);
}

TEST_CASE("cloud output") {
    auto m = half_strip_model();
    auto c = continuum_depth_n(*m, zeros(), 1, 0.5);
    std::ostringstream csv, svg;
    write_cloud_csv(csv, c);
    std::string s = csv.str();
    CHECK(s.rfind("index,re,im,residual\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(c.points.size() + 1));
    auto t = half_strip(Rational(4), Rational(1, 2));
    write_cloud_svg(svg, c, &t);
    CHECK(svg.str().find("<svg") == 0);
    CHECK(svg.str().find("<polyline") != std::string::npos);
    std::ostringstream again;
    write_cloud_svg(again, c, &t);
    CHECK(again.str() == svg.str());
}
