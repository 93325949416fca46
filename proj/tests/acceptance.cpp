// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is the number of failed criteria (0 when all pass).

#include "cforge/conformal.hpp"
#include "cforge/construction_engine.hpp"
#include "cforge/error.hpp"
#include "cforge/interval_maps.hpp"
#include "cforge/inverse_limits.hpp"
#include "cforge/julia_continua.hpp"
#include "cforge/tract_geometry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace cforge;

namespace {

const double kPi = std::acos(-1.0);
const cplx kI(0.0, 1.0);

// Tolerances and sizes.
constexpr double kShadowTol = 1e-12;
constexpr double kConformalTol = 1e-6;
constexpr double kExpansionSlack = 1e-8;
constexpr std::size_t kExpansionSamples = 1000;
constexpr std::size_t kPullbackSamples = 200;
constexpr long kCantorMaxN = 24;
constexpr std::size_t kArcDepth = 12;
constexpr std::size_t kArcResolution = 257;
constexpr std::size_t kSpanDepth = 5;
constexpr double kSpanResolution = 0.25;
constexpr std::size_t kSineSeeds = 1000;
constexpr double kSineSmall = 1e-6;
constexpr double kSineLarge = 1e6;
constexpr std::size_t kConjugacySamples = 50;

// Runtime budgets in seconds.
constexpr double kBudget1 = 1, kBudget2 = 60, kBudget3PerTract = 30, kBudget4 = 600, kBudget5 = 5, kBudget6 = 30,
                 kBudget7 = 120, kBudget8 = 120, kBudget9 = 5, kBudget10 = 300;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget) {
        o.pass = false;
        o.detail += "; over the " + std::to_string(budget) + " s budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2d  %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Rational q(long p, long d = 1) {
    Rational r(p, d);
    r.canonicalize();
    return r;
}

// Written out independently of the library: 5 sinh(z - 4)/sinh(1) fixes 5 with positive derivative
// and maps {x > 4, |y| < π/2} onto the right half-plane.
cplx strip_oracle(cplx z) { return 5.0 * std::sinh(z - 4.0) / std::sinh(1.0); }

Outcome criterion_shadowing() {
    const double c = 1e-2, lambda = 2.0;
    InverseSystem<double> sys;
    sys.bond = [](std::size_t, const double& x) { return x / 2; };
    sys.dist = [](std::size_t, const double& x, const double& y) { return std::abs(x - y); };
    sys.certificate = ExpansionCertificate{lambda, 0.0};
    std::function<double(std::size_t)> pseudo = [c](std::size_t) { return c; };
    const double M = pseudo_orbit_defect(sys, pseudo, 64);
    auto r = shadow(sys, pseudo, 30, M, 1e-15);
    double worst = 0.0;
    for (double x : r.orbit.coords) worst = std::max(worst, std::abs(x));
    const double expected = lambda * M / (lambda - 1);
    const bool ok = worst <= kShadowTol && std::abs(r.bound - c) <= kShadowTol && std::abs(expected - c) <= kShadowTol &&
                    std::abs(r.max_deviation - c) <= kShadowTol;
    return {ok, "M = " + fmt("%.3g", M) + ", shadow sup " + fmt("%.1e", worst) + ", deviation " +
                    fmt("%.15g", r.max_deviation) + ", bound " + fmt("%.15g", r.bound)};
}

Outcome criterion_conformal() {
    auto t = half_strip(q(4), q(1, 2));
    auto F = map_to_halfplane(t, Normalization::fixed_point(5.0), kConformalTol, 20.0);
    double worst = 0.0, worst_closed = 0.0;
    int n = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            cplx z(4.2 + 15.8 * (i + 0.5) / 10, kPi * (-0.45 + 0.9 * (j + 0.5) / 10));
            worst = std::max(worst, std::abs(F(z) - strip_oracle(z)));
            worst_closed = std::max(worst_closed, std::abs(half_strip_closed_form(4.0, 5.0, z) - strip_oracle(z)) /
                                                      std::abs(strip_oracle(z)));
            ++n;
        }
    const double fix = std::abs(F(5.0) - 5.0), arg = std::abs(std::arg(F.derivative(5.0)));
    const bool ok = n == 100 && worst <= kConformalTol && worst_closed <= 1e-12 && fix <= kConformalTol &&
                    arg <= 1e-8 && F.accuracy().backend == "schwarz-christoffel";
    return {ok, std::to_string(n) + " samples, max |F_SC - F_closed| = " + fmt("%.2e", worst) + ", |F(5)-5| = " +
                    fmt("%.1e", fix) + ", |arg F'(5)| = " + fmt("%.1e", arg)};
}

std::vector<cplx> seeded_samples(const RectilinearTract& t, double x_hi, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(to_double(t.min_x()), x_hi);
    std::uniform_real_distribution<double> uy(kPi * to_double(t.min_y()), kPi * to_double(t.max_y()));
    std::vector<cplx> out;
    while (out.size() < count) {
        cplx z(ux(rng), uy(rng));
        if (contains(t, z) && boundary_distance(t, z) > 1e-6) out.push_back(z);
    }
    return out;
}

Outcome criterion_expansion() {
    struct Built {
        std::string name;
        RectilinearTract t;
        std::function<ConformalMap()> make;
    };
    const auto strip = half_strip(q(4), q(1, 2));
    const auto stepped = RectilinearTract({{q(6), q(1, 2)}, {q(6), q(1, 4)}, {q(4), q(1, 4)}, {q(4), q(-1, 2)}});
    const auto necked = RectilinearTract(
        {{q(6), q(1, 2)}, {q(6), q(1, 4)}, {q(4), q(1, 4)}, {q(4), q(-1, 4)}, {q(6), q(-1, 4)}, {q(6), q(-1, 2)}});
    ConstructionConfig base;
    base.generators = {one_point_composant_map()};
    const ConstructionState T0 = initial_state(base);
    std::vector<Built> tracts{
        {"half-strip (SC)", strip, [&] { return map_to_halfplane(strip, Normalization::fixed_point(5.0), kConformalTol); }},
        {"stepped (SC)", stepped, [&] { return map_to_halfplane(stepped, Normalization::fixed_point(7.0), kConformalTol); }},
        {"necked (SC)", necked, [&] { return map_to_halfplane(necked, Normalization::fixed_point(7.0), kConformalTol); }},
        {"T_0 (closed form)", *T0.tract, [&] { return *T0.F; }},
    };
    std::ostringstream detail;
    bool ok = true;
    for (std::size_t k = 0; k < tracts.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const ConformalMap F = tracts[k].make();
        double worst = INFINITY;
        for (const cplx& z : seeded_samples(tracts[k].t, 20.0, kExpansionSamples, 100 + k))
            worst = std::min(worst, std::abs(F.derivative(z)) - F(z).real() / 2);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = ok && worst >= -kExpansionSlack && secs <= kBudget3PerTract;
        detail << (k ? "; " : "") << tracts[k].name << " min(|F'| - Re F/2) = " << fmt("%.3g", worst);
    }
    return {ok, std::to_string(kExpansionSamples) + " samples per tract: " + detail.str()};
}

Outcome criterion_construction() {
    ConstructionConfig c;
    c.scheme = Scheme::Single;
    c.generators = {one_point_composant_map()};
    c.M = {10, 10, 10, 10};
    c.stages = 3;
    c.samples = kPullbackSamples;
    ConstructionState s = run_construction(c);
    if (s.status != "complete")
        return {false, "stage " + std::to_string(s.k()) + " stopped at " + s.failed_step + ": " + s.failure};
    std::ostringstream detail;
    bool ok = true;
    for (std::size_t k = 1; k <= 3; ++k) {
        auto cert = verify_pullingback(s, k, pullback_samples(s, k, kPullbackSamples, c.seed + k));
        const double bound = 3.0 / double(*s.stage(s.stage(k).k_star).gamma);
        ok = ok && cert.passed && cert.worst_real_margin > 0 && cert.worst_psi_margin > 0 &&
             cert.bound == bound;
        detail << "stage " << k << " margins " << cert.worst_real_margin << ", " << cert.worst_psi_margin << "; ";
    }
    return {ok, detail.str()};
}

Outcome criterion_cantor() {
    // Route 1: the library's backward image. Route 2: an explicit composition of the PL maps.
    long checked = 0;
    for (long n = 2; n <= kCantorMaxN; ++n) {
        const long kn = n / 2;
        PLMap composed = PLMap::identity();
        for (long k = n - 1; k >= kn; --k) {
            composed = compose(cantor_family_map(cantor_parameter(k + 1)), composed);
            const Rational a = cantor_backward_image(n, k, 0), b = composed(Rational(0));
            if (a != b) return {false, "routes disagree at n = " + std::to_string(n) + ", k = " + std::to_string(k)};
            if (k == kn && a != 0) return {false, "g_{n..k(n)}(0) != 0 at n = " + std::to_string(n)};
            if (k > kn && a == 0) return {false, "g_{n..k}(0) = 0 at n = " + std::to_string(n) + ", k = " + std::to_string(k)};
            ++checked;
        }
    }
    return {true, std::to_string(checked) + " exact identities for 2 <= n <= " + std::to_string(kCantorMaxN) +
                      ", library and composed routes agree"};
}

Outcome criterion_arc_model() {
    const auto g = one_point_composant_map();
    std::vector<double> gam;
    for (const auto& r : make_expanding(std::vector<PLMap>(kArcDepth, g), 1, 2)) gam.push_back(to_double(r));
    const auto orbits = truncated_limit({g}, kArcDepth, kArcResolution);
    std::size_t high = 0;
    for (const auto& o : orbits) {
        for (std::size_t j = 1; j < o.coords.size(); ++j)
            if (g(o.coords[j]) != o.coords[j - 1]) return {false, "coordinates are not a backward orbit"};
        if (o.coords[0] <= q(1, 4)) continue;
        ++high;
        for (std::size_t j = 1; j < o.coords.size(); ++j) {
            // x_j = 1 - (1 - x_0)/2^j, since g ≤ 1/4 on [0, 1/2] forces the right branch.
            if (1 - o.coords[j] != (1 - o.coords[0]) * pow2(-long(j))) return {false, "closed form fails"};
            if (!(o.coords[j] > o.coords[j - 1] || o.coords[j - 1] == 1)) return {false, "not increasing"};
        }
    }
    // Backward orbits started on a grid of x_0 in (1/4, 1], extended by leftmost preimages.
    for (long i = 1; i <= 256; ++i) {
        std::vector<Rational> x{q(1, 4) + q(3 * i, 4 * 256)};
        for (std::size_t j = 1; j <= kArcDepth; ++j) x.push_back(min_preimage(g, x.back()));
        ++high;
        for (std::size_t j = 1; j <= kArcDepth; ++j) {
            if (g(x[j]) != x[j - 1] || 1 - x[j] != (1 - x[0]) * pow2(-long(j))) return {false, "preimage orbit fails"};
            if (!(x[j] > x[j - 1] || x[j - 1] == 1)) return {false, "preimage orbit not increasing"};
        }
    }
    double previous = INFINITY;
    std::ostringstream diam;
    for (std::size_t j = 0; j <= kArcDepth; ++j) {
        double worst = 0.0;
        for (const auto& o : orbits)
            worst = std::max(worst, projection_fiber_diameter(orbits, gam, j, o.coords[j]).diameter);
        if (worst > previous) return {false, "fiber diameter grows at level " + std::to_string(j)};
        previous = worst;
        if (j % 4 == 0) diam << (j ? ", " : "") << "j=" << j << ": " << fmt("%.3g", worst);
    }
    return {high > 256, std::to_string(orbits.size()) + " limit orbits; " + std::to_string(high) +
                          " orbits with x_0 > 1/4 increase to 1; fiber diameters " + diam.str()};
}

Outcome criterion_span() {
    // The constructed address begins with N_1 + 1 = 8 zeros (s(0) = 0, then 0^{N_1}); left of R_1
    // the stage tracts agree with the half-strip, so depths <= 5 use the constant-0 address there.
    ConstructionConfig c;
    c.generators = {one_point_composant_map()};
    c.stages = 1;
    const ConstructionState s = run_construction(c);
    const std::size_t prefix = *s.stage(1).N + 1;
    if (prefix <= kSpanDepth) return {false, "address prefix of zeros is too short"};
    auto model = half_strip_model();
    const auto address = ExternalAddress::constant({"T", 0});
    const Rational h = from_double(kSpanResolution);
    std::ostringstream detail;
    for (std::size_t n = 0; n <= kSpanDepth; ++n) {
        const auto cloud = continuum_depth_n(*model, address, n, kSpanResolution);
        // A as level-n points in serpentine order; X pairs the k-th point with the (N-1-k)-th.
        std::vector<std::size_t> order(cloud.points.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto level = [&](std::size_t i) { return cloud.points[i].chain[n]; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double xa = level(a).real(), xb = level(b).real();
            if (xa != xb) return xa < xb;
            const long col = std::lround((xa - 4.0) / kSpanResolution);
            return col % 2 == 0 ? level(a).imag() < level(b).imag() : level(a).imag() > level(b).imag();
        });
        std::vector<TractPoint> A;
        for (std::size_t i : order) A.push_back(TractPoint::at(from_double(level(i).real()), from_double(level(i).imag() / kPi)));
        std::vector<std::pair<std::size_t, std::size_t>> X;
        for (std::size_t k = 0; k < A.size(); ++k) X.push_back({k, A.size() - 1 - k});
        // Along X, Re w - Re z moves by at most 2h per step and changes sign, so slack h suffices.
        const auto w = span_separation_witness(A, X, h, h);
        if (!w.found) return {false, "no witness at level " + std::to_string(n)};
        const double d = std::abs(w.z.to_complex() - w.w.to_complex());
        if (!(d < 2 * kPi)) return {false, "witness too far apart at level " + std::to_string(n)};
        detail << (n ? ", " : "") << fmt("%.3f", d);
    }
    return {true, "address prefix 0^" + std::to_string(prefix) + "; |z_n - w_n| at n = 0..5: " + detail.str()};
}

Outcome criterion_rogers() {
    auto m = half_strip_model();
    auto a = real_part_anguine(*m, "T", 5.0);
    const std::size_t n = rogers_depth(m->expansion());
    if (!(std::pow(m->expansion(), double(n) - 1) > 64) || std::pow(m->expansion(), double(n) - 2) > 64)
        return {false, "depth is not the first with Λ^{n-1} > 64"};
    auto r = extract_rogers_map(*m, a, 5.0, n);
    // Recheck the flags on the exact normalized map.
    const auto& xs = r.normalized.breakpoints();
    const auto& ys = r.normalized.values();
    Rational max_slope = 0;
    bool below = true;
    for (std::size_t i = 1; i < xs.size(); ++i)
        for (std::size_t k = 0; k < i; ++k) max_slope = std::max(max_slope, Rational(abs((ys[i] - ys[k]) / (xs[i] - xs[k]))));
    for (std::size_t i = 1; i < xs.size(); ++i) below = below && ys[i] < xs[i];
    const bool ok = ys.front() == 0 && xs.front() == 0 && max_slope <= q(1, 2) && below && r.slopes_ok &&
                    r.below_diagonal && r.values.front() == 0.0;
    return {ok, "n = " + std::to_string(n) + ", Λ = " + fmt("%.4f", m->expansion()) + ", " +
                    std::to_string(xs.size()) + " breakpoints, max pairwise slope " + fmt("%.4f", to_double(max_slope))};
}

Outcome criterion_sine() {
    auto model = lambda_sin_model(0.5);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::size_t worst_steps = 0;
    for (std::size_t i = 0; i < kSineSeeds; ++i) {
        const double x0 = u(rng);
        cplx z = x0, w = x0;
        std::size_t steps = 0;
        while (std::abs(z) >= kSineSmall && steps < 100) {
            z = model->eval(z);
            w = 0.5 * std::sin(w);
            ++steps;
        }
        if (std::abs(z) >= kSineSmall) return {false, "seed " + fmt("%.6f", x0) + " does not reach 1e-6"};
        if (std::abs(z - w) > 1e-15) return {false, "model and direct iteration disagree"};
        worst_steps = std::max(worst_steps, steps);
    }
    cplx z = 3.0 * kI;
    std::size_t steps = 0;
    while (std::abs(z) <= kSineLarge && steps < 20) {
        z = model->eval(z);
        ++steps;
    }
    const bool escaped = std::abs(z) > kSineLarge;
    return {escaped, std::to_string(kSineSeeds) + " real seeds below 1e-6 within " + std::to_string(worst_steps) +
                         " steps; 3i exceeds 1e6 after " + std::to_string(steps) + " steps"};
}

Outcome criterion_translation() {
    auto m = half_strip_model();
    const auto zeros = ExternalAddress::constant({"T", 0});
    const std::size_t depth = 5;
    const auto full = continuum_depth_n(*m, zeros, depth, 0.3);
    if (full.points.size() < kConjugacySamples) return {false, "cloud too small"};
    ContinuumApprox c = full;
    c.points.clear();
    for (std::size_t i = 0; i < kConjugacySamples; ++i)
        c.points.push_back(full.points[i * full.points.size() / kConjugacySamples]);
    std::mt19937_64 rng(77);
    std::vector<long> offsets(depth + 1);
    for (auto& o : offsets) o = long(rng() & 1);
    auto t = translation_conjugacy(*m, zeros, offsets, c, 1.0);
    // Recompute the level distances in H directly.
    double worst = 0.0;
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        cplx z = c.point(i), w = t.images[i];
        for (std::size_t k = 0; k < depth; ++k) {
            z = m->eval(z);
            w = m->eval(w);
            worst = std::max(worst, halfplane_distance(z, w));
        }
    }
    const bool ok = t.verified && worst <= t.C && t.worst <= t.C;
    std::ostringstream off;
    for (long o : offsets) off << o;
    return {ok, std::to_string(c.points.size()) + " samples, offsets " + off.str() + ", max d_H = " +
                    fmt("%.4f", std::max(worst, t.worst)) + " <= C = " + fmt("%.4f", t.C)};
}

} // namespace

int main() {
    report(1, "shadowing tightness", kBudget1, criterion_shadowing);
    report(2, "conformal correctness", kBudget2, criterion_conformal);
    report(3, "expansion inequality", kBudget3PerTract * 4, criterion_expansion);
    report(4, "construction certificate", kBudget4, criterion_construction);
    report(5, "Cantor identities", kBudget5, criterion_cantor);
    report(6, "arc model dynamics", kBudget6, criterion_arc_model);
    report(7, "span witness", kBudget7, criterion_span);
    report(8, "Rogers extraction", kBudget8, criterion_rogers);
    report(9, "sine sanity", kBudget9, criterion_sine);
    report(10, "translation conjugacy", kBudget10, criterion_translation);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures;
}
