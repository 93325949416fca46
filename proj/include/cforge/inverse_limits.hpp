#pragma once
/**
 * Inverse systems (X_j, f_j), f_j : X_j -> X_{j-1}, with the shadowing and
 * pseudo-conjugacy machinery.
 *
 * Systems are described by two callbacks indexed by level: the bonding maps and
 * the metrics. This lets the same code drive interval systems (double or exact
 * rational points) and tract systems (complex points).
 */

#include "cforge/error.hpp"
#include "cforge/interval_maps.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cforge {

struct ExpansionCertificate {
    double lambda = 4.0;
    double K = 3.0;
};

template <class P>
struct InverseSystem {
    /// bond(j, x) = f_j(x) for j >= 1, mapping X_j into X_{j-1}.
    std::function<P(std::size_t, const P&)> bond;
    /// dist(j, x, y) = d_{X_j}(x, y).
    std::function<double(std::size_t, const P&, const P&)> dist;
    /// Number of the last space when the system is finite.
    std::optional<std::size_t> depth;
    std::optional<ExpansionCertificate> certificate;
};

template <class P>
struct BackwardOrbit {
    std::vector<P> coords;   ///< x_0, ..., x_d
    double residual = 0.0;   ///< max_j d_{X_{j-1}}(f_j(x_j), x_{j-1})
    std::size_t depth() const { return coords.empty() ? 0 : coords.size() - 1; }
};

template <class P>
double orbit_residual(const InverseSystem<P>& sys, const std::vector<P>& x) {
    double r = 0.0;
    for (std::size_t j = 1; j < x.size(); ++j) r = std::max(r, sys.dist(j - 1, sys.bond(j, x[j]), x[j - 1]));
    return r;
}

/// Largest pseudo-orbit defect max_j d(x_{j-1}, f_j(x_j)) over the first `count` coordinates.
template <class P>
double pseudo_orbit_defect(const InverseSystem<P>& sys, const std::function<P(std::size_t)>& x, std::size_t count) {
    double m = 0.0;
    for (std::size_t j = 1; j < count; ++j) m = std::max(m, sys.dist(j - 1, x(j - 1), sys.bond(j, x(j))));
    return m;
}

/// Checks max(K, d_j(x,y)) >= λ d_{j-1}(f_j x, f_j y) on the supplied pairs; returns the worst slack.
template <class P>
double expansion_slack(const InverseSystem<P>& sys, std::size_t j, const std::vector<std::pair<P, P>>& pairs) {
    if (!sys.certificate) throw PreconditionError("system carries no expansion certificate");
    const auto& c = *sys.certificate;
    double worst = INFINITY;
    for (const auto& [x, y] : pairs) {
        double lhs = std::max(c.K, sys.dist(j, x, y));
        double rhs = c.lambda * sys.dist(j - 1, sys.bond(j, x), sys.bond(j, y));
        worst = std::min(worst, lhs - rhs);
    }
    return worst;
}

template <class P>
struct ShadowResult {
    BackwardOrbit<P> orbit;
    double bound = 0.0;          ///< λ·max(M,K)/(λ-1)
    double max_deviation = 0.0;  ///< max_j d_{X_j}(x_j, x̃_j)
    std::size_t sweeps = 0;
    double last_change = 0.0;
};

inline constexpr std::size_t kShadowSweepCap = 10000;

/**
 * Shadows an M-pseudo-orbit by the pullbacks x_j^n = f_{j+1}∘...∘f_n(x̃_n), raising n
 * until two successive sweeps agree within `tol` on the coordinates 0..out_depth.
 * `available` bounds n when the pseudo-orbit is only known on a prefix.
 */
template <class P>
ShadowResult<P> shadow(const InverseSystem<P>& sys, const std::function<P(std::size_t)>& pseudo,
                       std::size_t out_depth, double M, double tol,
                       std::optional<std::size_t> available = std::nullopt,
                       std::size_t max_sweeps = kShadowSweepCap) {
    if (!sys.certificate) throw PreconditionError("shadow needs an expanding system");
    const double lambda = sys.certificate->lambda;
    const double K = sys.certificate->K;
    if (!(lambda > 1.0)) throw ParameterError("expansion factor must exceed 1");
    const double slack = 1e-12 * std::max(1.0, M);

    std::vector<P> prev, cur(out_depth + 1);
    double change = INFINITY;
    std::size_t n = out_depth;
    std::size_t checked = 0;  // pseudo-orbit defect verified for levels <= checked
    for (std::size_t sweep = 0;; ++sweep) {
        if (available && n > *available) throw ConvergenceError("pseudo-orbit prefix exhausted before convergence");
        if (sys.depth && n > *sys.depth) throw ConvergenceError("system depth exhausted before convergence");
        for (; checked < n; ++checked) {
            double d = sys.dist(checked, pseudo(checked), sys.bond(checked + 1, pseudo(checked + 1)));
            if (d > M + slack)
                throw PreconditionError("pseudo-orbit defect " + std::to_string(d) + " exceeds M at level " +
                                        std::to_string(checked + 1));
        }
        P x = pseudo(n);
        for (std::size_t j = n; j > out_depth; --j) x = sys.bond(j, x);
        cur[out_depth] = x;
        for (std::size_t j = out_depth; j > 0; --j) cur[j - 1] = sys.bond(j, cur[j]);
        if (!prev.empty()) {
            change = 0.0;
            for (std::size_t j = 0; j <= out_depth; ++j) change = std::max(change, sys.dist(j, cur[j], prev[j]));
            if (change < tol) {
                ShadowResult<P> r;
                r.orbit.coords = cur;
                r.orbit.residual = orbit_residual(sys, cur);
                r.bound = lambda * std::max(M, K) / (lambda - 1.0);
                for (std::size_t j = 0; j <= out_depth; ++j)
                    r.max_deviation = std::max(r.max_deviation, sys.dist(j, cur[j], pseudo(j)));
                r.sweeps = sweep + 1;
                r.last_change = change;
                return r;
            }
        }
        if (sweep + 1 >= max_sweeps)
            throw ConvergenceError("shadow did not converge within " + std::to_string(max_sweeps) +
                                   " sweeps (last change " + std::to_string(change) + ")");
        prev = cur;
        ++n;
    }
}

/// Shadowing for a pseudo-orbit known only on a finite prefix.
template <class P>
ShadowResult<P> shadow(const InverseSystem<P>& sys, const std::vector<P>& pseudo, std::size_t out_depth, double M,
                       double tol) {
    if (pseudo.empty()) throw ParameterError("empty pseudo-orbit");
    std::function<P(std::size_t)> at = [&pseudo](std::size_t j) { return pseudo.at(j); };
    return shadow(sys, at, out_depth, M, tol, pseudo.size() - 1);
}

/// Sampled check of the four pseudo-conjugacy conditions.
template <class P, class Q>
struct PseudoConjugacyCheck {
    double worst_a = 0.0;   ///< max d_{Y_{j-1}}(g_j ψ_j x, ψ_{j-1} f_j x)
    double worst_b = 0.0;   ///< max over Y-samples of the distance to ψ_j(samples)
    double worst_c = 0.0;   ///< max d_Y(ψ f x, ψ f x̃) over pairs with d_X <= Δ_c
    double worst_d = 0.0;   ///< max d_X(x, x̃) over pairs with d_Y(ψ x, ψ x̃) <= Δ_d
    std::string violated;   ///< "" or the first violated condition, "(a)".."(d)"
};

template <class P, class Q>
struct PseudoConjugacy {
    std::function<Q(std::size_t, const P&)> psi;
    double M = 0.0;
    /// Optional limits for the existential conditions (c) and (d).
    double delta_c = 1.0, bound_c = INFINITY;
    double delta_d = 1.0, bound_d = INFINITY;
};

template <class P, class Q>
PseudoConjugacyCheck<P, Q> check_pseudo_conjugacy(const InverseSystem<P>& sx, const InverseSystem<Q>& sy,
                                                  const PseudoConjugacy<P, Q>& pc, std::size_t levels,
                                                  const std::function<std::vector<P>(std::size_t)>& x_samples,
                                                  const std::function<std::vector<Q>(std::size_t)>& y_samples) {
    PseudoConjugacyCheck<P, Q> out;
    const double eps = 1e-12 * std::max(1.0, pc.M);
    auto flag = [&](const char* name) {
        if (out.violated.empty()) out.violated = name;
    };
    for (std::size_t j = 0; j <= levels; ++j) {
        auto xs = x_samples(j);
        std::vector<Q> images;
        images.reserve(xs.size());
        for (const auto& x : xs) images.push_back(pc.psi(j, x));
        if (j >= 1) {
            for (const auto& x : xs) {
                double a = sy.dist(j - 1, sy.bond(j, pc.psi(j, x)), pc.psi(j - 1, sx.bond(j, x)));
                out.worst_a = std::max(out.worst_a, a);
            }
            for (std::size_t p = 0; p < xs.size(); ++p)
                for (std::size_t q = p + 1; q < xs.size(); ++q)
                    if (sx.dist(j, xs[p], xs[q]) <= pc.delta_c) {
                        double c = sy.dist(j - 1, pc.psi(j - 1, sx.bond(j, xs[p])), pc.psi(j - 1, sx.bond(j, xs[q])));
                        out.worst_c = std::max(out.worst_c, c);
                    }
        }
        for (const auto& y : y_samples(j)) {
            double best = INFINITY;
            for (const auto& im : images) best = std::min(best, sy.dist(j, im, y));
            out.worst_b = std::max(out.worst_b, best);
        }
        for (std::size_t p = 0; p < xs.size(); ++p)
            for (std::size_t q = p + 1; q < xs.size(); ++q)
                if (sy.dist(j, images[p], images[q]) <= pc.delta_d)
                    out.worst_d = std::max(out.worst_d, sx.dist(j, xs[p], xs[q]));
    }
    if (out.worst_a > pc.M + eps) flag("(a)");
    if (out.worst_b > pc.M + eps) flag("(b)");
    if (out.worst_c > pc.bound_c) flag("(c)");
    if (out.worst_d > pc.bound_d) flag("(d)");
    return out;
}

template <class Q>
struct ConjugacyValue {
    Q value;                        ///< g_{n..k}(ψ_k(x_k))
    double bound = 0.0;             ///< max(M, K_Y)·λ_Y/(λ_Y - 1)
    std::vector<double> increments; ///< increments[i]: distance between depths n+i and n+i+1
    std::vector<double> envelope;   ///< envelope[i]: sum of increments[i..], bounds all later changes
};

/**
 * Evaluates the n-th coordinate of the conjugacy at depth k by pulling ψ_k(x_k)
 * down through g_{n+1}, ..., g_k. Increments between depths k' and k'+1 are
 * reported for all n <= k' < k.
 */
template <class P, class Q>
ConjugacyValue<Q> conjugacy_eval(const InverseSystem<P>& sx, const InverseSystem<Q>& sy,
                                 const PseudoConjugacy<P, Q>& pc, const BackwardOrbit<P>& x, std::size_t n,
                                 std::size_t k) {
    if (k < n) throw ParameterError("conjugacy depth k must be at least n");
    if (x.coords.size() <= k) throw ParameterError("orbit is shorter than the requested depth");
    if (!sx.certificate || !sy.certificate) throw PreconditionError("both systems need expansion certificates");
    const double lambda = sy.certificate->lambda;
    auto pull = [&](std::size_t depth) {
        Q y = pc.psi(depth, x.coords[depth]);
        for (std::size_t j = depth; j > n; --j) y = sy.bond(j, y);
        return y;
    };
    ConjugacyValue<Q> out{pull(n), std::max(pc.M, sy.certificate->K) * lambda / (lambda - 1.0), {}, {}};
    for (std::size_t depth = n + 1; depth <= k; ++depth) {
        Q next = pull(depth);
        out.increments.push_back(sy.dist(n, next, out.value));
        out.value = next;
    }
    out.envelope.assign(out.increments.size() + 1, 0.0);
    for (std::size_t i = out.increments.size(); i-- > 0;) out.envelope[i] = out.envelope[i + 1] + out.increments[i];
    return out;
}

/// Throws CertificateError naming the first violated pseudo-conjugacy condition.
template <class P, class Q>
void require_pseudo_conjugacy(const PseudoConjugacyCheck<P, Q>& check) {
    if (!check.violated.empty())
        throw CertificateError("pseudo-conjugacy condition " + check.violated + " fails on the sampled data");
}

/// conjugacy_eval after checking the bridge on sampled data up to level k.
template <class P, class Q>
ConjugacyValue<Q> conjugacy_eval(const InverseSystem<P>& sx, const InverseSystem<Q>& sy,
                                 const PseudoConjugacy<P, Q>& pc, const BackwardOrbit<P>& x, std::size_t n,
                                 std::size_t k, const std::function<std::vector<P>(std::size_t)>& x_samples,
                                 const std::function<std::vector<Q>(std::size_t)>& y_samples) {
    if (k < n) throw ParameterError("conjugacy depth k must be at least n");
    require_pseudo_conjugacy(check_pseudo_conjugacy(sx, sy, pc, k, x_samples, y_samples));
    return conjugacy_eval(sx, sy, pc, x, n, k);
}

// Interval systems built from PL maps.

/// A scaled interval metric γ|x - y| on [0,1].
struct ScaledInterval {
    double gamma = 1.0;
    double operator()(double x, double y) const { return gamma * std::abs(x - y); }
};

/// bonds[j-1] = f_j; gammas[j] scales X_j. A single map with `autonomous` repeats forever.
InverseSystem<double> interval_system(std::vector<PLMap> bonds, std::vector<double> gammas,
                                      std::optional<ExpansionCertificate> certificate = std::nullopt);
InverseSystem<Rational> exact_interval_system(std::vector<PLMap> bonds, std::vector<Rational> gammas);

/**
 * Blow-up constants γ_0 = 1, γ_j >= max(λ·Lip(f_j)·γ_{j-1}, 1, 2j/M_j) where M_j is the
 * smallest separation (grid oracle at 2^-10) whose image under some f_{j..k} deviates by
 * at least 1/j. Results are rounded up to integers.
 */
std::vector<Rational> make_expanding(const std::vector<PLMap>& maps, const Rational& K, const Rational& lambda);

/// Grid oracle for the separation M_j above (exposed for tests).
Rational backward_shrinking_separation(const std::vector<PLMap>& maps, std::size_t j, unsigned log2_resolution = 10);

/// Orbits whose top coordinate x_d lies on the r-point grid of [0,1], extended exactly downward.
std::vector<BackwardOrbit<Rational>> truncated_limit(const std::vector<PLMap>& bonds, std::size_t depth,
                                                     std::size_t resolution);

/// sup_j 2^{-j} min(1, γ_j |x_j - y_j|).
double limit_distance(const BackwardOrbit<Rational>& x, const BackwardOrbit<Rational>& y,
                      const std::vector<double>& gammas);

struct FiberDiameter {
    double diameter = 0.0;
    std::size_t members = 0;
    bool empty = true;
};

/// Limit-metric diameter of the sampled orbits with γ_j|x_j - t| <= tol.
FiberDiameter projection_fiber_diameter(const std::vector<BackwardOrbit<Rational>>& samples,
                                        const std::vector<double>& gammas, std::size_t j, const Rational& t,
                                        double tol = 0.0);

/// One row per orbit, columns x_0..x_d.
void write_orbits_csv(std::ostream& out, const std::vector<BackwardOrbit<Rational>>& orbits);

} // namespace cforge
