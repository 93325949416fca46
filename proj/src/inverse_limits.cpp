#include "cforge/inverse_limits.hpp"

#include <memory>

namespace cforge {

namespace {

template <class T>
const PLMap& bond_at(const std::vector<PLMap>& bonds, std::size_t j) {
    if (j == 0) throw DomainError("X_0 has no bonding map");
    if (bonds.size() == 1) return bonds.front();
    if (j > bonds.size()) throw DomainError("bonding map f_" + std::to_string(j) + " is not defined");
    return bonds[j - 1];
}

template <class G>
G gamma_at(const std::vector<G>& gammas, std::size_t j) {
    if (gammas.empty()) return G(1);
    return j < gammas.size() ? gammas[j] : gammas.back();
}

std::optional<std::size_t> depth_of(const std::vector<PLMap>& bonds) {
    if (bonds.size() == 1) return std::nullopt;
    return bonds.size();
}

} // namespace

InverseSystem<double> interval_system(std::vector<PLMap> bonds, std::vector<double> gammas,
                                      std::optional<ExpansionCertificate> certificate) {
    if (bonds.empty()) throw ParameterError("an inverse system needs at least one bonding map");
    auto b = std::make_shared<const std::vector<PLMap>>(std::move(bonds));
    auto g = std::make_shared<const std::vector<double>>(std::move(gammas));
    InverseSystem<double> sys;
    sys.bond = [b](std::size_t j, const double& x) { return bond_at<double>(*b, j).eval_double(x); };
    sys.dist = [g](std::size_t j, const double& x, const double& y) { return gamma_at(*g, j) * std::abs(x - y); };
    sys.depth = depth_of(*b);
    sys.certificate = certificate;
    return sys;
}

InverseSystem<Rational> exact_interval_system(std::vector<PLMap> bonds, std::vector<Rational> gammas) {
    if (bonds.empty()) throw ParameterError("an inverse system needs at least one bonding map");
    auto b = std::make_shared<const std::vector<PLMap>>(std::move(bonds));
    auto g = std::make_shared<const std::vector<Rational>>(std::move(gammas));
    InverseSystem<Rational> sys;
    sys.bond = [b](std::size_t j, const Rational& x) { return bond_at<Rational>(*b, j)(x); };
    sys.dist = [g](std::size_t j, const Rational& x, const Rational& y) {
        Rational d = x - y;
        return to_double(gamma_at(*g, j) * abs(d));
    };
    sys.depth = depth_of(*b);
    return sys;
}

Rational backward_shrinking_separation(const std::vector<PLMap>& maps, std::size_t j, unsigned log2_resolution) {
    if (j == 0 || j > maps.size()) throw ParameterError("separation level out of range");
    if (log2_resolution > 16) throw ParameterError("grid resolution above 2^16 is not supported");
    const std::size_t n = std::size_t(1) << log2_resolution;
    const double target = 1.0 / double(j) - 1e-12;
    std::vector<double> h(n + 1);
    for (std::size_t i = 0; i <= n; ++i) h[i] = double(i) / double(n);
    // Level k = j is the identity; each further step applies f_k, giving f_{j..k-1}.
    std::size_t best = n + 1;
    for (std::size_t k = j + 1; k-- > 0;) {
        if (k < j)
            for (auto& v : h) v = maps[k].eval_double(v);
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t m = 1; m < best && i + m <= n; ++m)
                if (std::abs(h[i + m] - h[i]) >= target) {
                    best = m;
                    break;
                }
    }
    if (best > n) throw NoSolutionError("no pair separates by 1/j at this resolution");
    Rational r{static_cast<long>(best), static_cast<long>(n)};
    r.canonicalize();
    return r;
}

std::vector<Rational> make_expanding(const std::vector<PLMap>& maps, const Rational& K, const Rational& lambda) {
    if (lambda <= 1) throw ParameterError("expansion factor λ must exceed 1");
    if (K <= 0) throw ParameterError("the scale K must be positive");
    for (std::size_t i = 0; i < maps.size(); ++i)
        if (!maps[i].surjective())
            throw PreconditionError("bonding map f_" + std::to_string(i + 1) + " is not surjective");
    std::vector<Rational> gamma{Rational(1)};
    for (std::size_t j = 1; j <= maps.size(); ++j) {
        Rational g = lambda * maps[j - 1].lipschitz() * gamma.back();
        Rational shrink = Rational(long(2 * j)) / backward_shrinking_separation(maps, j);
        g = std::max({g, shrink, Rational(1)});
        Rational c = floor_q(g);
        if (c < g) c += 1;
        gamma.push_back(c);
    }
    return gamma;
}

std::vector<BackwardOrbit<Rational>> truncated_limit(const std::vector<PLMap>& bonds, std::size_t depth,
                                                     std::size_t resolution) {
    if (resolution < 2) throw ParameterError("truncated limit needs at least two grid points");
    if (bonds.empty() && depth > 0) throw ParameterError("no bonding maps supplied");
    std::vector<BackwardOrbit<Rational>> out;
    out.reserve(resolution);
    for (std::size_t i = 0; i < resolution; ++i) {
        BackwardOrbit<Rational> o;
        o.coords.resize(depth + 1);
        Rational x{static_cast<long>(i), static_cast<long>(resolution - 1)};
        x.canonicalize();
        o.coords[depth] = x;
        for (std::size_t j = depth; j > 0; --j) o.coords[j - 1] = bond_at<Rational>(bonds, j)(o.coords[j]);
        out.push_back(std::move(o));
    }
    return out;
}

double limit_distance(const BackwardOrbit<Rational>& x, const BackwardOrbit<Rational>& y,
                      const std::vector<double>& gammas) {
    const std::size_t n = std::min(x.coords.size(), y.coords.size());
    double d = 0.0, w = 1.0;
    for (std::size_t j = 0; j < n; ++j, w *= 0.5) {
        double dj = gamma_at(gammas, j) * std::abs(to_double(x.coords[j] - y.coords[j]));
        d = std::max(d, w * std::min(1.0, dj));
    }
    return d;
}

FiberDiameter projection_fiber_diameter(const std::vector<BackwardOrbit<Rational>>& samples,
                                        const std::vector<double>& gammas, std::size_t j, const Rational& t,
                                        double tol) {
    std::vector<const BackwardOrbit<Rational>*> fiber;
    const double g = gamma_at(gammas, j);
    for (const auto& o : samples) {
        if (o.coords.size() <= j) throw ParameterError("sample orbit is shorter than the projection level");
        bool in = tol == 0.0 ? o.coords[j] == t : g * std::abs(to_double(o.coords[j] - t)) <= tol;
        if (in) fiber.push_back(&o);
    }
    FiberDiameter out;
    out.members = fiber.size();
    out.empty = fiber.empty();
    for (std::size_t p = 0; p < fiber.size(); ++p)
        for (std::size_t q = p + 1; q < fiber.size(); ++q)
            out.diameter = std::max(out.diameter, limit_distance(*fiber[p], *fiber[q], gammas));
    return out;
}

void write_orbits_csv(std::ostream& out, const std::vector<BackwardOrbit<Rational>>& orbits) {
    std::size_t width = 0;
    for (const auto& o : orbits) width = std::max(width, o.coords.size());
    for (std::size_t j = 0; j < width; ++j) out << (j ? "," : "") << "x_" << j;
    out << '\n';
    for (const auto& o : orbits) {
        for (std::size_t j = 0; j < o.coords.size(); ++j) out << (j ? "," : "") << to_string(o.coords[j]);
        out << '\n';
    }
}

} // namespace cforge
