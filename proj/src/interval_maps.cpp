#include "cforge/interval_maps.hpp"

#include "cforge/error.hpp"

#include <algorithm>
#include <set>

namespace cforge {

PLMap::PLMap(std::vector<Rational> breakpoints, std::vector<Rational> values)
    : xs_(std::move(breakpoints)), ys_(std::move(values)) {
    if (xs_.size() < 2 || xs_.size() != ys_.size())
        throw DomainError("PLMap needs at least two breakpoints and one value per breakpoint");
    if (xs_.front() != 0 || xs_.back() != 1)
        throw DomainError("PLMap breakpoints must start at 0 and end at 1");
    for (std::size_t i = 1; i < xs_.size(); ++i)
        if (!(xs_[i - 1] < xs_[i])) throw DomainError("PLMap breakpoints must be strictly increasing");
    for (const auto& y : ys_)
        if (y < 0 || y > 1) throw DomainError("PLMap value " + to_string(y) + " outside [0,1]");
}

PLMap PLMap::identity() { return PLMap({0, 1}, {0, 1}); }

PLMap PLMap::from_points(const std::vector<std::pair<Rational, Rational>>& pts) {
    std::vector<Rational> xs, ys;
    xs.reserve(pts.size());
    ys.reserve(pts.size());
    for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
    }
    return PLMap(std::move(xs), std::move(ys));
}

bool PLMap::surjective() const { return min_value() == 0 && max_value() == 1; }

Rational PLMap::min_value() const { return *std::min_element(ys_.begin(), ys_.end()); }
Rational PLMap::max_value() const { return *std::max_element(ys_.begin(), ys_.end()); }

Rational PLMap::slope(std::size_t i) const { return (ys_[i + 1] - ys_[i]) / (xs_[i + 1] - xs_[i]); }

Rational PLMap::lipschitz() const {
    Rational best = 0;
    for (std::size_t i = 0; i < pieces(); ++i) best = std::max(best, Rational(abs(slope(i))));
    return best;
}

std::size_t PLMap::piece_of(const Rational& x) const {
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    if (i == 0) return 0;
    return std::min(i - 1, pieces() - 1);
}

Rational PLMap::operator()(const Rational& x) const {
    if (x < 0 || x > 1) throw DomainError("PLMap argument " + to_string(x) + " outside [0,1]");
    std::size_t i = piece_of(x);
    if (x == xs_[i]) return ys_[i];
    return ys_[i] + (x - xs_[i]) * slope(i);
}

double PLMap::eval_double(double x) const {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("PLMap argument outside [0,1]");
    std::size_t lo = 0, hi = xs_.size() - 1;
    while (hi - lo > 1) {
        std::size_t mid = (lo + hi) / 2;
        if (xs_[mid].get_d() <= x) lo = mid; else hi = mid;
    }
    double x0 = xs_[lo].get_d(), x1 = xs_[hi].get_d();
    double y0 = ys_[lo].get_d(), y1 = ys_[hi].get_d();
    return y0 + (x - x0) * (y1 - y0) / (x1 - x0);
}

std::pair<Rational, Rational> PLMap::image(const Rational& a, const Rational& b) const {
    if (a > b) return image(b, a);
    Rational lo = (*this)(a), hi = lo;
    auto widen = [&](const Rational& v) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    };
    widen((*this)(b));
    for (std::size_t i = 0; i < xs_.size(); ++i)
        if (xs_[i] > a && xs_[i] < b) widen(ys_[i]);
    return {lo, hi};
}

PLMap PLMap::simplified() const {
    std::vector<Rational> xs{xs_.front()}, ys{ys_.front()};
    for (std::size_t i = 1; i + 1 < xs_.size(); ++i) {
        Rational left = (ys_[i] - ys.back()) / (xs_[i] - xs.back());
        Rational right = (ys_[i + 1] - ys_[i]) / (xs_[i + 1] - xs_[i]);
        if (left != right) {
            xs.push_back(xs_[i]);
            ys.push_back(ys_[i]);
        }
    }
    xs.push_back(xs_.back());
    ys.push_back(ys_.back());
    return PLMap(std::move(xs), std::move(ys));
}

Rational eval(const PLMap& map, const Rational& x) { return map(x); }

PLMap compose(const PLMap& outer, const PLMap& inner) {
    const auto& xs = inner.breakpoints();
    const auto& ys = inner.values();
    const auto& obs = outer.breakpoints();
    std::vector<Rational> out_x;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        out_x.push_back(xs[i]);
        const Rational& y0 = ys[i];
        const Rational& y1 = ys[i + 1];
        if (y0 == y1) continue;
        std::vector<Rational> cuts;
        const Rational& lo = y0 < y1 ? y0 : y1;
        const Rational& hi = y0 < y1 ? y1 : y0;
        for (const auto& b : obs)
            if (b > lo && b < hi) cuts.push_back(xs[i] + (b - y0) * (xs[i + 1] - xs[i]) / (y1 - y0));
        std::sort(cuts.begin(), cuts.end());
        out_x.insert(out_x.end(), cuts.begin(), cuts.end());
    }
    out_x.push_back(xs.back());
    std::vector<Rational> out_y;
    out_y.reserve(out_x.size());
    for (const auto& x : out_x) out_y.push_back(outer(inner(x)));
    return PLMap(std::move(out_x), std::move(out_y));
}

Rational min_preimage(const PLMap& map, const Rational& a) {
    const auto& xs = map.breakpoints();
    const auto& ys = map.values();
    if (ys[0] == a) return xs[0];
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const Rational& y0 = ys[i];
        const Rational& y1 = ys[i + 1];
        if (y1 == a) {
            // The crossing may happen strictly inside the piece only if y0 == a, handled above.
            return xs[i + 1];
        }
        if ((y0 < a && a < y1) || (y1 < a && a < y0))
            return xs[i] + (a - y0) * (xs[i + 1] - xs[i]) / (y1 - y0);
    }
    throw NoSolutionError("value " + to_string(a) + " is not attained by the map");
}

std::vector<Rational> tau_sequence(const PLMap& g, std::size_t count) {
    if (!g.fixes_zero() || !g.fixes_one())
        throw PreconditionError("tau_sequence needs g(0)=0 and g(1)=1");
    const auto& xs = g.breakpoints();
    auto check_below = [&](const Rational& x) {
        if (x > 0 && x < 1 && !(g(x) < x))
            throw PreconditionError("g(x) < x fails at x = " + to_string(x));
    };
    for (std::size_t i = 0; i < xs.size(); ++i) {
        check_below(xs[i]);
        if (i + 1 < xs.size()) check_below((xs[i] + xs[i + 1]) / 2);
    }

    std::vector<Rational> tau;
    tau.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (k == 0) tau.push_back(min_preimage(g, Rational(1, 2)));
        else if (k == 1) tau.push_back(min_preimage(g, (1 + tau[0]) / 3));
        else if (k == 2) tau.push_back(min_preimage(g, (1 + 4 * tau[0]) / 6));
        else tau.push_back(min_preimage(g, tau[k - 3]));
    }

    for (std::size_t k = 0; k < tau.size(); ++k) {
        if (!(tau[k] > 0 && tau[k] < 1)) throw Error("tau_" + std::to_string(k) + " left (0,1)");
        if (k > 0 && !(tau[k - 1] < tau[k])) throw Error("tau sequence is not increasing at " + std::to_string(k));
        if (k >= 3 && g(tau[k]) != tau[k - 3]) throw Error("cascade identity fails at " + std::to_string(k));
        Rational peak = g(tau[k]);
        for (std::size_t i = 0; i < xs.size() && xs[i] < tau[k]; ++i) {
            Rational next = i + 1 < xs.size() ? std::min(xs[i + 1], tau[k]) : tau[k];
            if (!(g(xs[i]) < peak) || !(g((xs[i] + next) / 2) < peak))
                throw Error("peak property fails below tau_" + std::to_string(k));
        }
    }
    return tau;
}

PLMap snap_to_generating_set(std::vector<std::pair<double, double>> samples, const Rational& eps,
                             SnapOptions options) {
    if (!(eps > 0)) throw ParameterError("snap tolerance must be positive");
    if (samples.empty()) throw InputError("no samples to snap");
    std::sort(samples.begin(), samples.end());
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].first == samples[i - 1].first && samples[i].second != samples[i - 1].second)
            throw InputError("inconsistent samples: two values at x = " + std::to_string(samples[i].first));
    samples.erase(std::unique(samples.begin(), samples.end()), samples.end());

    const Rational x_tol = pow2(-40);
    const Rational y_tol = eps / 2;
    std::vector<std::pair<Rational, Rational>> pts;
    for (const auto& [x, y] : samples) {
        if (x < 0.0 || x > 1.0) throw DomainError("sample abscissa outside [0,1]");
        Rational qx = simplest_within(from_double(x), x_tol);
        Rational qy = simplest_within(from_double(y), y_tol);
        if (qy < 0) qy = 0;
        if (qy > 1) qy = 1;
        if (!pts.empty() && pts.back().first == qx) {
            if (pts.back().second != qy) throw InputError("samples collide after snapping");
            continue;
        }
        pts.emplace_back(qx, qy);
    }
    if (pts.front().first != 0) pts.insert(pts.begin(), {Rational(0), pts.front().second});
    if (pts.back().first != 1) pts.emplace_back(Rational(1), pts.back().second);
    if (options.fix_zero) pts.front().second = 0;
    if (options.fix_one) pts.back().second = 1;
    return PLMap::from_points(pts).simplified();
}

PLMap one_point_composant_map() { return PLMap({0, Rational(1, 2), 1}, {Rational(1, 4), 0, 1}); }

PLMap cantor_family_map(const Rational& a) {
    if (a < 0 || a >= 1) throw ParameterError("g_a needs a in [0,1)");
    if (a == 0) return PLMap({0, Rational(1, 2), 1}, {0, 0, 1});
    return PLMap({0, Rational(1, 4), Rational(1, 2), 1}, {a, a, 0, 1});
}

Rational cantor_parameter(long n) {
    if (n < 1) throw ParameterError("Cantor family index starts at 1");
    if (n == 1) return 0;
    return 1 - pow2(-((n - 1) / 2));
}

Rational cantor_backward_image(long n, long k, const Rational& x) {
    if (k > n || k < 0) throw ParameterError("need 0 <= k <= n");
    Rational v = x;
    for (long j = n; j > k; --j) v = cantor_family_map(cantor_parameter(j))(v);
    return v;
}

void to_json(nlohmann::json& j, const PLMap& map) {
    std::vector<std::string> bx, vy;
    for (const auto& x : map.breakpoints()) bx.push_back(to_string(x));
    for (const auto& y : map.values()) vy.push_back(to_string(y));
    j = nlohmann::json{{"breakpoints", bx}, {"values", vy}};
}

PLMap pl_map_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("breakpoints") || !j.contains("values"))
        throw InputError("PLMap JSON needs 'breakpoints' and 'values'");
    auto read = [](const nlohmann::json& arr) {
        std::vector<Rational> out;
        for (const auto& e : arr) {
            if (e.is_string()) out.push_back(parse_rational(e.get<std::string>()));
            else if (e.is_number_integer()) out.emplace_back(e.get<long>());
            else throw InputError("PLMap entries must be \"p/q\" strings");
        }
        return out;
    };
    try {
        return PLMap(read(j.at("breakpoints")), read(j.at("values")));
    } catch (const DomainError& e) {
        throw InputError(e.what());
    }
}

} // namespace cforge
