#include "cforge/julia_continua.hpp"
#include "cforge/error.hpp"
#include "cforge/inverse_limits.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <set>

namespace cforge {

namespace {

const double kPi = std::acos(-1.0);
const double kTwoPi = 2.0 * kPi;
const cplx kI(0.0, 1.0);

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt(cplx z) { return "(" + fmt(z.real()) + ", " + fmt(z.imag()) + ")"; }

/// Translate index m with z - 2πim in the horizontal band of the prototype.
long translate_index(const RectilinearTract& t, cplx z) {
    return static_cast<long>(std::floor((z.imag() - kPi * to_double(t.min_y())) / kTwoPi));
}

std::vector<cplx> prototype_grid(const RectilinearTract& t, double h, double x_hi) {
    std::vector<cplx> pts;
    const double x0 = to_double(t.min_x());
    const double y0 = kPi * to_double(t.min_y());
    const double y1 = kPi * to_double(t.max_y());
    for (double x = x0 + 0.5 * h; x < x_hi; x += h)
        for (double y = y0 + 0.5 * h; y < y1; y += h)
            if (contains(t, cplx(x, y))) pts.emplace_back(x, y);
    return pts;
}

double euclidean_diameter(const std::vector<cplx>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, std::abs(pts[i] - pts[j]));
    return d;
}

double hyperbolic_diameter(const std::vector<cplx>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, halfplane_distance(pts[i], pts[j]));
    return d;
}

void require_log_model(const Model& model, const char* what) {
    if (!model.has_tracts()) throw PreconditionError(std::string(what) + " needs a model with tracts");
}

const TractPrototype& find_prototype(const Model& model, const std::string& label) {
    for (const auto& p : model.prototypes())
        if (p.label == label) return p;
    throw ParameterError("unknown tract label '" + label + "'");
}

cplx pull_back(const Model& model, const AddressEntry& e, cplx zeta) {
    try {
        return model.inverse_branch(e, zeta);
    } catch (const ConvergenceError& err) {
        throw AccuracyError(std::string("inverse branch failed: ") + err.what(), INFINITY);
    }
}

} // namespace

// External addresses

ExternalAddress::ExternalAddress(std::vector<AddressEntry> entries, std::optional<std::size_t> period, bool bounded)
    : entries_(std::move(entries)), period_(period), bounded_(bounded) {
    if (entries_.empty()) throw ParameterError("an external address needs at least one entry");
    if (period_ && (*period_ == 0 || *period_ > entries_.size()))
        throw ParameterError("address period must lie in [1, number of entries]");
    for (const auto& e : entries_)
        if (e.tract.empty()) throw ParameterError("address entry with empty tract label");
}

ExternalAddress ExternalAddress::periodic(std::vector<AddressEntry> cycle) {
    const std::size_t p = cycle.size();
    return ExternalAddress(std::move(cycle), p);
}

ExternalAddress ExternalAddress::prefix(std::vector<AddressEntry> entries, bool bounded) {
    return ExternalAddress(std::move(entries), std::nullopt, bounded);
}

const AddressEntry& ExternalAddress::at(std::size_t j) const {
    if (j < entries_.size()) return entries_[j];
    if (!period_)
        throw PreconditionError("address is only defined on " + std::to_string(entries_.size()) + " entries, asked for " +
                                std::to_string(j));
    const std::size_t p = *period_;
    const std::size_t start = entries_.size() - p;
    return entries_[start + (j - start) % p];
}

std::size_t ExternalAddress::defined_length() const {
    return period_ ? std::numeric_limits<std::size_t>::max() : entries_.size();
}

ExternalAddress ExternalAddress::shifted(const std::vector<long>& offsets) const {
    std::size_t len = std::max(entries_.size(), offsets.size());
    if (period_) len = std::max(entries_.size(), offsets.size() + *period_);
    else if (offsets.size() > entries_.size())
        throw PreconditionError("offsets extend past the defined prefix of the address");
    std::vector<AddressEntry> out;
    out.reserve(len);
    for (std::size_t j = 0; j < len; ++j) {
        AddressEntry e = at(j);
        if (j < offsets.size()) e.m += offsets[j];
        out.push_back(std::move(e));
    }
    return ExternalAddress(std::move(out), period_, bounded_);
}

void to_json(nlohmann::json& j, const ExternalAddress& a) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : a.entries()) entries.push_back({{"tract", e.tract}, {"m", e.m}});
    j = {{"entries", entries}, {"bounded", a.bounded()}};
    if (a.period()) j["period"] = *a.period();
    else j["period"] = nullptr;
}

ExternalAddress address_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || !j.contains("entries")) throw InputError("address JSON needs an 'entries' array");
        std::vector<AddressEntry> entries;
        for (const auto& e : j.at("entries")) entries.push_back({e.at("tract").get<std::string>(), e.at("m").get<long>()});
        std::optional<std::size_t> period;
        if (j.contains("period") && !j.at("period").is_null()) period = j.at("period").get<std::size_t>();
        bool bounded = j.value("bounded", false);
        return ExternalAddress(std::move(entries), period, bounded);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed address JSON: ") + e.what());
    } catch (const ParameterError& e) {
        throw InputError(std::string("invalid address: ") + e.what());
    }
}

// Models

cplx Model::inverse_branch(const AddressEntry&, cplx) const {
    throw PreconditionError("model '" + name() + "' has no tracts and no inverse branches");
}

const std::vector<TractPrototype>& Model::prototypes() const {
    static const std::vector<TractPrototype> none;
    return none;
}

LogModel::LogModel(std::string name, std::vector<TractPrototype> tracts, double expansion_window)
    : name_(std::move(name)), tracts_(std::move(tracts)) {
    if (tracts_.empty()) throw ParameterError("a log model needs at least one tract");
    std::set<std::string> labels;
    for (const auto& p : tracts_) {
        if (!labels.insert(p.label).second) throw ParameterError("duplicate tract label '" + p.label + "'");
        if (!p.F) throw ParameterError("tract '" + p.label + "' has no conformal map");
        if (!(p.shape.min_x() > 0)) throw PreconditionError("closure of tract '" + p.label + "' is not inside H");
        if (p.shape.max_y() - p.shape.min_y() > 2)
            throw PreconditionError("tract '" + p.label + "' is taller than 2π; its translates overlap");
        if (!contains(p.shape, p.base)) throw ParameterError("base point of tract '" + p.label + "' is outside it");
    }
    // Translates are disjoint when the vertical spans, reduced mod 2π, are disjoint. Otherwise
    // fall back to a sampled check.
    for (std::size_t a = 0; a < tracts_.size(); ++a)
        for (std::size_t b = a + 1; b < tracts_.size(); ++b) {
            const auto& P = tracts_[a].shape;
            const auto& Q = tracts_[b].shape;
            // Shift Q's span so that it starts in [P.min_y, P.min_y + 2).
            Rational q0 = Q.min_y(), q1 = Q.max_y();
            while (q0 >= P.min_y() + 2) { q0 -= 2; q1 -= 2; }
            while (q0 < P.min_y()) { q0 += 2; q1 += 2; }
            bool spans_disjoint = q0 >= P.max_y() && q1 <= P.min_y() + 2;
            if (spans_disjoint) continue;
            for (const cplx& z : prototype_grid(P, 0.05, to_double(P.max_vertex_x()) + 2.0)) {
                long m = translate_index(Q, z);
                if (contains(Q, z - kI * (kTwoPi * static_cast<double>(m))))
                    throw PreconditionError("translates of tracts '" + tracts_[a].label + "' and '" + tracts_[b].label +
                                            "' intersect near " + fmt(z));
            }
        }
    lambda_ = INFINITY;
    for (const auto& p : tracts_) {
        const double x0 = to_double(p.shape.min_x());
        auto est = expansion_constant(*p.F, p.shape, x0, x0 + expansion_window, 24, 12);
        lambda_ = std::min(lambda_, est.lambda);
    }
}

const TractPrototype& LogModel::prototype(const std::string& label) const {
    for (const auto& p : tracts_)
        if (p.label == label) return p;
    throw ParameterError("unknown tract label '" + label + "'");
}

std::optional<AddressEntry> LogModel::locate(cplx z) const {
    if (is_infinity(z)) return std::nullopt;
    for (const auto& p : tracts_) {
        long m = translate_index(p.shape, z);
        if (contains(p.shape, z - kI * (kTwoPi * static_cast<double>(m)))) return AddressEntry{p.label, m};
    }
    return std::nullopt;
}

bool LogModel::in_translate(const AddressEntry& e, cplx z, double tol) const {
    if (is_infinity(z)) return false;
    const auto& p = prototype(e.tract);
    cplx u = z - kI * (kTwoPi * static_cast<double>(e.m));
    return contains(p.shape, u) || (tol > 0 && boundary_distance(p.shape, u) <= tol);
}

cplx LogModel::eval(cplx z) const {
    auto loc = locate(z);
    if (!loc) throw DomainError("point " + fmt(z) + " lies in no tract translate");
    const auto& p = prototype(loc->tract);
    return (*p.F)(z - kI * (kTwoPi * static_cast<double>(loc->m)));
}

cplx LogModel::derivative(cplx z) const {
    auto loc = locate(z);
    if (!loc) throw DomainError("point " + fmt(z) + " lies in no tract translate");
    const auto& p = prototype(loc->tract);
    return p.F->derivative(z - kI * (kTwoPi * static_cast<double>(loc->m)));
}

cplx LogModel::inverse_branch(const AddressEntry& e, cplx zeta) const {
    if (is_infinity(zeta)) return kInfinity;
    const auto& p = prototype(e.tract);
    return p.F->inverse(zeta) + kI * (kTwoPi * static_cast<double>(e.m));
}

DirectModel::DirectModel(std::string name, std::function<cplx(cplx)> f, std::function<cplx(cplx)> df)
    : name_(std::move(name)), f_(std::move(f)), df_(std::move(df)) {
    if (!f_ || !df_) throw ParameterError("direct model needs f and f'");
}

cplx DirectModel::eval(cplx z) const {
    if (is_infinity(z)) throw DomainError("cannot evaluate at infinity");
    cplx w = f_(z);
    return is_infinity(w) ? kInfinity : w;
}

std::optional<AddressEntry> DirectModel::locate(cplx z) const {
    if (is_infinity(z)) return std::nullopt;
    return AddressEntry{"C", 0};
}

std::shared_ptr<LogModel> half_strip_model(double x0, double p) {
    TractPrototype t{"T", half_strip(from_double(x0), Rational(1, 2)),
                     std::make_shared<const ConformalMap>(half_strip_map(x0, -0.5, 0.5, Normalization::fixed_point(p))),
                     cplx(p, 0.0)};
    return std::make_shared<LogModel>("half-strip", std::vector<TractPrototype>{std::move(t)});
}

std::shared_ptr<LogModel> sc_tract_model(const RectilinearTract& t, cplx p, double eps) {
    TractPrototype proto{"T", t, std::make_shared<const ConformalMap>(map_to_halfplane(t, Normalization::fixed_point(p), eps)),
                         p};
    return std::make_shared<LogModel>("schwarz-christoffel tract", std::vector<TractPrototype>{std::move(proto)});
}

std::shared_ptr<LogModel> two_tract_model(double x0) {
    const Rational X = from_double(x0);
    auto strip = [&](Rational y0, Rational y1) {
        return RectilinearTract(std::vector<QPoint>{{X, y1}, {X, y0}});
    };
    const double p = x0 + 1.0;
    const cplx ps(p, -kPi / 2), pt(p, kPi / 2);
    TractPrototype S{"S", strip(Rational(-3, 4), Rational(-1, 4)),
                     std::make_shared<const ConformalMap>(half_strip_map(x0, -0.75, -0.25, Normalization::fixed_point(ps))),
                     ps};
    TractPrototype T{"T", strip(Rational(1, 4), Rational(3, 4)),
                     std::make_shared<const ConformalMap>(half_strip_map(x0, 0.25, 0.75, Normalization::fixed_point(pt))),
                     pt};
    return std::make_shared<LogModel>("two half-strips", std::vector<TractPrototype>{std::move(S), std::move(T)});
}

std::shared_ptr<DirectModel> lambda_sin_model(double lambda) {
    return std::make_shared<DirectModel>(
        "lambda sin z (lambda=" + fmt(lambda) + ")", [lambda](cplx z) { return lambda * std::sin(z); },
        [lambda](cplx z) { return lambda * std::cos(z); });
}

std::shared_ptr<DirectModel> lambda_exp_model(double lambda) {
    return std::make_shared<DirectModel>(
        "lambda exp z (lambda=" + fmt(lambda) + ")", [lambda](cplx z) { return lambda * std::exp(z); },
        [lambda](cplx z) { return lambda * std::exp(z); });
}

// Orbits and continua

OrbitResult orbit(const Model& model, cplx z, std::size_t n) {
    auto loc = model.locate(z);
    if (!loc) throw DomainError("starting point " + fmt(z) + " lies in no tract translate");
    OrbitResult r;
    r.points.push_back(z);
    r.address.push_back(*loc);
    for (std::size_t k = 0; k < n; ++k) {
        cplx w = model.eval(r.points.back());
        r.points.push_back(w);
        if (is_infinity(w)) {
            r.overflow = true;
            break;
        }
        auto l = model.locate(w);
        if (!l) {
            r.escaped = true;
            break;
        }
        r.address.push_back(*l);
    }
    return r;
}

ContinuumApprox continuum_depth_n(const Model& model, const ExternalAddress& s, std::size_t n, double resolution,
                                  double x_window) {
    require_log_model(model, "continuum approximation");
    if (!(resolution > 0)) throw ParameterError("resolution must be positive");
    const AddressEntry& top = s.at(n);
    const auto& P = find_prototype(model, top.tract);
    if (!(x_window > to_double(P.shape.min_x()))) throw ParameterError("x_window lies left of the tract");
    ContinuumApprox out;
    out.address = s;
    out.depth = n;
    out.resolution = resolution;
    out.x_window = x_window;
    const cplx shift = kI * (kTwoPi * static_cast<double>(top.m));
    for (const cplx& u : prototype_grid(P.shape, resolution, x_window)) {
        CloudPoint cp;
        cp.chain.assign(n + 1, cplx{});
        cp.chain[n] = u + shift;
        for (std::size_t k = n; k > 0; --k) cp.chain[k - 1] = pull_back(model, s.at(k - 1), cp.chain[k]);
        for (std::size_t k = 0; k < n; ++k) {
            cplx fk = model.eval(cp.chain[k]);
            cp.residual = std::max(cp.residual, std::abs(fk - cp.chain[k + 1]) / std::max(1.0, std::abs(cp.chain[k + 1])));
        }
        out.points.push_back(std::move(cp));
    }
    return out;
}

BoundedOrbitPoint bounded_orbit_point(const Model& model, const ExternalAddress& s, std::size_t prefix, double tol) {
    require_log_model(model, "bounded-orbit point");
    if (!s.bounded()) throw PreconditionError("address is not bounded");
    const double lambda = model.expansion();
    if (!(lambda > 1.0)) throw PreconditionError("model has no expansion certificate");

    InverseSystem<cplx> sys;
    sys.bond = [&](std::size_t j, const cplx& x) { return pull_back(model, s.at(j - 1), x); };
    sys.dist = [](std::size_t, const cplx& a, const cplx& b) { return halfplane_distance(a, b); };
    sys.certificate = ExpansionCertificate{lambda, 0.0};

    std::function<cplx(std::size_t)> pseudo = [&](std::size_t j) {
        const AddressEntry& e = s.at(j);
        return find_prototype(model, e.tract).base + kI * (kTwoPi * static_cast<double>(e.m));
    };

    std::optional<std::size_t> available;
    std::size_t out_depth = prefix;
    std::size_t defect_count;
    if (s.period()) {
        defect_count = s.entries().size() + *s.period() + 1;
    } else {
        available = s.defined_length() - 1;
        defect_count = s.defined_length();
        out_depth = std::min(prefix, *available > 40 ? *available - 40 : std::size_t{0});
    }
    if (s.period()) out_depth = std::max(out_depth, *s.period());
    double delta = pseudo_orbit_defect(sys, pseudo, defect_count);
    const double M = delta * (1.0 + 1e-9) + 1e-300;

    ShadowResult<cplx> sh;
    try {
        sh = shadow(sys, pseudo, out_depth, M, tol, available);
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(std::string("bounded-orbit shadowing: ") + e.what());
    }
    BoundedOrbitPoint r;
    r.orbit = sh.orbit.coords;
    r.z0 = r.orbit.front();
    r.connector = delta;
    r.bound = delta * lambda / (lambda - 1.0);
    r.max_deviation = sh.max_deviation;
    r.sweeps = sh.sweeps;
    if (s.period() && s.entries().size() == *s.period()) {
        cplx w = r.z0;
        for (std::size_t k = 0; k < *s.period(); ++k) w = model.eval(w);
        r.period_residual = std::abs(w - r.z0);
    }
    return r;
}

// Fast-escaping membership

namespace {

struct Sample {
    cplx c;
    double r;
};

bool in_unbounded_component(const TractPrototype& P, const std::vector<Sample>& D, cplx u, double h, double x_right) {
    const double x0 = to_double(P.shape.min_x());
    const double y0 = kPi * to_double(P.shape.min_y());
    const double y1 = kPi * to_double(P.shape.max_y());
    const std::size_t nx = static_cast<std::size_t>(std::ceil((x_right - x0) / h));
    const std::size_t ny = static_cast<std::size_t>(std::ceil((y1 - y0) / h));
    std::vector<char> free(nx * ny, 0);
    auto centre = [&](std::size_t i, std::size_t j) { return cplx(x0 + (i + 0.5) * h, y0 + (j + 0.5) * h); };
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) free[i * ny + j] = contains(P.shape, centre(i, j)) ? 1 : 0;
    const double pad = 0.7072 * h;
    for (const auto& s : D) {
        const double R = s.r + pad;
        long i_lo = static_cast<long>(std::floor((s.c.real() - R - x0) / h));
        long i_hi = static_cast<long>(std::ceil((s.c.real() + R - x0) / h));
        long j_lo = static_cast<long>(std::floor((s.c.imag() - R - y0) / h));
        long j_hi = static_cast<long>(std::ceil((s.c.imag() + R - y0) / h));
        for (long i = std::max(0L, i_lo); i <= std::min<long>(i_hi, nx - 1); ++i)
            for (long j = std::max(0L, j_lo); j <= std::min<long>(j_hi, ny - 1); ++j)
                if (std::abs(centre(i, j) - s.c) <= R) free[i * ny + j] = 0;
    }
    long iu = static_cast<long>(std::floor((u.real() - x0) / h));
    long ju = static_cast<long>(std::floor((u.imag() - y0) / h));
    if (iu < 0 || ju < 0 || iu >= static_cast<long>(nx) || ju >= static_cast<long>(ny)) return false;
    if (!free[iu * ny + ju]) return false;
    std::vector<char> seen(nx * ny, 0);
    std::deque<std::size_t> queue;
    for (std::size_t j = 0; j < ny; ++j)
        if (free[(nx - 1) * ny + j]) {
            seen[(nx - 1) * ny + j] = 1;
            queue.push_back((nx - 1) * ny + j);
        }
    const std::size_t target = iu * ny + ju;
    while (!queue.empty()) {
        std::size_t c = queue.front();
        queue.pop_front();
        if (c == target) return true;
        std::size_t i = c / ny, j = c % ny;
        auto visit = [&](std::size_t a, std::size_t b) {
            std::size_t k = a * ny + b;
            if (free[k] && !seen[k]) {
                seen[k] = 1;
                queue.push_back(k);
            }
        };
        if (i > 0) visit(i - 1, j);
        if (i + 1 < nx) visit(i + 1, j);
        if (j > 0) visit(i, j - 1);
        if (j + 1 < ny) visit(i, j + 1);
    }
    return false;
}

} // namespace

MembershipResult fast_escaping_membership(const Model& model, const ExternalAddress& s, cplx z, cplx centre,
                                          double radius, std::size_t depth, double resolution) {
    require_log_model(model, "fast-escaping membership");
    const auto& lm = dynamic_cast<const LogModel&>(model);
    if (!(radius > 0)) throw ParameterError("disc radius must be positive");
    if (!(resolution > 0)) throw ParameterError("resolution must be positive");
    MembershipResult out;

    std::vector<Sample> D;
    const int rings = 12;
    const double dr = radius / rings;
    D.push_back({centre, dr});
    for (int k = 0; k < rings; ++k) {
        const double rk = radius * (k + 0.5) / rings;
        const int na = 8 * (k + 1);
        for (int a = 0; a < na; ++a) {
            double t = kTwoPi * a / na;
            D.push_back({centre + rk * cplx(std::cos(t), std::sin(t)), dr});
        }
    }
    bool d_overflow = false;
    cplx zk = z;
    for (std::size_t k = 0; k < depth; ++k) {
        MembershipLevel lvl;
        lvl.level = k;
        lvl.z = zk;
        const AddressEntry& e = s.at(k);
        const auto& P = lm.prototype(e.tract);
        const cplx shift = kI * (kTwoPi * static_cast<double>(e.m));
        std::vector<Sample> local;
        double dmax = -INFINITY;
        for (const auto& smp : D) {
            cplx u = smp.c - shift;
            if (!contains(P.shape, u) && boundary_distance(P.shape, u) > smp.r) continue;
            local.push_back({u, smp.r});
            dmax = std::max(dmax, smp.c.real() + smp.r);
        }
        lvl.d_max_re = dmax;
        if (is_infinity(zk)) {
            lvl.in_unbounded_component = !d_overflow;
            lvl.reason = d_overflow ? "iterate and part of D_n are both at infinity" : "iterate is at infinity";
        } else if (!lm.in_translate(e, zk)) {
            lvl.in_unbounded_component = false;
            lvl.reason = "iterate left the translate named by the address";
        } else if (local.empty() || zk.real() > dmax) {
            lvl.in_unbounded_component = true;
            lvl.reason = "iterate lies right of D_n";
        } else {
            const double x_right = std::max({to_double(P.shape.max_vertex_x()), dmax, zk.real()}) + 1.0;
            const double x0 = to_double(P.shape.min_x());
            const double height = kPi * to_double(P.shape.max_y() - P.shape.min_y());
            const double h = std::max(resolution, std::sqrt((x_right - x0) * height / 4e5));
            lvl.in_unbounded_component = in_unbounded_component(P, local, zk - shift, h, x_right);
            lvl.reason = lvl.in_unbounded_component ? "grid path to the right edge avoids D_n"
                                                    : "no grid path to the right edge avoids D_n";
        }
        out.trace.push_back(lvl);
        if (!lvl.in_unbounded_component) {
            out.member = false;
            return out;
        }
        if (k + 1 == depth) break;
        std::vector<Sample> next;
        for (const auto& smp : local) {
            cplx w = (*P.F)(smp.c);
            if (is_infinity(w)) {
                d_overflow = true;
                continue;
            }
            double r = smp.r * std::abs(P.F->derivative(smp.c)) * 1.05;
            if (!std::isfinite(r)) {
                d_overflow = true;
                continue;
            }
            next.push_back({w, r});
        }
        D = std::move(next);
        if (!is_infinity(zk)) {
            cplx w = (*P.F)(zk - shift);
            zk = is_infinity(w) ? kInfinity : w;
        }
    }
    return out;
}

// Translation conjugacy

TranslationConjugacy translation_conjugacy(const Model& model, const ExternalAddress& s,
                                           const std::vector<long>& offsets, const ContinuumApprox& samples,
                                           double delta) {
    require_log_model(model, "translation conjugacy");
    const double lambda = model.expansion();
    if (!(lambda > 1.0)) throw PreconditionError("model has no expansion certificate");
    if (!(delta > 0)) throw ParameterError("delta must be positive");
    const std::size_t N = samples.depth;
    if (offsets.size() < N + 1) throw ParameterError("need offsets m_0..m_N for the sample depth");
    for (std::size_t i = 0; i < samples.points.size(); ++i)
        for (std::size_t j = 0; j <= N; ++j) {
            const cplx w = samples.points[i].chain[j];
            if (delta * std::abs(static_cast<double>(offsets[j])) > std::max(1.0, w.real()))
                throw PreconditionError("delta*|m_j| exceeds max(1, Re F^j(z)) at z = " + fmt(samples.point(i)) +
                                        ", j = " + std::to_string(j));
        }
    double x_min = INFINITY;
    for (const auto& p : model.prototypes()) x_min = std::min(x_min, to_double(p.shape.min_x()));

    TranslationConjugacy out;
    out.target = s.shifted(offsets);
    out.lambda = lambda;
    out.rho = 2.0 * std::asinh(kPi / (delta * std::min(1.0, x_min)));
    out.M = lambda * out.rho / (lambda - 1.0);
    out.levels = N;

    InverseSystem<cplx> sx, sy;
    sx.bond = [&](std::size_t j, const cplx& x) { return pull_back(model, s.at(j - 1), x); };
    sy.bond = [&](std::size_t j, const cplx& y) { return pull_back(model, out.target.at(j - 1), y); };
    sx.dist = sy.dist = [](std::size_t, const cplx& a, const cplx& b) { return halfplane_distance(a, b); };
    sx.certificate = sy.certificate = ExpansionCertificate{lambda, 0.0};
    sx.depth = sy.depth = N;
    PseudoConjugacy<cplx, cplx> pc;
    pc.psi = [&](std::size_t j, const cplx& x) { return x + kI * (kTwoPi * static_cast<double>(offsets[j])); };
    pc.M = out.M + out.rho;

    out.C = pc.M * lambda / (lambda - 1.0);
    for (const auto& p : samples.points) {
        BackwardOrbit<cplx> orb;
        orb.coords = p.chain;
        for (std::size_t k = 0; k <= N; ++k) {
            auto v = conjugacy_eval(sx, sy, pc, orb, k, N);
            if (k == 0) out.images.push_back(v.value);
            out.C = std::max(out.C, v.bound);
            out.worst = std::max(out.worst, halfplane_distance(p.chain[k], v.value));
        }
    }
    out.verified = out.worst <= out.C;
    return out;
}

// Short preimages

ShortPreimage find_short_preimage(const Model& model, const std::string& tract, double R, double theta, double R0) {
    require_log_model(model, "short preimage");
    if (!(R0 > 0)) throw ParameterError("R0 must be positive");
    if (!(R >= R0)) throw ParameterError("R must be at least R0");
    if (!(theta > 0)) throw ParameterError("theta must be positive");
    const auto& P = find_prototype(model, tract);
    ShortPreimage out;
    out.m_lo = static_cast<long>(std::ceil(R / kTwoPi));
    out.m_hi = static_cast<long>(std::floor(R / kPi + 1.0));
    if (out.m_lo > out.m_hi) throw ParameterError("no integer in [R/2π, R/π + 1]");

    // The θ-neighbourhood of [R0, R] is the union of the H-discs of radius θ about its points;
    // discs about points at H-spacing θ/2 cover it, and the image diameter is attained on their circles.
    const std::size_t K = static_cast<std::size_t>(std::ceil(2.0 * std::log(R / R0) / theta)) + 1;
    std::vector<cplx> boundary;
    for (std::size_t k = 0; k <= K; ++k) {
        double x = R0 * std::pow(R / R0, static_cast<double>(k) / K);
        cplx c(x * std::cosh(theta), 0.0);
        double r = x * std::sinh(theta);
        for (int a = 0; a < 32; ++a) {
            double t = kTwoPi * a / 32;
            boundary.push_back(c + r * cplx(std::cos(t), std::sin(t)));
        }
    }
    out.diameter = INFINITY;
    for (long m = out.m_lo; m <= out.m_hi; ++m) {
        std::vector<cplx> img;
        img.reserve(boundary.size());
        for (const cplx& w : boundary) img.push_back(P.F->inverse(w + kI * (kTwoPi * static_cast<double>(m))));
        double d = euclidean_diameter(img);
        out.diameters.push_back(d);
        if (d < out.diameter) {
            out.diameter = d;
            out.m = m;
        }
    }
    return out;
}

// Anguine maps and ε-maps

AnguineData real_part_anguine(const Model& model, const std::string& tract, double shift) {
    require_log_model(model, "anguine map");
    const auto& P = find_prototype(model, tract);
    const double x0 = to_double(P.shape.min_x());
    const double x1 = to_double(P.shape.max_vertex_x()) + 2.0;
    AnguineData d;
    d.phi = [shift](cplx z) { return std::max(0.0, z.real() - shift); };
    double K = 0.0;
    auto section_points = [&](double x, std::vector<cplx>& pts) {
        auto iv = P.shape.section(from_double(x));
        if (iv.empty()) return 0.0;
        double lo = to_double(iv.front().lo), hi = to_double(iv.front().hi);
        for (const auto& i : iv) {
            lo = std::min(lo, to_double(i.lo));
            hi = std::max(hi, to_double(i.hi));
        }
        pts.emplace_back(x, kPi * lo);
        pts.emplace_back(x, kPi * hi);
        return 2.0 * std::asinh(kPi * (hi - lo) / (2.0 * x));
    };
    const double step = 0.01;
    std::vector<cplx> left_region;
    for (double x = x0 + step / 2; x < std::max(x1, shift + 2.0); x += step) {
        std::vector<cplx> pts;
        double diam = section_points(x, pts);
        if (x <= shift) left_region.insert(left_region.end(), pts.begin(), pts.end());
        else K = std::max(K, diam);
    }
    if (shift > x0) {
        std::vector<cplx> pts;
        section_points(shift, pts);
        left_region.insert(left_region.end(), pts.begin(), pts.end());
        K = std::max(K, hyperbolic_diameter(left_region));
    }
    d.K = K;
    return d;
}

double epsilon_value(const AnguineData& data, const CloudPoint& p, std::size_t j) {
    if (j >= p.chain.size()) throw ParameterError("level exceeds the chain depth");
    if (is_infinity(p.chain[j])) return INFINITY;
    return data.phi(p.chain[j]);
}

EpsilonMap epsilon_map(const Model& model, const AnguineData& data, const ContinuumApprox& cloud, std::size_t j,
                       double bin) {
    if (!data.K) throw PreconditionError("anguine map carries no certified fiber bound K");
    if (j > cloud.depth) throw ParameterError("level exceeds the cloud depth");
    if (!(bin > 0)) throw ParameterError("bin width must be positive");
    const double lambda = model.expansion();
    if (!(lambda > 1.0)) throw PreconditionError("model has no expansion certificate");
    EpsilonMap out;
    out.level = j;
    out.bin = bin;
    out.fiber_bound = *data.K / std::pow(lambda, static_cast<double>(j));
    std::map<long, std::vector<cplx>> bins;
    for (const auto& p : cloud.points) {
        double v = epsilon_value(data, p, j);
        out.values.push_back(v);
        if (std::isfinite(v)) bins[static_cast<long>(std::floor(v / bin))].push_back(p.chain.front());
    }
    for (const auto& [key, pts] : bins) out.measured = std::max(out.measured, hyperbolic_diameter(pts));
    return out;
}

// Rogers map

std::size_t rogers_depth(double lambda) {
    if (!(lambda > 1.0)) throw ParameterError("expansion factor must exceed 1");
    std::size_t n = 1;
    while (std::pow(lambda, static_cast<double>(n - 1)) <= 64.0) ++n;
    return n;
}

RogersMap extract_rogers_map(const Model& model, const AnguineData& data, cplx z0, std::size_t n, std::size_t blocks) {
    require_log_model(model, "Rogers map");
    if (model.prototypes().size() != 1) throw PreconditionError("Rogers map extraction needs a single tract");
    if (!data.K) throw PreconditionError("anguine map carries no certified fiber bound K");
    if (blocks == 0) throw ParameterError("need at least one block");
    const double lambda = model.expansion();
    if (!(lambda > 1.0) || !(std::pow(lambda, static_cast<double>(n) - 1.0) > 64.0))
        throw PreconditionError("depth n does not satisfy Lambda^(n-1) > 64");
    const auto& P = model.prototypes().front();
    if (!contains(P.shape, z0)) throw DomainError("z0 is not in the tract");
    if (std::abs(data.phi(z0)) > 1e-12) throw PreconditionError("phi(z0) must vanish");

    // Sampled invariance check: F_T^{-1}(∂T) ⊂ T.
    {
        const double xr = to_double(P.shape.max_vertex_x()) + 5.0;
        const auto& ch = P.shape.chain();
        std::vector<cplx> bd;
        for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
            cplx a(to_double(ch[i].x), kPi * to_double(ch[i].y)), b(to_double(ch[i + 1].x), kPi * to_double(ch[i + 1].y));
            for (int t = 0; t <= 8; ++t) bd.push_back(a + (b - a) * (t / 8.0));
        }
        for (const QPoint* q : {&ch.front(), &ch.back()}) {
            double x = to_double(q->x);
            for (int t = 0; t <= 16; ++t) bd.emplace_back(x + (xr - x) * t / 16.0, kPi * to_double(q->y));
        }
        for (const cplx& w : bd)
            if (!contains(P.shape, P.F->inverse(w)))
                throw PreconditionError("tract is not invariant under the inverse branch near " + fmt(w));
    }

    RogersMap out;
    out.n = n;
    out.K = *data.K;
    out.lambda = lambda;
    const std::size_t L = 4 * blocks + 1;
    out.zeta.push_back(z0);
    const double r_h = 3.0 * out.K;
    const int na = 4096;
    for (std::size_t j = 1; j < L; ++j) {
        const cplx z = out.zeta.back();
        const double fz = data.phi(z);
        const cplx c(z.real() * std::cosh(r_h), z.imag());
        const double rad = z.real() * std::sinh(r_h);
        double best = INFINITY;
        cplx arg;
        auto consider = [&](cplx w) {
            if (!contains(P.shape, w)) return;
            double v = data.phi(w);
            if (v > fz * (1.0 + 1e-12) + 1e-12 && v < best) {
                best = v;
                arg = w;
            }
        };
        auto at = [&](double t) { return c + rad * cplx(std::cos(t), std::sin(t)); };
        bool prev_in = contains(P.shape, at(0.0));
        for (int a = 0; a < na; ++a) {
            double t0 = kTwoPi * a / na, t1 = kTwoPi * (a + 1) / na;
            consider(at(t0));
            bool in1 = contains(P.shape, at(t1));
            if (in1 != prev_in) {
                // Locate the crossing of the closure boundary and keep the inside end.
                double lo = t0, hi = t1;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (contains(P.shape, at(mid)) == prev_in ? lo : hi) = mid;
                }
                consider(at(prev_in ? lo : hi));
            }
            prev_in = in1;
        }
        if (!std::isfinite(best)) throw PreconditionError("zeta-chain stalls at step " + std::to_string(j));
        out.zeta.push_back(arg);
    }
    std::vector<double> xs;
    for (const cplx& z : out.zeta) xs.push_back(data.phi(z));
    auto psi = [&](double t) {
        if (t <= xs.front()) return 0.0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i)
            if (t <= xs[i + 1]) return static_cast<double>(i) + (t - xs[i]) / (xs[i + 1] - xs[i]);
        throw AccuracyError("G^n(zeta) lies beyond the zeta-chain", t);
    };
    auto Gn = [&](cplx w) {
        for (std::size_t k = 0; k < n; ++k) w = P.F->inverse(w);
        return w;
    };
    out.x_max = 4.0 * static_cast<double>(blocks);
    std::vector<Rational> qx, qy;
    for (std::size_t b = 0; b <= blocks; ++b) {
        out.breakpoints.push_back(4.0 * b);
        double v = b == 0 ? 0.0 : psi(data.phi(Gn(out.zeta[4 * b])));
        out.values.push_back(v);
        qx.emplace_back(static_cast<long>(b), static_cast<long>(blocks));
        qx.back().canonicalize();
        qy.push_back(from_double(v / out.x_max));
    }
    out.normalized = PLMap(qx, qy);
    out.max_slope = out.normalized.lipschitz();
    out.slopes_ok = out.max_slope <= Rational(1, 2);
    out.below_diagonal = true;
    for (std::size_t b = 1; b <= blocks; ++b)
        if (!(qy[b] < qx[b])) out.below_diagonal = false;
    out.fixed_point_residual = std::abs(Gn(z0) - z0);
    return out;
}

// Output

void write_cloud_csv(std::ostream& out, const ContinuumApprox& c) {
    out << "index,re,im,residual\n";
    char buf[160];
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        cplx z = c.point(i);
        std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.3g\n", i, z.real(), z.imag(), c.points[i].residual);
        out << buf;
    }
}

void write_cloud_svg(std::ostream& out, const ContinuumApprox& c, const RectilinearTract* tract) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto grow = [&](cplx z) {
        x0 = std::min(x0, z.real());
        x1 = std::max(x1, z.real());
        y0 = std::min(y0, z.imag());
        y1 = std::max(y1, z.imag());
    };
    for (std::size_t i = 0; i < c.points.size(); ++i) grow(c.point(i));
    if (tract) {
        for (const auto& q : tract->chain()) grow(cplx(to_double(q.x), kPi * to_double(q.y)));
        grow(cplx(c.x_window, kPi * to_double(tract->min_y())));
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    const double pad = 0.05 * std::max(x1 - x0, y1 - y0) + 0.1;
    x0 -= pad, x1 += pad, y0 -= pad, y1 += pad;
    const double scale = 800.0 / std::max(x1 - x0, y1 - y0);
    auto X = [&](double x) { return (x - x0) * scale; };
    auto Y = [&](double y) { return (y1 - y) * scale; };
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.1f\" height=\"%.1f\">\n",
                  (x1 - x0) * scale, (y1 - y0) * scale);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<g class=\"axes\" stroke=\"#888888\" stroke-width=\"0.5\">"
                  "<line x1=\"0\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\"/>"
                  "<line x1=\"%.2f\" y1=\"0\" x2=\"%.2f\" y2=\"%.2f\"/></g>\n",
                  Y(std::clamp(0.0, y0, y1)), X(x1), Y(std::clamp(0.0, y0, y1)), X(std::clamp(0.0, x0, x1)),
                  X(std::clamp(0.0, x0, x1)), Y(y0));
    out << buf;
    if (tract) {
        const auto& ch = tract->chain();
        const double xr = std::max(c.x_window, to_double(tract->max_vertex_x()) + 1.0);
        out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(xr), Y(kPi * to_double(ch.front().y)));
        out << buf;
        for (const auto& q : ch) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(to_double(q.x)), Y(kPi * to_double(q.y)));
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%.2f,%.2f", X(xr), Y(kPi * to_double(ch.back().y)));
        out << buf << "\"/>\n";
    }
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        cplx z = c.point(i);
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1\" fill=\"steelblue\"/>\n", X(z.real()),
                      Y(z.imag()));
        out << buf;
    }
    out << "</svg>\n";
}

} // namespace cforge
