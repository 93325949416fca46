#include "cforge/construction_engine.hpp"

#include "cforge/error.hpp"
#include "cforge/inverse_limits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace cforge {

namespace {

constexpr double kPi = 3.14159265358979323846;
const double kTowerTop = std::exp(TowerMagnitude::kTowerCap);

Rational ceil_q(const Rational& q) {
    Rational f = floor_q(q);
    return f == q ? f : Rational(f + 1);
}

long to_long(const Rational& q) { return floor_q(q).get_num().get_si(); }

TowerMagnitude normalized(int level, double v) {
    while (v > kTowerTop) {
        v = std::log(v);
        ++level;
    }
    while (level > 0 && v <= TowerMagnitude::kTowerCap) {
        v = std::exp(v);
        --level;
    }
    return {level, v};
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

double real_image(const ConformalMap& F, double x) { return F(cplx(x, 0.0)).real(); }

bool in_box(cplx z, const TractPiece& b, double tol) {
    double y = z.imag() / kPi;
    return z.real() >= to_double(b.x0) - tol && z.real() <= to_double(b.x1) + tol && y >= to_double(b.y0) - tol &&
           y <= to_double(b.y1) + tol;
}

double segment_distance(cplx z, const ConnectorArc& a) {
    double x0 = to_double(a.x0), x1 = to_double(a.x1), y = to_double(a.y) * kPi;
    double x = std::clamp(z.real(), x0, x1);
    return std::abs(z - cplx(x, y));
}

} // namespace

// Tower magnitudes

TowerMagnitude TowerMagnitude::of(double x) {
    if (!(x >= 0)) throw ParameterError("tower magnitudes are non-negative");
    if (std::isinf(x)) throw ParameterError("tower magnitude of an infinite double");
    return normalized(0, x);
}

bool TowerMagnitude::fits_double() const { return level == 0; }

double TowerMagnitude::to_double() const { return level == 0 ? value : INFINITY; }

std::string TowerMagnitude::str() const {
    if (level == 0) return fmt(value);
    return "exp^" + std::to_string(level) + "(" + fmt(value) + ")";
}

bool operator<(const TowerMagnitude& a, const TowerMagnitude& b) {
    if (a.level != b.level) return a.level < b.level;
    return a.value < b.value;
}

TowerMagnitude sinh_iterate(double scale, double x0, double x, std::size_t n) {
    if (!(scale > 0)) throw ParameterError("sinh scale must be positive");
    TowerMagnitude t = TowerMagnitude::of(x);
    for (std::size_t i = 0; i < n; ++i) {
        if (t.level == 0) {
            double u = t.value - x0;
            if (u <= 0) throw DomainError("iterate left the half-strip");
            if (u < 30) {
                t = TowerMagnitude::of(scale * std::sinh(u));
            } else {
                double log_f = std::log(scale / 2) + u + std::log1p(-std::exp(-2 * u));
                t = log_f <= TowerMagnitude::kTowerCap ? TowerMagnitude::of(std::exp(log_f)) : normalized(1, log_f);
            }
        } else {
            // exp^L(v) is beyond e^709, so scale·sinh(X - x0) = exp(X + O(1)) to within 10^-300 relative.
            t = normalized(t.level + 1, t.value);
        }
    }
    return t;
}

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::Single: return "single";
        case Scheme::AllInOne: return "all-in-one";
        case Scheme::Bounded: return "bounded";
        case Scheme::Periodic: return "periodic";
    }
    return "single";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "single") return Scheme::Single;
    if (s == "all-in-one") return Scheme::AllInOne;
    if (s == "bounded") return Scheme::Bounded;
    if (s == "periodic") return Scheme::Periodic;
    throw InputError("unknown scheme '" + s + "' (single | all-in-one | bounded | periodic)");
}

// Height functions

HeightFunction::HeightFunction(std::vector<Rational> xs, std::vector<Rational> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.size() < 2 || xs_.size() != ys_.size()) throw ParameterError("φ needs at least two matching knots");
    if (ys_.front() != 0 || ys_.back() != 1) throw ParameterError("φ must run from 0 to 1");
    for (std::size_t i = 1; i < xs_.size(); ++i)
        if (!(xs_[i - 1] < xs_[i]) || !(ys_[i - 1] < ys_[i]))
            throw GeometryError("φ knots must increase strictly in both coordinates");
    for (auto& x : xs_) x.canonicalize();
    for (auto& y : ys_) y.canonicalize();
}

HeightFunction HeightFunction::linear(const Rational& M, const Rational& M_tilde) {
    return HeightFunction({M, M_tilde}, {Rational(0), Rational(1)});
}

Rational HeightFunction::operator()(const Rational& x) const {
    if (x <= xs_.front()) return 0;
    if (x >= xs_.back()) return 1;
    std::size_t i = std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin();
    Rational t = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    Rational y = ys_[i - 1] + t * (ys_[i] - ys_[i - 1]);
    y.canonicalize();
    return y;
}

double HeightFunction::operator()(double x) const {
    if (std::isnan(x)) throw DomainError("φ at NaN");
    if (x <= cforge::to_double(xs_.front())) return 0.0;
    if (x >= cforge::to_double(xs_.back())) return 1.0;
    return cforge::to_double((*this)(from_double(x)));
}

Rational HeightFunction::inverse(const Rational& y) const {
    if (y < 0 || y > 1) throw DomainError("φ^{-1} needs a value in [0, 1]");
    std::size_t i = std::upper_bound(ys_.begin(), ys_.end(), y) - ys_.begin();
    if (i >= ys_.size()) return xs_.back();
    if (i == 0) return xs_.front();
    Rational t = (y - ys_[i - 1]) / (ys_[i] - ys_[i - 1]);
    Rational x = xs_[i - 1] + t * (xs_[i] - xs_[i - 1]);
    x.canonicalize();
    return x;
}

double HeightFunction::inverse(double y) const { return cforge::to_double(inverse(from_double(std::clamp(y, 0.0, 1.0)))); }

void to_json(nlohmann::json& j, const HeightFunction& phi) {
    std::vector<std::string> xs, ys;
    for (const auto& x : phi.xs()) xs.push_back(to_string(x));
    for (const auto& y : phi.ys()) ys.push_back(to_string(y));
    j = nlohmann::json{{"knots_x", xs}, {"knots_y", ys}};
}

HeightFunction height_function_from_json(const nlohmann::json& j) {
    try {
        std::vector<Rational> xs, ys;
        for (const auto& e : j.at("knots_x")) xs.push_back(parse_rational(e.get<std::string>()));
        for (const auto& e : j.at("knots_y")) ys.push_back(parse_rational(e.get<std::string>()));
        return HeightFunction(std::move(xs), std::move(ys));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed height function: ") + e.what());
    }
}

namespace {

// Span function x ↦ φ^{-1}(φ(x) + c) - x on [M, φ^{-1}(1 - c)], evaluated at the candidates
// where it can change slope: the knots and the knots shifted down by c in height.
std::vector<Rational> span_candidates(const HeightFunction& phi, const Rational& c) {
    std::vector<Rational> cand;
    for (std::size_t i = 0; i < phi.xs().size(); ++i) {
        cand.push_back(phi.xs()[i]);
        Rational y = phi.ys()[i] - c;
        if (y >= 0) cand.push_back(phi.inverse(y));
    }
    return cand;
}

} // namespace

Rational alpha_constant(const HeightFunction& phi, const Rational& gamma) {
    if (gamma <= 0) throw ParameterError("γ must be positive");
    Rational c = 1 / (2 * gamma);
    Rational best = 1;
    if (c > 1) return best;
    for (const auto& x : span_candidates(phi, c)) {
        Rational y = phi(x) + c;
        if (y > 1) continue;
        Rational d = phi.inverse(y) - x;
        if (d < best) best = d;
    }
    best.canonicalize();
    return best;
}

Rational gap_width(const HeightFunction& phi, const Rational& gamma) {
    if (gamma <= 0) throw ParameterError("γ must be positive");
    Rational c = 1 / gamma;
    Rational best = 0;
    for (const auto& x : span_candidates(phi, c)) {
        Rational y = phi(x) + c;
        Rational d = (y >= 1 ? phi.M_tilde() : phi.inverse(y)) - x;
        if (d > best) best = d;
    }
    best.canonicalize();
    return best;
}

std::size_t nk_lower_bound(const Rational& alpha) {
    if (alpha <= 0) throw ParameterError("α must be positive");
    std::size_t N = 0;
    Rational v = alpha;
    while (!(v > 12)) {
        v *= 2;
        ++N;
    }
    return N;
}

// Step I1

std::pair<Rational, Rational> pl_range(const PLMap& g, const Rational& lo, const Rational& hi) {
    if (lo > hi) throw ParameterError("empty interval");
    Rational a = g(lo), b = a;
    auto upd = [&](const Rational& x) {
        Rational v = g(x);
        if (v < a) a = v;
        if (v > b) b = v;
    };
    upd(hi);
    for (const auto& x : g.breakpoints())
        if (lo < x && x < hi) upd(x);
    return {a, b};
}

long grid_points_in(const Rational& lo, const Rational& hi, long gamma) {
    long jmin = std::max(1L, to_long(ceil_q(lo * gamma)));
    long jmax = std::min(gamma - 1, to_long(floor_q(hi * gamma)));
    return std::max(0L, jmax - jmin + 1);
}

std::vector<Rational> step_I1_choose_omega(const PLMap& g, long gamma) {
    if (gamma < 1) throw ParameterError("γ must be at least 1");
    for (int r = 0; r < 40; ++r) {
        long n = gamma << r;
        bool ok = true;
        for (long i = 0; i < n && ok; ++i) {
            Rational lo(i, n), hi(i + 1, n);
            lo.canonicalize();
            hi.canonicalize();
            auto [a, b] = pl_range(g, lo, hi);
            ok = grid_points_in(a, b, gamma) <= 1;
        }
        if (ok) {
            std::vector<Rational> omega;
            for (long i = 0; i <= n; ++i) {
                Rational w(i, n);
                w.canonicalize();
                omega.push_back(w);
            }
            return omega;
        }
    }
    throw ConstructionError("step_I1", "no uniform partition with at most 2^40·γ pieces works");
}

std::pair<Rational, Rational> xi_hull(const Rational& image_lo, const Rational& image_hi, long gamma) {
    Rational lo = image_lo == 0 ? Rational(0) : Rational(ceil_q(image_lo * gamma) - 1) / gamma;
    Rational hi = image_hi == 1 ? Rational(1) : Rational(floor_q(image_hi * gamma) + 1) / gamma;
    if (image_lo == 0 && image_hi == 0) hi = Rational(1) / gamma;
    if (image_lo == 1 && image_hi == 1) lo = Rational(gamma - 1) / gamma;
    if (lo < 0) lo = 0;
    if (hi > 1) hi = 1;
    lo.canonicalize();
    hi.canonicalize();
    return {lo, hi};
}

// Metric d_{X_k}

double dx_position(double x, double M, double M_tilde) {
    if (std::isinf(x)) return M_tilde + 1;
    if (x < M) return M - 1 + x / M;
    if (x > M_tilde) return M_tilde + 1 - M_tilde / x;
    return x;
}

double dx_distance(cplx z, cplx w, double M, double M_tilde) {
    return std::abs(cplx(dx_position(z.real(), M, M_tilde), z.imag()) - cplx(dx_position(w.real(), M, M_tilde), w.imag()));
}

bool dx_is_metric(const Rational& M, const Rational& M_tilde) {
    if (!(M > 0) || !(M_tilde > M)) return false;
    // Left piece M - 1 + x/M has slope 1/M and value M at x = M; right piece has
    // derivative M̃/x^2 > 0 and value M̃ at x = M̃; the middle is the identity.
    Rational left_end = M - 1 + M / M;
    Rational right_start = M_tilde + 1 - M_tilde / M_tilde;
    return left_end == M && right_start == M_tilde && Rational(1) / M > 0;
}

// Enumeration

std::vector<KappaEntry> kappa_enumeration(std::size_t alphabet_size, std::size_t limit) {
    if (alphabet_size == 0) throw ParameterError("the alphabet is empty");
    std::vector<KappaEntry> out(1);
    std::map<std::vector<std::size_t>, std::size_t> index;
    index[{}] = 0;
    std::vector<std::vector<std::size_t>> layer{{}};
    while (out.size() <= limit) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& w : layer)
            for (std::size_t a = 0; a < alphabet_size; ++a) {
                auto v = w;
                v.push_back(a);
                next.push_back(std::move(v));
            }
        std::sort(next.begin(), next.end());
        for (auto& w : next) {
            if (out.size() > limit) break;
            KappaEntry e;
            e.word = w;
            e.predecessor = index.at(std::vector<std::size_t>(w.begin(), w.end() - 1));
            index[w] = out.size();
            out.push_back(std::move(e));
        }
        layer = std::move(next);
    }
    return out;
}

// Geometry of the decorations

namespace {

struct Box {
    Rational x0, x1, y0, y1;
};

// Boundary of a union of boxes, traced with the interior on the left.
std::vector<QPoint> union_boundary(const std::vector<Box>& boxes) {
    std::set<Rational> xset, yset;
    for (const auto& b : boxes) {
        if (!(b.x0 < b.x1) || !(b.y0 < b.y1)) throw GeometryError("degenerate box in tract assembly");
        xset.insert(b.x0);
        xset.insert(b.x1);
        yset.insert(b.y0);
        yset.insert(b.y1);
    }
    std::vector<Rational> xs(xset.begin(), xset.end()), ys(yset.begin(), yset.end());
    const std::size_t nx = xs.size() - 1, ny = ys.size() - 1;
    std::vector<char> in(nx * ny, 0);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
            Rational cx = (xs[i] + xs[i + 1]) / 2, cy = (ys[j] + ys[j + 1]) / 2;
            for (const auto& b : boxes)
                if (b.x0 < cx && cx < b.x1 && b.y0 < cy && cy < b.y1) {
                    in[i * ny + j] = 1;
                    break;
                }
        }
    auto inside = [&](long i, long j) {
        return i >= 0 && j >= 0 && i < long(nx) && j < long(ny) && in[std::size_t(i) * ny + std::size_t(j)];
    };
    using V = std::pair<long, long>;
    std::map<V, std::vector<V>> next;
    std::size_t edges = 0;
    auto add = [&](V a, V b) {
        next[a].push_back(b);
        ++edges;
    };
    for (long i = 0; i < long(nx); ++i)
        for (long j = 0; j < long(ny); ++j) {
            if (!inside(i, j)) continue;
            if (!inside(i, j - 1)) add({i, j}, {i + 1, j});
            if (!inside(i + 1, j)) add({i + 1, j}, {i + 1, j + 1});
            if (!inside(i, j + 1)) add({i + 1, j + 1}, {i, j + 1});
            if (!inside(i - 1, j)) add({i, j + 1}, {i, j});
        }
    for (const auto& [v, outs] : next)
        if (outs.size() != 1) throw GeometryError("tract boundary pinches at a vertex");
    V start = next.begin()->first, cur = start;
    std::vector<V> cycle;
    do {
        cycle.push_back(cur);
        cur = next.at(cur).front();
    } while (cur != start && cycle.size() <= edges);
    if (cycle.size() != edges) throw GeometryError("assembled tract has holes or several components");
    std::vector<QPoint> out;
    const std::size_t n = cycle.size();
    for (std::size_t k = 0; k < n; ++k) {
        V a = cycle[(k + n - 1) % n], b = cycle[k], c = cycle[(k + 1) % n];
        bool collinear = (a.first == b.first && b.first == c.first) || (a.second == b.second && b.second == c.second);
        if (!collinear) out.push_back({xs[std::size_t(b.first)], ys[std::size_t(b.second)]});
    }
    return out;
}

const Rational kWallThickness(1, 8);

} // namespace

DecorationLayout decoration_layout(const std::vector<double>& theta, const std::vector<Rational>& omega,
                                   const PLMap& g, long gamma_star, const Rational& R) {
    if (theta.size() != std::size_t(gamma_star) + 1) throw ParameterError("θ needs γ_{k*} + 1 entries");
    if (omega.size() < 2) throw ParameterError("Ω needs at least two points");
    for (std::size_t l = 1; l < theta.size(); ++l)
        if (!(theta[l - 1] < theta[l])) throw ConstructionError("step_I3", "θ values are not increasing");
    const long m = long(omega.size()) - 1;
    DecorationLayout L;
    for (long j = 1; j <= m; ++j) {
        auto [a, b] = pl_range(g, omega[std::size_t(j - 1)], omega[std::size_t(j)]);
        auto [lo, hi] = xi_hull(a, b, gamma_star);
        L.I_lo.push_back(lo);
        L.I_hi.push_back(hi);
        L.It_lo.push_back(theta[std::size_t(to_long(lo * gamma_star))]);
        L.It_hi.push_back(j == m ? to_double(R) + 1 : theta[std::size_t(to_long(hi * gamma_star))]);
    }
    for (long j = 1; j < m; ++j) {
        Rational ov = std::min(L.I_hi[std::size_t(j - 1)], L.I_hi[std::size_t(j)]) -
                      std::max(L.I_lo[std::size_t(j - 1)], L.I_lo[std::size_t(j)]);
        if (ov < Rational(1, gamma_star))
            throw ConstructionError("step_I3", "I^" + std::to_string(j) + " and I^" + std::to_string(j + 1) +
                                                   " overlap by less than 1/γ");
    }
    if (!(L.I_lo.back() <= Rational(gamma_star - 1, gamma_star)) || L.I_hi.back() != 1)
        throw ConstructionError("step_I3", "I^m does not contain [ξ^{γ-1}, 1]");
    if (!(L.It_hi.back() > to_double(R) + 0.5) || !(L.It_lo.back() < to_double(R)))
        throw ConstructionError("step_I3", "Ĩ^m does not reach across R_k");

    // Rational real-part windows, rounded inwards on a 1/256 grid.
    auto inward = [](double x, bool up) {
        Rational q = from_double(x) * 256;
        Rational r = up ? ceil_q(q) : floor_q(q);
        return Rational(r / 256);
    };
    std::vector<Rational> A, B;
    for (long j = 0; j < m; ++j) {
        A.push_back(inward(L.It_lo[std::size_t(j)], true));
        B.push_back(j == m - 1 ? Rational(R + 1) : inward(L.It_hi[std::size_t(j)], false));
        if (!(A.back() < B.back())) throw ConstructionError("step_I3", "Ĩ^" + std::to_string(j + 1) + " is too short");
    }
    const Rational w(1, 8 * m);
    for (long j = 1; j <= m; ++j) {
        TractPiece band{PieceKind::Quadrilateral, 0, int(j), A[std::size_t(j - 1)], B[std::size_t(j - 1)],
                        Rational(1) - Rational(j, 2 * m) + w, Rational(1) - Rational(j - 1, 2 * m) - w, 0};
        band.y0.canonicalize();
        band.y1.canonicalize();
        L.bands.push_back(band);
    }
    {
        const auto& b1 = L.bands.front();
        Rational d = (b1.x1 - b1.x0) / 8;
        L.arcs.push_back({0, b1.x0 + d, b1.x1 - d, b1.y1, true});
    }
    for (long j = 1; j < m; ++j) {
        Rational lo = std::max(A[std::size_t(j - 1)], A[std::size_t(j)]);
        Rational hi = std::min(B[std::size_t(j - 1)], B[std::size_t(j)]);
        if (!(lo < hi)) throw ConstructionError("step_I3", "windows Ĩ^j and Ĩ^{j+1} do not overlap after rounding");
        Rational c = (lo + hi) / 2, v = std::min(Rational((hi - lo) / 8), w);
        Rational yc = Rational(1) - Rational(j, 2 * m);
        yc.canonicalize();
        L.connectors.push_back({PieceKind::Channel, 0, int(j), c - v, c + v, yc - w, yc + w, 0});
        L.arcs.push_back({int(j), c - v, c + v, yc, false});
    }
    {
        Rational c = R + Rational(1, 2), v = std::min(Rational(1, 4), w);
        L.connectors.push_back({PieceKind::Channel, 0, int(m), c - v, c + v, Rational(1, 2), Rational(1, 2) + w, 0});
        L.arcs.push_back({int(m), c - v, c + v, Rational(1, 2), false});
    }
    return L;
}

RectilinearTract assemble_tract(double x0, const std::vector<WallData>& walls,
                                const std::vector<DecorationLayout>& decorations, const Rational& x_far) {
    std::vector<Box> boxes;
    std::vector<TractPiece> pieces;
    Rational left = from_double(x0);
    const Rational half(1, 2);
    std::vector<WallData> ws = walls;
    std::sort(ws.begin(), ws.end(), [](const WallData& a, const WallData& b) { return a.x < b.x; });
    Rational cur = left;
    int wall_index = 0;
    for (const auto& wd : ws) {
        ++wall_index;
        if (!(wd.opening > 0) || wd.opening > 1) throw GeometryError("wall opening must lie in (0, π]");
        Rational wl = wd.x - kWallThickness;
        if (!(cur < wl)) throw GeometryError("walls are closer than their thickness");
        boxes.push_back({cur, wl, -half, half});
        boxes.push_back({wl, wd.x, -wd.opening / 2, wd.opening / 2});
        pieces.push_back({PieceKind::Iris, wall_index, 0, wl, wd.x, -wd.opening / 2, wd.opening / 2, wd.opening});
        cur = wd.x;
    }
    if (!(cur < x_far)) throw GeometryError("the far edge lies left of a wall");
    boxes.push_back({cur, x_far, -half, half});
    pieces.insert(pieces.begin(), {PieceKind::Central, 0, 0, left, x_far, -half, half, 0});
    int stage = 0;
    for (const auto& L : decorations) {
        ++stage;
        Rational wlo = L.bands.front().x0, whi = L.bands.front().x1;
        for (const auto& b : L.bands) {
            wlo = std::min(wlo, b.x0);
            whi = std::max(whi, b.x1);
        }
        pieces.push_back({PieceKind::Channel, stage, 0, wlo, whi, half, Rational(1), 0});
        for (const auto& b : L.bands) {
            if (!(b.x1 < x_far)) throw GeometryError("decoration reaches the far edge");
            boxes.push_back({b.x0, b.x1, b.y0, b.y1});
            boxes.push_back({b.x0, b.x1, -b.y1, -b.y0});
            TractPiece p = b;
            p.j = stage;
            pieces.push_back(p);
        }
        for (const auto& c : L.connectors) {
            boxes.push_back({c.x0, c.x1, c.y0, c.y1});
            boxes.push_back({c.x0, c.x1, -c.y1, -c.y0});
        }
        for (const auto& a : L.arcs)
            if (!a.boundary) pieces.push_back({PieceKind::CrossCut, stage, a.j, a.x0, a.x1, a.y, a.y, 0});
    }
    std::vector<QPoint> cycle = union_boundary(boxes);
    // The cycle runs counter-clockwise; cut out the far edge from (x_far, -1/2) to (x_far, 1/2).
    const std::size_t n = cycle.size();
    std::size_t top = n;
    for (std::size_t i = 0; i < n; ++i)
        if (cycle[i].x == x_far && cycle[i].y == half) top = i;
    if (top == n || !(cycle[(top + n - 1) % n].x == x_far && cycle[(top + n - 1) % n].y == -half))
        throw GeometryError("assembled tract has no clean far edge");
    std::vector<QPoint> chain;
    for (std::size_t i = 1; i + 1 < n; ++i) chain.push_back(cycle[(top + i) % n]);
    return RectilinearTract(std::move(chain), std::move(pieces));
}

// Config and state

void to_json(nlohmann::json& j, const ConstructionConfig& c) {
    j = nlohmann::json::object();
    j["scheme"] = to_string(c.scheme);
    auto& gens = j["generators"] = nlohmann::json::array();
    for (const auto& g : c.generators) gens.push_back(g);
    std::vector<std::string> M;
    for (const auto& m : c.M) M.push_back(to_string(m));
    j["M"] = M;
    j["stages"] = c.stages;
    j["tolerances"] = {{"conformal", c.conformal_tol},
                       {"samples", c.samples},
                       {"chi_floor_log2", c.chi_floor_log2},
                       {"max_vertices", c.max_vertices}};
    j["seed"] = c.seed;
    j["tau_depth"] = c.tau_depth;
    nlohmann::json N = nlohmann::json::array(), R = nlohmann::json::array();
    for (const auto& n : c.override_N) N.push_back(n ? nlohmann::json(*n) : nlohmann::json(nullptr));
    for (const auto& r : c.override_R) R.push_back(r ? nlohmann::json(*r) : nlohmann::json(nullptr));
    j["overrides"] = {{"N", N}, {"R", R}};
}

namespace {

PLMap generator_from_json(const nlohmann::json& e) {
    if (e.is_string()) {
        const std::string name = e.get<std::string>();
        if (name == "one_point_composant") return one_point_composant_map();
        if (name == "identity") return PLMap({Rational(0), Rational(1)}, {Rational(0), Rational(1)});
        if (name.rfind("cantor:", 0) == 0) return cantor_family_map(parse_rational(name.substr(7)));
        throw InputError("unknown generator name '" + name + "'");
    }
    return pl_map_from_json(e);
}

} // namespace

ConstructionConfig construction_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("construction config must be a JSON object");
    try {
        ConstructionConfig c;
        c.scheme = scheme_from_string(j.value("scheme", std::string("single")));
        if (j.contains("generators"))
            for (const auto& e : j.at("generators")) c.generators.push_back(generator_from_json(e));
        if (c.generators.empty()) c.generators.push_back(one_point_composant_map());
        if (j.contains("M"))
            for (const auto& e : j.at("M"))
                c.M.push_back(e.is_string() ? parse_rational(e.get<std::string>()) : from_double(e.get<double>()));
        c.stages = j.value("stages", std::size_t(4));
        if (j.contains("tolerances")) {
            const auto& t = j.at("tolerances");
            c.conformal_tol = t.value("conformal", c.conformal_tol);
            c.samples = t.value("samples", c.samples);
            c.chi_floor_log2 = t.value("chi_floor_log2", c.chi_floor_log2);
            c.max_vertices = t.value("max_vertices", c.max_vertices);
        }
        c.seed = j.value("seed", std::uint64_t(1));
        c.tau_depth = j.value("tau_depth", std::size_t(12));
        if (j.contains("overrides")) {
            const auto& o = j.at("overrides");
            if (o.contains("N"))
                for (const auto& e : o.at("N"))
                    c.override_N.push_back(e.is_null() ? std::nullopt : std::optional<std::size_t>(e.get<std::size_t>()));
            if (o.contains("R"))
                for (const auto& e : o.at("R"))
                    c.override_R.push_back(e.is_null() ? std::nullopt : std::optional<double>(e.get<double>()));
        }
        if (c.stages == 0) throw InputError("stage cap must be at least 1");
        if (!(c.conformal_tol > 0)) throw InputError("conformal tolerance must be positive");
        if (c.chi_floor_log2 < 0 || c.chi_floor_log2 > 60) throw InputError("chi_floor_log2 must lie in [0, 60]");
        for (const auto& m : c.M)
            if (m < 1) throw InputError("M_k must be at least 1");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed construction config: ") + e.what());
    }
}

namespace {

Rational M_of(const ConstructionConfig& c, std::size_t k) {
    if (k < c.M.size()) return c.M[k];
    return c.M.empty() ? Rational(10) : c.M.back();
}

// Iterate of the previous partial map on the real axis, as a magnitude.
TowerMagnitude iterate_previous(const ConstructionState& s, double x, std::size_t n) {
    if (s.k() == 1) {
        // F_0 is the closed-form half-strip map.
        return sinh_iterate(s.p / std::sinh(s.p - s.x0), s.x0, x, n);
    }
    double v = x;
    for (std::size_t i = 0; i < n; ++i) {
        v = real_image(*s.F, v);
        if (!std::isfinite(v) || v > 1e300)
            throw ConstructionError("step_I2", "iterate of F_" + std::to_string(s.k() - 1) + " leaves the double range");
    }
    return TowerMagnitude::of(v);
}

std::vector<PLMap> predecessor_chain(const ConstructionState& s, std::size_t k) {
    std::vector<PLMap> maps;
    for (std::size_t j = k; j > 0; j = s.stages.at(j).k_star) maps.push_back(*s.stages.at(j).g);
    std::reverse(maps.begin(), maps.end());
    return maps;
}

std::vector<DecorationLayout> finished_layouts(const ConstructionState& s) {
    std::vector<DecorationLayout> out;
    for (std::size_t j = 1; j < s.stages.size(); ++j)
        if (s.stages[j].layout && s.stages[j].chi) out.push_back(*s.stages[j].layout);
    return out;
}

// f ↦ F^{-n}(z) for the given map, with a closeness tolerance probe.
cplx pull(const ConformalMap& F, cplx z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z = F.inverse(z);
    return z;
}

double closeness_probe(const ConstructionState& s, const Rational& R, std::size_t n, double Mwin, long S,
                       nlohmann::json& log) {
    std::vector<std::pair<std::string, RectilinearTract>> family;
    auto layouts = finished_layouts(s);
    Rational x_far = R + 3;
    for (Rational chi : {Rational(1), Rational(1, 2), Rational(1, 4)}) {
        auto walls = s.walls;
        if (chi < 1) walls.push_back({R, chi});
        family.emplace_back("wall " + to_string(chi) + "π", assemble_tract(s.x0, walls, layouts, x_far));
    }
    {
        DecorationLayout box;
        Rational lo = s.walls.empty() ? Rational(from_double(s.x0) + 1) : Rational(s.walls.back().x + 1);
        box.bands.push_back({PieceKind::Quadrilateral, 0, 1, lo, R + 1, Rational(5, 8), Rational(7, 8), 0});
        box.connectors.push_back(
            {PieceKind::Channel, 0, 1, R + Rational(1, 4), R + Rational(3, 4), Rational(1, 2), Rational(5, 8), 0});
        auto ls = layouts;
        ls.push_back(box);
        auto walls = s.walls;
        walls.push_back({R, Rational(1, 16)});
        family.emplace_back("decorated", assemble_tract(s.x0, walls, ls, x_far));
    }
    std::vector<cplx> zs;
    for (int a = 0; a <= 4; ++a)
        for (int b = -2; b <= 2; ++b)
            zs.emplace_back(1.0 + (Mwin - 1.0) * a / 4.0, (2.0 * double(S) + 1.0) * kPi * b / 2.0);
    double worst = 0.0;
    for (const auto& [name, t] : family) {
        if (t.chain().size() > s.config.max_vertices)
            throw ConstructionError("step_I2", "probe completion '" + name + "' has " + std::to_string(t.chain().size()) +
                                                   " vertices, above the solver budget of " +
                                                   std::to_string(s.config.max_vertices));
        ConformalMap Fc = map_to_halfplane(t, Normalization::fixed_point(cplx(s.p, 0)), s.config.conformal_tol,
                                           std::min(to_double(R) + 2, 60.0));
        double dev = 0.0;
        for (const cplx& z : zs) dev = std::max(dev, std::abs(pull(Fc, z, n) - pull(*s.F, z, n)));
        log.push_back({{"completion", name}, {"deviation", dev}});
        worst = std::max(worst, dev);
    }
    return worst;
}

} // namespace

ConstructionState initial_state(const ConstructionConfig& config) {
    if (config.generators.empty()) throw ParameterError("no generator maps supplied");
    for (const auto& g : config.generators)
        if (g(Rational(1)) != 1) throw PreconditionError("generator maps must fix 1");
    ConstructionState s;
    s.config = config;
    if (config.scheme == Scheme::Bounded) {
        s.x0 = 2.0;
        s.p = 3.0;
    }
    StageLedger base;
    base.k = 0;
    base.M = config.scheme == Scheme::Bounded ? Rational(4) : M_of(config, 0);
    base.M_tilde = base.M + 1;
    base.phi = HeightFunction::linear(base.M, *base.M_tilde);
    base.gamma = 5;
    base.s = 0;
    base.n = 0;
    base.R = config.scheme == Scheme::Bounded ? Rational(2) : Rational(5);
    base.status = "complete";
    s.stages.push_back(base);
    s.F = std::make_shared<ConformalMap>(half_strip_map(s.x0, -0.5, 0.5, Normalization::fixed_point(cplx(s.p, 0))));
    s.tract = half_strip(from_double(s.x0), Rational(1, 2));
    if (config.scheme == Scheme::AllInOne) s.kappa = kappa_enumeration(config.generators.size(), config.stages);
    return s;
}

StageLedger& begin_stage(ConstructionState& s) {
    StageLedger L;
    L.k = s.stages.size();
    if (s.config.scheme == Scheme::AllInOne) {
        if (s.kappa.size() <= L.k) s.kappa = kappa_enumeration(s.config.generators.size(), L.k);
        L.k_star = s.kappa[L.k].predecessor;
        L.g = s.config.generators.at(s.kappa[L.k].word.back());
    } else {
        L.k_star = L.k - 1;
        L.g = s.config.generators.at((L.k - 1) % s.config.generators.size());
    }
    L.M = M_of(s.config, L.k);
    if (s.config.scheme == Scheme::Bounded) L.M = 4;
    s.stages.push_back(std::move(L));
    return s.stages.back();
}

std::vector<Rational> step_I1_choose_omega(ConstructionState& s) {
    StageLedger& L = s.current();
    const StageLedger& ks = s.stage(L.k_star);
    L.omega = step_I1_choose_omega(*L.g, *ks.gamma);
    long worst = 0;
    for (std::size_t j = 1; j < L.omega.size(); ++j) {
        auto [a, b] = pl_range(*L.g, L.omega[j - 1], L.omega[j]);
        worst = std::max(worst, grid_points_in(a, b, *ks.gamma));
    }
    L.checks["I1"] = {{"m", L.omega.size() - 1}, {"max_xi_points_per_gap", worst}};
    return L.omega;
}

std::pair<std::size_t, Rational> step_I2_choose_NR(ConstructionState& s) {
    StageLedger& L = s.current();
    const StageLedger& ks = s.stage(L.k_star);
    const StageLedger& prev = s.stage(L.k - 1);
    L.alpha_star = alpha_constant(*ks.phi, Rational(*ks.gamma));
    const std::size_t N_lo = nk_lower_bound(*L.alpha_star);
    const double target = to_double(*prev.R) + 1;
    std::size_t N = N_lo;
    const double M_star = to_double(ks.M);
    while (!(TowerMagnitude::of(target) < iterate_previous(s, M_star, N))) {
        if (++N > 64) throw ConstructionError("step_I2", "no N_k <= 64 pushes M_{k*} past R_{k-1} + 1");
    }
    const std::size_t idx = L.k - 1;
    if (idx < s.config.override_N.size() && s.config.override_N[idx]) {
        N = *s.config.override_N[idx];
        L.overrides.push_back("N");
    }
    L.N = N;
    L.n = ks.n + N + 1;
    L.checks["I2"] = {{"alpha", to_string(*L.alpha_star)},
                      {"N_lower_bound", N_lo},
                      {"N_bound_holds", N >= N_lo && N > 3},
                      {"F_iterate_of_M", iterate_previous(s, M_star, N).str()}};
    L.R_bound = iterate_previous(s, to_double(*ks.M_tilde) + 1, N);
    L.checks["I2"]["R_lower_bound"] = L.R_bound->str();
    if (idx < s.config.override_R.size() && s.config.override_R[idx]) {
        L.R = from_double(*s.config.override_R[idx]);
        L.overrides.push_back("R");
        L.checks["I2"]["R_size_holds"] = !(TowerMagnitude::of(to_double(*L.R)) < *L.R_bound);
        return {N, *L.R};
    }
    if (!L.R_bound->fits_double())
        throw ConstructionError("step_I2", "R_" + std::to_string(L.k) + " >= F_" + std::to_string(L.k - 1) + "^" +
                                               std::to_string(N) + "(M~_" + std::to_string(L.k_star) +
                                               " + 1) = " + L.R_bound->str() +
                                               " is beyond double range, so T_" + std::to_string(L.k) +
                                               " cannot be represented");
    Rational R = std::max(ceil_q(from_double(L.R_bound->value)), Rational(*prev.R + 2));
    long S = 0;
    for (std::size_t j = 0; j < L.k; ++j) S = std::max(S, s.stages[j].s);
    double Mwin = std::max(to_double(*prev.M_tilde), iterate_previous(s, to_double(*ks.M_tilde), N).to_double() + 10);
    auto& log = L.checks["I2"]["closeness"] = nlohmann::json::array();
    for (int attempt = 0; attempt < 6; ++attempt) {
        double dev = closeness_probe(s, R, L.n, Mwin, S, log);
        if (dev <= to_double(*L.alpha_star) / 4) {
            L.R = R;
            return {N, R};
        }
        R = 2 * R;
    }
    throw ConstructionError("step_I2", "closeness to F_{k-1} not reached by the probe completions");
}

namespace {

std::vector<double> theta_values(const ConstructionState& s) {
    const StageLedger& L = s.stages.back();
    const StageLedger& ks = s.stage(L.k_star);
    std::vector<double> theta;
    for (long l = 0; l <= *ks.gamma; ++l) {
        double x = ks.phi->inverse(double(l) / double(*ks.gamma));
        TowerMagnitude t = iterate_previous(s, x, *L.N);
        if (!t.fits_double()) throw ConstructionError("step_I3", "θ^" + std::to_string(l) + " = " + t.str() + " is beyond double range");
        theta.push_back(t.value);
    }
    return theta;
}

} // namespace

DecorationLayout step_I3_build_U(ConstructionState& s) {
    StageLedger& L = s.current();
    const StageLedger& prev = s.stage(L.k - 1);
    const StageLedger& ks = s.stage(L.k_star);
    L.theta = theta_values(s);
    if (!(L.theta.front() > to_double(*prev.R) + 1))
        throw ConstructionError("step_I3", "θ^0 = " + fmt(L.theta.front()) + " does not lie right of R_{k-1} + 1");
    DecorationLayout layout = decoration_layout(L.theta, L.omega, *L.g, *ks.gamma, *L.R);
    L.layout = layout;
    L.checks["I3"] = {{"m", layout.bands.size()}, {"arcs", layout.arcs.size()}};
    return layout;
}

namespace {

struct RayTrace {
    std::vector<double> xs;
    std::vector<cplx> zs;
};

RayTrace trace_ray(const ConformalMap& F, double height, double re_stop) {
    double X = 8.0;
    while (F.inverse(cplx(X, height)).real() <= re_stop) {
        X *= 2;
        if (X > 1e15) throw ConstructionError("step_I4", "the ray F_k^{-1}([0, ∞) + 2πis) does not leave R_k");
    }
    RayTrace r;
    const int n = 1600;
    const double lo = 1e-6;
    for (int i = 0; i <= n; ++i) {
        double x = lo * std::pow(X / lo, double(i) / n);
        r.xs.push_back(x);
        r.zs.push_back(F.inverse(cplx(x, height)));
    }
    return r;
}

bool in_U(const DecorationLayout& L, cplx z, double tol) {
    for (const auto& b : L.bands)
        if (in_box(z, b, tol)) return true;
    for (std::size_t i = 0; i + 1 < L.connectors.size(); ++i)
        if (in_box(z, L.connectors[i], tol)) return true;
    return false;
}

struct I4Outcome {
    bool ok = false;
    long s = 0;
    nlohmann::json log;
};

I4Outcome check_I4(const ConformalMap& F, const DecorationLayout& L, double M, double R) {
    I4Outcome out;
    const ConnectorArc& c0 = L.arcs.front();
    const double inset = 1e-7;
    double a_lo = INFINITY, a_hi = -INFINITY;
    for (int i = 0; i <= 32; ++i) {
        double x = to_double(c0.x0) + (to_double(c0.x1) - to_double(c0.x0)) * i / 32.0;
        double v = F(cplx(x, to_double(c0.y) * kPi - inset)).imag();
        a_lo = std::min(a_lo, v);
        a_hi = std::max(a_hi, v);
    }
    out.log["arc_image"] = {a_lo, a_hi};
    out.log["arc_length"] = a_hi - a_lo;
    long s = std::lround((a_lo + a_hi) / 2 / (2 * kPi));
    out.s = s;
    const double h = 2 * kPi * double(s);
    bool a_ok = h > a_lo && h < a_hi && (a_hi - a_lo) >= 2 * kPi;
    double dist_a = INFINITY;
    if (h > a_lo && h < a_hi) dist_a = segment_distance(F.inverse(cplx(1e-9, h)), c0);
    a_ok = a_ok && dist_a < 1e-4;
    out.log["a"] = {{"passed", a_ok}, {"distance_to_C0", dist_a}};
    if (!a_ok) return out;
    bool b_ok = true;
    for (int i = 0; i <= 40 && b_ok; ++i) {
        double x = 1e-6 * std::pow((M + 1) / 1e-6, i / 40.0);
        b_ok = in_box(F.inverse(cplx(x, h)), L.bands.front(), 1e-6);
    }
    out.log["b"] = {{"passed", b_ok}};
    if (!b_ok) return out;
    RayTrace ray = trace_ray(F, h, R + 1);
    bool c_ok = true;
    double worst_x = 0;
    for (std::size_t i = 0; i < ray.zs.size(); ++i)
        if (!(ray.zs[i].real() > R) && !in_U(L, ray.zs[i], 1e-6)) {
            c_ok = false;
            worst_x = ray.xs[i];
            break;
        }
    out.log["c"] = {{"passed", c_ok}};
    if (!c_ok) out.log["c"]["first_violation_x"] = worst_x;
    out.ok = c_ok;
    return out;
}

// I3 items on the final geometry: hyperbolic separation of consecutive arcs and real parts
// of connecting geodesics.
nlohmann::json check_I3_geodesics(const ConformalMap& F, const DecorationLayout& L, bool& ok) {
    nlohmann::json log = nlohmann::json::array();
    ok = true;
    auto arc_points = [&](const ConnectorArc& a) {
        std::vector<cplx> pts;
        double x0 = to_double(a.x0), x1 = to_double(a.x1), y = to_double(a.y) * kPi - (a.boundary ? 1e-7 : 0.0);
        for (int i = 0; i <= 4; ++i) pts.emplace_back(x0 + (x1 - x0) * (0.05 + 0.9 * i / 4.0), y);
        return pts;
    };
    const std::size_t m = L.bands.size();
    for (std::size_t j = 1; j <= m; ++j) {
        auto A = arc_points(L.arcs[j - 1]);
        auto B = arc_points(L.arcs[j]);
        double dmin = INFINITY;
        if (j >= 2)
            for (const auto& a : A)
                for (const auto& b : B) dmin = std::min(dmin, hyperbolic_distance(F, a, b));
        double lo = L.It_lo[j - 1], hi = L.It_hi[j - 1];
        double worst = INFINITY;
        for (const auto& a : A)
            for (const auto& b : B) {
                cplx fa = F(a), fb = F(b);
                // Geodesic of {Re > 0}: circle centred on the imaginary axis through fa and fb.
                double c = (std::norm(fb) - std::norm(fa)) / (2 * (fb.imag() - fa.imag()));
                bool straight = std::abs(fb.imag() - fa.imag()) < 1e-12 * (1 + std::abs(fa));
                double rad = std::abs(fa - cplx(0, c));
                double t0 = std::arg(fa - cplx(0, c)), t1 = std::arg(fb - cplx(0, c));
                for (int i = 1; i < 16; ++i) {
                    double t = i / 16.0;
                    cplx w = straight ? fa + t * (fb - fa) : cplx(0, c) + rad * std::polar(1.0, t0 + t * (t1 - t0));
                    double x = F.inverse(w).real();
                    worst = std::min({worst, x - lo, hi - x});
                }
            }
        bool pass = dmin >= 1.0 && worst >= -1e-6;
        ok = ok && pass;
        log.push_back({{"j", j}, {"min_distance", j >= 2 ? nlohmann::json(dmin) : nlohmann::json("boundary arc")},
                       {"window_margin", worst}, {"passed", pass}});
    }
    return log;
}

} // namespace

std::pair<Rational, long> step_I4_choose_chi_s(ConstructionState& s) {
    StageLedger& L = s.current();
    auto layouts = finished_layouts(s);
    layouts.push_back(*L.layout);
    const Rational x_far = *L.R + 2;
    auto& attempts = L.checks["I4"]["attempts"] = nlohmann::json::array();
    for (int e = 0; e <= s.config.chi_floor_log2; ++e) {
        Rational chi = pow2(-e);
        auto walls = s.walls;
        if (chi < 1) walls.push_back({*L.R, chi});
        nlohmann::json entry{{"chi", to_string(chi)}};
        try {
            RectilinearTract t = assemble_tract(s.x0, walls, layouts, x_far);
            entry["vertices"] = t.chain().size();
            s.candidate = t;
            if (t.chain().size() > s.config.max_vertices) {
                entry["conformal_error"] = "above the solver budget of " + std::to_string(s.config.max_vertices) + " vertices";
                attempts.push_back(entry);
                continue;
            }
            auto F = std::make_shared<ConformalMap>(map_to_halfplane(
                t, Normalization::fixed_point(cplx(s.p, 0)), s.config.conformal_tol, std::min(to_double(x_far) + 1, 60.0)));
            I4Outcome o = check_I4(*F, *L.layout, to_double(L.M), to_double(*L.R));
            entry["conditions"] = o.log;
            entry["accepted"] = o.ok;
            attempts.push_back(entry);
            if (o.ok) {
                L.chi = chi;
                L.s = o.s;
                s.F = F;
                s.tract = t;
                s.walls = walls;
                bool ok = false;
                L.checks["I3"]["geodesics"] = check_I3_geodesics(*F, *L.layout, ok);
                if (!ok) throw ConstructionError("step_I3", "connector arcs too long: separation or geodesic window check fails");
                return {chi, o.s};
            }
        } catch (const AccuracyError& err) {
            entry["conformal_error"] = err.what();
            entry["achieved"] = err.achieved();
            attempts.push_back(entry);
        } catch (const ConvergenceError& err) {
            entry["conformal_error"] = err.what();
            attempts.push_back(entry);
        }
    }
    throw ConstructionError("step_I4", "χ_" + std::to_string(L.k) + " search reached the floor 2^-" +
                                           std::to_string(s.config.chi_floor_log2) +
                                           "π without meeting conditions (a)-(c)");
}

void step_I5_define_phi(ConstructionState& s) {
    StageLedger& L = s.current();
    const StageLedger& ks = s.stage(L.k_star);
    const ConformalMap& F = *s.F;
    const double h = 2 * kPi * double(L.s);
    const double R = to_double(*L.R);
    RayTrace ray = trace_ray(F, h, R + 1.5);
    const DecorationLayout& lay = *L.layout;
    const std::size_t m = lay.bands.size();
    L.eta.assign(m, -1.0);
    for (std::size_t j = 1; j <= m; ++j) {
        const ConnectorArc& a = lay.arcs[j];
        const double y = to_double(a.y) * kPi, x0 = to_double(a.x0), x1 = to_double(a.x1);
        for (std::size_t i = 1; i < ray.zs.size(); ++i) {
            double d0 = ray.zs[i - 1].imag() - y, d1 = ray.zs[i].imag() - y;
            if ((d0 < 0) == (d1 < 0)) continue;
            double lo = ray.xs[i - 1], hi = ray.xs[i];
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                double dm = F.inverse(cplx(mid, h)).imag() - y;
                if ((dm < 0) == (d0 < 0)) lo = mid;
                else hi = mid;
            }
            cplx z = F.inverse(cplx(0.5 * (lo + hi), h));
            if (z.real() >= x0 - 1e-9 && z.real() <= x1 + 1e-9) L.eta[j - 1] = std::max(L.eta[j - 1], 0.5 * (lo + hi));
        }
        if (L.eta[j - 1] < 0) throw GeometryError("the ray F_k^{-1}(x + 2πis) never crosses C^" + std::to_string(j));
    }
    double prev = to_double(L.M);
    for (std::size_t j = 0; j < m; ++j) {
        if (!(L.eta[j] > prev)) throw GeometryError("η ordering violated at j = " + std::to_string(j + 1));
        prev = L.eta[j];
    }
    auto F_iter = [&](double x, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            x = real_image(F, x);
            if (!std::isfinite(x) || x > 1e300)
                throw ConstructionError("step_I5", "F_k iterate in the M~_k maximum leaves the double range");
        }
        return x;
    };
    nlohmann::json terms{{"(2s+1)pi", (2 * double(L.s) + 1) * kPi},
                         {"eta_m", L.eta.back()},
                         {"F(R+3)", F_iter(R + 3, 1)},
                         {"F^(N+1)(M~*+1)", F_iter(to_double(*ks.M_tilde) + 1, *L.N + 1)}};
    if (double(L.k) > s.x0) terms["F^n(k)"] = F_iter(double(L.k), L.n);
    double Mt = 0;
    for (const auto& [key, v] : terms.items()) Mt = std::max(Mt, v.get<double>());
    L.M_tilde = ceil_q(from_double(Mt));
    std::vector<Rational> xs{L.M}, ys{Rational(0)};
    for (std::size_t j = 1; j < m; ++j) {
        xs.push_back(from_double(L.eta[j - 1]));
        ys.push_back(L.omega[j]);
    }
    xs.push_back(*L.M_tilde);
    ys.push_back(1);
    L.phi = HeightFunction(xs, ys);
    // γ_k: expansion with λ = 4 (Lipschitz form) and backward shrinking, then fineness.
    auto chain = predecessor_chain(s, L.k);
    Rational shrink = Rational(long(2 * chain.size())) / backward_shrinking_separation(chain, chain.size());
    Rational Gamma = std::max({Rational(4 * L.g->lipschitz() * *ks.gamma), shrink, Rational(1)});
    long gamma = to_long(ceil_q(Gamma));
    long hi = gamma;
    while (!(gap_width(*L.phi, Rational(hi)) < Rational(1, 4))) hi *= 2;
    long lo = gamma;
    while (lo < hi) {
        long mid = lo + (hi - lo) / 2;
        if (gap_width(*L.phi, Rational(mid)) < Rational(1, 4)) hi = mid;
        else lo = mid + 1;
    }
    L.gamma = lo;
    L.checks["I5"] = {{"M_tilde_terms", terms},
                      {"Gamma", to_string(Gamma)},
                      {"gap_width", to_string(gap_width(*L.phi, Rational(lo)))},
                      {"eta", L.eta}};
}

// Verification

PullbackCertificate verify_pullingback(const ConstructionState& s, std::size_t k, const std::vector<cplx>& W,
                                       bool include_infinity) {
    if (k == 0 || k >= s.stages.size()) throw ParameterError("verify_pullingback needs a stage k >= 1");
    const StageLedger& L = s.stage(k);
    const StageLedger& ks = s.stage(L.k_star);
    if (!L.N || !L.phi || !L.g || !ks.phi || !ks.gamma)
        throw PreconditionError("stage " + std::to_string(k) + " is not complete");
    PullbackCertificate c;
    c.bound = 3.0 / double(*ks.gamma);
    c.worst_real_margin = INFINITY;
    c.worst_psi_margin = c.bound;
    const double floor_re = to_double(ks.M) - 1;
    for (const cplx& w : W) {
        cplx z = pull(*s.F, w + cplx(0, 2 * kPi * double(L.s)), *L.N + 1);
        double real_margin = z.real() - floor_re;
        double lhs = (*ks.phi)(z.real());
        double rhs = to_double((*L.g)(from_double((*L.phi)(w.real()))));
        double psi_margin = c.bound - std::abs(lhs - rhs);
        if (std::min(real_margin, psi_margin / c.bound) < std::min(c.worst_real_margin, c.worst_psi_margin / c.bound))
            c.worst_sample = w;
        c.worst_real_margin = std::min(c.worst_real_margin, real_margin);
        c.worst_psi_margin = std::min(c.worst_psi_margin, psi_margin);
        ++c.samples;
    }
    // w = ∞: f_k(∞) = ∞, ψ(∞) = 1 and g_k(1) = 1.
    if (include_infinity) {
        if ((*L.g)(Rational(1)) != 1) c.worst_psi_margin = std::min(c.worst_psi_margin, -1.0);
        ++c.samples;
    }
    c.passed = c.worst_real_margin > 0 && c.worst_psi_margin > 0;
    return c;
}

std::vector<cplx> pullback_samples(const ConstructionState& s, std::size_t k, std::size_t count, std::uint64_t seed) {
    const StageLedger& L = s.stage(k);
    const double x_lo = s.x0, x_hi = to_double(L.M_tilde ? *L.M_tilde : L.M) + 2;
    const double y_lo = s.tract ? to_double(s.tract->min_y()) * kPi : -kPi / 2;
    const double y_hi = s.tract ? to_double(s.tract->max_y()) * kPi : kPi / 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(x_lo, x_hi), uy(y_lo, y_hi);
    std::vector<cplx> out;
    std::size_t tries = 0;
    while (out.size() < count && tries < 1000 * count) {
        ++tries;
        cplx z(ux(rng), uy(rng));
        bool inside = s.tract ? contains(*s.tract, z) : std::abs(z.imag()) < kPi / 2 && z.real() > s.x0;
        if (inside) out.push_back(z);
    }
    if (out.size() < count) throw ParameterError("could not draw enough samples inside the tract");
    return out;
}

// Drivers

namespace {

void run_single_stage(ConstructionState& s, std::string& step) {
    StageLedger& L = begin_stage(s);
    (void)L;
    step = "step_I1";
    step_I1_choose_omega(s);
    step = "step_I2";
    step_I2_choose_NR(s);
    step = "step_I3";
    step_I3_build_U(s);
    step = "step_I4";
    step_I4_choose_chi_s(s);
    step = "step_I5";
    step_I5_define_phi(s);
    step = "verify_pullingback";
    StageLedger& cur = s.current();
    auto report = validate_tract(*s.tract);
    cur.checks["validate_tract"] = report.ok();
    auto cert = verify_pullingback(s, cur.k, pullback_samples(s, cur.k, s.config.samples, s.config.seed + cur.k));
    cur.checks["pullback"] = {{"samples", cert.samples},
                              {"bound", cert.bound},
                              {"worst_real_margin", cert.worst_real_margin},
                              {"worst_psi_margin", cert.worst_psi_margin},
                              {"passed", cert.passed}};
    if (!cert.passed) {
        std::ostringstream msg;
        msg << "pull-back relation fails at w = " << cert.worst_sample.real() << " + " << cert.worst_sample.imag() << "i";
        throw ConstructionError("verify_pullingback", msg.str());
    }
    cur.status = "complete";
}

void record_failure(ConstructionState& s, const std::string& step, const std::exception& e) {
    s.status = "failed";
    const auto* ce = dynamic_cast<const ConstructionError*>(&e);
    s.failed_step = ce ? ce->step() : step;
    s.failure = e.what();
    if (s.failure.rfind(s.failed_step + ": ", 0) == 0) s.failure.erase(0, s.failed_step.size() + 2);
    if (s.stages.size() > 1 && s.stages.back().status == "open") s.stages.back().status = "failed at " + s.failed_step;
}

} // namespace

ConstructionState run_construction(const ConstructionConfig& config) {
    if (config.scheme == Scheme::Bounded) return build_bounded_tract(config);
    if (config.scheme == Scheme::Periodic) return build_periodic_tract(config);
    ConstructionState s = initial_state(config);
    std::string step = "setup";
    try {
        for (std::size_t k = 1; k <= config.stages; ++k) run_single_stage(s, step);
        s.status = "complete";
    } catch (const Error& e) {
        record_failure(s, step, e);
    }
    return s;
}

ConstructionState build_bounded_tract(const ConstructionConfig& config_in) {
    ConstructionConfig config = config_in;
    config.scheme = Scheme::Bounded;
    ConstructionState s = initial_state(config);
    std::string step = "setup";
    s.extra["address"] = "S^{N_1} T S^{N_2} T ...";
    try {
        for (std::size_t k = 1; k <= config.stages; ++k) {
            StageLedger& L = begin_stage(s);
            step = "step_I1";
            step_I1_choose_omega(s);
            step = "step_I2";
            const StageLedger& ks = s.stage(L.k_star);
            L.alpha_star = alpha_constant(*ks.phi, Rational(*ks.gamma));
            std::size_t N = nk_lower_bound(*L.alpha_star);
            if (k - 1 < config.override_N.size() && config.override_N[k - 1]) {
                N = *config.override_N[k - 1];
                L.overrides.push_back("N");
            }
            L.N = N;
            L.n = ks.n + N + 1;
            const double scale = s.p / std::sinh(s.p - s.x0);
            L.R_minus = sinh_iterate(scale, s.x0, 4.0, N);
            L.R_plus = sinh_iterate(scale, s.x0, to_double(*ks.M_tilde), N);
            std::string prefix = s.extra["address_prefix"].is_string() ? s.extra["address_prefix"].get<std::string>() : "";
            s.extra["address_prefix"] = prefix + "S^" + std::to_string(N) + " T ";
            L.checks["I2"] = {{"alpha", to_string(*L.alpha_star)},
                              {"N", N},
                              {"R_minus", L.R_minus->str()},
                              {"R_plus", L.R_plus->str()}};
            if (!L.R_plus->fits_double())
                throw ConstructionError("step_I2", "R_" + std::to_string(k) + "^+ = F_S^" + std::to_string(N) + "(M~_" +
                                                       std::to_string(L.k_star) + ") = " + L.R_plus->str() +
                                                       " is beyond double range");
            throw ConstructionError("step_I3", "decorated second tract T with both copies of U_k is not supported by "
                                               "the single-tract assembly");
        }
        s.status = "complete";
    } catch (const Error& e) {
        record_failure(s, step, e);
    }
    return s;
}

ConstructionState build_periodic_tract(const ConstructionConfig& config_in) {
    ConstructionConfig config = config_in;
    config.scheme = Scheme::Periodic;
    ConstructionState s;
    s.config = config;
    std::string step = "tau_sequence";
    try {
        if (config.generators.empty()) throw ParameterError("no generator map supplied");
        const PLMap& g = config.generators.front();
        std::vector<Rational> tau = tau_sequence(g, config.tau_depth);
        for (const auto& t : tau) s.tau.push_back(to_double(t));
        Rational tau_m2 = g(tau.at(1)), tau_m1 = g(tau.at(2));
        std::vector<std::string> tau_exact;
        for (const auto& t : tau) tau_exact.push_back(to_string(t));
        s.extra["tau"] = tau_exact;
        s.extra["tau_minus2"] = to_string(tau_m2);
        s.extra["tau_minus1"] = to_string(tau_m1);
        s.extra["anchors"] = {{"R_-1", 10}, {"R_0", 14}, {"R_1", 15}};
        // φ: [4, R_1] → [0, τ_{-2}] linear; d_Y = 5|φ^{-1}x - φ^{-1}y| gives B_{-2} length 55.
        HeightFunction phi({Rational(4), Rational(15)}, {Rational(0), Rational(1)});
        s.extra["phi_on_4_R1"] = {{"slope", to_string(tau_m2 / 11)}, {"image", {"0", to_string(tau_m2)}}};
        s.extra["dY_length_B_minus2"] = 55;
        std::vector<std::string> xi;
        for (int i = 0; i <= 55; ++i) xi.push_back(to_string(Rational(tau_m2 * i / 55)));
        s.extra["Xi_minus2"] = xi;
        s.extra["expansion"] = {{"lambda", 2}, {"K", "8*gamma_0"}};
        StageLedger base;
        base.k = 0;
        base.phi = phi;
        base.status = "complete";
        s.stages.push_back(base);
        step = "step_I5";
        throw ConstructionError("step_I5", "η_{-1} needs F_0 on the bounded partial tract T_0 with F_0(ζ_0) = ∞; "
                                           "the Schwarz-Christoffel backend maps only tracts with an end at ∞");
    } catch (const Error& e) {
        record_failure(s, step, e);
    }
    return s;
}

// Certificates

namespace {

nlohmann::json ledger_json(const StageLedger& L) {
    nlohmann::json j;
    j["k"] = L.k;
    j["k_star"] = L.k_star;
    j["status"] = L.status;
    j["M"] = to_string(L.M);
    j["s"] = L.s;
    j["n"] = L.n;
    if (L.g) j["g"] = *L.g;
    if (L.N) j["N"] = *L.N;
    if (L.R) j["R"] = to_string(*L.R);
    if (L.R_bound) j["R_lower_bound"] = L.R_bound->str();
    if (L.R_minus) j["R_minus"] = L.R_minus->str();
    if (L.R_plus) j["R_plus"] = L.R_plus->str();
    if (L.chi) j["chi_over_pi"] = to_string(*L.chi);
    if (L.M_tilde) j["M_tilde"] = to_string(*L.M_tilde);
    if (L.alpha_star) j["alpha_star"] = to_string(*L.alpha_star);
    if (L.gamma) j["gamma"] = *L.gamma;
    if (!L.omega.empty()) {
        std::vector<std::string> om;
        for (const auto& w : L.omega) om.push_back(to_string(w));
        j["omega"] = om;
    }
    if (!L.theta.empty()) j["theta"] = L.theta;
    if (!L.eta.empty()) j["eta"] = L.eta;
    if (L.phi) j["phi"] = *L.phi;
    if (L.layout) {
        nlohmann::json I = nlohmann::json::array();
        for (std::size_t i = 0; i < L.layout->I_lo.size(); ++i)
            I.push_back({{"I", {to_string(L.layout->I_lo[i]), to_string(L.layout->I_hi[i])}},
                         {"I_tilde", {L.layout->It_lo[i], L.layout->It_hi[i]}}});
        j["intervals"] = I;
    }
    j["overrides"] = L.overrides;
    j["checks"] = L.checks;
    return j;
}

} // namespace

nlohmann::json certificate_json(const ConstructionState& s) {
    nlohmann::json j;
    j["scheme"] = to_string(s.config.scheme);
    j["status"] = s.status;
    if (!s.failed_step.empty()) j["failure"] = {{"step", s.failed_step}, {"message", s.failure}};
    j["config"] = s.config;
    auto& st = j["stages"] = nlohmann::json::array();
    for (const auto& L : s.stages) st.push_back(ledger_json(L));
    auto& walls = j["walls"] = nlohmann::json::array();
    for (const auto& w : s.walls) walls.push_back({{"R", to_string(w.x)}, {"chi_over_pi", to_string(w.opening)}});
    if (s.tract) j["tract"] = *s.tract;
    if (s.candidate) j["candidate_tract"] = *s.candidate;
    j["extra"] = s.extra;
    return j;
}

} // namespace cforge
