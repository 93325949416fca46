#include "cforge/tract_geometry.hpp"

#include "cforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace cforge {

namespace {

constexpr double kPi = 3.14159265358979323846;

// A boundary piece: horizontal (c = y) or vertical (c = x) over [lo, hi]; rays have hi = +∞.
struct Seg {
    bool horizontal;
    Rational c, lo, hi;
    bool infinite = false;
};

bool ranges_meet(const Seg& s, const Seg& t, bool strictly) {
    const Rational& lo = std::max(s.lo, t.lo);
    if (s.infinite && t.infinite) return true;
    const Rational& hi = s.infinite ? t.hi : (t.infinite ? s.hi : std::min(s.hi, t.hi));
    return strictly ? lo < hi : lo <= hi;
}

bool within(const Rational& v, const Seg& s) { return s.lo <= v && (s.infinite || v <= s.hi); }

bool segments_meet(const Seg& s, const Seg& t) {
    if (s.horizontal == t.horizontal) return s.c == t.c && ranges_meet(s, t, false);
    const Seg& h = s.horizontal ? s : t;
    const Seg& v = s.horizontal ? t : s;
    return within(v.c, h) && within(h.c, v);
}

std::vector<YInterval> intersect(const std::vector<YInterval>& a, const std::vector<YInterval>& b) {
    std::vector<YInterval> out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        Rational lo = std::max(a[i].lo, b[j].lo);
        Rational hi = std::min(a[i].hi, b[j].hi);
        if (lo < hi) out.push_back({lo, hi});
        if (a[i].hi < b[j].hi) ++i; else ++j;
    }
    return out;
}

std::string point_text(const TractPoint& p) {
    if (p.infinite) return "∞";
    return to_string(p.x) + " + " + to_string(p.y) + "πi";
}

} // namespace

std::complex<double> TractPoint::to_complex() const {
    if (infinite) return {INFINITY, 0.0};
    return {to_double(x), to_double(y) * kPi};
}

std::string to_string(PieceKind kind) {
    switch (kind) {
        case PieceKind::Central: return "central";
        case PieceKind::Iris: return "iris";
        case PieceKind::Channel: return "channel";
        case PieceKind::Quadrilateral: return "quadrilateral";
        case PieceKind::CrossCut: return "crosscut";
    }
    return "unknown";
}

RectilinearTract::RectilinearTract(std::vector<QPoint> chain, std::vector<TractPiece> pieces)
    : chain_(std::move(chain)), pieces_(std::move(pieces)) {
    if (chain_.size() < 2) throw GeometryError("a tract boundary needs at least two vertices");
    std::vector<Seg> segs;
    segs.push_back({true, chain_.front().y, chain_.front().x, 0, true});
    for (std::size_t k = 0; k + 1 < chain_.size(); ++k) {
        const QPoint& p = chain_[k];
        const QPoint& q = chain_[k + 1];
        if (p == q) throw GeometryError("zero-length boundary edge at vertex " + std::to_string(k));
        if (p.y == q.y) {
            segs.push_back({true, p.y, std::min(p.x, q.x), std::max(p.x, q.x)});
            hedges_.push_back({p.y, std::min(p.x, q.x), std::max(p.x, q.x)});
        } else if (p.x == q.x) {
            segs.push_back({false, p.x, std::min(p.y, q.y), std::max(p.y, q.y)});
            vedges_.push_back({p.x, std::min(p.y, q.y), std::max(p.y, q.y)});
        } else {
            throw GeometryError("boundary edge " + std::to_string(k) + " is not axis-aligned");
        }
    }
    segs.push_back({true, chain_.back().y, chain_.back().x, 0, true});
    hedges_.push_back({chain_.front().y, chain_.front().x, 0, true});
    hedges_.push_back({chain_.back().y, chain_.back().x, 0, true});

    for (std::size_t a = 0; a < segs.size(); ++a)
        for (std::size_t b = a + 1; b < segs.size(); ++b) {
            bool adjacent = b == a + 1;
            bool bad = adjacent ? (segs[a].horizontal == segs[b].horizontal && segs[a].c == segs[b].c &&
                                   ranges_meet(segs[a], segs[b], true))
                                : segments_meet(segs[a], segs[b]);
            if (bad)
                throw GeometryError("self-intersecting boundary: pieces " + std::to_string(a) + " and " +
                                    std::to_string(b) + " meet");
        }

    for (const auto& p : chain_) xs_.push_back(p.x);
    std::sort(xs_.begin(), xs_.end());
    xs_.erase(std::unique(xs_.begin(), xs_.end()), xs_.end());
    min_x_ = xs_.front();
    max_x_ = xs_.back();
    min_y_ = max_y_ = chain_.front().y;
    for (const auto& p : chain_) {
        min_y_ = std::min(min_y_, p.y);
        max_y_ = std::max(max_y_, p.y);
    }
}

bool RectilinearTract::is_vertex_abscissa(const Rational& x) const {
    return std::binary_search(xs_.begin(), xs_.end(), x);
}

std::vector<YInterval> RectilinearTract::section_strictly_between(const Rational& x, bool left) const {
    std::vector<Rational> ys;
    for (const auto& h : hedges_) {
        bool spans = left ? (h.x0 < x && (h.ray || x <= h.x1)) : (h.x0 <= x && (h.ray || x < h.x1));
        if (spans) ys.push_back(h.y);
    }
    std::sort(ys.begin(), ys.end());
    if (ys.size() % 2 != 0) throw GeometryError("inconsistent vertical section at x = " + to_string(x));
    std::vector<YInterval> out;
    for (std::size_t k = 0; k < ys.size(); k += 2) out.push_back({ys[k], ys[k + 1]});
    return out;
}

std::vector<YInterval> RectilinearTract::section(const Rational& x) const {
    if (is_vertex_abscissa(x)) return intersect(section_strictly_between(x, true), section_strictly_between(x, false));
    return section_strictly_between(x, true);
}

bool RectilinearTract::contains(const TractPoint& p) const {
    if (p.infinite) return true;
    for (const auto& iv : section(p.x))
        if (iv.contains(p.y)) return true;
    return false;
}

bool contains(const RectilinearTract& t, std::complex<double> z) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return t.contains(TractPoint::at(from_double(z.real()), from_double(z.imag() / kPi)));
}

double boundary_distance(const RectilinearTract& t, std::complex<double> z) {
    const auto& c = t.chain();
    auto seg = [&](std::complex<double> a, std::complex<double> b) {
        std::complex<double> d = b - a;
        double s = std::clamp(std::real((z - a) * std::conj(d)) / std::norm(d), 0.0, 1.0);
        return std::abs(z - (a + s * d));
    };
    auto at = [](const QPoint& p) { return std::complex<double>(to_double(p.x), to_double(p.y) * kPi); };
    auto ray = [&](std::complex<double> a) {
        double dx = std::max(0.0, a.real() - z.real());
        return std::hypot(dx, z.imag() - a.imag());
    };
    double best = std::min(ray(at(c.front())), ray(at(c.back())));
    for (std::size_t k = 0; k + 1 < c.size(); ++k) best = std::min(best, seg(at(c[k]), at(c[k + 1])));
    return best;
}

RectilinearTract half_strip(const Rational& x0, const Rational& half_height) {
    if (half_height <= 0) throw ParameterError("strip half-height must be positive");
    return RectilinearTract({{x0, -half_height}, {x0, half_height}});
}

bool ValidationReport::ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult& ValidationReport::check(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw ParameterError("no check named " + name);
}

RectilinearTract translate_vertically(const RectilinearTract& t, long m) {
    Rational shift(2 * m);
    std::vector<QPoint> chain = t.chain();
    for (auto& p : chain) p.y += shift;
    std::vector<TractPiece> pieces = t.pieces();
    for (auto& p : pieces) {
        p.y0 += shift;
        p.y1 += shift;
    }
    return RectilinearTract(std::move(chain), std::move(pieces));
}

ValidationReport validate_tract(const RectilinearTract& t) {
    ValidationReport r;
    r.checks.push_back({"boundary_simple", true, std::nullopt, "axis-aligned simple chain"});

    {
        CheckResult c{"strip_height", true, std::nullopt, ""};
        Rational h = t.max_y() - t.min_y();
        c.detail = "height " + to_string(h) + "π";
        if (h > 2) {
            c.passed = false;
            c.witness = TractPoint::at(t.min_x(), t.max_y());
        }
        r.checks.push_back(c);
    }

    {
        CheckResult c{"translate_disjoint", true, std::nullopt, ""};
        Rational h = t.max_y() - t.min_y();
        long mmax = floor_q(h / 2).get_num().get_si() + 2;
        std::vector<Rational> mids;
        const auto& xs = t.abscissae();
        for (std::size_t k = 0; k + 1 < xs.size(); ++k) mids.push_back((xs[k] + xs[k + 1]) / 2);
        mids.push_back(t.max_vertex_x() + Rational(1, 2));
        for (const auto& mid : mids) {
            auto s = t.section(mid);
            for (long m = 1; m <= mmax && c.passed; ++m)
                for (const auto& I : s)
                    for (const auto& J : s) {
                        Rational lo = std::max(I.lo, Rational(J.lo + 2 * m));
                        Rational hi = std::min(I.hi, Rational(J.hi + 2 * m));
                        if (lo < hi && c.passed) {
                            c.passed = false;
                            c.witness = TractPoint::at(mid, (lo + hi) / 2);
                            c.detail = "overlaps its translate by " + std::to_string(2 * m) + "πi";
                        }
                    }
            if (!c.passed) break;
        }
        r.checks.push_back(c);
    }

    {
        CheckResult c{"iris_openings", true, std::nullopt, ""};
        for (const auto& p : t.pieces())
            if (p.kind == PieceKind::Iris && (p.opening <= 0 || p.opening > 1)) {
                c.passed = false;
                c.witness = TractPoint::at((p.x0 + p.x1) / 2, (p.y0 + p.y1) / 2);
                c.detail = "iris " + std::to_string(p.j) + " has opening " + to_string(p.opening) + "π";
                break;
            }
        r.checks.push_back(c);
    }

    {
        CheckResult c{"channel_windows", true, std::nullopt, ""};
        for (const auto& p : t.pieces()) {
            if (p.kind != PieceKind::Quadrilateral) continue;
            auto ch = std::find_if(t.pieces().begin(), t.pieces().end(), [&](const TractPiece& q) {
                return q.kind == PieceKind::Channel && q.j == p.j;
            });
            if (ch == t.pieces().end() || p.x0 < ch->x0 || p.x1 > ch->x1) {
                c.passed = false;
                c.witness = TractPoint::at((p.x0 + p.x1) / 2, (p.y0 + p.y1) / 2);
                c.detail = "quadrilateral " + std::to_string(p.j) + "," + std::to_string(p.i) +
                           " leaves its channel window";
                break;
            }
        }
        r.checks.push_back(c);
    }

    {
        CheckResult c{"pieces_inside", true, std::nullopt, ""};
        for (const auto& p : t.pieces()) {
            if (p.kind == PieceKind::Channel) continue;  // a channel is a window of real parts
            TractPoint centre = TractPoint::at((p.x0 + p.x1) / 2, (p.y0 + p.y1) / 2);
            if (!t.contains(centre)) {
                c.passed = false;
                c.witness = centre;
                c.detail = to_string(p.kind) + " piece " + std::to_string(p.j) + " is not inside the tract";
                break;
            }
        }
        r.checks.push_back(c);
    }
    return r;
}

bool on_segment(const TractPoint& p, const TractPoint& z) {
    if (p.infinite || z.infinite) return false;
    Rational d = p.y - z.y;
    return p.x == z.x && abs(d) <= 2;
}

CrossCutSet cross_cuts(const RectilinearTract& t, const TractPoint& z) {
    CrossCutSet out;
    if (z.infinite) return out;
    out.x = z.x;
    if (t.is_vertex_abscissa(out.x)) {
        out.x += kDegeneracyShift;
        out.perturbed = true;
    }
    const Rational bottom = z.y - 2, top = z.y + 2;
    for (const auto& iv : t.section(out.x)) {
        Rational lo = std::max(iv.lo, bottom), hi = std::min(iv.hi, top);
        if (lo < hi) out.cuts.push_back({out.x, lo, hi, lo != iv.lo || hi != iv.hi});
    }
    return out;
}

SeparationResult separation(const RectilinearTract& t, const TractPoint& a, const TractPoint& b,
                            const TractPoint& z) {
    if (!t.contains(a)) throw DomainError("a = " + point_text(a) + " is not in the tract");
    if (!t.contains(b)) throw DomainError("b = " + point_text(b) + " is not in the tract");
    if (!t.contains(z)) throw DomainError("z = " + point_text(z) + " is not in the tract");
    SeparationResult res;
    if (z.infinite) return res;
    if (on_segment(a, z) || on_segment(b, z)) throw PreconditionError("a and b must not lie on I_z");
    TractPoint zz = z;
    if (t.is_vertex_abscissa(zz.x)) {
        zz.x += kDegeneracyShift;
        res.perturbed = true;
        if (!t.contains(zz)) throw DomainError("perturbed z left the tract");
        if (on_segment(a, zz) || on_segment(b, zz)) throw PreconditionError("a or b lies on the perturbed I_z");
    }
    if (a == b) return res;
    const Rational c = zz.x;

    std::vector<Rational> xs = t.abscissae();
    xs.push_back(c);
    Rational far = std::max(t.max_vertex_x(), c);
    if (!a.infinite) far = std::max(far, a.x);
    if (!b.infinite) far = std::max(far, b.x);
    xs.push_back(far + 1);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    struct Cell {
        std::size_t slab;
        YInterval iv;
    };
    std::vector<Cell> cells;
    std::vector<std::size_t> first(xs.size(), 0);
    for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
        first[s] = cells.size();
        for (const auto& iv : t.section((xs[s] + xs[s + 1]) / 2)) cells.push_back({s, iv});
    }
    first[xs.size() - 1] = cells.size();

    auto cell_in_slab = [&](std::size_t s, const Rational& y) -> std::optional<std::size_t> {
        for (std::size_t k = first[s]; k < first[s + 1]; ++k)
            if (cells[k].iv.contains(y)) return k;
        return std::nullopt;
    };
    auto locate = [&](const TractPoint& p) -> std::size_t {
        if (p.infinite) {
            std::size_t s = xs.size() - 2;
            if (first[s + 1] - first[s] != 1) throw GeometryError("tract end is not a single channel");
            return first[s];
        }
        auto it = std::upper_bound(xs.begin(), xs.end(), p.x);
        std::size_t k = std::size_t(it - xs.begin());
        if (k == 0 || k == xs.size()) throw DomainError("point outside the slab decomposition");
        std::size_t s = k - 1;  // xs[s] <= p.x < xs[s+1]
        if (p.x == xs[s] && s > 0)
            if (auto cell = cell_in_slab(s - 1, p.y)) return *cell;
        if (auto cell = cell_in_slab(s, p.y)) return *cell;
        throw DomainError("point " + point_text(p) + " is not in any cell");
    };

    const std::size_t start = locate(a), goal = locate(b);
    std::vector<std::size_t> parent(cells.size(), SIZE_MAX);
    std::queue<std::size_t> queue;
    parent[start] = start;
    queue.push(start);
    auto overlap = [&](std::size_t p, std::size_t q) -> std::optional<Rational> {
        Rational lo = std::max(cells[p].iv.lo, cells[q].iv.lo), hi = std::min(cells[p].iv.hi, cells[q].iv.hi);
        if (lo < hi) return (lo + hi) / 2;
        return std::nullopt;
    };
    while (!queue.empty() && parent[goal] == SIZE_MAX) {
        std::size_t p = queue.front();
        queue.pop();
        std::size_t s = cells[p].slab;
        auto visit = [&](std::size_t ns) {
            for (std::size_t q = first[ns]; q < first[ns + 1]; ++q)
                if (parent[q] == SIZE_MAX && overlap(p, q)) {
                    parent[q] = p;
                    queue.push(q);
                }
        };
        if (s > 0) visit(s - 1);
        if (s + 2 < xs.size()) visit(s + 1);
    }
    if (parent[goal] == SIZE_MAX) throw GeometryError("tract cells are not connected");

    const auto comps = t.section(c);
    std::vector<unsigned> crossings(comps.size(), 0);
    const Rational bottom = zz.y - 2, top = zz.y + 2;
    for (std::size_t q = goal; q != start; q = parent[q]) {
        std::size_t p = parent[q];
        std::size_t boundary = std::max(cells[p].slab, cells[q].slab);
        if (xs[boundary] != c) continue;
        Rational y = *overlap(p, q);
        for (std::size_t k = 0; k < comps.size(); ++k) {
            if (!comps[k].contains(y)) continue;
            bool inside = bottom <= comps[k].lo && comps[k].hi <= top;
            bool apart = comps[k].hi <= bottom || top <= comps[k].lo;
            if (!inside && !apart) throw GeometryError("a vertical section of the tract is longer than 4π");
            if (inside) ++crossings[k];
        }
    }
    for (unsigned n : crossings) res.value += n % 2;
    return res;
}

unsigned separation_number(const RectilinearTract& t, const TractPoint& a, const TractPoint& b,
                           const TractPoint& z) {
    return separation(t, a, b, z).value;
}

namespace {

// Does moving p in a straight line to q meet I_z?
bool path_meets_segment(const TractPoint& p, const TractPoint& q, const TractPoint& z) {
    if (p.infinite || z.infinite) return false;
    if (p.x == q.x) {
        if (p.x != z.x) return false;
        Rational lo = std::min(p.y, q.y), hi = std::max(p.y, q.y);
        return lo <= z.y + 2 && z.y - 2 <= hi;
    }
    Rational lo = std::min(p.x, q.x), hi = std::max(p.x, q.x);
    if (z.x < lo || z.x > hi) return false;
    Rational s = (z.x - p.x) / (q.x - p.x);
    Rational y = p.y + s * (q.y - p.y);
    Rational d = y - z.y;
    return abs(d) <= 2;
}

// Does I_{z + s(z' - z)}, s in [0,1], meet p?
bool sweep_meets_point(const TractPoint& z, const TractPoint& zp, const TractPoint& p) {
    if (p.infinite || z.infinite) return false;
    if (z.x == zp.x) {
        if (p.x != z.x) return false;
        Rational lo = std::min(z.y, zp.y) - 2, hi = std::max(z.y, zp.y) + 2;
        return lo <= p.y && p.y <= hi;
    }
    Rational lo = std::min(z.x, zp.x), hi = std::max(z.x, zp.x);
    if (p.x < lo || p.x > hi) return false;
    Rational s = (p.x - z.x) / (zp.x - z.x);
    Rational y = z.y + s * (zp.y - z.y);
    Rational d = p.y - y;
    return abs(d) <= 2;
}

} // namespace

ParityReport parity_stability_check(const RectilinearTract& t, const std::vector<Triple>& triples,
                                    const Rational& delta) {
    ParityReport rep;
    rep.triples = triples.size();
    const int dirs[8][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
    for (const auto& tr : triples) {
        SeparationResult base;
        try {
            base = separation(t, tr.a, tr.b, tr.z);
        } catch (const Error&) {
            ++rep.skipped;
            continue;
        }
        for (int which = 0; which < 3; ++which) {
            const TractPoint& p = which == 0 ? tr.a : (which == 1 ? tr.b : tr.z);
            if (p.infinite) continue;
            for (const auto& d : dirs) {
                TractPoint q = TractPoint::at(p.x + delta * d[0], p.y + delta * d[1]);
                Triple nt = tr;
                (which == 0 ? nt.a : (which == 1 ? nt.b : nt.z)) = q;
                TractPoint mid = TractPoint::at((p.x + q.x) / 2, (p.y + q.y) / 2);
                bool crosses = which == 2 ? (sweep_meets_point(tr.z, q, tr.a) || sweep_meets_point(tr.z, q, tr.b))
                                          : path_meets_segment(p, q, tr.z);
                if (crosses || !t.contains(q) || !t.contains(mid)) {
                    ++rep.skipped;
                    continue;
                }
                SeparationResult after;
                try {
                    after = separation(t, nt.a, nt.b, nt.z);
                } catch (const Error&) {
                    ++rep.skipped;
                    continue;
                }
                ++rep.comparisons;
                if (after.value % 2 != base.value % 2) rep.violations.push_back({tr, nt, base.value, after.value});
            }
        }
    }
    return rep;
}

SpanWitness span_separation_witness(const std::vector<TractPoint>& A,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& X,
                                    const Rational& slack, const Rational& step) {
    std::set<std::size_t> firsts, seconds;
    for (const auto& [f, s] : X) {
        if (f >= A.size() || s >= A.size()) throw PreconditionError("pair index outside the point set A");
        firsts.insert(f);
        seconds.insert(s);
    }
    if (firsts.size() != A.size() || seconds.size() != A.size())
        throw PreconditionError("both projections of X must equal A");

    SpanWitness out;
    for (std::size_t k = 0; k < X.size(); ++k) {
        const TractPoint& z = A[X[k].first];
        const TractPoint& w = A[X[k].second];
        bool hit = (z.infinite && w.infinite);
        if (!z.infinite && !w.infinite) {
            Rational dx = w.x - z.x, dy = w.y - z.y;
            hit = abs(dx) <= slack && abs(dy) <= 2;
        }
        if (hit) {
            out.found = true;
            out.index = k;
            out.z = z;
            out.w = w;
            return out;
        }
    }

    auto near = [&](const TractPoint& p, const TractPoint& q) {
        if (p.infinite || q.infinite) return p.infinite && q.infinite;
        Rational dx = p.x - q.x, dy = p.y - q.y;
        return abs(dx) <= step && abs(dy) <= step;
    };
    std::vector<std::size_t> root(X.size());
    std::iota(root.begin(), root.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
        return root[v] == v ? v : root[v] = find(root[v]);
    };
    for (std::size_t p = 0; p < X.size(); ++p)
        for (std::size_t q = p + 1; q < X.size(); ++q)
            if (near(A[X[p].first], A[X[q].first]) && near(A[X[p].second], A[X[q].second])) root[find(p)] = find(q);
    std::set<std::size_t> roots;
    for (std::size_t p = 0; p < X.size(); ++p) roots.insert(find(p));
    out.components = roots.size();
    return out;
}

void write_svg(std::ostream& out, const RectilinearTract& t, const SvgOptions& options) {
    const Rational span = t.max_vertex_x() - t.min_x();
    const Rational x_far = options.x_far ? *options.x_far : t.max_vertex_x() + span / 4 + 2;
    const double margin = 1.0;
    const double x_lo = to_double(t.min_x()) - margin;
    const double x_hi = to_double(x_far) + margin;
    double y_lo = to_double(t.min_y()) * kPi - margin;
    double y_hi = to_double(t.max_y() + (options.show_translate ? 2 : 0)) * kPi + margin;
    for (const auto& z : options.segments) {
        if (z.infinite) continue;
        y_lo = std::min(y_lo, (to_double(z.y) - 2) * kPi - margin);
        y_hi = std::max(y_hi, (to_double(z.y) + 2) * kPi + margin);
    }
    const double s = options.scale;
    auto px = [&](double x) { return (x - x_lo) * s; };
    auto py = [&](double y) { return (y_hi - y) * s; };

    std::ostringstream body;
    body << std::fixed << std::setprecision(3);
    auto polygon = [&](const RectilinearTract& tr, const char* fill, const char* stroke) {
        body << "<polygon fill=\"" << fill << "\" stroke=\"" << stroke << "\" stroke-width=\"1\" points=\"";
        body << px(to_double(x_far)) << ',' << py(to_double(tr.chain().front().y) * kPi);
        for (const auto& p : tr.chain()) body << ' ' << px(to_double(p.x)) << ',' << py(to_double(p.y) * kPi);
        body << ' ' << px(to_double(x_far)) << ',' << py(to_double(tr.chain().back().y) * kPi) << "\"/>\n";
    };
    if (options.show_translate) polygon(translate_vertically(t, 1), "#e0e0e0", "#c0c0c0");
    polygon(t, "#cfe0f3", "#1f4e79");
    for (const auto& p : t.pieces()) {
        double x0 = to_double(p.x0), x1 = to_double(p.x1), y0 = to_double(p.y0) * kPi, y1 = to_double(p.y1) * kPi;
        if (p.kind == PieceKind::CrossCut || x0 == x1) {
            body << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(y1)
                 << "\" stroke=\"#7f3f00\" stroke-width=\"1.5\"/>\n";
        } else {
            body << "<rect x=\"" << px(x0) << "\" y=\"" << py(y1) << "\" width=\"" << (x1 - x0) * s
                 << "\" height=\"" << (y1 - y0) * s << "\" fill=\"none\" stroke=\"#555555\" stroke-dasharray=\"4 2\"/>\n";
        }
        body << "<text x=\"" << px(x0) + 2 << "\" y=\"" << py(y1) - 2 << "\" font-size=\"10\">" << to_string(p.kind)
             << ' ' << p.j;
        if (p.kind == PieceKind::Quadrilateral || p.kind == PieceKind::CrossCut) body << ',' << p.i;
        body << "</text>\n";
    }
    for (const auto& z : options.segments) {
        if (z.infinite) continue;
        double x = to_double(z.x), y = to_double(z.y) * kPi;
        body << "<line x1=\"" << px(x) << "\" y1=\"" << py(y - 2 * kPi) << "\" x2=\"" << px(x) << "\" y2=\""
             << py(y + 2 * kPi) << "\" stroke=\"#c00000\" stroke-width=\"1.5\"/>\n";
        body << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\"#c00000\"/>\n";
    }
    out << std::fixed << std::setprecision(3);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << (x_hi - x_lo) * s << "\" height=\""
        << (y_hi - y_lo) * s << "\">\n"
        << body.str() << "</svg>\n";
}

void to_json(nlohmann::json& j, const RectilinearTract& t) {
    j = nlohmann::json::object();
    j["y_units"] = "pi";
    auto& chain = j["chain"] = nlohmann::json::array();
    for (const auto& p : t.chain()) chain.push_back({{"x", to_string(p.x)}, {"y", to_string(p.y)}});
    auto& pieces = j["pieces"] = nlohmann::json::array();
    for (const auto& p : t.pieces())
        pieces.push_back({{"kind", to_string(p.kind)}, {"j", p.j}, {"i", p.i}, {"x0", to_string(p.x0)},
                          {"x1", to_string(p.x1)}, {"y0", to_string(p.y0)}, {"y1", to_string(p.y1)},
                          {"opening", to_string(p.opening)}});
}

RectilinearTract tract_from_json(const nlohmann::json& j) {
    try {
        if (j.value("y_units", "pi") != "pi") throw InputError("tract y_units must be \"pi\"");
        std::vector<QPoint> chain;
        for (const auto& p : j.at("chain"))
            chain.push_back({parse_rational(p.at("x").get<std::string>()), parse_rational(p.at("y").get<std::string>())});
        std::vector<TractPiece> pieces;
        static const std::map<std::string, PieceKind> kinds{{"central", PieceKind::Central},
                                                            {"iris", PieceKind::Iris},
                                                            {"channel", PieceKind::Channel},
                                                            {"quadrilateral", PieceKind::Quadrilateral},
                                                            {"crosscut", PieceKind::CrossCut}};
        if (j.contains("pieces"))
            for (const auto& p : j.at("pieces")) {
                TractPiece piece;
                auto k = kinds.find(p.at("kind").get<std::string>());
                if (k == kinds.end()) throw InputError("unknown piece kind " + p.at("kind").get<std::string>());
                piece.kind = k->second;
                piece.j = p.value("j", 0);
                piece.i = p.value("i", 0);
                piece.x0 = parse_rational(p.at("x0").get<std::string>());
                piece.x1 = parse_rational(p.at("x1").get<std::string>());
                piece.y0 = parse_rational(p.at("y0").get<std::string>());
                piece.y1 = parse_rational(p.at("y1").get<std::string>());
                piece.opening = parse_rational(p.value("opening", std::string("0")));
                pieces.push_back(piece);
            }
        return RectilinearTract(std::move(chain), std::move(pieces));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed tract JSON: ") + e.what());
    }
}

} // namespace cforge
