#include "cforge/conformal.hpp"
#include "cforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace cforge {

namespace {

const double kPi = std::acos(-1.0);
const cplx kI(0.0, 1.0);

} // namespace

double halfplane_density(cplx z) {
    if (!(z.real() > 0)) throw DomainError("point is not in the right half-plane");
    return 1.0 / z.real();
}

double halfplane_distance(cplx z, cplx w) {
    if (!(z.real() > 0) || !(w.real() > 0)) throw DomainError("point is not in the right half-plane");
    return 2.0 * std::asinh(std::abs(z - w) / (2.0 * std::sqrt(z.real() * w.real())));
}

HalfStripUniformizer::HalfStripUniformizer(double x0, double y0_pi, double y1_pi) : x0_(x0), y0_(y0_pi), y1_(y1_pi) {
    if (!(y1_pi > y0_pi)) throw ParameterError("half-strip needs y0 < y1");
    c_ = cplx(x0, kPi * 0.5 * (y0_pi + y1_pi));
    k_ = 1.0 / (y1_pi - y0_pi);
}

cplx HalfStripUniformizer::to_upper(cplx z) const { return kI * std::sinh(k_ * (z - c_)); }
cplx HalfStripUniformizer::to_upper_derivative(cplx z) const { return kI * k_ * std::cosh(k_ * (z - c_)); }
cplx HalfStripUniformizer::from_upper(cplx w) const { return c_ + std::asinh(-kI * w) / k_; }
bool HalfStripUniformizer::in_domain(cplx z) const {
    return z.real() > x0_ && z.imag() > kPi * y0_ && z.imag() < kPi * y1_;
}

RealMobius RealMobius::then(const RealMobius& n) const {
    return {n.a * a + n.b * c, n.a * b + n.b * d, n.c * a + n.d * c, n.c * b + n.d * d};
}

ConformalMap::ConformalMap(std::shared_ptr<const Uniformizer> u, Normalization n, AccuracyInfo info)
    : u_(std::move(u)), norm_(n), info_(std::move(info)) {
    if (!u_->in_domain(n.p)) throw DomainError("normalization point is not in the domain");
    const cplx wp = u_->to_upper(n.p);
    if (n.kind == Normalization::Kind::FixedPoint) {
        // Send w_p to i, rotate about i so that F'(p) > 0, then send i to i·p.
        const cplx t = kI * n.p;
        RealMobius t1{1.0, -wp.real(), 0.0, wp.imag()};
        double theta = -0.5 * std::arg(-kI * u_->to_upper_derivative(n.p));
        // A rotation at rounding level would move F(∞) to a huge finite point; keep ∞ ↦ ∞.
        if (std::abs(theta) < 1e-12) theta = 0.0;
        RealMobius rot{std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta)};
        RealMobius t2{t.imag(), t.real(), 0.0, 1.0};
        m_ = t1.then(rot).then(t2);
    } else {
        if (!(n.q.real() > 0)) throw DomainError("normalization value is not in the right half-plane");
        const cplx t = kI * n.q;
        const double a = t.imag() / wp.imag();
        m_ = RealMobius{a, t.real() - a * wp.real(), 0.0, 1.0};
    }
    if (info_.backend.empty()) info_.backend = u_->backend();
}

cplx ConformalMap::operator()(cplx z) const { return -kI * m_(u_->to_upper(z)); }

cplx ConformalMap::derivative(cplx z) const {
    const cplx w = u_->to_upper(z);
    return -kI * m_.derivative(w) * u_->to_upper_derivative(z);
}

cplx ConformalMap::inverse(cplx zeta) const {
    if (!(zeta.real() > 0)) throw DomainError("point is not in the right half-plane");
    return u_->from_upper(m_.inverse(kI * zeta));
}

double ConformalMap::density(cplx z) const {
    const cplx w = u_->to_upper(z);
    const cplx f = -kI * m_(w);
    return std::abs(m_.derivative(w) * u_->to_upper_derivative(z)) / f.real();
}

namespace {

// Interior sample points of a tract on a rectangular window, kept away from the boundary.
std::vector<cplx> window_samples(const RectilinearTract& t, double x_lo, double x_hi, int nx, int ny, double margin) {
    std::vector<cplx> out;
    const double y_lo = kPi * to_double(t.min_y()), y_hi = kPi * to_double(t.max_y());
    for (int i = 0; i < nx; ++i) {
        double x = x_lo + (i + 0.5) * (x_hi - x_lo) / nx;
        for (int j = 0; j < ny; ++j) {
            cplx z(x, y_lo + (j + 0.5) * (y_hi - y_lo) / ny);
            if (contains(t, z) && boundary_distance(t, z) > margin) out.push_back(z);
        }
    }
    return out;
}

} // namespace

ConformalMap map_to_halfplane(const RectilinearTract& t, Normalization n, double eps, double x_cert) {
    if (!(eps > 0)) throw ParameterError("target accuracy must be positive");
    auto report = validate_tract(t);
    if (!report.ok()) throw PreconditionError("tract does not pass validation");
    auto sc = std::make_shared<SchwarzChristoffel>(t, std::min(1e-13, eps * 1e-3));
    // Long thin passages crowd the prevertices below double resolution; the side-length
    // problem then stays unsolved and shows up here.
    if (!(sc->vertex_error() <= eps))
        throw AccuracyError("Schwarz-Christoffel parameters not resolved to the target", sc->vertex_error());
    AccuracyInfo info;
    info.backend = sc->backend();
    info.vertex_error = sc->vertex_error();
    info.iterations = sc->iterations();
    info.x_cert_lo = std::max(4.0, to_double(t.min_x()));
    info.x_cert_hi = std::max(x_cert, info.x_cert_lo + 1.0);
    double sup_derivative = 0.0, roundtrip = 0.0;
    std::optional<ConformalMap> F;
    try {
        F.emplace(sc, n, info);
        for (const cplx& z : window_samples(t, info.x_cert_lo, info.x_cert_hi, 12, 8, 1e-3)) {
            cplx w = sc->inverse(z);
            roundtrip = std::max(roundtrip, std::abs(sc->map(w) - z));
            sup_derivative = std::max(sup_derivative, std::abs(F->derivative(z)));
        }
    } catch (const ConvergenceError&) {
        throw AccuracyError("inverse map does not converge on the certification window", INFINITY);
    }
    F->accuracy().roundtrip = roundtrip;
    F->accuracy().achieved = (info.vertex_error + roundtrip) * sup_derivative;
    if (!(F->accuracy().achieved <= eps))
        throw AccuracyError("conformal map accuracy target not reached", F->accuracy().achieved);
    return *F;
}

ConformalMap half_strip_map(double x0, double y0_pi, double y1_pi, Normalization n) {
    return ConformalMap(std::make_shared<HalfStripUniformizer>(x0, y0_pi, y1_pi), n);
}

ConformalMap right_half_plane_map(Normalization n) { return ConformalMap(std::make_shared<HalfPlaneUniformizer>(), n); }

cplx half_strip_closed_form(double x0, double p, cplx z) {
    if (!(p > x0)) throw DomainError("normalization point is not in the half-strip");
    return p * std::sinh(z - x0) / std::sinh(p - x0);
}

double hyperbolic_distance(const ConformalMap& F, cplx z, cplx w) {
    if (!F.in_domain(z) || !F.in_domain(w)) throw DomainError("hyperbolic distance needs interior points");
    return halfplane_distance(F(z), F(w));
}

namespace {

double hyperbolic_derivative(const ConformalMap& F, cplx z) {
    return std::abs(F.derivative(z)) * z.real() / F(z).real();
}

} // namespace

ExpansionEstimate expansion_constant(const ConformalMap& F, const RectilinearTract& t, double x_lo, double x_hi,
                                     int nx, int ny) {
    if (!(to_double(t.min_x()) > 0)) throw PreconditionError("closure of the tract is not inside the half-plane");
    if (!(x_hi > x_lo) || nx < 1 || ny < 1) throw ParameterError("empty sampling window");
    x_lo = std::max(x_lo, to_double(t.min_x()));
    ExpansionEstimate est;
    est.sampled_min = std::numeric_limits<double>::infinity();
    for (const cplx& z : window_samples(t, x_lo, x_hi, nx, ny, 0.0)) {
        double v = hyperbolic_derivative(F, z);
        ++est.samples;
        if (v < est.sampled_min) {
            est.sampled_min = v;
            est.argmin = z;
        }
    }
    if (est.samples == 0) throw ParameterError("no sample of the window lies in the tract");

    // Certify a slightly smaller target on every cell of a quadtree. Deep inside, log ρ_T and
    // log ρ_H vary by at most 3 per unit of T-distance and ρ_T <= 2/dist; near ∂T the sandwich
    // ρ_T >= 1/(2 dist) already forces ‖DF‖_H >= Re z / (2 dist).
    const double target = est.sampled_min * std::exp(-0.3);
    double lambda = target;
    const double y_lo = kPi * to_double(t.min_y()), y_hi = kPi * to_double(t.max_y());
    std::function<void(cplx, double, double, int)> cell = [&](cplx c, double hx, double hy, int depth) {
        const double r = std::hypot(hx, hy);
        const bool inside = contains(t, c);
        const double d0 = inside ? boundary_distance(t, c) : -boundary_distance(t, c);
        if (d0 <= -r) return;
        const double near = (c.real() - hx) / (2.0 * (std::max(d0, 0.0) + r));
        if (near >= target) return;
        if (d0 >= 21.0 * r) {
            double v = hyperbolic_derivative(F, c) * std::exp(-6.0 * r / (d0 - r));
            if (v >= target) return;
            if (depth >= 12) {
                lambda = std::min(lambda, v);
                return;
            }
        } else if (depth >= 12) {
            lambda = std::min(lambda, near);
            return;
        }
        for (int sx : {-1, 1})
            for (int sy : {-1, 1}) cell(c + cplx(sx * hx / 2, sy * hy / 2), hx / 2, hy / 2, depth + 1);
    };
    const double hx = (x_hi - x_lo) / (2.0 * nx), hy = (y_hi - y_lo) / (2.0 * ny);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            cell(cplx(x_lo + (2 * i + 1) * hx, y_lo + (2 * j + 1) * hy), hx, hy, 0);
    est.lambda = lambda;
    est.deflation = lambda / est.sampled_min;
    if (!(est.lambda > 1.0)) throw NotDisjointTypeError("expansion constant does not exceed 1");
    return est;
}

ExpansionEstimate expansion_constant_halfplane(const ConformalMap& F, double x_lo, double x_hi, int nx, int ny) {
    if (!(x_lo > 0) || !(x_hi > x_lo) || nx < 1 || ny < 1) throw ParameterError("empty sampling window");
    ExpansionEstimate est;
    est.sampled_min = std::numeric_limits<double>::infinity();
    const double hx = (x_hi - x_lo) / (2.0 * nx), hy = x_hi / ny;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            cplx z(x_lo + (2 * i + 1) * hx, -x_hi + (2 * j + 1) * hy);
            double v = hyperbolic_derivative(F, z);
            ++est.samples;
            if (v < est.sampled_min) {
                est.sampled_min = v;
                est.argmin = z;
            }
        }
    // Every point of H is within H-distance 2·r/x_lo of a sample; log ‖DF‖_H varies by at most 3 per unit.
    est.deflation = std::exp(-6.0 * std::hypot(hx, hy) / x_lo);
    est.lambda = est.sampled_min * est.deflation;
    if (!(est.lambda > 1.0)) throw NotDisjointTypeError("expansion constant does not exceed 1");
    return est;
}

DecorationReport decoration_diameters(const ConformalMap& F, const std::vector<double>& radii, double K,
                                      double rho_min, double rho_max, int samples) {
    if (samples < 2) throw ParameterError("need at least two samples per arc");
    DecorationReport rep;
    for (double rho : radii) {
        if (!(rho > 0) || rho < rho_min || rho > rho_max)
            throw AccuracyError("radius outside the certified window", rho);
        std::vector<cplx> pts;
        for (int k = 0; k < samples; ++k)
            pts.push_back(F.inverse(std::polar(rho, -kPi / 2 + kPi * (k + 0.5) / samples)));
        double diam = 0.0;
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = a + 1; b < pts.size(); ++b) diam = std::max(diam, halfplane_distance(pts[a], pts[b]));
        rep.radii.push_back(rho);
        rep.diameters.push_back(diam);
        if (diam > K) rep.bounded_by_K = false;
    }
    return rep;
}

} // namespace cforge
