#include "cforge/conformal.hpp"
#include "cforge/error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cforge {

namespace {

const double kPi = std::acos(-1.0);

double point_segment_distance(cplx p, cplx a, cplx b) {
    cplx d = b - a;
    double len2 = std::norm(d);
    if (len2 == 0) return std::abs(p - a);
    double t = std::clamp(((p - a) * std::conj(d)).real() / len2, 0.0, 1.0);
    return std::abs(p - (a + t * d));
}

} // namespace

PlanarDomain PlanarDomain::polygon(std::vector<cplx> vertices) {
    if (vertices.size() < 3) throw GeometryError("a polygon needs at least three vertices");
    PlanarDomain d;
    d.poly_ = std::move(vertices);
    return d;
}

PlanarDomain PlanarDomain::disk(cplx centre, double radius) {
    if (!(radius > 0)) throw ParameterError("disk radius must be positive");
    PlanarDomain d;
    d.disk_ = true;
    d.centre_ = centre;
    d.radius_ = radius;
    return d;
}

PlanarDomain PlanarDomain::truncated_tract(const RectilinearTract& t, double x_cut) {
    if (!(x_cut > to_double(t.max_vertex_x()))) throw ParameterError("cut must lie right of every vertex");
    std::vector<cplx> poly;
    const auto& chain = t.chain();
    poly.emplace_back(x_cut, kPi * to_double(chain.front().y));
    for (const auto& q : chain) poly.emplace_back(to_double(q.x), kPi * to_double(q.y));
    poly.emplace_back(x_cut, kPi * to_double(chain.back().y));
    return polygon(std::move(poly));
}

bool PlanarDomain::inside(cplx z) const {
    if (disk_) return std::abs(z - centre_) < radius_;
    bool in = false;
    for (std::size_t i = 0, j = poly_.size() - 1; i < poly_.size(); j = i++) {
        const cplx a = poly_[i], b = poly_[j];
        if ((a.imag() > z.imag()) != (b.imag() > z.imag())) {
            double x = a.real() + (z.imag() - a.imag()) * (b.real() - a.real()) / (b.imag() - a.imag());
            if (z.real() < x) in = !in;
        }
    }
    return in && boundary_distance(z) > 0;
}

double PlanarDomain::boundary_distance(cplx z) const {
    if (disk_) return std::abs(radius_ - std::abs(z - centre_));
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poly_.size(); ++i)
        d = std::min(d, point_segment_distance(z, poly_[i], poly_[(i + 1) % poly_.size()]));
    return d;
}

bool PlanarDomain::on_boundary(cplx z, double tol) const { return boundary_distance(z) <= tol; }

void PlanarDomain::bounding_box(double& x0, double& x1, double& y0, double& y1) const {
    if (disk_) {
        x0 = centre_.real() - radius_;
        x1 = centre_.real() + radius_;
        y0 = centre_.imag() - radius_;
        y1 = centre_.imag() + radius_;
        return;
    }
    x0 = y0 = std::numeric_limits<double>::infinity();
    x1 = y1 = -x0;
    for (const cplx& p : poly_) {
        x0 = std::min(x0, p.real());
        x1 = std::max(x1, p.real());
        y0 = std::min(y0, p.imag());
        y1 = std::max(y1, p.imag());
    }
}

bool BoundaryArc::contains(const PlanarDomain& d, cplx z, double tol) const {
    for (const auto& s : segments)
        if (point_segment_distance(z, s.first, s.second) <= tol) return true;
    if (angles && d.is_disk()) {
        if (std::abs(std::abs(z - d.centre()) - d.radius()) > tol) return false;
        double t = std::arg(z - d.centre());
        double t0 = angles->first, t1 = angles->second;
        double rel = std::fmod(t - t0, 2 * kPi);
        if (rel < 0) rel += 2 * kPi;
        double slack = tol / d.radius();
        return rel <= (t1 - t0) + slack || rel >= 2 * kPi - slack;
    }
    return false;
}

namespace {

void check_arc(const PlanarDomain& d, const BoundaryArc& arc, double scale) {
    const double tol = 1e-9 * scale;
    for (const auto& s : arc.segments)
        for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
            if (!d.on_boundary(s.first + t * (s.second - s.first), tol))
                throw GeometryError("arc does not lie on the domain boundary");
    if (arc.angles) {
        if (!d.is_disk()) throw GeometryError("angular arcs are only defined on disks");
        if (!(arc.angles->second >= arc.angles->first)) throw GeometryError("angular arc has negative length");
    }
    if (arc.segments.empty() && !arc.angles) throw GeometryError("empty boundary arc");
}

double solve_grid(const PlanarDomain& d, const BoundaryArc& arc, cplx p, double h, double scale,
                  std::size_t& unknowns) {
    double x0, x1, y0, y1;
    d.bounding_box(x0, x1, y0, y1);
    // Grid anchored at p so that the answer is a nodal value.
    const long i0 = static_cast<long>(std::floor((x0 - p.real()) / h)) - 1;
    const long i1 = static_cast<long>(std::ceil((x1 - p.real()) / h)) + 1;
    const long j0 = static_cast<long>(std::floor((y0 - p.imag()) / h)) - 1;
    const long j1 = static_cast<long>(std::ceil((y1 - p.imag()) / h)) + 1;
    const long ni = i1 - i0 + 1, nj = j1 - j0 + 1;
    auto node = [&](long i, long j) { return cplx(p.real() + i * h, p.imag() + j * h); };
    std::vector<long> index(static_cast<std::size_t>(ni * nj), -1);
    auto at = [&](long i, long j) -> long& { return index[static_cast<std::size_t>((i - i0) * nj + (j - j0))]; };
    long count = 0;
    for (long i = i0; i <= i1; ++i)
        for (long j = j0; j <= j1; ++j)
            if (d.inside(node(i, j))) at(i, j) = count++;
    if (count == 0 || at(0, 0) < 0) throw DomainError("viewpoint is not interior to the domain");

    const double tol = 1e-9 * scale;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(count);
    const long di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (long i = i0; i <= i1; ++i)
        for (long j = j0; j <= j1; ++j) {
            const long row = at(i, j);
            if (row < 0) continue;
            const cplx z = node(i, j);
            double arm[4], value[4];
            long col[4];
            for (int k = 0; k < 4; ++k) {
                const long ni2 = i + di[k], nj2 = j + dj[k];
                const bool in_range = ni2 >= i0 && ni2 <= i1 && nj2 >= j0 && nj2 <= j1;
                col[k] = in_range ? at(ni2, nj2) : -1;
                if (col[k] >= 0) {
                    arm[k] = h;
                    value[k] = 0.0;
                    continue;
                }
                // Bisection for the boundary crossing along this arm.
                const cplx dir(static_cast<double>(di[k]), static_cast<double>(dj[k]));
                double lo = 0.0, hi = h;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (d.inside(z + mid * dir) ? lo : hi) = mid;
                }
                arm[k] = std::max(hi, 1e-12 * h);
                value[k] = arc.contains(d, z + hi * dir, std::max(tol, 1e-9 * h)) ? 1.0 : 0.0;
            }
            double diag = 0.0;
            for (int axis = 0; axis < 2; ++axis) {
                const double a = arm[2 * axis], b = arm[2 * axis + 1];
                const double ca = 2.0 / (a * (a + b)), cb = 2.0 / (b * (a + b));
                diag += ca + cb;
                const double c[2] = {ca, cb};
                for (int s = 0; s < 2; ++s) {
                    const int k = 2 * axis + s;
                    if (col[k] >= 0) trip.emplace_back(row, col[k], -c[s]);
                    else rhs(row) += c[s] * value[k];
                }
            }
            trip.emplace_back(row, row, diag);
        }
    Eigen::SparseMatrix<double> A(count, count);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw ConvergenceError("harmonic measure linear solve failed");
    Eigen::VectorXd u = lu.solve(rhs);
    unknowns = static_cast<std::size_t>(count);
    return u(at(0, 0));
}

} // namespace

HarmonicMeasureResult harmonic_measure(const PlanarDomain& d, const BoundaryArc& arc, cplx p, double h) {
    if (!(h > 0)) throw ParameterError("grid step must be positive");
    double x0, x1, y0, y1;
    d.bounding_box(x0, x1, y0, y1);
    const double scale = std::max({x1 - x0, y1 - y0, 1.0});
    check_arc(d, arc, scale);
    if (!d.inside(p)) throw DomainError("viewpoint is not interior to the domain");
    HarmonicMeasureResult res;
    std::size_t n1 = 0, n2 = 0;
    const double coarse = solve_grid(d, arc, p, h, scale, n1);
    const double fine = solve_grid(d, arc, p, h / 2, scale, n2);
    res.value = std::clamp(fine + (fine - coarse) / 3.0, 0.0, 1.0);
    res.error_estimate = std::abs(fine - coarse);
    res.h = h / 2;
    res.unknowns = n2;
    return res;
}

double harmonic_measure_walk(const PlanarDomain& d, const BoundaryArc& arc, cplx p, std::size_t walks,
                             std::uint64_t seed, double eps) {
    if (walks == 0) throw ParameterError("need at least one walk");
    if (!(eps > 0)) throw ParameterError("walk stopping distance must be positive");
    double x0, x1, y0, y1;
    d.bounding_box(x0, x1, y0, y1);
    const double scale = std::max({x1 - x0, y1 - y0, 1.0});
    check_arc(d, arc, scale);
    if (!d.inside(p)) throw DomainError("viewpoint is not interior to the domain");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
    std::size_t hits = 0;
    for (std::size_t w = 0; w < walks; ++w) {
        cplx z = p;
        for (int step = 0; step < 100000; ++step) {
            double r = d.boundary_distance(z);
            if (r < eps) break;
            z += std::polar(r, angle(rng));
        }
        if (d.is_disk()) {
            cplx r = z - d.centre();
            z = d.centre() + r / std::abs(r) * d.radius();
        }
        if (arc.contains(d, z, 2 * eps)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(walks);
}

} // namespace cforge
