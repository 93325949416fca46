#include "cforge/conformal.hpp"
#include "cforge/error.hpp"
#include "cforge/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cforge {

namespace {

constexpr int kPanelNodes = 16;
const double kPi = std::acos(-1.0);

// z^beta with the branch continuous on the closed upper half-plane.
cplx upow(cplx z, double beta) {
    double r = std::abs(z);
    double theta = std::atan2(z.imag(), z.real());
    if (theta < 0) theta = z.real() < 0 ? kPi : 0.0;
    return std::polar(std::pow(r, beta), beta * theta);
}

const QuadratureRule& legendre_rule() {
    static const QuadratureRule rule = gauss_legendre(kPanelNodes);
    return rule;
}

const QuadratureRule& jacobi_rule(double beta) {
    static const QuadratureRule minus = gauss_jacobi(kPanelNodes, 0.0, -0.5);
    static const QuadratureRule plus = gauss_jacobi(kPanelNodes, 0.0, 0.5);
    return beta < 0 ? minus : plus;
}

double point_segment_distance(cplx p, cplx a, cplx b) {
    cplx d = b - a;
    double len2 = std::norm(d);
    if (len2 == 0) return std::abs(p - a);
    double t = std::clamp(((p - a) * std::conj(d)).real() / len2, 0.0, 1.0);
    return std::abs(p - (a + t * d));
}

double cross(cplx a, cplx b) { return (std::conj(a) * b).imag(); }

} // namespace

SchwarzChristoffel::SchwarzChristoffel(const RectilinearTract& t, double tol, int max_iterations) : tract_(t) {
    const auto& chain = t.chain();
    std::vector<cplx> pts;
    for (const auto& q : chain) pts.emplace_back(to_double(q.x), kPi * to_double(q.y));
    // The first vertex must carry the upper ray so that the tract lies to the left.
    if (chain.front().y < chain.back().y) std::reverse(pts.begin(), pts.end());

    const std::size_t n = pts.size();
    for (std::size_t k = 0; k < n; ++k) {
        cplx in = k == 0 ? cplx(-1, 0) : pts[k] - pts[k - 1];
        cplx out = k + 1 == n ? cplx(1, 0) : pts[k + 1] - pts[k];
        double c = cross(in, out);
        if (std::abs(c) < 1e-14 * std::abs(in) * std::abs(out)) continue;  // straight vertex
        v_.push_back(pts[k]);
        beta_.push_back(c > 0 ? -0.5 : 0.5);
    }
    double sum = std::accumulate(beta_.begin(), beta_.end(), 0.0);
    if (v_.size() < 2 || std::abs(sum + 1.0) > 1e-12)
        throw GeometryError("tract boundary does not turn by a half-turn between its two rays");
    A_ = (v_.front().imag() - v_.back().imag()) / kPi;

    // Initial prevertices: sinh of the centred arclength, as for a straight strip.
    const std::size_t m = v_.size();
    std::vector<double> s(m, 0.0);
    for (std::size_t k = 1; k < m; ++k) s[k] = s[k - 1] + std::abs(v_[k] - v_[k - 1]);
    const double width = kPi * A_;
    w_.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        w_[k] = std::sinh(std::clamp(kPi * (s[k] - s[m - 1] / 2) / width, -300.0, 300.0));
    const double shift = w_[0], unit = w_[1] - w_[0];
    for (auto& w : w_) w = (w - shift) / unit;
    for (std::size_t k = 1; k < m; ++k)
        if (!(w_[k] > w_[k - 1])) w_[k] = w_[k - 1] + 1e-3;

    solve(tol, max_iterations);
    build_table();
}

cplx SchwarzChristoffel::integrand_without(std::size_t k, cplx z) const {
    cplx p(A_, 0.0);
    for (std::size_t j = 0; j < w_.size(); ++j)
        if (j != k) p *= upow(z - w_[j], beta_[j]);
    return p;
}

cplx SchwarzChristoffel::derivative(cplx w) const {
    return integrand_without(std::numeric_limits<std::size_t>::max(), w);
}

double SchwarzChristoffel::distance_to_prevertices(cplx a, cplx b) const {
    double d = std::numeric_limits<double>::infinity();
    for (double w : w_) d = std::min(d, point_segment_distance(cplx(w, 0), a, b));
    return d;
}

cplx SchwarzChristoffel::integral_regular(cplx a, cplx b, int depth) const {
    const double len = std::abs(b - a);
    if (len == 0) return 0.0;
    if (depth < 80 && len > distance_to_prevertices(a, b)) {
        cplx mid = 0.5 * (a + b);
        return integral_regular(a, mid, depth + 1) + integral_regular(mid, b, depth + 1);
    }
    const auto& rule = legendre_rule();
    const cplx half = 0.5 * (b - a), centre = 0.5 * (a + b);
    const auto all = std::numeric_limits<std::size_t>::max();
    cplx sum = 0.0;
    for (int i = 0; i < kPanelNodes; ++i) sum += rule.weights[i] * integrand_without(all, centre + half * rule.nodes[i]);
    return half * sum;
}

cplx SchwarzChristoffel::integral_from_vertex(std::size_t k, cplx z) const {
    const cplx wk(w_[k], 0.0);
    const double len = std::abs(z - wk);
    if (len == 0) return 0.0;
    const double reach = std::min(len, spacing_[k] / 2);
    const cplx end = wk + (z - wk) * (reach / len);
    const cplx h = end - wk;
    const auto& rule = jacobi_rule(beta_[k]);
    cplx sum = 0.0;
    for (int i = 0; i < kPanelNodes; ++i)
        sum += rule.weights[i] * integrand_without(k, wk + 0.5 * h * (1.0 + rule.nodes[i]));
    cplx result = upow(0.5 * h, beta_[k]) * 0.5 * h * sum;
    if (reach < len) result += integral_regular(end, z);
    return result;
}

std::vector<cplx> SchwarzChristoffel::side_integrals() const {
    std::vector<cplx> out;
    for (std::size_t k = 0; k + 1 < w_.size(); ++k) {
        cplx mid(0.5 * (w_[k] + w_[k + 1]), 0.0);
        out.push_back(integral_from_vertex(k, mid) - integral_from_vertex(k + 1, mid));
    }
    return out;
}

void SchwarzChristoffel::solve(double tol, int max_iterations) {
    const std::size_t m = w_.size();
    auto set_spacing = [&] {
        spacing_.assign(m, std::numeric_limits<double>::infinity());
        for (std::size_t k = 0; k + 1 < m; ++k) {
            double g = w_[k + 1] - w_[k];
            spacing_[k] = std::min(spacing_[k], g);
            spacing_[k + 1] = std::min(spacing_[k + 1], g);
        }
    };
    auto vertices_error = [&] {
        auto sides = side_integrals();
        cplx pos = v_[0];
        double err = 0.0;
        for (std::size_t k = 0; k < sides.size(); ++k) {
            pos += sides[k];
            err = std::max(err, std::abs(pos - v_[k + 1]));
        }
        return err;
    };

    const std::size_t unknowns = m - 2;
    if (unknowns == 0) {
        set_spacing();
        vertex_error_ = vertices_error();
        return;
    }
    // Unknowns are log-gaps of w_1 < ... < w_{m-1}, with w_0 = 0 and w_1 = 1 fixed.
    Eigen::VectorXd x(unknowns);
    for (std::size_t k = 0; k < unknowns; ++k) x(k) = std::log(w_[k + 2] - w_[k + 1]);
    auto apply = [&](const Eigen::VectorXd& u) {
        w_[0] = 0.0;
        w_[1] = 1.0;
        for (std::size_t k = 0; k < unknowns; ++k) w_[k + 2] = w_[k + 1] + std::exp(u(k));
        set_spacing();
    };
    auto residual = [&](const Eigen::VectorXd& u) {
        apply(u);
        auto sides = side_integrals();
        Eigen::VectorXd r(m - 1);
        for (std::size_t k = 0; k + 1 < m; ++k) r(k) = std::log(std::abs(sides[k]) / std::abs(v_[k + 1] - v_[k]));
        return r;
    };

    Eigen::VectorXd r = residual(x);
    double mu = 1e-3;
    int it = 0;
    for (; it < max_iterations && r.lpNorm<Eigen::Infinity>() > tol; ++it) {
        Eigen::MatrixXd J(m - 1, unknowns);
        for (std::size_t k = 0; k < unknowns; ++k) {
            Eigen::VectorXd xp = x;
            double step = 1e-7 * std::max(1.0, std::abs(x(k)));
            xp(k) += step;
            J.col(static_cast<Eigen::Index>(k)) = (residual(xp) - r) / step;
        }
        Eigen::MatrixXd JtJ = J.transpose() * J;
        Eigen::VectorXd g = J.transpose() * r;
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd lhs = JtJ;
            for (Eigen::Index i = 0; i < lhs.rows(); ++i) lhs(i, i) += mu * (1.0 + JtJ(i, i));
            Eigen::VectorXd delta = lhs.ldlt().solve(-g);
            Eigen::VectorXd xn = x + delta;
            Eigen::VectorXd rn = residual(xn);
            if (rn.allFinite() && rn.norm() < r.norm()) {
                x = xn;
                r = rn;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
            } else {
                mu *= 4.0;
            }
        }
        if (!accepted) break;
    }
    apply(x);
    iterations_ = it;
    vertex_error_ = vertices_error();
}

cplx SchwarzChristoffel::map(cplx w) const {
    std::size_t best = 0;
    for (std::size_t j = 1; j < w_.size(); ++j)
        if (std::abs(w - w_[j]) < std::abs(w - w_[best])) best = j;
    return v_[best] + integral_from_vertex(best, w);
}

void SchwarzChristoffel::build_table() {
    table_w_.clear();
    const double angles[] = {kPi / 6, kPi / 3, kPi / 2, 2 * kPi / 3, 5 * kPi / 6};
    for (std::size_t j = 0; j < w_.size(); ++j) {
        double s = std::isfinite(spacing_[j]) ? spacing_[j] : 1.0;
        for (double rho : {s / 8, s / 3, 2 * s / 3})
            for (double phi : angles) table_w_.push_back(cplx(w_[j], 0) + std::polar(rho, phi));
    }
    for (std::size_t j = 0; j + 1 < w_.size(); ++j) {
        double g = w_[j + 1] - w_[j];
        for (double frac : {0.1, 0.5, 1.0}) table_w_.emplace_back(0.5 * (w_[j] + w_[j + 1]), frac * g);
    }
    // Far field: the tract end, where f(w) ≈ A log w.
    const double base = 2.0 * std::max({std::abs(w_.front()), std::abs(w_.back()), 1.0});
    const double log_max = std::log(base) + 12.0;
    const double far_angles[] = {kPi / 16, kPi / 4, 3 * kPi / 8, kPi / 2, 5 * kPi / 8, 3 * kPi / 4, 15 * kPi / 16};
    for (double lr = std::log(base); lr <= log_max; lr += 0.5)
        for (double phi : far_angles) table_w_.push_back(cplx(0.5 * (w_.front() + w_.back()), 0) + std::polar(std::exp(lr), phi));
    table_z_.clear();
    for (const auto& w : table_w_) table_z_.push_back(map(w));
    // Beyond the table, f(w) = A log w + C + O(1/w).
    const cplx far(0.5 * (w_.front() + w_.back()), base * std::exp(log_max));
    log_offset_ = map(far) - A_ * std::log(far - 0.5 * (w_.front() + w_.back()));
}

bool SchwarzChristoffel::in_domain(cplx z) const { return contains(tract_, z); }

cplx SchwarzChristoffel::inverse(cplx z) const {
    if (!in_domain(z)) throw DomainError("point is not inside the tract");
    std::vector<std::size_t> order(table_z_.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t candidates = std::min<std::size_t>(16, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(candidates), order.end(),
                      [&](std::size_t a, std::size_t b) { return std::abs(table_z_[a] - z) < std::abs(table_z_[b] - z); });
    const double target = 1e-10 * (1.0 + std::abs(z));
    const cplx centre(0.5 * (w_.front() + w_.back()), 0.0);
    const cplx log_w = (z - log_offset_) / A_;
    std::vector<std::pair<cplx, cplx>> starts;
    if (log_w.real() > std::log(table_w_.empty() ? 1.0 : std::abs(table_w_.back() - centre)) && log_w.real() < 700 &&
        log_w.imag() > 0 && log_w.imag() < kPi) {
        cplx w0 = centre + std::exp(log_w);
        starts.emplace_back(w0, map(w0));
    }
    for (std::size_t c = 0; c < candidates; ++c) starts.emplace_back(table_w_[order[c]], table_z_[order[c]]);

    for (const auto& [start_w, z0] : starts) {
        bool straight = true;
        for (int i = 1; i <= 32 && straight; ++i) straight = contains(tract_, z0 + (z - z0) * (i / 32.0));
        if (!straight) continue;
        for (int steps : {16, 64}) {
            cplx w = start_w;
            const cplx dz = z - z0;
            const double dt = 1.0 / steps;
            bool ok = true;
            for (int i = 0; i < steps && ok; ++i) {
                auto rhs = [&](cplx u) { return dz / derivative(u); };
                cplx k1 = rhs(w);
                cplx k2 = rhs(w + 0.5 * dt * k1);
                cplx k3 = rhs(w + 0.5 * dt * k2);
                cplx k4 = rhs(w + dt * k3);
                w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                ok = w.imag() > 0 && std::isfinite(w.real()) && std::isfinite(w.imag());
            }
            if (!ok) continue;
            cplx res = map(w) - z;
            for (int it = 0; it < 40 && std::abs(res) > 1e-15 * (1.0 + std::abs(z)); ++it) {
                cplx step = res / derivative(w);
                cplx next = w - step;
                for (int halve = 0; halve < 30 && next.imag() <= 0; ++halve) {
                    step *= 0.5;
                    next = w - step;
                }
                if (next.imag() <= 0) break;
                cplx nres = map(next) - z;
                if (std::abs(nres) >= std::abs(res) && std::abs(step) <= 1e-15 * std::abs(w)) break;
                w = next;
                res = nres;
            }
            if (std::abs(res) <= target) return w;
        }
    }
    throw ConvergenceError("inverse Schwarz-Christoffel evaluation did not converge");
}

} // namespace cforge
