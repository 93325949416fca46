#pragma once
/**
 * Conformal isomorphisms from tracts onto the right half-plane H = {Re > 0},
 * hyperbolic-metric services with density ρ_H(z) = 1/Re z, and harmonic measure.
 *
 * A ConformalMap is a uniformizer w: T → upper half-plane followed by a real
 * Möbius transformation M, so that F(z) = -i·M(w(z)). The uniformizer is either
 * a closed form (half-plane, half-strip) or a Schwarz-Christoffel solve.
 */

#include "cforge/tract_geometry.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cforge {

using cplx = std::complex<double>;

/// ρ_H(z) = 1/Re z on the right half-plane.
double halfplane_density(cplx z);
/// Distance in H for the density 1/Re z; DomainError unless both points have Re > 0.
double halfplane_distance(cplx z, cplx w);

/// Conformal map from a domain onto the upper half-plane, with its inverse.
class Uniformizer {
public:
    virtual ~Uniformizer() = default;
    virtual cplx to_upper(cplx z) const = 0;
    virtual cplx to_upper_derivative(cplx z) const = 0;
    virtual cplx from_upper(cplx w) const = 0;
    virtual bool in_domain(cplx z) const = 0;
    virtual std::string backend() const = 0;
};

/**
 * Schwarz-Christoffel map f from the upper half-plane onto an unbounded rectilinear
 * tract, with the tract end at w = ∞. Prevertices w_0 = 0 < w_1 = 1 < ... are found by
 * matching side lengths (Levenberg-Marquardt in log-gaps); integrals use compound
 * Gauss-Jacobi quadrature.
 */
class SchwarzChristoffel final : public Uniformizer {
public:
    explicit SchwarzChristoffel(const RectilinearTract& t, double tol = 1e-12, int max_iterations = 200);

    cplx map(cplx w) const;            ///< f(w)
    cplx derivative(cplx w) const;     ///< f'(w)
    cplx inverse(cplx z) const;        ///< f^{-1}(z); ConvergenceError when no start point reaches z

    cplx to_upper(cplx z) const override { return inverse(z); }
    cplx to_upper_derivative(cplx z) const override { return 1.0 / derivative(inverse(z)); }
    cplx from_upper(cplx w) const override { return map(w); }
    bool in_domain(cplx z) const override;
    std::string backend() const override { return "schwarz-christoffel"; }

    const std::vector<double>& prevertices() const { return w_; }
    const std::vector<cplx>& vertices() const { return v_; }
    const std::vector<double>& exponents() const { return beta_; }
    double scale() const { return A_; }
    /// Max distance between the prescribed vertices and those of the solved map.
    double vertex_error() const { return vertex_error_; }
    int iterations() const { return iterations_; }
    const RectilinearTract& tract() const { return tract_; }

private:
    cplx integrand_without(std::size_t k, cplx z) const;
    cplx integral_from_vertex(std::size_t k, cplx z) const;
    cplx integral_regular(cplx a, cplx b, int depth = 0) const;
    double distance_to_prevertices(cplx a, cplx b) const;
    std::vector<cplx> side_integrals() const;
    void solve(double tol, int max_iterations);
    void build_table();

    RectilinearTract tract_;
    std::vector<cplx> v_;
    std::vector<double> beta_;
    std::vector<double> w_;
    std::vector<double> spacing_;  ///< distance from each prevertex to its nearest neighbour
    double A_ = 1.0;
    double vertex_error_ = 0.0;
    int iterations_ = 0;
    std::vector<cplx> table_w_, table_z_;
    cplx log_offset_;  ///< C in f(w) ≈ A log(w - c) + C at the tract end
};

/// Half-strip {Re > x0, y0 < Im/π < y1} by the closed form sinh(π(z - c)/width).
class HalfStripUniformizer final : public Uniformizer {
public:
    HalfStripUniformizer(double x0, double y0_pi, double y1_pi);
    cplx to_upper(cplx z) const override;
    cplx to_upper_derivative(cplx z) const override;
    cplx from_upper(cplx w) const override;
    bool in_domain(cplx z) const override;
    std::string backend() const override { return "closed-form half-strip"; }

private:
    double x0_, y0_, y1_;
    cplx c_;
    double k_;
};

/// The right half-plane itself, w = i·z.
class HalfPlaneUniformizer final : public Uniformizer {
public:
    cplx to_upper(cplx z) const override { return cplx(0, 1) * z; }
    cplx to_upper_derivative(cplx) const override { return cplx(0, 1); }
    cplx from_upper(cplx w) const override { return cplx(0, -1) * w; }
    bool in_domain(cplx z) const override { return z.real() > 0; }
    std::string backend() const override { return "identity half-plane"; }
};

struct Normalization {
    enum class Kind { FixedPoint, InfinityAndPoint };
    Kind kind = Kind::FixedPoint;
    cplx p{5.0, 0.0};
    cplx q{5.0, 0.0};
    /// F(p) = p and F'(p) > 0.
    static Normalization fixed_point(cplx p) { return {Kind::FixedPoint, p, p}; }
    /// F(∞) = ∞ (tract end to ∞) and F(p) = q.
    static Normalization infinity_and(cplx p, cplx q) { return {Kind::InfinityAndPoint, p, q}; }
};

struct AccuracyInfo {
    std::string backend;
    double achieved = 0.0;      ///< estimated sup error of F on the window
    double x_cert_lo = 0.0;     ///< certification window in Re z
    double x_cert_hi = 0.0;
    double vertex_error = 0.0;
    double roundtrip = 0.0;
    int iterations = 0;
};

/// Real Möbius transformation of the upper half-plane.
struct RealMobius {
    double a = 1, b = 0, c = 0, d = 1;
    cplx operator()(cplx w) const { return (a * w + b) / (c * w + d); }
    cplx derivative(cplx w) const {
        cplx den = c * w + d;
        return (a * d - b * c) / (den * den);
    }
    cplx inverse(cplx w) const { return (d * w - b) / (-c * w + a); }
    RealMobius then(const RealMobius& next) const;  ///< next ∘ this
};

class ConformalMap {
public:
    ConformalMap(std::shared_ptr<const Uniformizer> u, Normalization n, AccuracyInfo info = {});

    cplx operator()(cplx z) const;          ///< F(z)
    cplx derivative(cplx z) const;          ///< F'(z)
    cplx inverse(cplx zeta) const;          ///< F^{-1}(ζ) for Re ζ > 0
    bool in_domain(cplx z) const { return u_->in_domain(z); }
    /// ρ_T(z) = |F'(z)| / Re F(z).
    double density(cplx z) const;
    const Normalization& normalization() const { return norm_; }
    const AccuracyInfo& accuracy() const { return info_; }
    AccuracyInfo& accuracy() { return info_; }
    const Uniformizer& uniformizer() const { return *u_; }
    const RealMobius& mobius() const { return m_; }

private:
    std::shared_ptr<const Uniformizer> u_;
    Normalization norm_;
    RealMobius m_;
    AccuracyInfo info_;
};

/**
 * Conformal isomorphism T → H with the given normalization. Uses the Schwarz-Christoffel
 * backend and certifies on the window min Re T <= Re z <= x_cert; AccuracyError when the
 * estimated error exceeds eps.
 */
ConformalMap map_to_halfplane(const RectilinearTract& t, Normalization n, double eps, double x_cert = 20.0);
ConformalMap half_strip_map(double x0, double y0_pi, double y1_pi, Normalization n);
ConformalMap right_half_plane_map(Normalization n);

/// Closed form for {Re > x0, |Im| < π/2} with F(p) = p, F'(p) > 0 and p real: F(z) = p·sinh(z - x0)/sinh(p - x0).
cplx half_strip_closed_form(double x0, double p, cplx z);

/// Hyperbolic distance in the domain of F (pull-back of the H metric).
double hyperbolic_distance(const ConformalMap& F, cplx z, cplx w);

struct ExpansionEstimate {
    double lambda = 0.0;        ///< deflated lower bound
    double sampled_min = 0.0;   ///< min of ‖DF‖_H over the samples
    double deflation = 1.0;
    cplx argmin;
    std::size_t samples = 0;
};

/**
 * ‖DF(z)‖_H = |F'(z)| Re z / Re F(z) sampled on T ∩ {x_lo <= Re z <= x_hi}. The minimum is
 * certified on a quadtree of cells: deep cells are deflated by exp(-3 s), s a bound on the
 * T-distance from the cell centre, and cells near ∂T use ‖DF‖_H >= Re z / (2 dist(z, ∂T)).
 * PreconditionError unless min Re over ∂T > 0; NotDisjointTypeError when the deflated bound
 * is at most 1.
 */
ExpansionEstimate expansion_constant(const ConformalMap& F, const RectilinearTract& t, double x_lo, double x_hi,
                                     int nx = 40, int ny = 24);
ExpansionEstimate expansion_constant_halfplane(const ConformalMap& F, double x_lo, double x_hi, int nx = 40,
                                               int ny = 24);

struct DecorationReport {
    std::vector<double> radii;
    std::vector<double> diameters;
    bool bounded_by_K = true;
};

/// Sampled H-diameters of F^{-1}({|ζ| = ρ}); AccuracyError for radii outside [rho_min, rho_max].
DecorationReport decoration_diameters(const ConformalMap& F, const std::vector<double>& radii, double K = INFINITY,
                                      double rho_min = 0.0, double rho_max = INFINITY, int samples = 128);

// Harmonic measure on bounded planar domains.

class PlanarDomain {
public:
    static PlanarDomain polygon(std::vector<cplx> vertices);
    static PlanarDomain disk(cplx centre, double radius);
    /// T ∩ {Re z < x_cut}, closed by the vertical cap at x_cut.
    static PlanarDomain truncated_tract(const RectilinearTract& t, double x_cut);

    bool inside(cplx z) const;
    double boundary_distance(cplx z) const;
    bool on_boundary(cplx z, double tol) const;
    void bounding_box(double& x0, double& x1, double& y0, double& y1) const;
    bool is_disk() const { return disk_; }
    cplx centre() const { return centre_; }
    double radius() const { return radius_; }

private:
    bool disk_ = false;
    cplx centre_;
    double radius_ = 0.0;
    std::vector<cplx> poly_;
};

/// A boundary arc: polygon segments, or an angular range [t0, t1] on a disk.
struct BoundaryArc {
    std::vector<std::pair<cplx, cplx>> segments;
    std::optional<std::pair<double, double>> angles;
    bool contains(const PlanarDomain& d, cplx z, double tol) const;
};

struct HarmonicMeasureResult {
    double value = 0.0;
    double error_estimate = 0.0;  ///< difference between the two finest grids
    double h = 0.0;
    std::size_t unknowns = 0;
};

/// 5-point Shortley-Weller finite differences on grids h and h/2 with Richardson extrapolation.
HarmonicMeasureResult harmonic_measure(const PlanarDomain& d, const BoundaryArc& arc, cplx p, double h = 0.02);
/// Walk-on-spheres Monte Carlo estimate.
double harmonic_measure_walk(const PlanarDomain& d, const BoundaryArc& arc, cplx p, std::size_t walks,
                             std::uint64_t seed, double eps = 1e-4);

} // namespace cforge
