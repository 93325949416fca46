#pragma once
/**
 * Disjoint-type models in logarithmic coordinates: orbits, external addresses, finite-depth
 * Julia continua, bounded-orbit points, fast-escaping membership, translation conjugacies,
 * ε-maps and Rogers-map extraction.
 *
 * A log model has one or two tract prototypes P with conformal maps F_P: P → H = {Re > 0}.
 * On the translate P + 2πim the model acts as F(z) = F_P(z - 2πim). Points at infinity are
 * represented by cplx(+∞, 0).
 */

#include "cforge/conformal.hpp"
#include "cforge/interval_maps.hpp"
#include "cforge/tract_geometry.hpp"

#include "json.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cforge {

inline const cplx kInfinity{INFINITY, 0.0};
inline bool is_infinity(cplx z) { return !std::isfinite(z.real()) || !std::isfinite(z.imag()); }

struct AddressEntry {
    std::string tract = "T";
    long m = 0;
    bool operator==(const AddressEntry& o) const { return tract == o.tract && m == o.m; }
};

/**
 * s_0 s_1 s_2 ... given by a list of entries. With a period p the list continues by
 * s_j = s_{j-p} past its end; without one only the listed prefix is defined.
 */
class ExternalAddress {
public:
    ExternalAddress() = default;
    ExternalAddress(std::vector<AddressEntry> entries, std::optional<std::size_t> period, bool bounded = false);
    static ExternalAddress constant(AddressEntry e) { return ExternalAddress({std::move(e)}, 1); }
    static ExternalAddress periodic(std::vector<AddressEntry> cycle);
    /// A finite prefix; `bounded` records that the full address has finitely many entries.
    static ExternalAddress prefix(std::vector<AddressEntry> entries, bool bounded);

    const AddressEntry& at(std::size_t j) const;
    const std::vector<AddressEntry>& entries() const { return entries_; }
    std::optional<std::size_t> period() const { return period_; }
    bool periodic_flag() const { return period_.has_value(); }
    bool bounded() const { return period_.has_value() || bounded_; }
    /// Number of defined entries (SIZE_MAX for periodic addresses).
    std::size_t defined_length() const;
    /// The address with entry j replaced by (T_j, m_j + offsets[j]) for j < offsets.size().
    ExternalAddress shifted(const std::vector<long>& offsets) const;

private:
    std::vector<AddressEntry> entries_;
    std::optional<std::size_t> period_;
    bool bounded_ = false;
};

void to_json(nlohmann::json& j, const ExternalAddress& a);
ExternalAddress address_from_json(const nlohmann::json& j);

struct TractPrototype {
    std::string label;
    RectilinearTract shape;
    std::shared_ptr<const ConformalMap> F;
    cplx base;  ///< interior base point used by shadowing (the normalization point)
};

class Model {
public:
    virtual ~Model() = default;
    virtual std::string name() const = 0;
    /// F(z); DomainError when z lies in no tract translate.
    virtual cplx eval(cplx z) const = 0;
    virtual cplx derivative(cplx z) const = 0;
    /// The translate containing z, if any.
    virtual std::optional<AddressEntry> locate(cplx z) const = 0;
    /// Inverse branch H → translate; PreconditionError for models without tracts.
    virtual cplx inverse_branch(const AddressEntry& e, cplx zeta) const;
    virtual bool has_tracts() const { return false; }
    /// Lower bound Λ > 1 for ‖DF‖_H; 0 when not available.
    virtual double expansion() const { return 0.0; }
    virtual const std::vector<TractPrototype>& prototypes() const;
};

class LogModel final : public Model {
public:
    /// Checks cl(P) ⊂ H and disjointness of all translates; computes Λ on [min Re, min Re + window].
    LogModel(std::string name, std::vector<TractPrototype> tracts, double expansion_window = 12.0);

    std::string name() const override { return name_; }
    cplx eval(cplx z) const override;
    cplx derivative(cplx z) const override;
    std::optional<AddressEntry> locate(cplx z) const override;
    cplx inverse_branch(const AddressEntry& e, cplx zeta) const override;
    bool has_tracts() const override { return true; }
    double expansion() const override { return lambda_; }
    const std::vector<TractPrototype>& prototypes() const override { return tracts_; }
    const TractPrototype& prototype(const std::string& label) const;
    /// True when z lies in the closure of the translate named by e (sampled tolerance).
    bool in_translate(const AddressEntry& e, cplx z, double tol = 0.0) const;

private:
    std::string name_;
    std::vector<TractPrototype> tracts_;
    double lambda_ = 0.0;
};

/// Closed-form entire function iterated directly (no tracts, no inverse branches).
class DirectModel final : public Model {
public:
    DirectModel(std::string name, std::function<cplx(cplx)> f, std::function<cplx(cplx)> df);
    std::string name() const override { return name_; }
    cplx eval(cplx z) const override;
    cplx derivative(cplx z) const override { return df_(z); }
    std::optional<AddressEntry> locate(cplx z) const override;

private:
    std::string name_;
    std::function<cplx(cplx)> f_, df_;
};

/// Half-strip {Re > x0, |Im| < π/2} with the closed-form map, F(p) = p, F'(p) > 0.
std::shared_ptr<LogModel> half_strip_model(double x0 = 4.0, double p = 5.0);
/// Single tract with the Schwarz-Christoffel map, F(p) = p, F'(p) > 0.
std::shared_ptr<LogModel> sc_tract_model(const RectilinearTract& t, cplx p, double eps = 1e-8);
/// Two half-strips S = {Re > x0, -3π/4 < Im < -π/4} and T = {Re > x0, π/4 < Im < 3π/4}.
std::shared_ptr<LogModel> two_tract_model(double x0 = 4.0);
std::shared_ptr<DirectModel> lambda_sin_model(double lambda);
std::shared_ptr<DirectModel> lambda_exp_model(double lambda);


struct OrbitResult {
    std::vector<cplx> points;              ///< z, F(z), ..., as far as computed
    std::vector<AddressEntry> address;     ///< translate of each point (realized address)
    bool escaped = false;                  ///< an iterate left every translate
    bool overflow = false;                 ///< an iterate is no longer finite
};

/// z, F(z), ..., F^n(z); DomainError unless z lies in a translate (or is finite, for direct models).
OrbitResult orbit(const Model& model, cplx z, std::size_t n);

struct CloudPoint {
    std::vector<cplx> chain;  ///< chain[k] = F^k(chain[0]) ∈ T_k, k = 0..depth
    double residual = 0.0;    ///< max_k |F(chain[k]) - chain[k+1]| relative to |chain[k+1]|
};

struct ContinuumApprox {
    ExternalAddress address;
    std::size_t depth = 0;
    double resolution = 0.0;
    double x_window = 0.0;
    std::vector<CloudPoint> points;
    cplx point(std::size_t i) const { return points[i].chain.front(); }
};

/**
 * Pulls the grid {x_lo + (i+1/2)h} × {y_lo + (j+1/2)h} of T̄_n ∩ {Re <= x_window} back through
 * the inverse branches along the address; depth 0 returns the grid of T_0 itself.
 */
ContinuumApprox continuum_depth_n(const Model& model, const ExternalAddress& s, std::size_t n, double resolution,
                                  double x_window = 12.0);

struct BoundedOrbitPoint {
    cplx z0;
    std::vector<cplx> orbit;   ///< shadow orbit z0, F(z0), ..., on the checked prefix
    double connector = 0.0;    ///< Δ: largest H-distance between a base point and the pull-back of the next
    double bound = 0.0;        ///< ΔΛ/(Λ-1)
    double max_deviation = 0.0;
    double period_residual = 0.0;  ///< |F^p(z0) - z0| for periodic addresses
    std::size_t sweeps = 0;
};

/// The unique non-escaping point at a bounded address, by shadowing the base-point pseudo-orbit.
BoundedOrbitPoint bounded_orbit_point(const Model& model, const ExternalAddress& s, std::size_t prefix = 32,
                                      double tol = 1e-12);

struct MembershipLevel {
    std::size_t level = 0;
    cplx z;
    bool in_unbounded_component = false;
    double d_max_re = 0.0;     ///< largest real part of the sampled D_n
    std::string reason;
};

struct MembershipResult {
    bool member = true;
    std::vector<MembershipLevel> trace;
};

/**
 * Checks F^k(z) in the unbounded component of T_k \ D_k for k < depth, D_{k+1} = F(T_k ∩ D_k),
 * D_0 the disc |w - centre| < radius. Components are decided on a grid of step `resolution`,
 * with D_k dilated by the propagated sample radii (ties count as bounded).
 */
MembershipResult fast_escaping_membership(const Model& model, const ExternalAddress& s, cplx z, cplx centre,
                                          double radius, std::size_t depth, double resolution = 0.05);

struct TranslationConjugacy {
    ExternalAddress target;
    std::vector<cplx> images;   ///< θ(z) for each sample
    double rho = 0.0;           ///< sup d_H(z, z + 2πi m_j) allowed by δ
    double M = 0.0;             ///< Λρ/(Λ-1)
    double C = 0.0;             ///< (M + ρ)Λ/(Λ-1)
    double lambda = 0.0;
    double worst = 0.0;         ///< max d_H(F^k z, F^k θ(z)) over samples and levels
    std::size_t levels = 0;
    bool verified = false;
};

/**
 * θ on the sample chains via the conjugacy engine with bridges ψ_j(z) = z + 2πi m_j; checks
 * d_H(F^k z, F^k θ z) <= C for all computed k. PreconditionError naming (z, j) when
 * δ|m_j| > max(1, Re F^j(z)).
 */
TranslationConjugacy translation_conjugacy(const Model& model, const ExternalAddress& s,
                                           const std::vector<long>& offsets, const ContinuumApprox& samples,
                                           double delta);

struct ShortPreimage {
    long m = 0;
    double diameter = 0.0;
    long m_lo = 0, m_hi = 0;
    std::vector<double> diameters;  ///< per m in [m_lo, m_hi]
};

/// m in [R/(2π), R/π + 1] minimizing the diameter of F_T^{-1}({z + 2πim : d_H(z, [R0, R]) <= θ}).
ShortPreimage find_short_preimage(const Model& model, const std::string& tract, double R, double theta,
                                  double R0 = 1.0);

struct AnguineData {
    std::function<double(cplx)> phi;
    std::optional<double> K;  ///< certified bound on diam_H(φ^{-1}(t))
};

/// φ(z) = max(0, Re z - shift) on the prototype, with K from sampled vertical sections.
AnguineData real_part_anguine(const Model& model, const std::string& tract, double shift = 0.0);

struct EpsilonMap {
    std::size_t level = 0;
    std::vector<double> values;     ///< g_j on the cloud (∞ for points at ∞)
    double fiber_bound = 0.0;       ///< K/Λ^j
    double measured = 0.0;          ///< largest sampled H-diameter of a bin of width `bin`
    double bin = 0.0;
};

/// g_j(z) = φ(F^j(z)); PreconditionError without a certified K.
EpsilonMap epsilon_map(const Model& model, const AnguineData& data, const ContinuumApprox& cloud, std::size_t j,
                       double bin = 0.05);
double epsilon_value(const AnguineData& data, const CloudPoint& p, std::size_t j);

struct RogersMap {
    std::size_t n = 0;
    double x_max = 0.0;
    std::vector<double> breakpoints;  ///< 0, 4, 8, ... in the reparametrized scale
    std::vector<double> values;       ///< h_n at the breakpoints
    PLMap normalized{{Rational(0), Rational(1)}, {Rational(0), Rational(1)}};  ///< h_n(x·x_max)/x_max on [0, 1], exact
    std::vector<cplx> zeta;           ///< ζ-chain
    double K = 0.0;
    double lambda = 0.0;
    Rational max_slope;               ///< exact, on the normalized map
    bool slopes_ok = false;           ///< max slope <= 1/2
    bool below_diagonal = false;      ///< h_n(x) < x at positive breakpoints
    double fixed_point_residual = 0.0;
};

/// Smallest n with Λ^{n-1} > 64.
std::size_t rogers_depth(double lambda);

/**
 * h_n(4j) = φ̂(F_T^{-n}(ζ_{4j})) for j = 0..blocks, with ζ_{j+1} on the H-circle of radius 3K about ζ_j
 * minimizing φ above φ(ζ_j), and φ̂ the reparametrization with φ̂(ζ_j) = j. Needs a single tract
 * invariant under F_T^{-1} and Λ^{n-1} > 64 (PreconditionError otherwise).
 */
RogersMap extract_rogers_map(const Model& model, const AnguineData& data, cplx z0, std::size_t n,
                             std::size_t blocks = 6);

void write_cloud_csv(std::ostream& out, const ContinuumApprox& c);
void write_cloud_svg(std::ostream& out, const ContinuumApprox& c, const RectilinearTract* tract = nullptr);

} // namespace cforge
