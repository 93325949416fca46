#pragma once
// Inductive tract construction: steps I1-I5, the predecessor enumeration and the
// bounded and periodic variants.

#include "cforge/conformal.hpp"
#include "cforge/interval_maps.hpp"
#include "cforge/rational.hpp"
#include "cforge/tract_geometry.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cforge {

/// A positive number stored as exp^level(value); level 0 is the plain double.
/// For level >= 1 the value is at most kTowerCap, so huge iterates stay comparable.
struct TowerMagnitude {
    static constexpr double kTowerCap = 709.0;
    int level = 0;
    double value = 0.0;

    static TowerMagnitude of(double x);
    bool fits_double() const;
    double to_double() const;  ///< +inf when it does not fit
    std::string str() const;
};
bool operator<(const TowerMagnitude& a, const TowerMagnitude& b);

/// n-fold iterate of x ↦ scale·sinh(x - x0) evaluated on tower magnitudes.
TowerMagnitude sinh_iterate(double scale, double x0, double x, std::size_t n);

enum class Scheme { Single, AllInOne, Bounded, Periodic };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

/**
 * φ_k: an increasing piecewise-linear homeomorphism [M, M̃] → [0, 1] through the given
 * knots, extended by 0 on [0, M] and by 1 on [M̃, ∞].
 */
class HeightFunction {
public:
    HeightFunction(std::vector<Rational> xs, std::vector<Rational> ys);
    static HeightFunction linear(const Rational& M, const Rational& M_tilde);

    Rational operator()(const Rational& x) const;
    double operator()(double x) const;
    /// Inverse of the restriction to [M, M̃].
    Rational inverse(const Rational& y) const;
    double inverse(double y) const;

    const Rational& M() const { return xs_.front(); }
    const Rational& M_tilde() const { return xs_.back(); }
    const std::vector<Rational>& xs() const { return xs_; }
    const std::vector<Rational>& ys() const { return ys_; }

private:
    std::vector<Rational> xs_, ys_;
};
void to_json(nlohmann::json& j, const HeightFunction& phi);
HeightFunction height_function_from_json(const nlohmann::json& j);

/// min(1, min{|x - y| : |φ(x) - φ(y)| >= 1/(2γ)}), exact.
Rational alpha_constant(const HeightFunction& phi, const Rational& gamma);
/// max{|x1 - x2| : x1, x2 in [M, M̃], |φ(x1) - φ(x2)| <= 1/γ}, exact.
Rational gap_width(const HeightFunction& phi, const Rational& gamma);
/// Smallest integer N with N > (log 12 - log α)/log 2, i.e. α·2^N > 12.
std::size_t nk_lower_bound(const Rational& alpha);

/// Exact range of g on [lo, hi].
std::pair<Rational, Rational> pl_range(const PLMap& g, const Rational& lo, const Rational& hi);
/// Number of points j/γ (0 < j < γ) in the closed interval [lo, hi].
long grid_points_in(const Rational& lo, const Rational& hi, long gamma);
/**
 * Ω with 0 = ω^0 < ... < ω^m = 1 such that each g-image of a closed gap holds at most one
 * point of Ξ∖{0,1} = {j/γ}. Uniform partitions of γ·2^r pieces are tried for r = 0, 1, ...
 */
std::vector<Rational> step_I1_choose_omega(const PLMap& g, long gamma);

/// I_k^j: smallest Ξ-bounded closed interval whose interior contains image∖{0,1}.
std::pair<Rational, Rational> xi_hull(const Rational& image_lo, const Rational& image_hi, long gamma);

/// L_k from the metric d_{X_k}.
double dx_position(double x, double M, double M_tilde);
double dx_distance(cplx z, cplx w, double M, double M_tilde);
/// Exact check that L_k is continuous and strictly increasing on [0, ∞].
bool dx_is_metric(const Rational& M, const Rational& M_tilde);

struct KappaEntry {
    std::vector<std::size_t> word;  ///< letters (indices into the alphabet)
    std::size_t predecessor = 0;    ///< κ(σ(S)); 0 for words of length 1
};
/// Entries 1..limit of the length-lexicographic enumeration (entry 0 is the empty word).
std::vector<KappaEntry> kappa_enumeration(std::size_t alphabet_size, std::size_t limit);

/// Horizontal arc C_k^j (imaginary parts in π units). Boundary arcs lie on ∂T.
struct ConnectorArc {
    int j = 0;
    Rational x0, x1, y;
    bool boundary = false;
};

struct DecorationLayout {
    std::vector<Rational> I_lo, I_hi;     ///< I_k^j in [0, 1]
    std::vector<double> It_lo, It_hi;     ///< Ĩ_k^j on the real axis
    std::vector<TractPiece> bands;        ///< U_k^j (upper copy)
    std::vector<TractPiece> connectors;   ///< channels carrying C_k^1..C_k^m
    std::vector<ConnectorArc> arcs;       ///< C_k^0..C_k^m
};

struct WallData {
    Rational x;        ///< R_j
    Rational opening;  ///< χ_j in units of π
};

struct PullbackCertificate {
    std::size_t samples = 0;
    double bound = 0.0;              ///< 3/γ_{k_*}
    double worst_real_margin = 0.0;  ///< min over samples of re f_k(w) - (M_{k_*} - 1)
    double worst_psi_margin = 0.0;   ///< min over samples of bound - |ψ_{k_*}(f_k(w)) - g_k(ψ_k(w))|
    cplx worst_sample;
    bool passed = false;
};

struct StageLedger {
    std::size_t k = 0;
    std::size_t k_star = 0;
    std::optional<PLMap> g;
    std::optional<std::size_t> N;
    std::size_t n = 0;
    long s = 0;
    std::optional<TowerMagnitude> R_bound;  ///< I2 item (a) lower bound
    std::optional<Rational> R;
    std::optional<TowerMagnitude> R_minus, R_plus;  ///< bounded scheme
    std::optional<Rational> chi;                    ///< in units of π
    Rational M;
    std::optional<Rational> M_tilde;
    std::optional<Rational> alpha_star;
    std::vector<Rational> omega;
    std::optional<long> gamma;
    std::vector<double> eta;
    std::vector<double> theta;
    std::optional<DecorationLayout> layout;
    std::optional<HeightFunction> phi;
    std::vector<std::string> overrides;  ///< names of inputs taken from the config
    nlohmann::json checks = nlohmann::json::object();
    std::string status = "open";
};

struct ConstructionConfig {
    Scheme scheme = Scheme::Single;
    std::vector<PLMap> generators;
    std::vector<Rational> M;  ///< M_k; missing entries default to 10
    std::size_t stages = 4;
    double conformal_tol = 1e-6;
    std::size_t samples = 200;
    int chi_floor_log2 = 20;
    /// Tracts with more vertices are not passed to the Schwarz-Christoffel solver.
    std::size_t max_vertices = 40;
    std::uint64_t seed = 1;
    std::size_t tau_depth = 12;
    /// Desk-scale replacements for the computed N_k and R_k (index k-1).
    std::vector<std::optional<std::size_t>> override_N;
    std::vector<std::optional<double>> override_R;
};
void to_json(nlohmann::json& j, const ConstructionConfig& c);
ConstructionConfig construction_config_from_json(const nlohmann::json& j);

struct ConstructionState {
    ConstructionConfig config;
    std::vector<StageLedger> stages;  ///< stages[0] is the base
    std::vector<KappaEntry> kappa;
    std::vector<WallData> walls;
    std::optional<RectilinearTract> tract;
    std::shared_ptr<const ConformalMap> F;  ///< deepest partial map F_k
    std::optional<RectilinearTract> candidate;  ///< last tract assembled by the χ search
    double x0 = 4.0;                        ///< left end of the central strip
    double p = 5.0;                         ///< normalization point F_k(p) = p
    std::vector<double> tau;                ///< periodic scheme
    nlohmann::json extra = nlohmann::json::object();
    std::string status = "running";
    std::string failed_step;
    std::string failure;

    std::size_t k() const { return stages.empty() ? 0 : stages.size() - 1; }
    StageLedger& current() { return stages.back(); }
    const StageLedger& stage(std::size_t k) const { return stages.at(k); }
};

/// Base case: s(0) = 0, M̃_0 = M_0 + 1, φ_0(x) = x - M_0, γ_0 = 5, R_0 = 5, T_0 = S.
ConstructionState initial_state(const ConstructionConfig& config);
/// Pushes the ledger for the next stage with k_* and g_k filled in.
StageLedger& begin_stage(ConstructionState& state);

std::vector<Rational> step_I1_choose_omega(ConstructionState& state);
/// Returns N_k and R_k; ConstructionError("step_I2") when R_k is not representable.
std::pair<std::size_t, Rational> step_I2_choose_NR(ConstructionState& state);
DecorationLayout step_I3_build_U(ConstructionState& state);
std::pair<Rational, long> step_I4_choose_chi_s(ConstructionState& state);
void step_I5_define_phi(ConstructionState& state);

/// θ_k^ℓ for ℓ = 0..γ_{k_*} and the layout of U_k (geometry only, no conformal map).
DecorationLayout decoration_layout(const std::vector<double>& theta, const std::vector<Rational>& omega,
                                   const PLMap& g, long gamma_star, const Rational& R);
/// Central strip with walls and both copies of each decoration, as a rectilinear tract.
RectilinearTract assemble_tract(double x0, const std::vector<WallData>& walls,
                                const std::vector<DecorationLayout>& decorations, const Rational& x_far);

/**
 * Checks the pseudo-conjugacy relation at stage k on W (points of the closure of T with
 * Re w <= w_max plus w = ∞). f_k(w) = F^{-(N_k+1)}(w + 2πi s(k)) uses state.F.
 */
PullbackCertificate verify_pullingback(const ConstructionState& state, std::size_t k, const std::vector<cplx>& W,
                                       bool include_infinity = true);
/// 200-point default sample set on T ∩ {Re <= M̃_k + 2}, seeded.
std::vector<cplx> pullback_samples(const ConstructionState& state, std::size_t k, std::size_t count,
                                   std::uint64_t seed);

/// Runs the configured scheme; failures are recorded in the state, not thrown.
ConstructionState run_construction(const ConstructionConfig& config);
ConstructionState build_bounded_tract(const ConstructionConfig& config);
ConstructionState build_periodic_tract(const ConstructionConfig& config);

nlohmann::json certificate_json(const ConstructionState& state);

} // namespace cforge
