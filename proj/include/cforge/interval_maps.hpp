#pragma once
/**
 * Piecewise-linear self-maps of [0,1] with exact rational data.
 *
 * A PLMap is the linear interpolation of (breakpoint, value) pairs. All
 * arithmetic is exact, so orbit identities can be checked with `==`.
 */

#include "cforge/rational.hpp"

#include "json.hpp"

#include <utility>
#include <vector>

namespace cforge {

class PLMap {
public:
    /// Throws DomainError unless breakpoints run strictly from 0 to 1 and values lie in [0,1].
    PLMap(std::vector<Rational> breakpoints, std::vector<Rational> values);

    static PLMap identity();
    /// Connect the dots of (x, y) pairs; x must include 0 and 1.
    static PLMap from_points(const std::vector<std::pair<Rational, Rational>>& pts);

    const std::vector<Rational>& breakpoints() const { return xs_; }
    const std::vector<Rational>& values() const { return ys_; }
    std::size_t pieces() const { return xs_.size() - 1; }

    bool fixes_zero() const { return ys_.front() == 0; }
    bool fixes_one() const { return ys_.back() == 1; }
    bool surjective() const;

    Rational min_value() const;
    Rational max_value() const;
    /// Largest absolute slope.
    Rational lipschitz() const;
    /// Slope on piece i.
    Rational slope(std::size_t i) const;

    /// Exact value at x; DomainError outside [0,1].
    Rational operator()(const Rational& x) const;
    double eval_double(double x) const;

    /// Exact range of the map on [a, b].
    std::pair<Rational, Rational> image(const Rational& a, const Rational& b) const;

    /// Drops interior breakpoints that lie on the segment between their neighbours.
    PLMap simplified() const;

    bool operator==(const PLMap& other) const { return xs_ == other.xs_ && ys_ == other.ys_; }

private:
    std::size_t piece_of(const Rational& x) const;

    std::vector<Rational> xs_;
    std::vector<Rational> ys_;
};

/// Exact value of `map` at x (the free-function form of PLMap::operator()).
Rational eval(const PLMap& map, const Rational& x);

/// outer ∘ inner. Breakpoints: those of `inner` plus inner-preimages of outer's breakpoints.
PLMap compose(const PLMap& outer, const PLMap& inner);

/// Leftmost τ with map(τ) = a; NoSolutionError if a is outside the range.
Rational min_preimage(const PLMap& map, const Rational& a);

/**
 * τ_0 = τ(1/2), τ_1 = τ((1+τ_0)/3), τ_2 = τ((1+4τ_0)/6), τ_{k+3} = τ(τ_k) with τ(a) the
 * leftmost preimage. Requires g(0)=0, g(1)=1 and g(x)<x on (0,1) (checked at
 * breakpoints and piece midpoints; PreconditionError otherwise). The result is checked
 * for strict increase, the cascade identity and the peak property.
 */
std::vector<Rational> tau_sequence(const PLMap& map, std::size_t count);

struct SnapOptions {
    bool fix_zero = false;
    bool fix_one = false;
};

/**
 * A PLMap with rational data within ε of the samples (sup norm at the sample
 * abscissae). Samples are sorted by x; repeated x with different y is an InputError.
 */
PLMap snap_to_generating_set(std::vector<std::pair<double, double>> samples, const Rational& eps,
                             SnapOptions options = {});

/// g from the one-point composant example: (1-2x)/4 on [0,1/2], 2x-1 on [1/2,1].
PLMap one_point_composant_map();
/// g_a: a on [0,1/4], a(2-4x) on [1/4,1/2], 2x-1 on [1/2,1].
PLMap cantor_family_map(const Rational& a);
/// a_1 = 0, a_n = 1 - 2^{-floor((n-1)/2)}.
Rational cantor_parameter(long n);
/// g_{n,...,k}(x) = g_{k+1}∘...∘g_n(x) for the Cantor family.
Rational cantor_backward_image(long n, long k, const Rational& x);

void to_json(nlohmann::json& j, const PLMap& map);
PLMap pl_map_from_json(const nlohmann::json& j);

} // namespace cforge
