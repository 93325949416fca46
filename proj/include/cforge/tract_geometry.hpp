#pragma once
/**
 * Rectilinear logarithmic tracts with exact rational geometry.
 *
 * Imaginary parts are stored in units of π, so the strip {|Im z| < π/2} has
 * y-range (-1/2, 1/2) and the segment I_z spans y ± 2. A tract is described by
 * an axis-aligned boundary chain whose first and last vertices each emit a
 * horizontal ray towards Re z = +∞; the tract is the region between the rays.
 */

#include "cforge/rational.hpp"
#include "json.hpp"

#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace cforge {

struct QPoint {
    Rational x;
    Rational y;  ///< in units of π
    bool operator==(const QPoint& o) const { return x == o.x && y == o.y; }
};

/// A point of T ∪ {∞}.
struct TractPoint {
    Rational x;
    Rational y;  ///< in units of π
    bool infinite = false;
    static TractPoint at(Rational x, Rational y) { return {std::move(x), std::move(y), false}; }
    static TractPoint at_infinity() { return {Rational(0), Rational(0), true}; }
    std::complex<double> to_complex() const;
    bool operator==(const TractPoint& o) const {
        return infinite == o.infinite && (infinite || (x == o.x && y == o.y));
    }
};

/// Open interval (lo, hi) of imaginary parts, in units of π.
struct YInterval {
    Rational lo;
    Rational hi;
    bool contains(const Rational& y) const { return lo < y && y < hi; }
};

enum class PieceKind { Central, Iris, Channel, Quadrilateral, CrossCut };
std::string to_string(PieceKind kind);

/// Labelled sub-piece: an axis-aligned box [x0,x1] × [y0,y1] (a vertical arc when x0 = x1).
struct TractPiece {
    PieceKind kind = PieceKind::Central;
    int j = 0;
    int i = 0;
    Rational x0, x1, y0, y1;
    Rational opening;  ///< iris opening χ_j in units of π
};

class RectilinearTract {
public:
    /// Throws GeometryError for non-axis-aligned, degenerate or self-intersecting chains.
    explicit RectilinearTract(std::vector<QPoint> chain, std::vector<TractPiece> pieces = {});

    const std::vector<QPoint>& chain() const { return chain_; }
    const std::vector<TractPiece>& pieces() const { return pieces_; }
    void add_piece(TractPiece p) { pieces_.push_back(std::move(p)); }

    Rational min_x() const { return min_x_; }
    Rational max_vertex_x() const { return max_x_; }
    Rational min_y() const { return min_y_; }
    Rational max_y() const { return max_y_; }
    bool is_vertex_abscissa(const Rational& x) const;
    /// Sorted vertex abscissae.
    const std::vector<Rational>& abscissae() const { return xs_; }

    /// {y : x + iπy ∈ T} as disjoint open intervals, exact.
    std::vector<YInterval> section(const Rational& x) const;
    /// Open membership; ∞ belongs to T ∪ {∞}.
    bool contains(const TractPoint& p) const;

private:
    struct HEdge {
        Rational y, x0, x1;
        bool ray = false;  ///< x1 = +∞
    };
    struct VEdge {
        Rational x, y0, y1;
    };
    std::vector<YInterval> section_strictly_between(const Rational& x, bool left) const;

    std::vector<QPoint> chain_;
    std::vector<TractPiece> pieces_;
    std::vector<HEdge> hedges_;
    std::vector<VEdge> vedges_;
    std::vector<Rational> xs_;
    Rational min_x_, max_x_, min_y_, max_y_;
};

/// Membership of an ordinary complex point (imaginary part in plain units).
bool contains(const RectilinearTract& t, std::complex<double> z);
/// Euclidean distance from z to ∂T, including the two rays (plain units).
double boundary_distance(const RectilinearTract& t, std::complex<double> z);

/// {x > x0, |Im z| < π·h} with h in units of π.
RectilinearTract half_strip(const Rational& x0, const Rational& half_height);

struct CheckResult {
    std::string name;
    bool passed = true;
    std::optional<TractPoint> witness;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    bool ok() const;
    const CheckResult& check(const std::string& name) const;
};

ValidationReport validate_tract(const RectilinearTract& t);

/// Translation by 2πi·m shifts y by 2m.
RectilinearTract translate_vertically(const RectilinearTract& t, long m);

struct CrossCut {
    Rational x;
    Rational lo, hi;           ///< endpoints of the open component (units of π)
    bool clipped = false;      ///< an endpoint comes from the end of I_z rather than ∂T
    TractPoint lower() const { return TractPoint::at(x, lo); }
    TractPoint upper() const { return TractPoint::at(x, hi); }
};

struct CrossCutSet {
    std::vector<CrossCut> cuts;
    Rational x;                ///< abscissa actually used
    bool perturbed = false;    ///< true when Re z met a vertex abscissa and was moved by 2^-20
};

inline const Rational kDegeneracyShift = Rational(1, 1048576);

/// Components of I_z ∩ T.
CrossCutSet cross_cuts(const RectilinearTract& t, const TractPoint& z);

/// True when p lies on I_z (both finite).
bool on_segment(const TractPoint& p, const TractPoint& z);

struct SeparationResult {
    unsigned value = 0;
    bool perturbed = false;
};

/// sep_T(a, b; z). DomainError when a, b or z lie outside T ∪ {∞}; PreconditionError when a or b lies on I_z.
SeparationResult separation(const RectilinearTract& t, const TractPoint& a, const TractPoint& b, const TractPoint& z);
unsigned separation_number(const RectilinearTract& t, const TractPoint& a, const TractPoint& b, const TractPoint& z);

struct Triple {
    TractPoint a, b, z;
};

struct ParityViolation {
    Triple original;
    Triple perturbed;
    unsigned before = 0, after = 0;
};

struct ParityReport {
    std::size_t triples = 0;
    std::size_t comparisons = 0;
    std::size_t skipped = 0;  ///< perturbations leaving T or landing on an I-segment
    std::vector<ParityViolation> violations;
};

/// Moves each argument in the 8 compass directions by δ and compares parities.
ParityReport parity_stability_check(const RectilinearTract& t, const std::vector<Triple>& triples,
                                    const Rational& delta);

struct SpanWitness {
    bool found = false;
    std::size_t index = 0;          ///< position of the witness in X
    TractPoint z, w;
    std::size_t components = 0;     ///< components of X as a grid graph when no witness exists
};

/**
 * Searches X ⊂ A × A for a pair with w ∈ I_z, allowing |Re w - Re z| <= slack for grid data.
 * Two pairs are adjacent in X when both coordinates move by at most `step` in each direction.
 */
SpanWitness span_separation_witness(const std::vector<TractPoint>& A,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& X,
                                    const Rational& slack = 0, const Rational& step = 0);

struct SvgOptions {
    double scale = 40.0;              ///< pixels per unit of real part
    std::optional<Rational> x_far;    ///< right edge of the drawing
    bool show_translate = true;       ///< draw T + 2πi in light grey
    std::vector<TractPoint> segments; ///< centres of I_z segments to draw
};
void write_svg(std::ostream& out, const RectilinearTract& t, const SvgOptions& options = {});

void to_json(nlohmann::json& j, const RectilinearTract& t);
RectilinearTract tract_from_json(const nlohmann::json& j);

} // namespace cforge
