#pragma once
// Thin helpers around GMP rationals.

#include <gmpxx.h>

#include <string>

namespace cforge {

using Rational = mpq_class;

/// Parses "p/q", "p" or a finite decimal such as "0.25".
Rational parse_rational(const std::string& text);
std::string to_string(const Rational& q);
double to_double(const Rational& q);
/// Exact rational value of a finite double.
Rational from_double(double x);
/// The rational with the smallest denominator in [x - tol, x + tol].
Rational simplest_within(const Rational& x, const Rational& tol);
Rational floor_q(const Rational& q);
Rational pow2(long e);

} // namespace cforge
