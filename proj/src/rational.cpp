#include "cforge/rational.hpp"

#include "cforge/error.hpp"

#include <cmath>

namespace cforge {

Rational parse_rational(const std::string& text) {
    if (text.empty()) throw InputError("empty rational literal");
    auto dot = text.find('.');
    if (dot != std::string::npos) {
        std::string digits = text.substr(0, dot) + text.substr(dot + 1);
        std::size_t places = text.size() - dot - 1;
        mpz_class num;
        if (num.set_str(digits, 10) != 0) throw InputError("bad decimal literal '" + text + "'");
        mpz_class den;
        mpz_ui_pow_ui(den.get_mpz_t(), 10, places);
        Rational q(num, den);
        q.canonicalize();
        return q;
    }
    Rational q;
    if (q.set_str(text, 10) != 0) throw InputError("bad rational literal '" + text + "'");
    if (q.get_den() == 0) throw InputError("zero denominator in '" + text + "'");
    q.canonicalize();
    return q;
}

std::string to_string(const Rational& q) { return q.get_str(10); }

double to_double(const Rational& q) { return q.get_d(); }

Rational from_double(double x) {
    if (!std::isfinite(x)) throw DomainError("non-finite value cannot become a rational");
    Rational q(x);
    q.canonicalize();
    return q;
}

Rational floor_q(const Rational& q) {
    mpz_class f;
    mpz_fdiv_q(f.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    return Rational(f);
}

namespace {

Rational simplest_nonneg(const Rational& lo, const Rational& hi) {
    Rational fl = floor_q(lo);
    if (fl == lo) return lo;
    if (fl + 1 <= hi) return fl + 1;
    Rational inner = simplest_nonneg(1 / (hi - fl), 1 / (lo - fl));
    return fl + 1 / inner;
}

} // namespace

Rational simplest_within(const Rational& x, const Rational& tol) {
    if (tol < 0) throw ParameterError("negative tolerance");
    Rational lo = x - tol, hi = x + tol;
    if (lo <= 0 && hi >= 0) return Rational(0);
    if (hi < 0) return -simplest_nonneg(-hi, -lo);
    return simplest_nonneg(lo, hi);
}

Rational pow2(long e) {
    mpz_class p;
    mpz_ui_pow_ui(p.get_mpz_t(), 2, static_cast<unsigned long>(e < 0 ? -e : e));
    return e < 0 ? Rational(mpz_class(1), p) : Rational(p);
}

} // namespace cforge
