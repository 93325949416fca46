#pragma once
// Gauss-Jacobi rules by the Golub-Welsch algorithm.

#include <vector>

namespace cforge {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point rule for ∫_{-1}^{1} (1-t)^alpha (1+t)^beta f(t) dt; alpha, beta > -1.
QuadratureRule gauss_jacobi(int n, double alpha, double beta);
inline QuadratureRule gauss_legendre(int n) { return gauss_jacobi(n, 0.0, 0.0); }

} // namespace cforge
