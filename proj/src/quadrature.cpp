#include "cforge/quadrature.hpp"

#include "cforge/error.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace cforge {

QuadratureRule gauss_jacobi(int n, double alpha, double beta) {
    if (n < 1) throw ParameterError("a quadrature rule needs at least one node");
    if (alpha <= -1.0 || beta <= -1.0) throw ParameterError("Jacobi exponents must exceed -1");
    if (std::abs(alpha + beta + 1.0) < 1e-14) throw ParameterError("alpha + beta = -1 is not supported");
    const double ab = alpha + beta;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        double s = 2.0 * k + ab;
        // At k = 0 the common factor alpha + beta cancels.
        J(k, k) = k == 0 ? (beta - alpha) / (ab + 2.0) : (beta * beta - alpha * alpha) / (s * (s + 2.0));
        if (k + 1 < n) {
            double m = k + 1.0;
            double t = 2.0 * m + ab;
            double num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            double den = t * t * (t + 1.0) * (t - 1.0);
            J(k, k + 1) = J(k + 1, k) = std::sqrt(num / den);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    const double mu0 = std::pow(2.0, ab + 1.0) * std::tgamma(alpha + 1.0) * std::tgamma(beta + 1.0) /
                       std::tgamma(ab + 2.0);
    QuadratureRule rule;
    for (int k = 0; k < n; ++k) {
        rule.nodes.push_back(eig.eigenvalues()(k));
        double v = eig.eigenvectors()(0, k);
        rule.weights.push_back(mu0 * v * v);
    }
    return rule;
}

} // namespace cforge
