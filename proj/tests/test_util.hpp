#pragma once

#include <Eigen/Dense>
#include <functional>

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// 4th-order central finite differences for derivative orders 0..3.
inline double finite_difference(const std::function<double(double)>& f, double t, int order,
                                double step) {
    switch (order) {
        case 0:
            return f(t);
        case 1:
            return (-f(t + 2 * step) + 8 * f(t + step) - 8 * f(t - step) + f(t - 2 * step)) /
                   (12 * step);
        case 2:
            return (-f(t + 2 * step) + 16 * f(t + step) - 30 * f(t) + 16 * f(t - step) -
                    f(t - 2 * step)) /
                   (12 * step * step);
        case 3:
            return (-f(t + 3 * step) + 8 * f(t + 2 * step) - 13 * f(t + step) + 13 * f(t - step) -
                    8 * f(t - 2 * step) + f(t - 3 * step)) /
                   (8 * step * step * step);
        default:
            throw std::invalid_argument("finite_difference: order too high");
    }
}

/// Truncated-Taylor matrix exponential oracle: 150 terms with compensated
/// (Kahan) summation, elementwise.
inline MatrixXd taylor_matrix_exponential(const MatrixXd& m, int terms = 150) {
    const int n = static_cast<int>(m.rows());
    MatrixXd sum = MatrixXd::Identity(n, n);
    MatrixXd comp = MatrixXd::Zero(n, n);
    MatrixXd term = MatrixXd::Identity(n, n);
    for (int k = 1; k <= terms; ++k) {
        term = (term * m) / k;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double y = term(r, c) - comp(r, c);
                const double t = sum(r, c) + y;
                comp(r, c) = (t - sum(r, c)) - y;
                sum(r, c) = t;
            }
        }
    }
    return sum;
}

}  // namespace testutil
