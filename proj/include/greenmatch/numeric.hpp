#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace greenmatch {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when an estimator or solver fails numerically (maps to exit code 2 in the CLI).
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline VectorXd linspace(double a, double b, int n) {
    if (n < 2) throw std::invalid_argument("linspace: need n >= 2");
    VectorXd v(n);
    const double step = (b - a) / (n - 1);
    for (int i = 0; i < n; ++i) v[i] = a + step * i;
    v[n - 1] = b;
    return v;
}

/// Composite-trapezoid weights for a sorted grid: sum_j w_j f(x_j) ~ integral over [x_0, x_{n-1}].
inline VectorXd trapezoid_weights(const VectorXd& x) {
    const int n = static_cast<int>(x.size());
    if (n < 2) throw std::invalid_argument("trapezoid_weights: need >= 2 nodes");
    VectorXd w = VectorXd::Zero(n);
    for (int j = 0; j + 1 < n; ++j) {
        const double half = 0.5 * (x[j + 1] - x[j]);
        w[j] += half;
        w[j + 1] += half;
    }
    return w;
}

inline double trapezoid(const VectorXd& x, const VectorXd& y) {
    if (x.size() != y.size()) throw std::invalid_argument("trapezoid: size mismatch");
    double s = 0.0;
    for (int j = 0; j + 1 < x.size(); ++j) s += 0.5 * (x[j + 1] - x[j]) * (y[j] + y[j + 1]);
    return s;
}

/// Cumulative trapezoid: out[h] = integral of y from x[0] to x[h].
inline VectorXd cumulative_trapezoid(const VectorXd& x, const VectorXd& y) {
    if (x.size() != y.size()) throw std::invalid_argument("cumulative_trapezoid: size mismatch");
    VectorXd out(x.size());
    out[0] = 0.0;
    for (int j = 1; j < x.size(); ++j)
        out[j] = out[j - 1] + 0.5 * (x[j] - x[j - 1]) * (y[j] + y[j - 1]);
    return out;
}

/// Index of t in grid (within abs tolerance), or -1.
inline int grid_index_of(const VectorXd& grid, double t, double tol) {
    const double* begin = grid.data();
    const double* end = begin + grid.size();
    const double* it = std::lower_bound(begin, end, t - tol);
    if (it != end && std::abs(*it - t) <= tol) return static_cast<int>(it - begin);
    return -1;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

/// Inverse standard-normal CDF (Acklam's rational approximation, ~1e-9 absolute).
double normal_quantile(double prob);

}  // namespace greenmatch
