#include "greenmatch/greens.hpp"

#include <cmath>

namespace greenmatch {

MatrixXd companion_matrix(const VectorXd& omega) {
    const int k = static_cast<int>(omega.size());
    if (k < 1) throw std::invalid_argument("companion_matrix: need K >= 1");
    MatrixXd a = MatrixXd::Zero(k, k);
    for (int r = 0; r + 1 < k; ++r) a(r, r + 1) = 1.0;
    a.row(k - 1) = -omega.transpose();
    return a;
}

MatrixXd matrix_exponential(const MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exponential: non-square input");
    if (!m.allFinite()) throw std::invalid_argument("matrix_exponential: non-finite entries");
    const int n = static_cast<int>(m.rows());
    const MatrixXd id = MatrixXd::Identity(n, n);

    const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();  // inf-norm
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const MatrixXd a = m / std::ldexp(1.0, squarings);

    // Degree-6 diagonal Pade: exp(a) ~ q(-a)^{-1} q(a), q(x) = sum c_j x^j.
    double c[7];
    c[0] = 1.0;
    for (int j = 1; j <= 6; ++j) c[j] = c[j - 1] * (7.0 - j) / (j * (13.0 - j));
    const MatrixXd a2 = a * a;
    const MatrixXd even = c[0] * id + c[2] * a2 + c[4] * a2 * a2 + c[6] * a2 * a2 * a2;
    const MatrixXd odd = a * (c[1] * id + c[3] * a2 + c[5] * a2 * a2);

    MatrixXd f = (even - odd).partialPivLu().solve(even + odd);
    for (int s = 0; s < squarings; ++s) f = f * f;
    return f;
}

VectorXd kernel_basis(const VectorXd& omega, double t) {
    return matrix_exponential(t * companion_matrix(omega)).row(0).transpose();
}

double green_kernel(const VectorXd& omega, double t, double s) {
    if (t < s) return 0.0;
    const int k = static_cast<int>(omega.size());
    return matrix_exponential((t - s) * companion_matrix(omega))(0, k - 1);
}

double poly_green_kernel(int k, double t, double s) {
    if (k < 1) throw std::invalid_argument("poly_green_kernel: need k >= 1");
    if (t < s) return 0.0;
    double v = 1.0;
    for (int j = 1; j < k; ++j) v *= (t - s) / j;
    return v;
}

OperatorKernel::OperatorKernel(VectorXd omega, const VectorXd& t_grid, const VectorXd& s_grid)
  : omega_(std::move(omega)), companion_(companion_matrix(omega_)) {
    const int k = order();
    const int nt = static_cast<int>(t_grid.size());
    const int ns = static_cast<int>(s_grid.size());

    basis_rows_.resize(nt, k);
    for (int h = 0; h < nt; ++h)
        basis_rows_.row(h) = matrix_exponential(t_grid[h] * companion_).row(0);

    // Last columns of e^{-s A}; then G(t,s) = psi(t) . col(s) on t >= s.
    MatrixXd neg_cols(ns, k);
    for (int j = 0; j < ns; ++j)
        neg_cols.row(j) = matrix_exponential(-s_grid[j] * companion_).col(k - 1).transpose();

    green_values_.resize(nt, ns);
    for (int h = 0; h < nt; ++h) {
        for (int j = 0; j < ns; ++j) {
            green_values_(h, j) =
              (t_grid[h] >= s_grid[j]) ? basis_rows_.row(h).dot(neg_cols.row(j)) : 0.0;
        }
    }
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("normal_quantile: p in (0,1)");
    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double q, r, x;
    if (prob < plow) {
        q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (prob > 1.0 - plow) {
        q = std::sqrt(-2.0 * std::log(1.0 - prob));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        q = prob - 0.5;
        r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // One Halley refinement keeps the absolute error below 1e-12.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

}  // namespace greenmatch
