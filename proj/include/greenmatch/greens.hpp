#pragma once

#include <Eigen/Dense>

#include "greenmatch/numeric.hpp"

namespace greenmatch {

/// Companion matrix A(omega) of the operator D^K + sum_k omega_k D^k:
/// superdiagonal ones, last row -omega^T. The sign makes the first row of
/// e^{tA} span the operator's kernel (see kernel_basis), which is checked by
/// the annihilation tests.
MatrixXd companion_matrix(const VectorXd& omega);

/// Scaling-and-squaring with a degree-6 diagonal Pade approximant.
MatrixXd matrix_exponential(const MatrixXd& m);

/// Basis of Ker(D^K + sum omega_k D^k) evaluated at t: first row of e^{t A(omega)}.
VectorXd kernel_basis(const VectorXd& omega, double t);

/// Causal Green's kernel of the operator: entry (1,K) of e^{(t-s)A} for t >= s, else 0.
double green_kernel(const VectorXd& omega, double t, double s);

/// Green's kernel of the pure k-th derivative: (t-s)^{k-1}/(k-1)! for t >= s.
double poly_green_kernel(int k, double t, double s);

/// Precomputed basis rows and Green's kernel values on a (t_grid x s_grid)
/// product. Uses e^{(t-s)A} = e^{tA} e^{-sA}, so the cache costs O(|t|+|s|)
/// matrix exponentials instead of O(|t|*|s|).
class OperatorKernel {
  public:
    OperatorKernel(VectorXd omega, const VectorXd& t_grid, const VectorXd& s_grid);

    int order() const { return static_cast<int>(omega_.size()); }
    const VectorXd& omega() const { return omega_; }
    const MatrixXd& companion() const { return companion_; }

    /// psi(t_grid[h]) as row h.
    const MatrixXd& basis_rows() const { return basis_rows_; }
    /// G(t_grid[h], s_grid[j]) at (h, j).
    const MatrixXd& green_values() const { return green_values_; }

    /// Pointwise evaluations (not cached).
    VectorXd basis(double t) const { return kernel_basis(omega_, t); }
    double green(double t, double s) const { return green_kernel(omega_, t, s); }

  private:
    VectorXd omega_;
    MatrixXd companion_;
    MatrixXd basis_rows_;
    MatrixXd green_values_;
};

}  // namespace greenmatch
