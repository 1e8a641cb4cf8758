#pragma once

#include <Eigen/Dense>
#include <vector>

#include "greenmatch/numeric.hpp"
#include "greenmatch/systems.hpp"

namespace greenmatch {

enum class WeightKernel { epanechnikov, uniform };

struct SmoothSpec {
    int derivative_k = 0;
    int poly_order_m = 1;  // defaults to k + 1
    double bandwidth_h = 0.0;
    WeightKernel weight_kernel = WeightKernel::epanechnikov;
};

/// Grid estimates of D^k X_i for k = 0..max_k.
struct SmoothedCurves {
    VectorXd grid;              // H evaluation times
    std::vector<MatrixXd> est;  // est[k] is p x H
    VectorXd bandwidths;        // h_0..h_max_k

    int max_order() const { return static_cast<int>(est.size()) - 1; }
    int p() const { return est.empty() ? 0 : static_cast<int>(est[0].rows()); }
};

/// Weighted least-squares fit of Eq.-style centered monomials (t_j - t)^v / v!
/// by normal equations; returns the coefficient a_k estimating D^k X_i(t).
/// Throws NumericalError when fewer than m+1 observations carry positive weight.
double local_poly_fit(const SampledData& data, int variable_i, double t, const SmoothSpec& spec);

/// local_poly_fit on every (variable, derivative order, grid point) with
/// m_k = k + 1. `threads` = 1 is the serial reference path; other values run
/// the OpenMP kernel (bit-identical output).
SmoothedCurves smooth_curves(const SampledData& data, int max_k, const VectorXd& grid,
                             const VectorXd& bandwidths, int threads = 1);

/// 20 log-spaced candidates in [2 * median spacing, C / 4].
VectorXd default_bandwidth_candidates(const SampledData& data, double domain_c);

/// folds-fold CV on level prediction with the order-(k+1) local polynomial;
/// undersmooth multiplies the winner by n^{-1/10} (used for h_0 in Green's
/// matching).
double select_bandwidth(const SampledData& data, int variable_i, int k, const VectorXd& candidates,
                        int folds = 5, bool undersmooth = false);

/// Residual variance of the k=0 local-linear fit at the observation times,
/// degrees-of-freedom corrected by the smoother trace. Returns {sigma^2, trace}.
std::pair<double, double> residual_variance(const SampledData& data, int variable_i, double h0);

}  // namespace greenmatch
