#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "greenmatch/match.hpp"
#include "greenmatch/smooth.hpp"
#include "greenmatch/systems.hpp"

namespace greenmatch {

/// Plug-in sandwich covariance over theta = (beta, nu_1, ..., nu_p).
struct CovarianceReport {
    MatrixXd sigma1;      // Hessian of the integral objective at the estimate
    MatrixXd sigma2;      // middle matrix of the sandwich
    MatrixXd sigma_full;  // Sigma1^{-1} Sigma2 Sigma1^{-1}
    MatrixXd Sigma;       // first m x m block (the beta covariance)
    VectorXd se;          // aligned with DynamicSystem::all_params(): sqrt(diag / n)
    VectorXd sigma_hat_sq;  // per-variable noise variance plug-in
    double eigen_floor = 0.0;
    bool equispaced_design = true;
};

/// Sandwich plug-in for a matching estimate. Exact linearization for Green's
/// matching; for the gradient estimators the same recipe is exposed as a
/// diagnostic (only the level-error influence is propagated). Requires the
/// eval grid to equal the smoothing grid.
CovarianceReport asymptotic_covariance(const EstimateReport& report,
                                       const SmoothedCurves& smoothed, const SampledData& data,
                                       const DynamicSystem& system, const MatchConfig& cfg);

struct ConfidenceInterval {
    std::string name;
    double estimate = 0.0, se = 0.0, lo = 0.0, hi = 0.0;
};

std::vector<ConfidenceInterval> confidence_intervals(const EstimateReport& report,
                                                     const CovarianceReport& covariance,
                                                     const DynamicSystem& system, double level);

/// Forward-solves the system at the estimated parameters, starting from the
/// smoothed state at the first grid point with positive weight.
TrajectorySet reconstruct_trajectories(const EstimateReport& report,
                                       const SmoothedCurves& smoothed,
                                       const DynamicSystem& system, double trim_fraction,
                                       double step, int output_points);

struct MetricsRow {
    double rrmse_pct = 0.0;
    double rbias_pct = 0.0;
    double rsd_pct = 0.0;
};

/// RRMSE / RBIAS / RSD over G replications, relative denominators |beta_l|.
MetricsRow compute_metrics(const MatrixXd& estimates, const VectorXd& truth,
                           const std::vector<std::string>& names = {});

}  // namespace greenmatch
