#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "greenmatch/match.hpp"
#include "greenmatch/smooth.hpp"
#include "greenmatch/systems.hpp"

namespace greenmatch {

struct CandidateLibrary {
    std::vector<std::string> names;
    std::vector<std::function<double(double)>> features;

    int q() const { return static_cast<int>(features.size()); }
    VectorXd eval(double x) const {
        VectorXd g(q());
        for (int l = 0; l < q(); ++l) g[l] = features[l](x);
        return g;
    }
};

/// (1, X, X^2, X^3, X^4, sin X, cos X)
CandidateLibrary pendulum_library();

/// Lasso with an unpenalized block: min ||y - U a - P b||^2 + lambda * sum |b_l|
/// where P's columns are standardized to unit norm internally and b is
/// reported on the original scale.
struct LassoFit {
    VectorXd beta;        // penalized coefficients, original scale
    VectorXd unpen;       // unpenalized coefficients
    double lambda = 0.0;
    double rss = 0.0;
    int sweeps = 0;
    bool converged = true;
};

LassoFit lasso_cd(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y, double lambda,
                  const VectorXd& warm_scaled = VectorXd(), double tol = 1e-10,
                  int max_sweeps = 100000);

/// Smallest lambda that zeroes every penalized coefficient.
double lasso_lambda_max(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y);

/// Max KKT violation of a fit: |2 P~_l' r| - lambda on the inactive set,
/// |2 P~_l' r - lambda sign| on the active set (standardized columns).
double lasso_kkt_violation(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y,
                           const LassoFit& fit);

struct DiscoveryResult {
    VectorXd lambda_grid;   // descending
    MatrixXd beta_path;     // n_lambda x q, original scale
    VectorXd bic;
    int selected_index = 0;
    double selected_lambda = 0.0;
    VectorXd selected_beta;
    VectorXd selected_unpen;
    std::vector<std::string> support;
};

struct DiscoverOptions {
    int n_lambda = 50;
    double lambda_min_ratio = 1e-4;
    double cd_tol = 1e-10;
    int cd_max_sweeps = 100000;
};

/// L1-penalized Green's matching over the library: separable design with
/// Phi columns int G_K(t_h, s) g_l(Xhat(s)) ds, kernel-space coefficients
/// unpenalized, lambda picked by BIC down a 50-step log-spaced path.
DiscoveryResult sparse_greens_match(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                    const MatchConfig& cfg, double domain_c,
                                    const VectorXd& lambda_grid = VectorXd(),
                                    const DiscoverOptions& opt = {});

/// Same penalized fit on the order-2 gradient-matching design
/// (D^2 Xhat regressed on the library evaluated at Xhat).
DiscoveryResult sparse_gradient_match(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                      const MatchConfig& cfg, double domain_c,
                                      const VectorXd& lambda_grid = VectorXd(),
                                      const DiscoverOptions& opt = {});

struct VectorField {
    VectorXd x_grid, dx_grid;
    MatrixXd u, v, magnitude;  // indexed (x, dx); u equals dx identically
};

VectorField evaluate_vector_field(const VectorXd& beta, const CandidateLibrary& lib,
                                  const VectorXd& x_grid, const VectorXd& dx_grid);

struct DiscoveryRep {
    int rep = 0;
    double x0 = 0.0, dx0 = 0.0;
    DiscoveryResult greens;
    DiscoveryResult grad;
};

struct DiscoveryBenchmark {
    std::vector<DiscoveryRep> reps;
    VectorXd mean_beta_greens, mean_beta_grad, beta_truth;
    double field_err_greens = 0.0, field_err_grad = 0.0;  // mean arrow error, [-2,2]^2 grid
    CandidateLibrary library;
    VectorXd field_x, field_dx;
};

struct DiscoveryProtocol {
    int reps = 20;
    int n = 50;
    double gamma = 0.05;
    std::uint64_t seed0 = 1;
    double domain_c = 20.0;
    int grid_h = 401;
    double trim = 0.05;
    double solver_step = 1e-3;
    int field_points = 21;
    int threads = 1;
};

/// Replicated pendulum discovery: random initial values on [-0.5, 0.5]^2,
/// noisy observation, discovery by Green's matching and order-2 gradient
/// matching, plus the vector-field comparison of the averaged coefficients.
DiscoveryBenchmark discovery_benchmark(const DiscoveryProtocol& proto);

}  // namespace greenmatch
