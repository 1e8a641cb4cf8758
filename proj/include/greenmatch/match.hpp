#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "greenmatch/greens.hpp"
#include "greenmatch/smooth.hpp"
#include "greenmatch/systems.hpp"

namespace greenmatch {

enum class MatchMethod { greens, grad_k, grad_km1 };
enum class GradOrder { K, K_minus_1 };

std::string method_name(MatchMethod m);

struct MatchConfig {
    VectorXd eval_grid;      // empty: use the smoothing grid
    VectorXd weight_w;       // empty: indicator of [trim*C, (1-trim)*C]
    double trim_fraction = 0.05;
    enum class Quadrature { trapezoid } quadrature = Quadrature::trapezoid;
    enum class Solver { automatic, least_squares, gauss_newton } solver = Solver::automatic;
    double gn_tol = 1e-8;
    int gn_max_iter = 200;
    int threads = 1;
};

struct EstimateReport {
    VectorXd beta_hat;
    MatrixXd omega_hat;                // p x K: estimates, or the known values echoed
    std::vector<VectorXd> alpha_hat;   // per variable; empty for order-K gradient matching
    double objective = 0.0;
    int iters = 0;
    bool converged = true;
    std::string method;
    double condition_number = 0.0;     // worst per-variable least-squares block
    VectorXd all_estimates;            // aligned with DynamicSystem::all_params()
};

/// Internal design shared by the three matching estimators and by the
/// covariance plug-in. Per-variable blocks are stored unweighted; solvers
/// scale rows by sqrt(w). The H x S operator `op[i]` maps driving-function
/// values on the s-grid to the matching residual rows (a Green's-kernel
/// quadrature, a point selection, or a cumulative trapezoid depending on the
/// method).
struct MethodDesign {
    MatchMethod method = MatchMethod::greens;
    bool omega_in_nu = false;  // operator coefficients estimated inside nu_i
    int p = 0, K = 0, m = 0;
    int alpha_dim = 0;         // per-variable alpha block size

    VectorXd t_eval, w, sqrt_w, quad_eval;
    VectorXd s_grid, s_quad_full;
    MatrixXd quad_s;                    // H x S support-restricted trapezoid weights
    MatrixXd xhat_s;                    // p x S levels on s_grid
    std::vector<MatrixXd> deriv_eval;   // D^k Xhat at eval times, k = 0..max needed

    std::vector<VectorXd> Z;     // response per variable (H)
    std::vector<MatrixXd> Psi;   // nuisance block per variable (H x nu_dim)
    std::vector<MatrixXd> Feat;  // separable only: S x dim(beta_i) features on s_grid
    std::vector<std::shared_ptr<const MatrixXd>> op;  // H x S, shared across variables

    // Raw kernel values (no quadrature weights) for covariance and gauge checks.
    std::shared_ptr<std::vector<MatrixXd>> poly_green;       // G_1..G_K at (t_eval x s_grid)
    std::vector<std::shared_ptr<const MatrixXd>> op_green;   // per-variable operator kernel

    const DynamicSystem* system = nullptr;
    bool separable_path = false;

    int nu_dim() const { return alpha_dim + (omega_in_nu ? K : 0); }
    /// d f_i / d beta at s-grid column j (features, analytic jacobian, or FD).
    VectorXd drive_beta_jacobian(int i, int j, const VectorXd& beta) const;
};

/// Spec-facing view of the Green's-matching design: weighted blocks, rows
/// scaled by sqrt(w(t_h)).
struct DesignBlocks {
    VectorXd t_eval, sqrt_w;
    std::vector<VectorXd> Z;
    std::vector<MatrixXd> Psi;
    std::vector<MatrixXd> Phi;  // separable systems only
};

MethodDesign build_method_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                 MatchMethod method, const MatchConfig& cfg);

DesignBlocks build_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                          const MatchConfig& cfg);

EstimateReport solve_design(const MethodDesign& design, const MatchConfig& cfg);

/// Green's matching treating the operator coefficients as unknowns: poly
/// kernel basis plus the -int G_{K-k} Xhat columns, solved per Algorithm-1
/// least squares when separable, profiled Gauss-Newton otherwise.
EstimateReport greens_match_unknown_op(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                       const MatchConfig& cfg);

/// Green's matching with the system's known operator (basis and kernel of the
/// full operator).
EstimateReport greens_match_known_op(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                     const MatchConfig& cfg);

/// Dispatches on system.omega_known.
EstimateReport greens_match(const SmoothedCurves& smoothed, const DynamicSystem& system,
                            const MatchConfig& cfg);

/// Order-K or order-(K-1) gradient matching on pre-smoothed derivatives.
EstimateReport gradient_match(const SmoothedCurves& smoothed, const DynamicSystem& system,
                              GradOrder order, const MatchConfig& cfg);

struct GaugeShiftReport {
    double beta_max_diff = 0.0;
    double omega_max_diff = 0.0;
    double alpha_max_diff = 0.0;
    std::vector<VectorXd> alpha_base, alpha_shifted, alpha_predicted;
};

/// Re-solves the unknown-operator design with G_k(t,s) + psi(t)^T u_k(s) and
/// reports how the estimates moved; alpha_predicted carries the closed-form
/// nuisance shift. u[k-1] holds u_k on the s-grid (K rows, S columns).
GaugeShiftReport gauge_shift_check(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                   const MatchConfig& cfg, const std::vector<MatrixXd>& u);

}  // namespace greenmatch
