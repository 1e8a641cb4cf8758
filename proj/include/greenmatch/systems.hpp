#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "greenmatch/numeric.hpp"

namespace greenmatch {

struct ParamInfo {
    std::string name;
    double truth = 0.0;
};

/// ODE model D_i^K X_i = f_i(X, t; beta) with linear differential operator
/// D^K + sum_k omega_{ik} D^k. Drive parameters live in `beta_params` (flat,
/// per-variable blocks when the system is separable); operator coefficients
/// in `omega` with `omega_known` telling estimators whether to treat them as
/// unknowns.
struct DynamicSystem {
    std::string name;
    int p = 0;
    int order_K = 1;
    double domain_C = 0.0;

    // f(X, t, beta) -> R^p, beta in flat layout.
    std::function<VectorXd(const VectorXd&, double, const VectorXd&)> drive;

    // Separable form f_i = g_i(X, t)^T beta_i. Empty feature blocks are allowed.
    bool separable = false;
    std::function<VectorXd(int, const VectorXd&, double)> features;
    std::vector<int> beta_block_sizes;

    std::vector<ParamInfo> beta_params;

    // d f_i / d beta (full flat beta) and d f_i / d X. Analytic for the built-ins.
    std::function<VectorXd(int, const VectorXd&, double, const VectorXd&)> drive_beta_jac;
    std::function<VectorXd(int, const VectorXd&, double, const VectorXd&)> drive_state_jac;

    MatrixXd omega;  // p x K, row i = (omega_{i0}, ..., omega_{i,K-1})
    bool omega_known = true;
    std::vector<ParamInfo> omega_params;  // flat, variable-major; empty when known

    MatrixXd init;  // p x K, entry (i,k) = D^k X_i(0)

    // Times where a forcing term jumps; the solver and quadratures split here.
    std::vector<double> breakpoints;

    int beta_dim() const { return static_cast<int>(beta_params.size()); }
    int beta_block_offset(int i) const;
    VectorXd beta_truth() const;
    VectorXd beta_block(const VectorXd& beta, int i) const;

    /// Flat [beta; omega-if-unknown] truth vector and names, the layout used
    /// by estimate reports and metrics.
    std::vector<ParamInfo> all_params() const;
};

struct TrajectorySet {
    VectorXd grid;                     // strictly increasing times in [0, C]
    std::vector<MatrixXd> derivative;  // derivative[k] is p x |grid|, k = 0..K

    int order() const { return static_cast<int>(derivative.size()) - 1; }
    int p() const { return derivative.empty() ? 0 : static_cast<int>(derivative[0].rows()); }

    /// Cubic Hermite interpolation of D^0 X_i using the stored first derivative.
    double interpolate_level(int i, double t) const;
};

struct SampledData {
    VectorXd times;     // n observation times, sorted ascending
    MatrixXd obs;       // p x n
    VectorXd noise_sigma;
    double gamma = 0.0;
    std::uint64_t seed = 0;

    int n() const { return static_cast<int>(times.size()); }
    int p() const { return static_cast<int>(obs.rows()); }
};

enum class Sampling { equispaced, uniform_iid };

/// Built-in benchmark systems with their published parameter values.
/// `overrides` may re-target declared parameters plus the structural knobs
/// "p", "C" and initial conditions "x0_<i>" / "d<k>x0_<i>".
DynamicSystem builtin_system(const std::string& name,
                             const std::map<std::string, double>& overrides = {});

/// Fixed-step classical RK4 on the order-1 companion form, splitting exactly
/// at forcing breakpoints and output times. Returns all derivative orders
/// 0..K (order K from the equation itself).
TrajectorySet solve_forward(const DynamicSystem& system, double step, const VectorXd& output_grid);

/// Same, but from arbitrary parameters / initial state / start time
/// (used for trajectory reconstruction from estimates).
TrajectorySet solve_forward_with(const DynamicSystem& system, const VectorXd& beta,
                                 const MatrixXd& omega, const MatrixXd& init, double t0,
                                 double step, const VectorXd& output_grid);

/// Noisy observations Y_i(t_j) ~ N(X_i(t_j), sigma_i^2) with
/// sigma_i^2 = gamma^2 * int X_i^2 / C (trapezoid on the trajectory grid).
/// gamma = 0 returns the interpolated truth and never touches the RNG.
SampledData simulate_observations(const TrajectorySet& traj, const DynamicSystem& system, int n,
                                  double gamma, Sampling sampling, std::uint64_t seed);

}  // namespace greenmatch
