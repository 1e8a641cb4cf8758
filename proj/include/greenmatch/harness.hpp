#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "greenmatch/discover.hpp"
#include "greenmatch/infer.hpp"
#include "greenmatch/match.hpp"
#include "greenmatch/systems.hpp"

namespace greenmatch {

/// One benchmark protocol: system, sampling design, noise, replication count,
/// methods, smoothing and matching knobs, output location. Serializes to the
/// plain-text config format (sections of key = value); flags override.
struct ExperimentConfig {
    std::string system = "gene_network";
    std::map<std::string, double> overrides;
    int n = 50;
    double gamma = 0.03;
    int reps = 1;
    std::uint64_t seed0 = 1;
    std::vector<std::string> methods = {"greens"};
    std::string sampling = "equispaced";  // equispaced | uniform
    std::string bandwidth = "cv";         // cv | fixed:<h>
    bool undersmooth = true;
    int grid_h = 401;
    double trim = 0.05;
    std::string out_dir = ".";
    int threads = 1;
    double solver_step = 0.0;  // 0: C / 20000
    int traj_points = 2001;
    bool with_ci = false;
    bool with_reconstruction = false;
    double ci_level = 0.95;

    std::string serialize() const;
    static ExperimentConfig deserialize(const std::string& text);

    DynamicSystem make_system() const;
    double effective_step(const DynamicSystem& sys) const;
    Sampling sampling_mode() const;
};

/// Smoothed inputs for each estimator family of one replication.
struct RepSmooths {
    SmoothedCurves greens;    // level only, undersmoothed h_0
    SmoothedCurves gradient;  // orders 0..K, CV bandwidths
    bool gradient_built = false;
    double cv_seconds_level = 0.0;
    double cv_seconds_all = 0.0;
};

struct RepEstimate {
    int rep = 0;
    std::string method;
    EstimateReport report;
    bool failed = false;
    std::string error;
    double runtime_sec = 0.0;
    std::vector<ConfidenceInterval> cis;
};

struct BenchResult {
    std::vector<std::string> methods;
    std::map<std::string, MatrixXd> estimates;  // successful reps x all-params
    std::map<std::string, MetricsRow> metrics;
    std::map<std::string, double> mean_runtime_sec;
    std::map<std::string, int> failures;
    std::vector<RepEstimate> rows;  // every (rep, method)
};

/// Equispaced smoothing/eval grid of about `target_h` points, with the grid
/// size rounded up until every forcing breakpoint lands on a node (keeps the
/// design quadrature second-order at the jumps).
VectorXd benchmark_grid(const DynamicSystem& sys, int target_h);

/// Per-replication observation data with the shared truth trajectory.
SampledData make_rep_data(const DynamicSystem& sys, const TrajectorySet& truth,
                          const ExperimentConfig& cfg, int rep);

/// Bandwidth selection + smoothing for one replication. `need_gradient`
/// adds the derivative orders the gradient estimators require.
RepSmooths smooth_for_rep(const SampledData& data, const DynamicSystem& sys,
                          const ExperimentConfig& cfg, bool need_gradient);

/// Runs the estimators of cfg.methods on one replication.
std::vector<RepEstimate> estimate_rep(const DynamicSystem& sys, const SampledData& data,
                                      const ExperimentConfig& cfg, int rep);

BenchResult run_bench(const ExperimentConfig& cfg, bool write_files = true);

void run_simulate(const ExperimentConfig& cfg);

/// Estimate from a dataset directory produced by run_simulate.
void run_estimate(const ExperimentConfig& cfg, const std::string& dataset_dir);

DiscoveryBenchmark run_discover(const ExperimentConfig& cfg, bool write_files = true);

void write_estimate_rows(const ExperimentConfig& cfg, const DynamicSystem& sys,
                         const std::vector<RepEstimate>& rows);

/// CSV helpers shared by the commands.
void write_trajectory_csv(const std::string& path, const TrajectorySet& traj);
TrajectorySet read_trajectory_csv(const std::string& path, int p, int order_k);
void write_observations_csv(const std::string& path, const SampledData& data);
SampledData read_observations_csv(const std::string& path);

}  // namespace greenmatch
