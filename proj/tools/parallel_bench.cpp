// Times the OpenMP kernels against the serial reference path on a realistic
// workload: local-polynomial smoothing of a gene-network replication and a
// parallel map over benchmark replications.

#include <chrono>
#include <cstdio>

#include "greenmatch/harness.hpp"
#include "greenmatch/parallel.hpp"
#include "greenmatch/smooth.hpp"
#include "greenmatch/systems.hpp"

using namespace greenmatch;
using Clock = std::chrono::steady_clock;

namespace {

double time_smoothing(const SampledData& data, const VectorXd& grid, int threads) {
    const auto t0 = Clock::now();
    const SmoothedCurves out = smooth_curves(data, 1, grid, VectorXd::Constant(2, 1.2), threads);
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("  checksum %.6f\n", out.est[0].sum() + out.est[1].sum());
    return elapsed;
}

double time_bench(int threads) {
    ExperimentConfig cfg;
    cfg.system = "harmonic";
    cfg.n = 50;
    cfg.gamma = 0.03;
    cfg.reps = 8;
    cfg.seed0 = 11;
    cfg.methods = {"greens"};
    cfg.threads = threads;
    cfg.out_dir = "/tmp/greenmatch_parbench";
    const auto t0 = Clock::now();
    const BenchResult result = run_bench(cfg, false);
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("  greens RRMSE %.4f%%\n", result.metrics.at("greens").rrmse_pct);
    return elapsed;
}

}  // namespace

int main() {
    const int hw = hardware_threads();
    std::printf("hardware threads: %d\n", hw);

    const DynamicSystem sys = builtin_system("gene_network");
    const VectorXd grid = linspace(0.0, sys.domain_C, 401);
    const TrajectorySet truth = solve_forward(sys, sys.domain_C / 20000.0, grid);
    const SampledData data = simulate_observations(truth, sys, 250, 0.03, Sampling::equispaced, 3);

    std::printf("\nsmoothing kernel (p=50, n=250, H=401, orders 0..1)\n");
    std::printf("serial reference:\n");
    const double smooth_serial = time_smoothing(data, grid, 1);
    std::printf("  %.3f s\n", smooth_serial);
    std::printf("openmp (%d threads):\n", hw);
    const double smooth_par = time_smoothing(data, grid, hw);
    std::printf("  %.3f s  (speedup %.2fx)\n", smooth_par, smooth_serial / smooth_par);

    std::printf("\nreplication map (harmonic bench, 8 reps)\n");
    std::printf("serial reference:\n");
    const double bench_serial = time_bench(1);
    std::printf("  %.3f s\n", bench_serial);
    std::printf("openmp (%d threads):\n", hw);
    const double bench_par = time_bench(hw);
    std::printf("  %.3f s  (speedup %.2fx)\n", bench_par, bench_serial / bench_par);
    return 0;
}
