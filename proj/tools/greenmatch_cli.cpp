#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "greenmatch/harness.hpp"

namespace {

using greenmatch::ExperimentConfig;

void add_shared_flags(CLI::App* cmd, ExperimentConfig& cfg, std::string& config_path,
                      std::string& methods_csv, std::vector<std::string>& override_kv) {
    cmd->add_option("--config", config_path, "plain-text config file (flags win)");
    cmd->add_option("--system", cfg.system,
                    "gene_network | spring_mass | oddm | harmonic | pendulum");
    cmd->add_option("--n", cfg.n, "observations per trajectory");
    cmd->add_option("--gamma", cfg.gamma, "contamination level");
    cmd->add_option("--reps", cfg.reps, "replications");
    cmd->add_option("--seed", cfg.seed0, "base seed; rep r uses seed + r");
    cmd->add_option("--methods", methods_csv, "comma list of greens,grad_k,grad_km1");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--threads", cfg.threads, "parallel replications (1 = serial reference)");
    cmd->add_option("--sampling", cfg.sampling, "equispaced | uniform");
    cmd->add_option("--bandwidth", cfg.bandwidth, "cv | fixed:<h>");
    cmd->add_option("--grid-H", cfg.grid_h, "matching/smoothing grid size");
    cmd->add_option("--trim", cfg.trim, "boundary trim fraction of [0,C]");
    cmd->add_option("--step", cfg.solver_step, "solver step (0 = C/20000)");
    cmd->add_option("--override", override_kv, "system parameter override name=value")
      ->expected(-1);
}

ExperimentConfig finalize_config(const CLI::App* cmd, ExperimentConfig flags,
                                 const std::string& config_path, const std::string& methods_csv,
                                 const std::vector<std::string>& override_kv) {
    ExperimentConfig cfg = flags;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw CLI::ValidationError("--config", "cannot open " + config_path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        cfg = ExperimentConfig::deserialize(buffer.str());
        // Flags override file values.
        for (const CLI::Option* opt : cmd->get_options()) {
            if (opt->count() == 0) continue;
            const std::string name = opt->get_name();
            if (name == "--system") cfg.system = flags.system;
            else if (name == "--n") cfg.n = flags.n;
            else if (name == "--gamma") cfg.gamma = flags.gamma;
            else if (name == "--reps") cfg.reps = flags.reps;
            else if (name == "--seed") cfg.seed0 = flags.seed0;
            else if (name == "--out") cfg.out_dir = flags.out_dir;
            else if (name == "--threads") cfg.threads = flags.threads;
            else if (name == "--sampling") cfg.sampling = flags.sampling;
            else if (name == "--bandwidth") cfg.bandwidth = flags.bandwidth;
            else if (name == "--grid-H") cfg.grid_h = flags.grid_h;
            else if (name == "--trim") cfg.trim = flags.trim;
            else if (name == "--step") cfg.solver_step = flags.solver_step;
        }
    }
    if (!methods_csv.empty()) {
        cfg.methods.clear();
        std::stringstream ss(methods_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) cfg.methods.push_back(item);
    }
    for (const std::string& kv : override_kv) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--override", "expected name=value");
        cfg.overrides[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    for (const std::string& m : cfg.methods)
        if (m != "greens" && m != "grad_k" && m != "grad_km1")
            throw CLI::ValidationError("--methods", "unknown method " + m);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter estimation and equation discovery for general-order ODE systems"};
    app.require_subcommand(1);

    ExperimentConfig flags;
    std::string config_path, methods_csv, dataset_dir;
    std::vector<std::string> override_kv;
    bool with_ci = false, with_recon = false;

    CLI::App* sim = app.add_subcommand("simulate", "write per-rep trajectory and observation CSVs");
    add_shared_flags(sim, flags, config_path, methods_csv, override_kv);

    CLI::App* est = app.add_subcommand("estimate", "estimate parameters from a simulated dataset");
    add_shared_flags(est, flags, config_path, methods_csv, override_kv);
    est->add_option("--data", dataset_dir, "dataset directory from `simulate`")->required();
    est->add_flag("--ci", with_ci, "emit plug-in standard errors and confidence intervals");
    est->add_flag("--reconstruct", with_recon, "emit reconstructed trajectories per estimate");

    CLI::App* bench = app.add_subcommand("bench", "simulate + estimate + metrics CSVs");
    add_shared_flags(bench, flags, config_path, methods_csv, override_kv);

    CLI::App* disc = app.add_subcommand("discover", "sparse pendulum equation discovery");
    add_shared_flags(disc, flags, config_path, methods_csv, override_kv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        ExperimentConfig cfg =
          finalize_config(active, flags, config_path, methods_csv, override_kv);
        cfg.with_ci = with_ci;
        cfg.with_reconstruction = with_recon;

        if (active == sim) {
            greenmatch::run_simulate(cfg);
        } else if (active == est) {
            greenmatch::run_estimate(cfg, dataset_dir);
        } else if (active == bench) {
            const greenmatch::BenchResult result = greenmatch::run_bench(cfg);
            for (const std::string& m : cfg.methods) {
                const auto it = result.metrics.find(m);
                std::cout << cfg.system << " " << m << ": ";
                if (it != result.metrics.end())
                    std::cout << "RRMSE " << it->second.rrmse_pct << "% RBIAS "
                              << it->second.rbias_pct << "% RSD " << it->second.rsd_pct << "%";
                else
                    std::cout << "no successful replication";
                std::cout << " (mean " << result.mean_runtime_sec.at(m) << " s/rep, "
                          << result.failures.at(m) << " failures)\n";
            }
        } else if (active == disc) {
            const greenmatch::DiscoveryBenchmark bench_result = greenmatch::run_discover(cfg);
            std::cout << "discovery: mean sin-coefficient greens "
                      << bench_result.mean_beta_greens[5] << ", grad_k "
                      << bench_result.mean_beta_grad[5] << "; field error greens "
                      << bench_result.field_err_greens << " vs grad_k "
                      << bench_result.field_err_grad << "\n";
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const greenmatch::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
