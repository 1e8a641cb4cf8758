#include "greenmatch/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "greenmatch/csv.hpp"
#include "greenmatch/parallel.hpp"

namespace greenmatch {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string join_methods(const std::vector<std::string>& methods) {
    std::string out;
    for (size_t i = 0; i < methods.size(); ++i) out += (i ? "," : "") + methods[i];
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

GradOrder order_of(const std::string& method) {
    return method == "grad_k" ? GradOrder::K : GradOrder::K_minus_1;
}

int max_needed_order(const DynamicSystem& sys, const std::vector<std::string>& methods,
                     bool with_reconstruction) {
    int need = 0;
    for (const std::string& m : methods) {
        if (m == "grad_k") need = std::max(need, sys.order_K);
        if (m == "grad_km1") need = std::max(need, sys.order_K - 1);
    }
    if (with_reconstruction) need = std::max(need, sys.order_K - 1);
    return need;
}

}  // namespace

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "system = " << system << "\n";
    out << "n = " << n << "\n";
    out << "gamma = " << format_double(gamma) << "\n";
    out << "reps = " << reps << "\n";
    out << "seed = " << seed0 << "\n";
    out << "methods = " << join_methods(methods) << "\n";
    out << "sampling = " << sampling << "\n";
    out << "out = " << out_dir << "\n";
    out << "threads = " << threads << "\n";
    for (const auto& [key, value] : overrides)
        out << "override." << key << " = " << format_double(value) << "\n";
    out << "[smooth]\n";
    out << "bandwidth = " << bandwidth << "\n";
    out << "undersmooth = " << (undersmooth ? 1 : 0) << "\n";
    out << "[match]\n";
    out << "grid_H = " << grid_h << "\n";
    out << "trim = " << format_double(trim) << "\n";
    out << "[systems]\n";
    out << "step = " << format_double(solver_step) << "\n";
    out << "traj_points = " << traj_points << "\n";
    out << "[infer]\n";
    out << "ci = " << (with_ci ? 1 : 0) << "\n";
    out << "ci_level = " << format_double(ci_level) << "\n";
    out << "reconstruct = " << (with_reconstruction ? 1 : 0) << "\n";
    return out.str();
}

ExperimentConfig ExperimentConfig::deserialize(const std::string& text) {
    ExperimentConfig cfg;
    cfg.methods.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '[' || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto strip = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t");
            const size_t b = s.find_last_not_of(" \t\r");
            return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key == "system") cfg.system = value;
        else if (key == "n") cfg.n = std::stoi(value);
        else if (key == "gamma") cfg.gamma = std::stod(value);
        else if (key == "reps") cfg.reps = std::stoi(value);
        else if (key == "seed") cfg.seed0 = std::stoull(value);
        else if (key == "methods") cfg.methods = split_list(value);
        else if (key == "sampling") cfg.sampling = value;
        else if (key == "out") cfg.out_dir = value;
        else if (key == "threads") cfg.threads = std::stoi(value);
        else if (key.rfind("override.", 0) == 0) cfg.overrides[key.substr(9)] = std::stod(value);
        else if (key == "bandwidth") cfg.bandwidth = value;
        else if (key == "undersmooth") cfg.undersmooth = std::stoi(value) != 0;
        else if (key == "grid_H") cfg.grid_h = std::stoi(value);
        else if (key == "trim") cfg.trim = std::stod(value);
        else if (key == "step") cfg.solver_step = std::stod(value);
        else if (key == "traj_points") cfg.traj_points = std::stoi(value);
        else if (key == "ci") cfg.with_ci = std::stoi(value) != 0;
        else if (key == "ci_level") cfg.ci_level = std::stod(value);
        else if (key == "reconstruct") cfg.with_reconstruction = std::stoi(value) != 0;
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    if (cfg.methods.empty()) cfg.methods = {"greens"};
    return cfg;
}

DynamicSystem ExperimentConfig::make_system() const { return builtin_system(system, overrides); }

double ExperimentConfig::effective_step(const DynamicSystem& sys) const {
    return solver_step > 0 ? solver_step : sys.domain_C / 20000.0;
}

Sampling ExperimentConfig::sampling_mode() const {
    if (sampling == "equispaced") return Sampling::equispaced;
    if (sampling == "uniform") return Sampling::uniform_iid;
    throw std::invalid_argument("config: sampling must be equispaced or uniform");
}

VectorXd benchmark_grid(const DynamicSystem& sys, int target_h) {
    if (sys.breakpoints.empty()) return linspace(0.0, sys.domain_C, target_h);
    for (int hh = target_h; hh < target_h + 600; ++hh) {
        const double spacing = sys.domain_C / (hh - 1);
        bool aligned = true;
        for (double b : sys.breakpoints) {
            const double ratio = b / spacing;
            if (std::abs(ratio - std::lround(ratio)) > 1e-9) {
                aligned = false;
                break;
            }
        }
        if (aligned) return linspace(0.0, sys.domain_C, hh);
    }
    return linspace(0.0, sys.domain_C, target_h);
}

SampledData make_rep_data(const DynamicSystem& sys, const TrajectorySet& truth,
                          const ExperimentConfig& cfg, int rep) {
    return simulate_observations(truth, sys, cfg.n, cfg.gamma, cfg.sampling_mode(),
                                 cfg.seed0 + static_cast<std::uint64_t>(rep));
}

namespace {

/// Median across variables of per-variable CV bandwidths for order k.
double cv_bandwidth(const SampledData& data, const DynamicSystem& sys, int k, bool undersmooth) {
    const VectorXd cands = default_bandwidth_candidates(data, sys.domain_C);
    std::vector<double> hs(sys.p);
    for (int i = 0; i < sys.p; ++i)
        hs[i] = select_bandwidth(data, i, k, cands, 5, undersmooth);
    return median(hs);
}

double parse_fixed_bandwidth(const std::string& mode) {
    if (mode.rfind("fixed:", 0) != 0)
        throw std::invalid_argument("config: bandwidth must be cv or fixed:<h>");
    const double h = std::stod(mode.substr(6));
    if (h <= 0) throw std::invalid_argument("config: fixed bandwidth must be positive");
    return h;
}

}  // namespace

RepSmooths smooth_for_rep(const SampledData& data, const DynamicSystem& sys,
                          const ExperimentConfig& cfg, bool need_gradient) {
    const VectorXd grid = benchmark_grid(sys, cfg.grid_h);
    const int max_order = max_needed_order(sys, cfg.methods, cfg.with_reconstruction);

    RepSmooths out;
    if (cfg.bandwidth == "cv") {
        auto t0 = Clock::now();
        VectorXd h_greens(1);
        h_greens[0] = cv_bandwidth(data, sys, 0, cfg.undersmooth);
        out.cv_seconds_level = seconds_since(t0);
        out.greens = smooth_curves(data, 0, grid, h_greens, 1);
        if (need_gradient && max_order >= 0) {
            auto t1 = Clock::now();
            VectorXd h_grad(max_order + 1);
            for (int k = 0; k <= max_order; ++k) h_grad[k] = cv_bandwidth(data, sys, k, false);
            out.cv_seconds_all = seconds_since(t1);
            out.gradient = smooth_curves(data, max_order, grid, h_grad, 1);
            out.gradient_built = true;
        }
    } else {
        const double h = parse_fixed_bandwidth(cfg.bandwidth);
        out.greens = smooth_curves(data, 0, grid, VectorXd::Constant(1, h), 1);
        if (need_gradient && max_order >= 0) {
            out.gradient = smooth_curves(data, max_order, grid, VectorXd::Constant(max_order + 1, h), 1);
            out.gradient_built = true;
        }
    }
    if (!out.gradient_built) out.gradient = out.greens;
    return out;
}

std::vector<RepEstimate> estimate_rep(const DynamicSystem& sys, const SampledData& data,
                                      const ExperimentConfig& cfg, int rep) {
    bool need_gradient = false;
    for (const std::string& m : cfg.methods)
        if (m != "greens") need_gradient = true;
    if (cfg.with_reconstruction && sys.order_K > 1) need_gradient = true;

    MatchConfig mcfg;
    mcfg.trim_fraction = cfg.trim;
    mcfg.threads = 1;

    std::vector<RepEstimate> out;
    RepSmooths smooths;
    try {
        smooths = smooth_for_rep(data, sys, cfg, need_gradient);
    } catch (const std::exception& e) {
        for (const std::string& m : cfg.methods) {
            RepEstimate r;
            r.rep = rep;
            r.method = m;
            r.failed = true;
            r.error = e.what();
            out.push_back(std::move(r));
        }
        return out;
    }

    for (const std::string& m : cfg.methods) {
        RepEstimate r;
        r.rep = rep;
        r.method = m;
        const auto t0 = Clock::now();
        try {
            if (m == "greens") {
                r.report = greens_match(smooths.greens, sys, mcfg);
                r.runtime_sec = seconds_since(t0) + smooths.cv_seconds_level;
            } else {
                r.report = gradient_match(smooths.gradient, sys, order_of(m), mcfg);
                r.runtime_sec = seconds_since(t0) + smooths.cv_seconds_level + smooths.cv_seconds_all;
            }
            if (cfg.with_ci) {
                const SmoothedCurves& used = (m == "greens") ? smooths.greens : smooths.gradient;
                const CovarianceReport cov = asymptotic_covariance(r.report, used, data, sys, mcfg);
                r.cis = confidence_intervals(r.report, cov, sys, cfg.ci_level);
            }
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

BenchResult run_bench(const ExperimentConfig& cfg, bool write_files) {
    if (cfg.reps < 1) throw std::invalid_argument("bench: reps must be >= 1");
    if (cfg.methods.empty()) throw std::invalid_argument("bench: methods must be nonempty");
    const DynamicSystem sys = cfg.make_system();
    const VectorXd traj_grid = linspace(0.0, sys.domain_C, cfg.traj_points);
    const TrajectorySet truth = solve_forward(sys, cfg.effective_step(sys), traj_grid);

    std::vector<std::vector<RepEstimate>> per_rep(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](int rep) {
        const SampledData data = make_rep_data(sys, truth, cfg, rep);
        per_rep[rep] = estimate_rep(sys, data, cfg, rep);
    });

    BenchResult result;
    result.methods = cfg.methods;
    const std::vector<ParamInfo> params = sys.all_params();
    VectorXd truth_vec(params.size());
    for (size_t l = 0; l < params.size(); ++l) truth_vec[static_cast<int>(l)] = params[l].truth;
    std::vector<std::string> names;
    for (const auto& par : params) names.push_back(par.name);

    for (const std::string& m : cfg.methods) {
        std::vector<VectorXd> ok_rows;
        double runtime = 0.0;
        int failures = 0, counted = 0;
        for (int rep = 0; rep < cfg.reps; ++rep) {
            for (const RepEstimate& r : per_rep[rep]) {
                if (r.method != m) continue;
                result.rows.push_back(r);
                if (r.failed) {
                    ++failures;
                } else {
                    ok_rows.push_back(r.report.all_estimates);
                    runtime += r.runtime_sec;
                    ++counted;
                }
            }
        }
        result.failures[m] = failures;
        result.mean_runtime_sec[m] = counted > 0 ? runtime / counted : 0.0;
        MatrixXd est(ok_rows.size(), truth_vec.size());
        for (size_t g = 0; g < ok_rows.size(); ++g) est.row(static_cast<int>(g)) = ok_rows[g].transpose();
        result.estimates[m] = est;
        if (!ok_rows.empty()) result.metrics[m] = compute_metrics(est, truth_vec, names);
    }

    if (write_files) {
        fs::create_directories(cfg.out_dir);
        {
            std::ofstream out(fs::path(cfg.out_dir) / "metrics.csv");
            out << "system,method,n,gamma,rrmse_pct,rbias_pct,rsd_pct,reps,seed0\n";
            for (const std::string& m : cfg.methods) {
                const MetricsRow& row = result.metrics.count(m) ? result.metrics[m] : MetricsRow{};
                out << cfg.system << "," << m << "," << cfg.n << "," << format_double(cfg.gamma)
                    << "," << format_double(row.rrmse_pct) << "," << format_double(row.rbias_pct)
                    << "," << format_double(row.rsd_pct) << ","
                    << (cfg.reps - result.failures[m]) << "," << cfg.seed0 << "\n";
            }
        }
        {
            std::ofstream out(fs::path(cfg.out_dir) / "runtimes.csv");
            out << "system,method,n,gamma,reps,mean_runtime_sec,failures\n";
            for (const std::string& m : cfg.methods)
                out << cfg.system << "," << m << "," << cfg.n << "," << format_double(cfg.gamma)
                    << "," << cfg.reps << "," << format_double(result.mean_runtime_sec[m]) << ","
                    << result.failures[m] << "\n";
        }
        write_estimate_rows(cfg, sys, result.rows);
    }
    return result;
}

void write_estimate_rows(const ExperimentConfig& cfg, const DynamicSystem& sys,
                         const std::vector<RepEstimate>& rows) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "estimates.csv");
    out << "rep,method,param,true,estimate,se,ci_lo,ci_hi,converged\n";
    const std::vector<ParamInfo> params = sys.all_params();
    for (const RepEstimate& r : rows) {
        if (r.failed) {
            out << r.rep << "," << r.method << ",ALL,,,,,,0\n";
            continue;
        }
        for (size_t l = 0; l < params.size(); ++l) {
            out << r.rep << "," << r.method << "," << params[l].name << ","
                << format_double(params[l].truth) << ","
                << format_double(r.report.all_estimates[static_cast<int>(l)]) << ",";
            if (!r.cis.empty()) {
                out << format_double(r.cis[l].se) << "," << format_double(r.cis[l].lo) << ","
                    << format_double(r.cis[l].hi);
            } else {
                out << ",,";
            }
            out << "," << (r.report.converged ? 1 : 0) << "\n";
        }
    }
}

void write_trajectory_csv(const std::string& path, const TrajectorySet& traj) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const int p = traj.p();
    out << "t";
    for (int i = 1; i <= p; ++i) out << ",x" << i;
    for (int k = 1; k <= traj.order(); ++k)
        for (int i = 1; i <= p; ++i) out << ",d" << k << "_x" << i;
    out << "\n";
    for (int j = 0; j < traj.grid.size(); ++j) {
        out << format_double(traj.grid[j]);
        for (int k = 0; k <= traj.order(); ++k)
            for (int i = 0; i < p; ++i) out << "," << format_double(traj.derivative[k](i, j));
        out << "\n";
    }
}

TrajectorySet read_trajectory_csv(const std::string& path, int p, int order_k) {
    const CsvTable table = read_csv(path);
    TrajectorySet traj;
    const int rows = static_cast<int>(table.rows.size());
    traj.grid.resize(rows);
    traj.derivative.assign(order_k + 1, MatrixXd::Zero(p, rows));
    for (int j = 0; j < rows; ++j) {
        traj.grid[j] = table.rows[j][0];
        for (int k = 0; k <= order_k; ++k)
            for (int i = 0; i < p; ++i) traj.derivative[k](i, j) = table.rows[j][1 + k * p + i];
    }
    return traj;
}

void write_observations_csv(const std::string& path, const SampledData& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "t";
    for (int i = 1; i <= data.p(); ++i) out << ",x" << i;
    out << "\n";
    for (int j = 0; j < data.n(); ++j) {
        out << format_double(data.times[j]);
        for (int i = 0; i < data.p(); ++i) out << "," << format_double(data.obs(i, j));
        out << "\n";
    }
}

SampledData read_observations_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    SampledData data;
    const int n = static_cast<int>(table.rows.size());
    const int p = static_cast<int>(table.header.size()) - 1;
    data.times.resize(n);
    data.obs.resize(p, n);
    for (int j = 0; j < n; ++j) {
        data.times[j] = table.rows[j][0];
        for (int i = 0; i < p; ++i) data.obs(i, j) = table.rows[j][1 + i];
    }
    data.noise_sigma = VectorXd::Zero(p);
    return data;
}

void run_simulate(const ExperimentConfig& cfg) {
    const DynamicSystem sys = cfg.make_system();
    const VectorXd traj_grid = linspace(0.0, sys.domain_C, cfg.traj_points);
    const TrajectorySet truth = solve_forward(sys, cfg.effective_step(sys), traj_grid);

    fs::create_directories(cfg.out_dir);
    std::ofstream manifest(fs::path(cfg.out_dir) / "manifest.csv");
    manifest << "rep,seed,system,n,gamma,sampling,obs_file,traj_file\n";
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const SampledData data = make_rep_data(sys, truth, cfg, rep);
        const std::string obs_name = "rep" + std::to_string(rep) + "_obs.csv";
        const std::string traj_name = "rep" + std::to_string(rep) + "_trajectory.csv";
        write_observations_csv((fs::path(cfg.out_dir) / obs_name).string(), data);
        write_trajectory_csv((fs::path(cfg.out_dir) / traj_name).string(), truth);
        manifest << rep << "," << cfg.seed0 + static_cast<std::uint64_t>(rep) << "," << cfg.system
                 << "," << cfg.n << "," << format_double(cfg.gamma) << "," << cfg.sampling << ","
                 << obs_name << "," << traj_name << "\n";
    }
    std::ofstream config_echo(fs::path(cfg.out_dir) / "config.txt");
    config_echo << cfg.serialize();
}

void run_estimate(const ExperimentConfig& cfg, const std::string& dataset_dir) {
    const DynamicSystem sys = cfg.make_system();
    std::vector<RepEstimate> rows;
    std::vector<SampledData> datasets;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::string obs_path =
          (fs::path(dataset_dir) / ("rep" + std::to_string(rep) + "_obs.csv")).string();
        datasets.push_back(read_observations_csv(obs_path));
    }
    std::vector<std::vector<RepEstimate>> per_rep(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](int rep) {
        per_rep[rep] = estimate_rep(sys, datasets[rep], cfg, rep);
    });
    for (auto& chunk : per_rep)
        for (auto& r : chunk) rows.push_back(std::move(r));
    write_estimate_rows(cfg, sys, rows);

    if (cfg.with_reconstruction) {
        for (const RepEstimate& r : rows) {
            if (r.failed) continue;
            const SampledData& data = datasets[r.rep];
            const RepSmooths smooths = smooth_for_rep(data, sys, cfg, true);
            const TrajectorySet recon = reconstruct_trajectories(
              r.report, smooths.gradient, sys, cfg.trim, cfg.effective_step(sys), 401);
            const std::string name =
              "recon_rep" + std::to_string(r.rep) + "_" + r.method + ".csv";
            write_trajectory_csv((fs::path(cfg.out_dir) / name).string(), recon);
        }
    }
}

DiscoveryBenchmark run_discover(const ExperimentConfig& cfg, bool write_files) {
    DiscoveryProtocol proto;
    proto.reps = cfg.reps;
    proto.n = cfg.n;
    proto.gamma = cfg.gamma;
    proto.seed0 = cfg.seed0;
    proto.domain_c = cfg.overrides.count("C") ? cfg.overrides.at("C") : 20.0;
    proto.grid_h = cfg.grid_h;
    proto.trim = cfg.trim;
    proto.solver_step = cfg.solver_step > 0 ? cfg.solver_step : proto.domain_c / 20000.0;
    proto.threads = cfg.threads;
    const DiscoveryBenchmark bench = discovery_benchmark(proto);

    if (write_files) {
        fs::create_directories(cfg.out_dir);
        {
            std::ofstream out(fs::path(cfg.out_dir) / "discovery.csv");
            out << "rep,method,feature,coefficient,selected_lambda\n";
            for (const DiscoveryRep& r : bench.reps) {
                for (int c = 0; c < bench.library.q(); ++c) {
                    out << r.rep << ",greens," << bench.library.names[c] << ","
                        << format_double(r.greens.selected_beta[c]) << ","
                        << format_double(r.greens.selected_lambda) << "\n";
                }
                for (int c = 0; c < bench.library.q(); ++c) {
                    out << r.rep << ",grad_k," << bench.library.names[c] << ","
                        << format_double(r.grad.selected_beta[c]) << ","
                        << format_double(r.grad.selected_lambda) << "\n";
                }
            }
        }
        {
            std::ofstream out(fs::path(cfg.out_dir) / "field.csv");
            out << "x,dx,u_true,v_true,u_hat,v_hat,method\n";
            const VectorField truth = evaluate_vector_field(bench.beta_truth, bench.library,
                                                            bench.field_x, bench.field_dx);
            const VectorField greens = evaluate_vector_field(bench.mean_beta_greens, bench.library,
                                                             bench.field_x, bench.field_dx);
            const VectorField grad = evaluate_vector_field(bench.mean_beta_grad, bench.library,
                                                           bench.field_x, bench.field_dx);
            for (int a = 0; a < bench.field_x.size(); ++a) {
                for (int b = 0; b < bench.field_dx.size(); ++b) {
                    out << format_double(bench.field_x[a]) << "," << format_double(bench.field_dx[b])
                        << "," << format_double(truth.u(a, b)) << "," << format_double(truth.v(a, b))
                        << "," << format_double(greens.u(a, b)) << ","
                        << format_double(greens.v(a, b)) << ",greens\n";
                    out << format_double(bench.field_x[a]) << "," << format_double(bench.field_dx[b])
                        << "," << format_double(truth.u(a, b)) << "," << format_double(truth.v(a, b))
                        << "," << format_double(grad.u(a, b)) << "," << format_double(grad.v(a, b))
                        << ",grad_k\n";
                }
            }
        }
        {
            std::ofstream out(fs::path(cfg.out_dir) / "summary.csv");
            out << "method,reps,sin_only_rate,mean_sin_coefficient,mean_field_error\n";
            auto support_rate = [&](bool greens_method) {
                int hits = 0;
                for (const DiscoveryRep& r : bench.reps) {
                    const DiscoveryResult& res = greens_method ? r.greens : r.grad;
                    bool ok = std::abs(res.selected_beta[5] + 1.0) < 10.0;  // sin present
                    ok = ok && res.selected_beta[5] != 0.0;
                    for (int c = 0; c < bench.library.q(); ++c)
                        if (c != 5 && std::abs(res.selected_beta[c]) >= 0.1) ok = false;
                    if (ok) ++hits;
                }
                return static_cast<double>(hits) / bench.reps.size();
            };
            double mean_sin_g = 0.0, mean_sin_d = 0.0;
            for (const DiscoveryRep& r : bench.reps) {
                mean_sin_g += r.greens.selected_beta[5];
                mean_sin_d += r.grad.selected_beta[5];
            }
            mean_sin_g /= bench.reps.size();
            mean_sin_d /= bench.reps.size();
            out << "greens," << bench.reps.size() << "," << format_double(support_rate(true)) << ","
                << format_double(mean_sin_g) << "," << format_double(bench.field_err_greens) << "\n";
            out << "grad_k," << bench.reps.size() << "," << format_double(support_rate(false)) << ","
                << format_double(mean_sin_d) << "," << format_double(bench.field_err_grad) << "\n";
        }
    }
    return bench;
}

}  // namespace greenmatch
