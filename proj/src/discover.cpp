#include "greenmatch/discover.hpp"

#include <cmath>

#include "greenmatch/parallel.hpp"
#include "greenmatch/rng.hpp"

namespace greenmatch {

namespace {

struct Standardized {
    MatrixXd cols;     // unit-norm penalized columns
    VectorXd norms;
};

Standardized standardize(const MatrixXd& pen) {
    Standardized s;
    s.cols = pen;
    s.norms.resize(pen.cols());
    for (int l = 0; l < pen.cols(); ++l) {
        double norm = pen.col(l).norm();
        if (norm <= 0.0) norm = 1.0;
        s.norms[l] = norm;
        s.cols.col(l) /= norm;
    }
    return s;
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/// Design rows for the pendulum-style library regressions. `greens` builds the
/// kernel-transformed columns with the unpenalized basis block, `gradient`
/// the pointwise order-2 design with no nuisance block.
struct LibraryDesign {
    MatrixXd unpen;  // H x K (greens) or H x 0
    MatrixXd pen;    // H x q
    VectorXd y;
};

LibraryDesign greens_library_design(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                    const MatchConfig& cfg, double domain_c) {
    // Synthetic separable system over the library features drives the shared
    // design machinery.
    DynamicSystem sys;
    sys.name = "library";
    sys.p = 1;
    sys.order_K = 2;
    sys.domain_C = domain_c;
    sys.separable = true;
    sys.beta_block_sizes = {lib.q()};
    for (const std::string& name : lib.names) sys.beta_params.push_back({name, 0.0});
    sys.omega = MatrixXd::Zero(1, 2);
    sys.omega_known = true;
    sys.init = MatrixXd::Zero(1, 2);
    sys.features = [lib](int, const VectorXd& x, double) { return lib.eval(x[0]); };
    sys.drive = [lib](const VectorXd& x, double, const VectorXd& beta) {
        VectorXd f(1);
        f[0] = lib.eval(x[0]).dot(beta);
        return f;
    };

    const MethodDesign d = build_method_design(smoothed, sys, MatchMethod::greens, cfg);
    LibraryDesign out;
    out.unpen = d.sqrt_w.asDiagonal() * d.Psi[0];
    out.pen = d.sqrt_w.asDiagonal() * (*d.op[0] * d.Feat[0]);
    out.y = d.sqrt_w.cwiseProduct(d.Z[0]);
    return out;
}

LibraryDesign gradient_library_design(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                      const MatchConfig& cfg, double domain_c) {
    if (smoothed.max_order() < 2)
        throw std::invalid_argument("sparse_gradient_match: need smoothed derivatives up to order 2");
    const VectorXd& t_eval = (cfg.eval_grid.size() > 0) ? cfg.eval_grid : smoothed.grid;
    if (t_eval.size() != smoothed.grid.size())
        throw std::invalid_argument("sparse_gradient_match: eval grid must equal the smoothing grid");
    const int hn = static_cast<int>(t_eval.size());

    VectorXd w(hn);
    const double lo = cfg.trim_fraction * domain_c, hi = (1.0 - cfg.trim_fraction) * domain_c;
    for (int h = 0; h < hn; ++h) w[h] = (t_eval[h] >= lo - 1e-9 && t_eval[h] <= hi + 1e-9) ? 1.0 : 0.0;
    const VectorXd sqrt_w = w.cwiseSqrt();

    LibraryDesign out;
    out.unpen.resize(hn, 0);
    out.pen.resize(hn, lib.q());
    out.y.resize(hn);
    for (int h = 0; h < hn; ++h) {
        out.pen.row(h) = sqrt_w[h] * lib.eval(smoothed.est[0](0, h)).transpose();
        out.y[h] = sqrt_w[h] * smoothed.est[2](0, h);
    }
    return out;
}

VectorXd default_lambda_grid(double lambda_max, const DiscoverOptions& opt) {
    VectorXd grid(opt.n_lambda);
    for (int l = 0; l < opt.n_lambda; ++l)
        grid[l] = lambda_max *
                  std::pow(opt.lambda_min_ratio, static_cast<double>(l) / (opt.n_lambda - 1));
    return grid;
}

DiscoveryResult run_path(const LibraryDesign& design, const CandidateLibrary& lib,
                         const VectorXd& lambda_grid, const DiscoverOptions& opt) {
    const int q = static_cast<int>(design.pen.cols());
    const int hn = static_cast<int>(design.y.size());

    VectorXd grid = lambda_grid;
    if (grid.size() == 0)
        grid = default_lambda_grid(lasso_lambda_max(design.unpen, design.pen, design.y), opt);

    DiscoveryResult res;
    res.lambda_grid = grid;
    res.beta_path.resize(grid.size(), q);
    res.bic.resize(grid.size());

    const Standardized std_pen = standardize(design.pen);
    VectorXd warm = VectorXd::Zero(q);
    MatrixXd unpen_path(grid.size(), design.unpen.cols());
    for (int l = 0; l < grid.size(); ++l) {
        const LassoFit fit =
          lasso_cd(design.unpen, design.pen, design.y, grid[l], warm, opt.cd_tol, opt.cd_max_sweeps);
        if (!fit.converged)
            throw NumericalError("sparse match: coordinate descent failed to converge at lambda = " +
                                 std::to_string(grid[l]));
        res.beta_path.row(l) = fit.beta.transpose();
        unpen_path.row(l) = fit.unpen.transpose();
        warm = fit.beta.cwiseProduct(std_pen.norms);  // standardized warm start
        int df = 0;
        for (int c = 0; c < q; ++c)
            if (fit.beta[c] != 0.0) ++df;
        res.bic[l] = hn * std::log(std::max(fit.rss, 1e-300) / hn) + df * std::log(double(hn));
    }

    int best = 0;
    for (int l = 1; l < grid.size(); ++l)
        if (res.bic[l] < res.bic[best]) best = l;
    res.selected_index = best;
    res.selected_lambda = grid[best];
    res.selected_beta = res.beta_path.row(best).transpose();
    res.selected_unpen = unpen_path.row(best).transpose();
    for (int c = 0; c < q; ++c)
        if (res.selected_beta[c] != 0.0) res.support.push_back(lib.names[c]);
    return res;
}

}  // namespace

CandidateLibrary pendulum_library() {
    CandidateLibrary lib;
    lib.names = {"1", "X", "X^2", "X^3", "X^4", "sin_X", "cos_X"};
    lib.features = {
      [](double) { return 1.0; },
      [](double x) { return x; },
      [](double x) { return x * x; },
      [](double x) { return x * x * x; },
      [](double x) { return x * x * x * x; },
      [](double x) { return std::sin(x); },
      [](double x) { return std::cos(x); },
    };
    return lib;
}

double lasso_lambda_max(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y) {
    VectorXd r = y;
    if (unpen.cols() > 0) r -= unpen * unpen.colPivHouseholderQr().solve(y);
    const Standardized s = standardize(pen);
    return (2.0 * s.cols.transpose() * r).cwiseAbs().maxCoeff();
}

LassoFit lasso_cd(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y, double lambda,
                  const VectorXd& warm_scaled, double tol, int max_sweeps) {
    const int q = static_cast<int>(pen.cols());
    const Standardized s = standardize(pen);
    Eigen::ColPivHouseholderQR<MatrixXd> unpen_qr;
    if (unpen.cols() > 0) unpen_qr.compute(unpen);

    VectorXd beta = (warm_scaled.size() == q) ? warm_scaled : VectorXd::Zero(q);
    VectorXd unpen_coef = VectorXd::Zero(unpen.cols());
    VectorXd r = y - s.cols * beta;
    if (unpen.cols() > 0) {
        unpen_coef = unpen_qr.solve(r);
        r -= unpen * unpen_coef;
    }

    LassoFit fit;
    fit.lambda = lambda;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (int l = 0; l < q; ++l) {
            const double old = beta[l];
            const double z = old + s.cols.col(l).dot(r);
            const double updated = soft_threshold(z, 0.5 * lambda);
            if (updated != old) {
                r -= (updated - old) * s.cols.col(l);
                beta[l] = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        if (unpen.cols() > 0) {
            const VectorXd delta = unpen_qr.solve(r);
            if (delta.cwiseAbs().maxCoeff() > 0) {
                unpen_coef += delta;
                r -= unpen * delta;
                max_change = std::max(max_change, delta.cwiseAbs().maxCoeff());
            }
        }
        if (max_change < tol) {
            ++sweep;
            break;
        }
    }
    fit.converged = sweep < max_sweeps || q == 0;
    fit.sweeps = sweep;
    fit.beta = beta.cwiseQuotient(s.norms);
    fit.unpen = unpen_coef;
    fit.rss = r.squaredNorm();
    return fit;
}

double lasso_kkt_violation(const MatrixXd& unpen, const MatrixXd& pen, const VectorXd& y,
                           const LassoFit& fit) {
    const Standardized s = standardize(pen);
    VectorXd r = y - pen * fit.beta;
    if (unpen.cols() > 0) r -= unpen * fit.unpen;
    double viol = 0.0;
    for (int l = 0; l < pen.cols(); ++l) {
        const double grad = 2.0 * s.cols.col(l).dot(r);  // -d(rss)/d(beta~_l)
        const double scaled = fit.beta[l] * s.norms[l];
        if (scaled == 0.0)
            viol = std::max(viol, std::abs(grad) - fit.lambda);
        else
            viol = std::max(viol, std::abs(grad - fit.lambda * (scaled > 0 ? 1.0 : -1.0)));
    }
    if (unpen.cols() > 0)
        viol = std::max(viol, (unpen.transpose() * r).cwiseAbs().maxCoeff());
    return viol;
}

DiscoveryResult sparse_greens_match(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                    const MatchConfig& cfg, double domain_c,
                                    const VectorXd& lambda_grid, const DiscoverOptions& opt) {
    return run_path(greens_library_design(smoothed, lib, cfg, domain_c), lib, lambda_grid, opt);
}

DiscoveryResult sparse_gradient_match(const SmoothedCurves& smoothed, const CandidateLibrary& lib,
                                      const MatchConfig& cfg, double domain_c,
                                      const VectorXd& lambda_grid, const DiscoverOptions& opt) {
    return run_path(gradient_library_design(smoothed, lib, cfg, domain_c), lib, lambda_grid, opt);
}

VectorField evaluate_vector_field(const VectorXd& beta, const CandidateLibrary& lib,
                                  const VectorXd& x_grid, const VectorXd& dx_grid) {
    VectorField field;
    field.x_grid = x_grid;
    field.dx_grid = dx_grid;
    field.u.resize(x_grid.size(), dx_grid.size());
    field.v.resize(x_grid.size(), dx_grid.size());
    field.magnitude.resize(x_grid.size(), dx_grid.size());
    for (int a = 0; a < x_grid.size(); ++a) {
        const double accel = lib.eval(x_grid[a]).dot(beta);
        for (int b = 0; b < dx_grid.size(); ++b) {
            field.u(a, b) = dx_grid[b];
            field.v(a, b) = accel;
            field.magnitude(a, b) = std::hypot(dx_grid[b], accel);
        }
    }
    return field;
}

DiscoveryBenchmark discovery_benchmark(const DiscoveryProtocol& proto) {
    if (proto.reps < 1) throw std::invalid_argument("discovery_benchmark: need reps >= 1");
    DiscoveryBenchmark bench;
    bench.library = pendulum_library();
    const int q = bench.library.q();
    bench.beta_truth = VectorXd::Zero(q);
    bench.beta_truth[5] = -1.0;  // sin X
    bench.reps.resize(proto.reps);

    parallel_for(proto.reps, proto.threads, [&](int rep) {
        GaussianSampler rng(proto.seed0 + static_cast<std::uint64_t>(rep));
        std::map<std::string, double> overrides;
        overrides["C"] = proto.domain_c;
        overrides["x0_1"] = -0.5 + rng.uniform01();
        overrides["dx0_1"] = -0.5 + rng.uniform01();
        const DynamicSystem sys = builtin_system("pendulum", overrides);

        const VectorXd grid = linspace(0.0, sys.domain_C, proto.grid_h);
        const TrajectorySet traj = solve_forward(sys, proto.solver_step, grid);
        const SampledData data = simulate_observations(traj, sys, proto.n, proto.gamma,
                                                       Sampling::equispaced, rng.engine()());

        const VectorXd cands = default_bandwidth_candidates(data, sys.domain_C);
        VectorXd bw_greens(1);
        bw_greens[0] = select_bandwidth(data, 0, 0, cands, 5, true);
        const SmoothedCurves sm_greens = smooth_curves(data, 0, grid, bw_greens);

        VectorXd bw_grad(3);
        for (int k = 0; k <= 2; ++k) bw_grad[k] = select_bandwidth(data, 0, k, cands, 5, false);
        const SmoothedCurves sm_grad = smooth_curves(data, 2, grid, bw_grad);

        MatchConfig cfg;
        cfg.trim_fraction = proto.trim;

        DiscoveryRep out;
        out.rep = rep;
        out.x0 = sys.init(0, 0);
        out.dx0 = sys.init(0, 1);
        out.greens = sparse_greens_match(sm_greens, bench.library, cfg, sys.domain_C);
        out.grad = sparse_gradient_match(sm_grad, bench.library, cfg, sys.domain_C);
        bench.reps[rep] = std::move(out);
    });

    bench.mean_beta_greens = VectorXd::Zero(q);
    bench.mean_beta_grad = VectorXd::Zero(q);
    for (const DiscoveryRep& r : bench.reps) {
        bench.mean_beta_greens += r.greens.selected_beta;
        bench.mean_beta_grad += r.grad.selected_beta;
    }
    bench.mean_beta_greens /= proto.reps;
    bench.mean_beta_grad /= proto.reps;

    bench.field_x = linspace(-2.0, 2.0, proto.field_points);
    bench.field_dx = linspace(-2.0, 2.0, proto.field_points);
    const VectorField truth =
      evaluate_vector_field(bench.beta_truth, bench.library, bench.field_x, bench.field_dx);
    const VectorField fg =
      evaluate_vector_field(bench.mean_beta_greens, bench.library, bench.field_x, bench.field_dx);
    const VectorField fd =
      evaluate_vector_field(bench.mean_beta_grad, bench.library, bench.field_x, bench.field_dx);
    double eg = 0.0, ed = 0.0;
    for (int a = 0; a < bench.field_x.size(); ++a)
        for (int b = 0; b < bench.field_dx.size(); ++b) {
            eg += std::abs(fg.v(a, b) - truth.v(a, b));
            ed += std::abs(fd.v(a, b) - truth.v(a, b));
        }
    const double count = static_cast<double>(bench.field_x.size() * bench.field_dx.size());
    bench.field_err_greens = eg / count;
    bench.field_err_grad = ed / count;
    return bench;
}

}  // namespace greenmatch
