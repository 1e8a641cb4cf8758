#include "greenmatch/infer.hpp"

#include <cmath>

namespace greenmatch {

namespace {

MatchMethod method_from_name(const std::string& name) {
    if (name == "greens") return MatchMethod::greens;
    if (name == "grad_k") return MatchMethod::grad_k;
    if (name == "grad_km1") return MatchMethod::grad_km1;
    throw std::invalid_argument("asymptotic_covariance: unknown method '" + name + "'");
}

bool is_equispaced(const VectorXd& times) {
    const int n = static_cast<int>(times.size());
    const double step = (times[n - 1] - times[0]) / (n - 1);
    for (int j = 1; j < n; ++j)
        if (std::abs(times[j] - times[0] - j * step) > 1e-9 * std::max(1.0, std::abs(times[n - 1])))
            return false;
    return true;
}

/// Gaussian KDE with Silverman bandwidth, for non-equispaced sampling designs.
VectorXd kde_density(const VectorXd& times, const VectorXd& eval) {
    const int n = static_cast<int>(times.size());
    const double mean = times.mean();
    const double sd = std::sqrt((times.array() - mean).square().sum() / (n - 1));
    const double bw = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
    VectorXd out(eval.size());
    const double norm = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));
    for (int j = 0; j < eval.size(); ++j) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l) {
            const double u = (eval[j] - times[l]) / bw;
            acc += std::exp(-0.5 * u * u);
        }
        out[j] = std::max(acc * norm, 1e-12);
    }
    return out;
}

struct ThetaLayout {
    int m = 0, p = 0, nu = 0;
    int dim() const { return m + p * nu; }
    int nu_offset(int i) const { return m + i * nu; }
};

/// Raw (unweighted) gradient rows dT_i/dtheta at every eval time.
std::vector<MatrixXd> gradient_rows(const MethodDesign& d, const VectorXd& beta,
                                    const ThetaLayout& lay) {
    const int hn = static_cast<int>(d.t_eval.size());
    const int sn = static_cast<int>(d.s_grid.size());
    std::vector<MatrixXd> rows(d.p);
    for (int i = 0; i < d.p; ++i) {
        MatrixXd df(sn, d.m);
        for (int j = 0; j < sn; ++j) df.row(j) = d.drive_beta_jacobian(i, j, beta).transpose();
        MatrixXd g = MatrixXd::Zero(hn, lay.dim());
        g.leftCols(d.m) = -(*d.op[i] * df);
        if (lay.nu > 0) g.middleCols(lay.nu_offset(i), lay.nu) = -d.Psi[i];
        rows[i] = std::move(g);
    }
    return rows;
}

/// Integral objective L(theta) = sum_h q_h w_h sum_i T_i(t_h)^2 for the FD Hessian.
double objective_at(const MethodDesign& d, const ThetaLayout& lay, const VectorXd& theta) {
    const VectorXd beta = theta.head(d.m);
    MatrixXd fvals(d.p, d.s_grid.size());
    for (int j = 0; j < d.s_grid.size(); ++j)
        fvals.col(j) = d.system->drive(d.xhat_s.col(j), d.s_grid[j], beta);
    double obj = 0.0;
    for (int i = 0; i < d.p; ++i) {
        VectorXd t = d.Z[i] - *d.op[i] * fvals.row(i).transpose();
        if (lay.nu > 0) t -= d.Psi[i] * theta.segment(lay.nu_offset(i), lay.nu);
        obj += t.cwiseAbs2().cwiseProduct(d.quad_eval.cwiseProduct(d.w)).sum();
    }
    return obj;
}

MatrixXd fd_hessian(const MethodDesign& d, const ThetaLayout& lay, const VectorXd& theta) {
    const int dim = lay.dim();
    MatrixXd hess(dim, dim);
    VectorXd step(dim);
    for (int a = 0; a < dim; ++a) step[a] = 1e-5 * std::max(1.0, std::abs(theta[a]));
    for (int a = 0; a < dim; ++a) {
        for (int b = a; b < dim; ++b) {
            VectorXd tpp = theta, tpm = theta, tmp = theta, tmm = theta;
            tpp[a] += step[a]; tpp[b] += step[b];
            tpm[a] += step[a]; tpm[b] -= step[b];
            tmp[a] -= step[a]; tmp[b] += step[b];
            tmm[a] -= step[a]; tmm[b] -= step[b];
            const double v = (objective_at(d, lay, tpp) - objective_at(d, lay, tpm) -
                              objective_at(d, lay, tmp) + objective_at(d, lay, tmm)) /
                             (4.0 * step[a] * step[b]);
            hess(a, b) = v;
            hess(b, a) = v;
        }
    }
    return hess;
}

}  // namespace

CovarianceReport asymptotic_covariance(const EstimateReport& report,
                                       const SmoothedCurves& smoothed, const SampledData& data,
                                       const DynamicSystem& system, const MatchConfig& cfg) {
    const MethodDesign d = build_method_design(smoothed, system, method_from_name(report.method), cfg);
    if (d.t_eval.size() != d.s_grid.size())
        throw std::invalid_argument("asymptotic_covariance: eval grid must equal the smoothing grid");
    const int hn = static_cast<int>(d.t_eval.size());
    const int sn = static_cast<int>(d.s_grid.size());
    const int n = data.n();

    ThetaLayout lay;
    lay.m = d.m;
    lay.p = d.p;
    lay.nu = d.nu_dim();
    const int dim = lay.dim();

    // theta-hat: (beta, nu_i) from the report.
    VectorXd theta(dim);
    theta.head(d.m) = report.beta_hat;
    for (int i = 0; i < d.p; ++i) {
        if (d.alpha_dim > 0) theta.segment(lay.nu_offset(i), d.alpha_dim) = report.alpha_hat[i];
        if (d.omega_in_nu)
            theta.segment(lay.nu_offset(i) + d.alpha_dim, d.K) = report.omega_hat.row(i).transpose();
    }

    const std::vector<MatrixXd> grows = gradient_rows(d, report.beta_hat, lay);
    const VectorXd qw = d.quad_eval.cwiseProduct(d.w);

    CovarianceReport cov;

    // Sigma1: analytic Gauss-Newton Hessian on the separable (linear-in-theta)
    // path, central finite differences otherwise.
    if (d.separable_path) {
        MatrixXd s1 = MatrixXd::Zero(dim, dim);
        for (int i = 0; i < d.p; ++i)
            s1.noalias() += 2.0 * grows[i].transpose() * qw.asDiagonal() * grows[i];
        cov.sigma1 = s1;
    } else {
        cov.sigma1 = fd_hessian(d, lay, theta);
    }

    // Noise and sampling-density plug-ins.
    cov.sigma_hat_sq.resize(d.p);
    for (int i = 0; i < d.p; ++i)
        cov.sigma_hat_sq[i] = residual_variance(data, i, smoothed.bandwidths[0]).first;
    cov.equispaced_design = is_equispaced(data.times);
    VectorXd ft;
    if (cov.equispaced_design)
        ft = VectorXd::Constant(sn, 1.0 / system.domain_C);
    else
        ft = kde_density(data.times, d.s_grid);

    // State-jacobian values dF_l/dX_u on the s-grid.
    std::vector<MatrixXd> fx(d.p);  // fx[l] is p x S with row u = df_l/dX_u(s_j)
    for (int l = 0; l < d.p; ++l) {
        fx[l].resize(d.p, sn);
        for (int j = 0; j < sn; ++j)
            fx[l].col(j) = system.drive_state_jac(l, d.xhat_s.col(j), d.s_grid[j], report.beta_hat);
    }

    // h_u(tau_j): influence of the level smoothing error on the score.
    MatrixXd sigma2 = MatrixXd::Zero(dim, dim);
    const VectorXd tau_quad = d.s_quad_full;
    std::vector<MatrixXd> kernel_fold(d.p);  // per i: dim x S, sum_h qw_h kernel_i(t_h,tau_j) grad_i(t_h)
    if (d.method == MatchMethod::greens) {
        for (int i = 0; i < d.p; ++i) {
            const MatrixXd& kern = *d.op_green[i];  // raw G values (H x S)
            kernel_fold[i] = grows[i].transpose() * qw.asDiagonal() * kern;
        }
    } else if (d.method == MatchMethod::grad_km1) {
        MatrixXd indicator(hn, sn);
        for (int h = 0; h < hn; ++h)
            for (int j = 0; j < sn; ++j) {
                const double diff = d.t_eval[h] - d.s_grid[j];
                indicator(h, j) = (std::abs(diff) <= 1e-12) ? 0.5 : (diff > 0 ? 1.0 : 0.0);
            }
        for (int i = 0; i < d.p; ++i)
            kernel_fold[i] = grows[i].transpose() * qw.asDiagonal() * indicator;
    }

    std::vector<MatrixXd> poly_fold;  // unknown-op greens: per k, folded G_{K-k}
    if (d.method == MatchMethod::greens && d.omega_in_nu) {
        poly_fold.resize(d.K);
        // poly_fold[k] for the omega_{.,k} term uses G_{K-k}.
        for (int k = 0; k < d.K; ++k) poly_fold[k] = (*d.poly_green)[d.K - 1 - k];
    }

    for (int u = 0; u < d.p; ++u) {
        for (int j = 0; j < sn; ++j) {
            VectorXd h_u = VectorXd::Zero(dim);
            if (d.method == MatchMethod::greens) {
                // delta part: dT_u(tau) w(tau); eval grid == s grid here.
                h_u += d.w[j] * grows[u].row(j).transpose();
                if (d.omega_in_nu) {
                    for (int k = 0; k < d.K; ++k) {
                        const double om = report.omega_hat(u, k);
                        if (om == 0.0) continue;
                        h_u += om * (grows[u].transpose() *
                                     qw.cwiseProduct(poly_fold[k].col(j)));
                    }
                }
                for (int l = 0; l < d.p; ++l)
                    h_u -= fx[l](u, j) * kernel_fold[l].col(j);
            } else if (d.method == MatchMethod::grad_k) {
                // Level-only recipe: kappa_{lu} = (delta_lu omega_{l0} - df_l/dX_u) delta(t-tau).
                for (int l = 0; l < d.p; ++l) {
                    double coef = -fx[l](u, j);
                    if (l == u) coef += report.omega_hat(u, 0);
                    if (coef != 0.0) h_u += coef * d.w[j] * grows[l].row(j).transpose();
                }
            } else {
                for (int l = 0; l < d.p; ++l) {
                    double coef = -fx[l](u, j);
                    if (l == u) coef += report.omega_hat(u, 0);
                    if (coef != 0.0) h_u += coef * kernel_fold[l].col(j);
                }
            }
            sigma2.noalias() +=
              (4.0 * tau_quad[j] * cov.sigma_hat_sq[u] / ft[j]) * h_u * h_u.transpose();
        }
    }
    cov.sigma2 = 0.5 * (sigma2 + sigma2.transpose());

    // Sandwich with an eigenvalue floor on Sigma1.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov.sigma1 + cov.sigma1.transpose()));
    const double lam_max = eig.eigenvalues().cwiseAbs().maxCoeff();
    cov.eigen_floor = 1e-10 * std::max(lam_max, 1e-300);
    VectorXd inv_lam(dim);
    for (int a = 0; a < dim; ++a)
        inv_lam[a] = 1.0 / std::max(eig.eigenvalues()[a], cov.eigen_floor);
    const MatrixXd s1_inv =
      eig.eigenvectors() * inv_lam.asDiagonal() * eig.eigenvectors().transpose();
    cov.sigma_full = s1_inv * cov.sigma2 * s1_inv;
    cov.sigma_full = 0.5 * (cov.sigma_full + cov.sigma_full.transpose()).eval();
    cov.Sigma = cov.sigma_full.topLeftCorner(d.m, d.m);

    // Standard errors for the reported parameters (beta, then omega when the
    // system's operator is unknown).
    const int n_params = static_cast<int>(system.all_params().size());
    cov.se.resize(n_params);
    for (int l = 0; l < d.m; ++l) cov.se[l] = std::sqrt(std::max(cov.sigma_full(l, l), 0.0) / n);
    if (!system.omega_known) {
        if (!d.omega_in_nu)
            throw std::invalid_argument("asymptotic_covariance: estimate lacks operator coefficients");
        for (int i = 0; i < d.p; ++i)
            for (int k = 0; k < d.K; ++k) {
                const int pos = lay.nu_offset(i) + d.alpha_dim + k;
                cov.se[d.m + i * d.K + k] =
                  std::sqrt(std::max(cov.sigma_full(pos, pos), 0.0) / n);
            }
    }
    return cov;
}

std::vector<ConfidenceInterval> confidence_intervals(const EstimateReport& report,
                                                     const CovarianceReport& covariance,
                                                     const DynamicSystem& system, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("confidence_intervals: level must be in (0,1)");
    const double z = normal_quantile(0.5 * (1.0 + level));
    const std::vector<ParamInfo> params = system.all_params();
    std::vector<ConfidenceInterval> out(params.size());
    for (size_t l = 0; l < params.size(); ++l) {
        ConfidenceInterval ci;
        ci.name = params[l].name;
        ci.estimate = report.all_estimates[static_cast<int>(l)];
        ci.se = covariance.se[static_cast<int>(l)];
        ci.lo = ci.estimate - z * ci.se;
        ci.hi = ci.estimate + z * ci.se;
        out[l] = ci;
    }
    return out;
}

TrajectorySet reconstruct_trajectories(const EstimateReport& report,
                                       const SmoothedCurves& smoothed,
                                       const DynamicSystem& system, double trim_fraction,
                                       double step, int output_points) {
    const int k = system.order_K;
    if (smoothed.max_order() < k - 1)
        throw std::invalid_argument(
          "reconstruct_trajectories: smoothed curves lack derivative orders for initial conditions");
    const double t0_target = trim_fraction * system.domain_C;
    int h0 = 0;
    while (h0 + 1 < smoothed.grid.size() && smoothed.grid[h0] < t0_target - 1e-12) ++h0;
    const double t0 = smoothed.grid[h0];

    MatrixXd init(system.p, k);
    for (int i = 0; i < system.p; ++i)
        for (int kk = 0; kk < k; ++kk) init(i, kk) = smoothed.est[kk](i, h0);

    const VectorXd grid = linspace(t0, system.domain_C, output_points);
    return solve_forward_with(system, report.beta_hat, report.omega_hat, init, t0, step, grid);
}

MetricsRow compute_metrics(const MatrixXd& estimates, const VectorXd& truth,
                           const std::vector<std::string>& names) {
    const int g = static_cast<int>(estimates.rows());
    const int m = static_cast<int>(estimates.cols());
    if (m != truth.size()) throw std::invalid_argument("compute_metrics: size mismatch");
    if (g < 1) throw std::invalid_argument("compute_metrics: need G >= 1");
    for (int l = 0; l < m; ++l) {
        if (truth[l] == 0.0) {
            const std::string name =
              (l < static_cast<int>(names.size())) ? names[l] : ("#" + std::to_string(l));
            throw std::invalid_argument("compute_metrics: true parameter " + name +
                                        " is zero; relative metrics undefined");
        }
    }
    MetricsRow row;
    for (int l = 0; l < m; ++l) {
        const double denom = std::abs(truth[l]);
        const double mean = estimates.col(l).mean();
        const double mse = (estimates.col(l).array() - truth[l]).square().mean();
        const double var = (estimates.col(l).array() - mean).square().mean();
        row.rrmse_pct += std::sqrt(mse) / denom;
        row.rbias_pct += std::abs(truth[l] - mean) / denom;
        row.rsd_pct += std::sqrt(var) / denom;
    }
    row.rrmse_pct *= 100.0 / m;
    row.rbias_pct *= 100.0 / m;
    row.rsd_pct *= 100.0 / m;
    return row;
}

}  // namespace greenmatch
