#include "greenmatch/match.hpp"

#include <cmath>
#include <map>

#include "greenmatch/parallel.hpp"

namespace greenmatch {

namespace {

constexpr double kGridTol = 1e-9;

std::vector<int> map_eval_to_s(const VectorXd& t_eval, const VectorXd& s_grid) {
    std::vector<int> idx(t_eval.size());
    const double tol = kGridTol * std::max(1.0, std::abs(s_grid[s_grid.size() - 1]));
    for (int h = 0; h < t_eval.size(); ++h) {
        const int j = grid_index_of(s_grid, t_eval[h], tol);
        if (j < 0)
            throw std::invalid_argument("build_design: eval grid must be a subset of the smoothing grid");
        idx[h] = j;
    }
    return idx;
}

/// Support-restricted trapezoid weights: row h integrates over [s_0, t_eval[h]].
MatrixXd restricted_quad(const VectorXd& t_eval, const VectorXd& s_grid,
                         const std::vector<int>& cut) {
    const int hn = static_cast<int>(t_eval.size());
    const int sn = static_cast<int>(s_grid.size());
    MatrixXd q = MatrixXd::Zero(hn, sn);
    for (int h = 0; h < hn; ++h) {
        const int jc = cut[h];
        if (jc < 1) continue;
        for (int j = 0; j <= jc; ++j) {
            double tau;
            if (j == 0)
                tau = 0.5 * (s_grid[1] - s_grid[0]);
            else if (j == jc)
                tau = 0.5 * (s_grid[jc] - s_grid[jc - 1]);
            else
                tau = 0.5 * (s_grid[j + 1] - s_grid[j - 1]);
            q(h, j) = tau;
        }
    }
    return q;
}

VectorXd poly_basis_row(int order_k, double t) {
    VectorXd psi(order_k);
    psi[0] = 1.0;
    for (int v = 1; v < order_k; ++v) psi[v] = psi[v - 1] * t / v;
    return psi;
}

/// Least squares via column-pivoted QR; falls back to ridged normal equations
/// when the design is badly conditioned.
VectorXd solve_ls(const MatrixXd& a, const VectorXd& b, double* cond_out) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    const VectorXd rdiag = qr.matrixR().diagonal().cwiseAbs();
    const double rmax = rdiag.maxCoeff();
    const double rmin = rdiag.minCoeff();
    const double cond = (rmin > 0.0) ? rmax / rmin : std::numeric_limits<double>::infinity();
    if (cond_out) *cond_out = std::max(*cond_out, cond);
    if (cond <= 1e12) return qr.solve(b);
    MatrixXd normal = a.transpose() * a;
    normal.diagonal().array() += 1e-10 * normal.trace() / normal.rows();
    return normal.ldlt().solve(a.transpose() * b);
}

MatrixXd weight_rows(const MatrixXd& block, const VectorXd& sqrt_w) {
    return sqrt_w.asDiagonal() * block;
}

struct GreensKernels {
    std::shared_ptr<std::vector<MatrixXd>> poly;              // G_1..G_K raw
    std::vector<std::shared_ptr<const MatrixXd>> per_var;     // operator kernel raw
    std::vector<MatrixXd> basis;                               // per variable H x K
};

GreensKernels build_greens_kernels(const DynamicSystem& system, const VectorXd& t_eval,
                                   const VectorXd& s_grid, bool treat_known) {
    GreensKernels out;
    const int k = system.order_K;
    const int hn = static_cast<int>(t_eval.size());
    const int sn = static_cast<int>(s_grid.size());

    if (!treat_known) {
        out.poly = std::make_shared<std::vector<MatrixXd>>();
        out.poly->reserve(k);
        for (int kk = 1; kk <= k; ++kk) {
            MatrixXd g(hn, sn);
            for (int h = 0; h < hn; ++h)
                for (int j = 0; j < sn; ++j) g(h, j) = poly_green_kernel(kk, t_eval[h], s_grid[j]);
            out.poly->push_back(std::move(g));
        }
        MatrixXd psi(hn, k);
        for (int h = 0; h < hn; ++h) psi.row(h) = poly_basis_row(k, t_eval[h]).transpose();
        out.basis.assign(system.p, psi);
        out.per_var.assign(system.p,
                           std::make_shared<const MatrixXd>((*out.poly)[k - 1]));
        return out;
    }

    // Known operator: one kernel per distinct omega row.
    std::map<std::vector<double>, std::pair<std::shared_ptr<const MatrixXd>, MatrixXd>> cache;
    out.per_var.resize(system.p);
    out.basis.resize(system.p);
    for (int i = 0; i < system.p; ++i) {
        std::vector<double> key(system.omega.row(i).data(),
                                system.omega.row(i).data() + k);
        auto it = cache.find(key);
        if (it == cache.end()) {
            OperatorKernel kern(system.omega.row(i).transpose(), t_eval, s_grid);
            auto green = std::make_shared<const MatrixXd>(kern.green_values());
            it = cache.emplace(key, std::make_pair(green, kern.basis_rows())).first;
        }
        out.per_var[i] = it->second.first;
        out.basis[i] = it->second.second;
    }
    return out;
}

MethodDesign build_greens_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                 const MatchConfig& cfg, bool treat_known);

}  // namespace

std::string method_name(MatchMethod m) {
    switch (m) {
        case MatchMethod::greens: return "greens";
        case MatchMethod::grad_k: return "grad_k";
        case MatchMethod::grad_km1: return "grad_km1";
    }
    return "?";
}

VectorXd MethodDesign::drive_beta_jacobian(int i, int j, const VectorXd& beta) const {
    VectorXd jac = VectorXd::Zero(m);
    if (system->separable) {
        const VectorXd g = system->features(i, xhat_s.col(j), s_grid[j]);
        jac.segment(system->beta_block_offset(i), system->beta_block_sizes[i]) = g;
        return jac;
    }
    if (system->drive_beta_jac) return system->drive_beta_jac(i, xhat_s.col(j), s_grid[j], beta);
    // Central finite differences as a last resort.
    for (int l = 0; l < m; ++l) {
        const double step = 1e-6 * std::max(1.0, std::abs(beta[l]));
        VectorXd bp = beta, bm = beta;
        bp[l] += step;
        bm[l] -= step;
        jac[l] = (system->drive(xhat_s.col(j), s_grid[j], bp)[i] -
                  system->drive(xhat_s.col(j), s_grid[j], bm)[i]) /
                 (2.0 * step);
    }
    return jac;
}

namespace {

void fill_common(MethodDesign& d, const SmoothedCurves& smoothed, const DynamicSystem& system,
                 const MatchConfig& cfg) {
    d.system = &system;
    d.p = system.p;
    d.K = system.order_K;
    d.m = system.beta_dim();
    d.s_grid = smoothed.grid;
    if (d.s_grid.size() < 201)
        throw std::invalid_argument("build_design: smoothing grid too coarse for quadrature (< 201 points)");
    d.t_eval = (cfg.eval_grid.size() > 0) ? cfg.eval_grid : smoothed.grid;

    if (cfg.weight_w.size() > 0) {
        if (cfg.weight_w.size() != d.t_eval.size())
            throw std::invalid_argument("build_design: weight vector length mismatch");
        if (cfg.weight_w.minCoeff() < 0.0)
            throw std::invalid_argument("build_design: weights must be nonnegative");
        d.w = cfg.weight_w;
    } else {
        const double c = system.domain_C;
        const double lo = cfg.trim_fraction * c;
        const double hi = (1.0 - cfg.trim_fraction) * c;
        d.w = VectorXd::Zero(d.t_eval.size());
        for (int h = 0; h < d.t_eval.size(); ++h)
            d.w[h] = (d.t_eval[h] >= lo - kGridTol && d.t_eval[h] <= hi + kGridTol) ? 1.0 : 0.0;
    }
    d.sqrt_w = d.w.cwiseSqrt();
    d.quad_eval = trapezoid_weights(d.t_eval);
    d.s_quad_full = trapezoid_weights(d.s_grid);
    d.xhat_s = smoothed.est[0];
}

MethodDesign build_greens_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                 const MatchConfig& cfg, bool treat_known) {
    MethodDesign d;
    d.method = MatchMethod::greens;
    d.omega_in_nu = !treat_known;
    fill_common(d, smoothed, system, cfg);
    d.alpha_dim = d.K;
    d.separable_path = system.separable;

    const std::vector<int> cut = map_eval_to_s(d.t_eval, d.s_grid);
    d.quad_s = restricted_quad(d.t_eval, d.s_grid, cut);

    GreensKernels kernels = build_greens_kernels(system, d.t_eval, d.s_grid, treat_known);
    d.poly_green = kernels.poly;
    d.op_green = kernels.per_var;

    const int hn = static_cast<int>(d.t_eval.size());
    const int sn = static_cast<int>(d.s_grid.size());

    // Quadrature-weighted operator kernels, shared across variables with the
    // same raw kernel.
    std::map<const MatrixXd*, std::shared_ptr<const MatrixXd>> op_cache;
    d.op.resize(d.p);
    for (int i = 0; i < d.p; ++i) {
        const MatrixXd* raw = kernels.per_var[i].get();
        auto it = op_cache.find(raw);
        if (it == op_cache.end()) {
            auto weighted = std::make_shared<const MatrixXd>(raw->cwiseProduct(d.quad_s));
            it = op_cache.emplace(raw, std::move(weighted)).first;
        }
        d.op[i] = it->second;
    }

    // Kernel-weighted X columns for the unknown-operator nuisance block.
    std::vector<MatrixXd> poly_weighted;
    if (!treat_known) {
        poly_weighted.reserve(d.K);
        for (int kk = 0; kk < d.K; ++kk)
            poly_weighted.push_back((*d.poly_green)[kk].cwiseProduct(d.quad_s));
    }

    d.Z.resize(d.p);
    d.Psi.resize(d.p);
    if (system.separable) d.Feat.resize(d.p);
    const std::vector<int>& eval_idx = cut;
    for (int i = 0; i < d.p; ++i) {
        d.Z[i].resize(hn);
        for (int h = 0; h < hn; ++h) d.Z[i][h] = smoothed.est[0](i, eval_idx[h]);

        d.Psi[i].resize(hn, d.nu_dim());
        d.Psi[i].leftCols(d.K) = kernels.basis[i];
        if (!treat_known) {
            const VectorXd xi = smoothed.est[0].row(i).transpose();
            for (int kk = 0; kk < d.K; ++kk)
                d.Psi[i].col(d.K + kk) = -(poly_weighted[d.K - 1 - kk] * xi);
        }
        if (system.separable) {
            MatrixXd feat(sn, system.beta_block_sizes[i]);
            for (int j = 0; j < sn; ++j)
                feat.row(j) = system.features(i, d.xhat_s.col(j), d.s_grid[j]).transpose();
            d.Feat[i] = std::move(feat);
        }
    }
    return d;
}

MethodDesign build_gradient_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                   GradOrder order, const MatchConfig& cfg) {
    MethodDesign d;
    d.method = (order == GradOrder::K) ? MatchMethod::grad_k : MatchMethod::grad_km1;
    d.omega_in_nu = !system.omega_known;
    fill_common(d, smoothed, system, cfg);
    const int k = d.K;
    const int need = (order == GradOrder::K) ? k : k - 1;
    if (smoothed.max_order() < need)
        throw std::invalid_argument("gradient_match: smoothed curves lack derivative order " +
                                    std::to_string(need));
    d.alpha_dim = (order == GradOrder::K) ? 0 : 1;
    d.separable_path = system.separable;

    const std::vector<int> eval_idx = map_eval_to_s(d.t_eval, d.s_grid);
    const int hn = static_cast<int>(d.t_eval.size());
    const int sn = static_cast<int>(d.s_grid.size());

    d.deriv_eval.resize(smoothed.max_order() + 1);
    for (int kk = 0; kk <= smoothed.max_order(); ++kk) {
        d.deriv_eval[kk].resize(d.p, hn);
        for (int h = 0; h < hn; ++h) d.deriv_eval[kk].col(h) = smoothed.est[kk].col(eval_idx[h]);
    }

    // op maps s-grid f values into residual rows.
    MatrixXd op = MatrixXd::Zero(hn, sn);
    if (order == GradOrder::K) {
        for (int h = 0; h < hn; ++h) op(h, eval_idx[h]) = 1.0;
    } else {
        // Cumulative trapezoid over the eval grid, placed at the matching s columns.
        for (int h = 0; h < hn; ++h) {
            for (int e = 0; e <= h; ++e) {
                double tau;
                if (h == 0)
                    break;
                else if (e == 0)
                    tau = 0.5 * (d.t_eval[1] - d.t_eval[0]);
                else if (e == h)
                    tau = 0.5 * (d.t_eval[h] - d.t_eval[h - 1]);
                else
                    tau = 0.5 * (d.t_eval[e + 1] - d.t_eval[e - 1]);
                op(h, eval_idx[e]) += tau;
            }
        }
    }
    auto shared_op = std::make_shared<const MatrixXd>(std::move(op));
    d.op.assign(d.p, shared_op);

    d.Z.resize(d.p);
    d.Psi.resize(d.p);
    if (system.separable) d.Feat.resize(d.p);
    for (int i = 0; i < d.p; ++i) {
        VectorXd z;
        if (order == GradOrder::K) {
            z = d.deriv_eval[k].row(i).transpose();
            if (system.omega_known)
                for (int kk = 0; kk < k; ++kk)
                    z += system.omega(i, kk) * d.deriv_eval[kk].row(i).transpose();
        } else {
            z = d.deriv_eval[k - 1].row(i).transpose();
            if (system.omega_known)
                for (int kk = 0; kk < k; ++kk)
                    z += system.omega(i, kk) *
                         (*shared_op * smoothed.est[kk].row(i).transpose());
        }
        d.Z[i] = std::move(z);

        d.Psi[i].resize(hn, d.nu_dim());
        int col = 0;
        if (d.alpha_dim == 1) d.Psi[i].col(col++).setOnes();
        if (d.omega_in_nu) {
            for (int kk = 0; kk < k; ++kk) {
                if (order == GradOrder::K)
                    d.Psi[i].col(col++) = -d.deriv_eval[kk].row(i).transpose();
                else
                    d.Psi[i].col(col++) =
                      -(*shared_op * smoothed.est[kk].row(i).transpose());
            }
        }
        if (system.separable) {
            MatrixXd feat(sn, system.beta_block_sizes[i]);
            for (int j = 0; j < sn; ++j)
                feat.row(j) = system.features(i, d.xhat_s.col(j), d.s_grid[j]).transpose();
            d.Feat[i] = std::move(feat);
        }
    }
    return d;
}

/// Residuals of the profiled objective at beta; nu_i solved per variable.
struct ProfiledState {
    double objective = 0.0;
    std::vector<VectorXd> resid;  // weighted residual per variable
    std::vector<VectorXd> nu;
};

MatrixXd drive_values(const MethodDesign& d, const VectorXd& beta) {
    const int sn = static_cast<int>(d.s_grid.size());
    MatrixXd f(d.p, sn);
    for (int j = 0; j < sn; ++j) f.col(j) = d.system->drive(d.xhat_s.col(j), d.s_grid[j], beta);
    return f;
}

ProfiledState profiled_residuals(const MethodDesign& d,
                                 const std::vector<MatrixXd>& psi_w,
                                 const std::vector<Eigen::ColPivHouseholderQR<MatrixXd>>& qr,
                                 const std::vector<VectorXd>& z_w, const MatrixXd& fvals) {
    ProfiledState st;
    st.resid.resize(d.p);
    st.nu.resize(d.p);
    for (int i = 0; i < d.p; ++i) {
        const VectorXd zeta = d.sqrt_w.cwiseProduct(*d.op[i] * fvals.row(i).transpose());
        VectorXd r = z_w[i] - zeta;
        if (d.nu_dim() > 0) {
            st.nu[i] = qr[i].solve(r);
            r -= psi_w[i] * st.nu[i];
        } else {
            st.nu[i] = VectorXd();
        }
        st.objective += r.squaredNorm();
        st.resid[i] = std::move(r);
    }
    return st;
}

EstimateReport finalize_report(const MethodDesign& d, const VectorXd& beta,
                               const std::vector<VectorXd>& nu, double objective, int iters,
                               bool converged, double cond) {
    EstimateReport rep;
    rep.method = method_name(d.method);
    rep.beta_hat = beta;
    rep.objective = objective;
    rep.iters = iters;
    rep.converged = converged;
    rep.condition_number = cond;

    rep.omega_hat = d.system->omega;
    rep.alpha_hat.resize(d.p);
    for (int i = 0; i < d.p; ++i) {
        if (d.alpha_dim > 0 && nu[i].size() >= d.alpha_dim)
            rep.alpha_hat[i] = nu[i].head(d.alpha_dim);
        if (d.omega_in_nu && nu[i].size() == d.nu_dim())
            rep.omega_hat.row(i) = nu[i].tail(d.K).transpose();
    }

    if (!d.system->omega_known) {
        rep.all_estimates.resize(d.m + d.p * d.K);
        rep.all_estimates.head(d.m) = beta;
        for (int i = 0; i < d.p; ++i)
            for (int kk = 0; kk < d.K; ++kk)
                rep.all_estimates[d.m + i * d.K + kk] = rep.omega_hat(i, kk);
    } else {
        rep.all_estimates = beta;
    }
    return rep;
}

EstimateReport solve_separable(const MethodDesign& d, const MatchConfig& cfg) {
    const DynamicSystem& system = *d.system;
    double cond = 0.0;
    VectorXd beta = VectorXd::Zero(d.m);
    std::vector<VectorXd> nu(d.p);
    double objective = 0.0;

    std::vector<double> cond_by_var(d.p, 0.0);
    std::vector<double> obj_by_var(d.p, 0.0);
    std::vector<VectorXd> sol_by_var(d.p);
    parallel_for(d.p, cfg.threads, [&](int i) {
        const int b = system.beta_block_sizes[i];
        MatrixXd r(d.t_eval.size(), d.nu_dim() + b);
        if (d.nu_dim() > 0) r.leftCols(d.nu_dim()) = weight_rows(d.Psi[i], d.sqrt_w);
        if (b > 0) r.rightCols(b) = weight_rows(*d.op[i] * d.Feat[i], d.sqrt_w);
        const VectorXd z = d.sqrt_w.cwiseProduct(d.Z[i]);
        const VectorXd sol = solve_ls(r, z, &cond_by_var[i]);
        obj_by_var[i] = (z - r * sol).squaredNorm();
        sol_by_var[i] = sol;
    });
    for (int i = 0; i < d.p; ++i) {
        nu[i] = sol_by_var[i].head(d.nu_dim());
        beta.segment(system.beta_block_offset(i), system.beta_block_sizes[i]) =
          sol_by_var[i].tail(system.beta_block_sizes[i]);
        objective += obj_by_var[i];
        cond = std::max(cond, cond_by_var[i]);
    }
    return finalize_report(d, beta, nu, objective, 1, true, cond);
}

EstimateReport solve_gauss_newton(const MethodDesign& d, const MatchConfig& cfg) {
    double cond = 0.0;

    std::vector<MatrixXd> psi_w(d.p);
    std::vector<VectorXd> z_w(d.p);
    std::vector<Eigen::ColPivHouseholderQR<MatrixXd>> qr(d.p);
    for (int i = 0; i < d.p; ++i) {
        psi_w[i] = weight_rows(d.Psi[i], d.sqrt_w);
        z_w[i] = d.sqrt_w.cwiseProduct(d.Z[i]);
        if (d.nu_dim() > 0) {
            qr[i].compute(psi_w[i]);
            const VectorXd rdiag = qr[i].matrixR().diagonal().cwiseAbs();
            if (rdiag.minCoeff() > 0.0) cond = std::max(cond, rdiag.maxCoeff() / rdiag.minCoeff());
        }
    }

    VectorXd beta = VectorXd::Zero(d.m);
    MatrixXd fvals = drive_values(d, beta);
    ProfiledState state = profiled_residuals(d, psi_w, qr, z_w, fvals);

    bool converged = false;
    int iter = 0;
    double lambda = 1e-10;
    for (; iter < cfg.gn_max_iter; ++iter) {
        // Stacked Jacobian of the profiled residuals.
        MatrixXd jtj = MatrixXd::Zero(d.m, d.m);
        VectorXd jtr = VectorXd::Zero(d.m);
        for (int i = 0; i < d.p; ++i) {
            MatrixXd df(d.s_grid.size(), d.m);
            for (int j = 0; j < d.s_grid.size(); ++j)
                df.row(j) = d.drive_beta_jacobian(i, static_cast<int>(j), beta).transpose();
            MatrixXd g = weight_rows(*d.op[i] * df, d.sqrt_w);
            if (d.nu_dim() > 0) g -= psi_w[i] * qr[i].solve(g);
            jtj.noalias() += g.transpose() * g;
            jtr.noalias() += g.transpose() * state.resid[i];  // J_i = -g
        }

        bool accepted = false;
        for (int damp = 0; damp < 8 && !accepted; ++damp) {
            MatrixXd lhs = jtj;
            lhs.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const VectorXd delta = lhs.ldlt().solve(jtr);
            double step = 1.0;
            for (int halve = 0; halve < 30; ++halve, step *= 0.5) {
                const VectorXd cand = beta + step * delta;
                const MatrixXd f_cand = drive_values(d, cand);
                ProfiledState cand_state = profiled_residuals(d, psi_w, qr, z_w, f_cand);
                if (cand_state.objective <= state.objective) {
                    const double drop = state.objective - cand_state.objective;
                    beta = cand;
                    state = std::move(cand_state);
                    accepted = true;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    if (drop <= cfg.gn_tol * std::max(state.objective, 1e-300)) converged = true;
                    break;
                }
            }
            if (!accepted) lambda *= 100.0;
        }
        if (converged || !accepted) {
            if (!accepted) converged = state.objective == 0.0;
            ++iter;
            break;
        }
    }
    return finalize_report(d, beta, state.nu, state.objective, iter, converged, cond);
}

}  // namespace

MethodDesign build_method_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                 MatchMethod method, const MatchConfig& cfg) {
    switch (method) {
        case MatchMethod::greens:
            return build_greens_design(smoothed, system, cfg, system.omega_known);
        case MatchMethod::grad_k:
            return build_gradient_design(smoothed, system, GradOrder::K, cfg);
        case MatchMethod::grad_km1:
            return build_gradient_design(smoothed, system, GradOrder::K_minus_1, cfg);
    }
    throw std::logic_error("build_method_design: bad method");
}

DesignBlocks build_design(const SmoothedCurves& smoothed, const DynamicSystem& system,
                          const MatchConfig& cfg) {
    const MethodDesign d = build_greens_design(smoothed, system, cfg, system.omega_known);
    DesignBlocks blocks;
    blocks.t_eval = d.t_eval;
    blocks.sqrt_w = d.sqrt_w;
    blocks.Z.resize(d.p);
    blocks.Psi.resize(d.p);
    if (system.separable) blocks.Phi.resize(d.p);
    for (int i = 0; i < d.p; ++i) {
        blocks.Z[i] = d.sqrt_w.cwiseProduct(d.Z[i]);
        blocks.Psi[i] = weight_rows(d.Psi[i], d.sqrt_w);
        if (system.separable) blocks.Phi[i] = weight_rows(*d.op[i] * d.Feat[i], d.sqrt_w);
    }
    return blocks;
}

EstimateReport solve_design(const MethodDesign& design, const MatchConfig& cfg) {
    const bool want_ls = (cfg.solver == MatchConfig::Solver::least_squares) ||
                         (cfg.solver == MatchConfig::Solver::automatic && design.separable_path);
    if (want_ls) {
        if (!design.separable_path)
            throw std::invalid_argument("solve_design: least-squares path needs a separable system");
        return solve_separable(design, cfg);
    }
    return solve_gauss_newton(design, cfg);
}

EstimateReport greens_match_unknown_op(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                       const MatchConfig& cfg) {
    const MethodDesign d = build_greens_design(smoothed, system, cfg, false);
    return solve_design(d, cfg);
}

EstimateReport greens_match_known_op(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                     const MatchConfig& cfg) {
    if (!system.omega_known)
        throw std::invalid_argument("greens_match_known_op: operator coefficients not flagged known");
    const MethodDesign d = build_greens_design(smoothed, system, cfg, true);
    return solve_design(d, cfg);
}

EstimateReport greens_match(const SmoothedCurves& smoothed, const DynamicSystem& system,
                            const MatchConfig& cfg) {
    return system.omega_known ? greens_match_known_op(smoothed, system, cfg)
                              : greens_match_unknown_op(smoothed, system, cfg);
}

EstimateReport gradient_match(const SmoothedCurves& smoothed, const DynamicSystem& system,
                              GradOrder order, const MatchConfig& cfg) {
    const MethodDesign d = build_gradient_design(smoothed, system, order, cfg);
    return solve_design(d, cfg);
}

GaugeShiftReport gauge_shift_check(const SmoothedCurves& smoothed, const DynamicSystem& system,
                                   const MatchConfig& cfg, const std::vector<MatrixXd>& u) {
    MethodDesign base = build_greens_design(smoothed, system, cfg, false);
    const int k = base.K;
    if (static_cast<int>(u.size()) != k)
        throw std::invalid_argument("gauge_shift_check: need one u_k per kernel order");
    for (const MatrixXd& uk : u)
        if (uk.rows() != k || uk.cols() != base.s_grid.size())
            throw std::invalid_argument("gauge_shift_check: u_k must be K x |s_grid|");

    const EstimateReport fit0 = solve_design(base, cfg);

    // Perturbed design: G_k -> G_k + psi(t)^T u_k(s), integrated over the full
    // domain (the psi^T u_k part has unrestricted support).
    const int hn = static_cast<int>(base.t_eval.size());
    const int sn = static_cast<int>(base.s_grid.size());
    MatrixXd psi_rows(hn, k);
    for (int h = 0; h < hn; ++h) psi_rows.row(h) = poly_basis_row(k, base.t_eval[h]).transpose();

    MethodDesign shifted = base;
    // u_K perturbs the driving-function transform.
    MatrixXd op_new = *base.op[0];
    for (int h = 0; h < hn; ++h)
        for (int j = 0; j < sn; ++j)
            op_new(h, j) += psi_rows.row(h).dot(u[k - 1].col(j)) * base.s_quad_full[j];
    auto shared_new = std::make_shared<const MatrixXd>(std::move(op_new));
    shifted.op.assign(base.p, shared_new);

    // u_{K-kk} perturbs the Xhat column with coefficient omega_{i,kk}.
    for (int i = 0; i < base.p; ++i) {
        const VectorXd xi = smoothed.est[0].row(i).transpose();
        for (int kk = 0; kk < k; ++kk) {
            const MatrixXd& pert = u[k - 1 - kk];  // perturbation of G_{K-kk}
            VectorXd v = VectorXd::Zero(k);
            for (int j = 0; j < sn; ++j) v += base.s_quad_full[j] * pert.col(j) * xi[j];
            shifted.Psi[i].col(k + kk) -= psi_rows * v;
        }
    }
    const EstimateReport fit1 = solve_design(shifted, cfg);

    GaugeShiftReport rep;
    rep.beta_max_diff = (fit0.beta_hat - fit1.beta_hat).cwiseAbs().maxCoeff();
    rep.omega_max_diff = (fit0.omega_hat - fit1.omega_hat).cwiseAbs().maxCoeff();
    rep.alpha_base.resize(base.p);
    rep.alpha_shifted.resize(base.p);
    rep.alpha_predicted.resize(base.p);

    const MatrixXd fvals = drive_values(base, fit0.beta_hat);
    for (int i = 0; i < base.p; ++i) {
        rep.alpha_base[i] = fit0.alpha_hat[i];
        rep.alpha_shifted[i] = fit1.alpha_hat[i];
        const VectorXd xi = smoothed.est[0].row(i).transpose();
        VectorXd pred = fit0.alpha_hat[i];
        for (int j = 0; j < sn; ++j)
            pred -= base.s_quad_full[j] * u[k - 1].col(j) * fvals(i, j);
        for (int kk = 0; kk < k; ++kk) {
            const MatrixXd& pert = u[k - 1 - kk];
            for (int j = 0; j < sn; ++j)
                pred += fit0.omega_hat(i, kk) * base.s_quad_full[j] * pert.col(j) * xi[j];
        }
        rep.alpha_predicted[i] = pred;
        rep.alpha_max_diff = std::max(
          rep.alpha_max_diff, (fit1.alpha_hat[i] - fit0.alpha_hat[i]).cwiseAbs().maxCoeff());
    }
    return rep;
}

}  // namespace greenmatch
