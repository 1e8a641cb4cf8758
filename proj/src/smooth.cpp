#include "greenmatch/smooth.hpp"

#include <cmath>
#include <limits>

#include "greenmatch/parallel.hpp"

namespace greenmatch {

namespace {

double weight_value(WeightKernel kernel, double u) {
    switch (kernel) {
        case WeightKernel::epanechnikov:
            return 0.75 * std::max(1.0 - u * u, 0.0);
        case WeightKernel::uniform:
            return std::abs(u) < 1.0 ? 0.5 : 0.0;
    }
    return 0.0;
}

struct LocalFit {
    VectorXd coeffs;        // scaled coefficients b_v; a_v = b_v / h^v
    double hat_self = 0.0;  // smoother weight of observation self_index on itself
};

/// Weighted normal-equation solve on the bandwidth-scaled basis u^v / v!.
/// `self_index` >= 0 additionally returns that observation's hat value.
LocalFit local_fit_core(Eigen::Ref<const VectorXd> times, Eigen::Ref<const VectorXd> values,
                        double t, const SmoothSpec& spec, int self_index) {
    const int m = spec.poly_order_m;
    const double h = spec.bandwidth_h;
    if (h <= 0) throw std::invalid_argument("local_poly_fit: bandwidth must be positive");
    if (m < spec.derivative_k) throw std::invalid_argument("local_poly_fit: need m >= k");

    MatrixXd normal = MatrixXd::Zero(m + 1, m + 1);
    VectorXd rhs = VectorXd::Zero(m + 1);
    VectorXd phi(m + 1);
    int effective = 0;
    for (int j = 0; j < times.size(); ++j) {
        const double u = (times[j] - t) / h;
        const double w = weight_value(spec.weight_kernel, u);
        if (w <= 0.0) continue;
        ++effective;
        phi[0] = 1.0;
        for (int v = 1; v <= m; ++v) phi[v] = phi[v - 1] * u / v;
        normal.selfadjointView<Eigen::Lower>().rankUpdate(phi, w);
        rhs += w * phi * values[j];
    }
    if (effective < m + 1)
        throw NumericalError("local_poly_fit: only " + std::to_string(effective) +
                             " observations in window at t = " + std::to_string(t));
    const MatrixXd full = normal.selfadjointView<Eigen::Lower>();
    normal = full;

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(normal);
    const double lam_max = eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() < 1e-12 * std::max(lam_max, 1.0)) {
        // Repeated or near-coincident time points: ridge on the normal equations.
        normal.diagonal().array() += 1e-10 * std::max(lam_max, 1.0);
        eig.compute(normal);
    }
    const VectorXd solved = eig.eigenvectors() *
                            (eig.eigenvectors().transpose() * rhs).cwiseQuotient(eig.eigenvalues());

    LocalFit fit;
    fit.coeffs = solved;
    if (self_index >= 0) {
        const double w0 = weight_value(spec.weight_kernel, (times[self_index] - t) / h);
        VectorXd e0 = VectorXd::Zero(m + 1);
        e0[0] = 1.0;
        const VectorXd row = eig.eigenvectors() *
                             (eig.eigenvectors().transpose() * e0).cwiseQuotient(eig.eigenvalues());
        fit.hat_self = w0 * row[0];
    }
    return fit;
}

}  // namespace

double local_poly_fit(const SampledData& data, int variable_i, double t, const SmoothSpec& spec) {
    const LocalFit fit =
      local_fit_core(data.times, data.obs.row(variable_i).transpose(), t, spec, -1);
    return fit.coeffs[spec.derivative_k] / std::pow(spec.bandwidth_h, spec.derivative_k);
}

SmoothedCurves smooth_curves(const SampledData& data, int max_k, const VectorXd& grid,
                             const VectorXd& bandwidths, int threads) {
    if (bandwidths.size() != max_k + 1)
        throw std::invalid_argument("smooth_curves: need one bandwidth per derivative order");
    for (int k = 0; k <= max_k; ++k)
        if (bandwidths[k] <= 0)
            throw std::invalid_argument("smooth_curves: bandwidths must be positive");

    const int p = data.p();
    const int hn = static_cast<int>(grid.size());
    SmoothedCurves out;
    out.grid = grid;
    out.bandwidths = bandwidths;
    out.est.assign(max_k + 1, MatrixXd::Zero(p, hn));

    for (int k = 0; k <= max_k; ++k) {
        SmoothSpec spec;
        spec.derivative_k = k;
        spec.poly_order_m = k + 1;
        spec.bandwidth_h = bandwidths[k];
        MatrixXd& target = out.est[k];
        parallel_for(p * hn, threads, [&](int idx) {
            const int i = idx / hn;
            const int h = idx % hn;
            target(i, h) = local_poly_fit(data, i, grid[h], spec);
        });
    }
    return out;
}

VectorXd default_bandwidth_candidates(const SampledData& data, double domain_c) {
    std::vector<double> gaps;
    for (int j = 1; j < data.n(); ++j) gaps.push_back(data.times[j] - data.times[j - 1]);
    const double lo = std::max(2.0 * median(gaps), 1e-8 * domain_c);
    const double hi = domain_c / 4.0;
    const int count = 20;
    VectorXd cands(count);
    for (int c = 0; c < count; ++c)
        cands[c] = lo * std::pow(hi / lo, static_cast<double>(c) / (count - 1));
    return cands;
}

double select_bandwidth(const SampledData& data, int variable_i, int k, const VectorXd& candidates,
                        int folds, bool undersmooth) {
    if (candidates.size() == 0) throw std::invalid_argument("select_bandwidth: no candidates");
    for (int c = 0; c < candidates.size(); ++c)
        if (candidates[c] <= 0)
            throw std::invalid_argument("select_bandwidth: candidates must be positive");
    if (folds < 2) throw std::invalid_argument("select_bandwidth: need folds >= 2");
    const int n = data.n();
    const VectorXd values = data.obs.row(variable_i).transpose();

    VectorXd scores = VectorXd::Zero(candidates.size());
    std::vector<bool> valid(candidates.size(), true);
    SmoothSpec spec;
    spec.derivative_k = k;
    spec.poly_order_m = k + 1;

    for (int fold = 0; fold < folds; ++fold) {
        std::vector<double> tt, ty;
        tt.reserve(n);
        ty.reserve(n);
        for (int j = 0; j < n; ++j) {
            if (j % folds != fold) {
                tt.push_back(data.times[j]);
                ty.push_back(values[j]);
            }
        }
        const Eigen::Map<const VectorXd> train_t(tt.data(), static_cast<int>(tt.size()));
        const Eigen::Map<const VectorXd> train_y(ty.data(), static_cast<int>(ty.size()));
        for (int c = 0; c < candidates.size(); ++c) {
            if (!valid[c]) continue;
            spec.bandwidth_h = candidates[c];
            for (int j = 0; j < n; ++j) {
                if (j % folds != fold) continue;
                try {
                    const LocalFit fit = local_fit_core(train_t, train_y, data.times[j], spec, -1);
                    const double r = values[j] - fit.coeffs[0];  // level prediction
                    scores[c] += r * r;
                } catch (const NumericalError&) {
                    valid[c] = false;
                    break;
                }
            }
        }
    }

    double best_h = 0.0;
    double best_score = std::numeric_limits<double>::infinity();
    for (int c = 0; c < candidates.size(); ++c) {
        if (valid[c] && scores[c] < best_score) {
            best_score = scores[c];
            best_h = candidates[c];
        }
    }
    if (best_h <= 0)
        throw NumericalError("select_bandwidth: every candidate failed the rank conditions");
    if (undersmooth && k == 0) best_h *= std::pow(static_cast<double>(n), -0.1);
    return best_h;
}

std::pair<double, double> residual_variance(const SampledData& data, int variable_i, double h0) {
    const int n = data.n();
    const VectorXd values = data.obs.row(variable_i).transpose();
    SmoothSpec spec;
    spec.derivative_k = 0;
    spec.poly_order_m = 1;
    spec.bandwidth_h = h0;

    double rss = 0.0, trace = 0.0;
    for (int j = 0; j < n; ++j) {
        const LocalFit fit = local_fit_core(data.times, values, data.times[j], spec, j);
        const double r = values[j] - fit.coeffs[0];
        rss += r * r;
        trace += fit.hat_self;
    }
    const double dof = std::max(n - trace, 1.0);
    return {rss / dof, trace};
}

}  // namespace greenmatch
