#include "greenmatch/systems.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "greenmatch/rng.hpp"

namespace greenmatch {

namespace {

constexpr double kBreakTol = 1e-9;

/// Indicator of [lo, hi] that returns the midpoint value 0.5 exactly at the
/// jumps, so node-aligned trapezoid quadrature of forcing terms stays
/// second-order accurate.
double pulse(double t, double lo, double hi) {
    if (std::abs(t - lo) <= kBreakTol || std::abs(t - hi) <= kBreakTol) return 0.5;
    return (t > lo && t < hi) ? 1.0 : 0.0;
}

/// Piecewise-constant forcing on Q equal segments of [0, C]; midpoint value
/// at interior segment boundaries.
double step_forcing(double t, double c, const VectorXd& levels) {
    const int q = static_cast<int>(levels.size());
    const double seg = c / q;
    for (int b = 1; b < q; ++b)
        if (std::abs(t - b * seg) <= kBreakTol) return 0.5 * (levels[b - 1] + levels[b]);
    int idx = static_cast<int>(std::floor(t / seg));
    idx = std::clamp(idx, 0, q - 1);
    return levels[idx];
}

int wrap_index(int i, int p) {
    while (i >= p) i -= p;
    while (i < 0) i += p;
    return i;
}

double take_override(std::map<std::string, double>& ov, const std::string& key, double fallback) {
    auto it = ov.find(key);
    if (it == ov.end()) return fallback;
    const double v = it->second;
    ov.erase(it);
    return v;
}

void apply_value_overrides(DynamicSystem& sys, std::map<std::string, double>& ov) {
    for (auto it = ov.begin(); it != ov.end();) {
        bool hit = false;
        for (auto& par : sys.beta_params)
            if (par.name == it->first) { par.truth = it->second; hit = true; }
        for (int i = 0; i < sys.p && !hit; ++i) {
            for (int k = 0; k < sys.order_K; ++k) {
                if (it->first == "x0_" + std::to_string(i + 1) && k == 0) {
                    sys.init(i, 0) = it->second;
                    hit = true;
                } else if (it->first == "dx0_" + std::to_string(i + 1) && sys.order_K >= 2) {
                    sys.init(i, 1) = it->second;
                    hit = true;
                }
            }
        }
        if (hit) it = ov.erase(it); else ++it;
    }
    if (!ov.empty())
        throw std::invalid_argument("builtin_system: unknown override '" + ov.begin()->first + "'");
}

DynamicSystem make_gene_network(std::map<std::string, double> ov) {
    DynamicSystem sys;
    sys.name = "gene_network";
    sys.p = static_cast<int>(take_override(ov, "p", 50));
    sys.order_K = 1;
    sys.domain_C = take_override(ov, "C", 20.0);
    const int p = sys.p;

    sys.separable = true;
    sys.beta_block_sizes.assign(p, 3);
    for (int i = 1; i <= p; ++i) {
        sys.beta_params.push_back({"a" + std::to_string(i) + "_1", 0.5});
        sys.beta_params.push_back({"a" + std::to_string(i) + "_2", 1.0});
        sys.beta_params.push_back({"a" + std::to_string(i) + "_3", 0.1});
    }
    sys.omega = MatrixXd::Zero(p, 1);
    sys.omega_known = true;
    sys.init.resize(p, 1);
    for (int i = 0; i < p; ++i) sys.init(i, 0) = 5.0 - 4.0 / (p - 1) * i;

    sys.features = [p](int i, const VectorXd& x, double) {
        VectorXd g(3);
        g[0] = std::sin(0.5 * x[i]);
        g[1] = -std::cos(0.5 * x[wrap_index(i + 5, p)]);
        g[2] = x[wrap_index(i - 3, p)];
        return g;
    };
    auto features = sys.features;
    sys.drive = [p, features](const VectorXd& x, double t, const VectorXd& beta) {
        VectorXd f(p);
        for (int i = 0; i < p; ++i) f[i] = features(i, x, t).dot(beta.segment(3 * i, 3));
        return f;
    };
    sys.drive_state_jac = [p](int i, const VectorXd& x, double, const VectorXd& beta) {
        VectorXd j = VectorXd::Zero(p);
        j[i] += beta[3 * i] * 0.5 * std::cos(0.5 * x[i]);
        j[wrap_index(i + 5, p)] += beta[3 * i + 1] * 0.5 * std::sin(0.5 * x[wrap_index(i + 5, p)]);
        j[wrap_index(i - 3, p)] += beta[3 * i + 2];
        return j;
    };
    apply_value_overrides(sys, ov);
    return sys;
}

DynamicSystem make_spring_mass(std::map<std::string, double> ov) {
    DynamicSystem sys;
    sys.name = "spring_mass";
    sys.p = static_cast<int>(take_override(ov, "p", 10));
    sys.order_K = 2;
    sys.domain_C = take_override(ov, "C", 20.0);
    const int p = sys.p;
    const double len = take_override(ov, "L", 2.0);
    const double grav = take_override(ov, "g", 9.8);

    // Spring constants are shared between adjacent equations, so the drive is
    // linear in beta but not block-separable.
    sys.separable = false;
    sys.beta_block_sizes.assign(p, 0);
    for (int i = 1; i <= p; ++i) sys.beta_params.push_back({"c" + std::to_string(i), 3.0});
    sys.omega = MatrixXd::Zero(p, 2);
    sys.omega_known = true;
    sys.init = MatrixXd::Zero(p, 2);
    for (int i = 0; i < p; ++i) sys.init(i, 0) = 2.0 * (i + 1);

    sys.drive = [p, len, grav](const VectorXd& x, double t, const VectorXd& c) {
        VectorXd f(p);
        f[0] = c[1] * (x[1] - x[0] - len) - c[0] * (x[0] - len) + grav;
        for (int i = 1; i + 1 < p; ++i)
            f[i] = c[i + 1] * (x[i + 1] - x[i] - len) - c[i] * (x[i] - x[i - 1] - len) + grav;
        f[p - 1] = -c[p - 1] * (x[p - 1] - x[p - 2] - len) + grav + 5.0 * std::sin(t);
        return f;
    };
    sys.drive_beta_jac = [p, len](int i, const VectorXd& x, double, const VectorXd&) {
        VectorXd j = VectorXd::Zero(p);
        if (i == 0) {
            j[0] = -(x[0] - len);
            j[1] = x[1] - x[0] - len;
        } else if (i + 1 < p) {
            j[i] = -(x[i] - x[i - 1] - len);
            j[i + 1] = x[i + 1] - x[i] - len;
        } else {
            j[p - 1] = -(x[p - 1] - x[p - 2] - len);
        }
        return j;
    };
    sys.drive_state_jac = [p](int i, const VectorXd&, double, const VectorXd& c) {
        VectorXd j = VectorXd::Zero(p);
        if (i == 0) {
            j[0] = -c[1] - c[0];
            j[1] = c[1];
        } else if (i + 1 < p) {
            j[i - 1] = c[i];
            j[i] = -c[i + 1] - c[i];
            j[i + 1] = c[i + 1];
        } else {
            j[p - 2] = c[p - 1];
            j[p - 1] = -c[p - 1];
        }
        return j;
    };
    apply_value_overrides(sys, ov);
    return sys;
}

DynamicSystem make_oddm(std::map<std::string, double> ov) {
    DynamicSystem sys;
    sys.name = "oddm";
    sys.p = static_cast<int>(take_override(ov, "p", 50));
    sys.order_K = 2;
    sys.domain_C = take_override(ov, "C", 20.0);
    const int p = sys.p;

    sys.separable = true;
    sys.beta_block_sizes.assign(p, 2);
    sys.beta_block_sizes[p - 1] = 1;
    for (int i = 1; i < p; ++i) {
        sys.beta_params.push_back({"c" + std::to_string(i), 0.2 * ((i % 2 == 1) ? 1.0 : -1.0)});
        sys.beta_params.push_back({"d" + std::to_string(i), 0.1});
    }
    sys.beta_params.push_back({"d" + std::to_string(p), 0.1});

    sys.omega.resize(p, 2);
    sys.omega_known = false;
    for (int i = 0; i < p; ++i) {
        const double a = 0.4 + 0.2 * i / (p - 1);
        const double b = 0.9 + 0.2 * i / (p - 1);
        sys.omega(i, 0) = b;  // coefficient of X_i
        sys.omega(i, 1) = a;  // coefficient of DX_i
        sys.omega_params.push_back({"b" + std::to_string(i + 1), b});
        sys.omega_params.push_back({"a" + std::to_string(i + 1), a});
    }
    sys.init = MatrixXd::Zero(p, 2);
    sys.breakpoints = {2.0, 3.0};

    sys.features = [p](int i, const VectorXd& x, double t) {
        if (i + 1 < p) {
            VectorXd g(2);
            g[0] = x[i + 1];
            g[1] = pulse(t, 2.0, 3.0);
            return g;
        }
        VectorXd g(1);
        g[0] = pulse(t, 2.0, 3.0);
        return g;
    };
    auto features = sys.features;
    sys.drive = [p, features](const VectorXd& x, double t, const VectorXd& beta) {
        VectorXd f(p);
        int off = 0;
        for (int i = 0; i < p; ++i) {
            const int sz = (i + 1 < p) ? 2 : 1;
            f[i] = features(i, x, t).dot(beta.segment(off, sz));
            off += sz;
        }
        return f;
    };
    sys.drive_state_jac = [p](int i, const VectorXd&, double, const VectorXd& beta) {
        VectorXd j = VectorXd::Zero(p);
        if (i + 1 < p) j[i + 1] = beta[2 * i];
        return j;
    };
    apply_value_overrides(sys, ov);
    return sys;
}

DynamicSystem make_harmonic(std::map<std::string, double> ov) {
    DynamicSystem sys;
    sys.name = "harmonic";
    sys.p = 2;
    sys.order_K = 2;
    sys.domain_C = take_override(ov, "C", 6.0);
    const int q = static_cast<int>(take_override(ov, "Q", 6));
    const double c = sys.domain_C;

    sys.separable = true;
    sys.beta_block_sizes = {q + 1, q + 1};
    sys.beta_params.push_back({"c_X", -0.0015});
    const VectorXd ax = linspace(-0.0005, 0.0005, q);
    for (int s = 0; s < q; ++s) sys.beta_params.push_back({"a_X" + std::to_string(s + 1), ax[s]});
    sys.beta_params.push_back({"c_Z", -0.0015});
    const VectorXd az = linspace(-0.002, 0.001, q);
    for (int s = 0; s < q; ++s) sys.beta_params.push_back({"a_Z" + std::to_string(s + 1), az[s]});

    sys.omega = MatrixXd::Zero(2, 2);
    sys.omega_known = true;
    sys.init = MatrixXd::Zero(2, 2);
    for (int b = 1; b < q; ++b) sys.breakpoints.push_back(b * c / q);

    sys.features = [q, c](int i, const VectorXd& x, double t) {
        VectorXd g = VectorXd::Zero(q + 1);
        g[0] = x[i];
        VectorXd unit = VectorXd::Zero(q);
        for (int s = 0; s < q; ++s) {
            unit.setZero();
            unit[s] = 1.0;
            g[s + 1] = step_forcing(t, c, unit);
        }
        return g;
    };
    auto features = sys.features;
    sys.drive = [features, q](const VectorXd& x, double t, const VectorXd& beta) {
        VectorXd f(2);
        f[0] = features(0, x, t).dot(beta.segment(0, q + 1));
        f[1] = features(1, x, t).dot(beta.segment(q + 1, q + 1));
        return f;
    };
    sys.drive_state_jac = [q](int i, const VectorXd&, double, const VectorXd& beta) {
        VectorXd j = VectorXd::Zero(2);
        j[i] = beta[i * (q + 1)];
        return j;
    };
    apply_value_overrides(sys, ov);
    return sys;
}

DynamicSystem make_pendulum(std::map<std::string, double> ov) {
    DynamicSystem sys;
    sys.name = "pendulum";
    sys.p = 1;
    sys.order_K = 2;
    sys.domain_C = take_override(ov, "C", 20.0);

    sys.separable = true;
    sys.beta_block_sizes = {1};
    sys.beta_params.push_back({"b_sin", -1.0});
    sys.omega = MatrixXd::Zero(1, 2);
    sys.omega_known = true;
    sys.init = MatrixXd::Zero(1, 2);
    sys.init(0, 0) = 0.3;

    sys.features = [](int, const VectorXd& x, double) {
        VectorXd g(1);
        g[0] = std::sin(x[0]);
        return g;
    };
    sys.drive = [](const VectorXd& x, double, const VectorXd& beta) {
        VectorXd f(1);
        f[0] = beta[0] * std::sin(x[0]);
        return f;
    };
    sys.drive_state_jac = [](int, const VectorXd& x, double, const VectorXd& beta) {
        VectorXd j(1);
        j[0] = beta[0] * std::cos(x[0]);
        return j;
    };
    apply_value_overrides(sys, ov);
    return sys;
}

}  // namespace

int DynamicSystem::beta_block_offset(int i) const {
    int off = 0;
    for (int v = 0; v < i; ++v) off += beta_block_sizes[v];
    return off;
}

VectorXd DynamicSystem::beta_truth() const {
    VectorXd b(beta_params.size());
    for (size_t l = 0; l < beta_params.size(); ++l) b[static_cast<int>(l)] = beta_params[l].truth;
    return b;
}

VectorXd DynamicSystem::beta_block(const VectorXd& beta, int i) const {
    return beta.segment(beta_block_offset(i), beta_block_sizes[i]);
}

std::vector<ParamInfo> DynamicSystem::all_params() const {
    std::vector<ParamInfo> out = beta_params;
    if (!omega_known) out.insert(out.end(), omega_params.begin(), omega_params.end());
    return out;
}

double TrajectorySet::interpolate_level(int i, double t) const {
    const int n = static_cast<int>(grid.size());
    if (t <= grid[0]) return derivative[0](i, 0);
    if (t >= grid[n - 1]) return derivative[0](i, n - 1);
    const double* begin = grid.data();
    int j = static_cast<int>(std::upper_bound(begin, begin + n, t) - begin) - 1;
    j = std::clamp(j, 0, n - 2);
    const double dt = grid[j + 1] - grid[j];
    const double u = (t - grid[j]) / dt;
    const double u2 = u * u, u3 = u2 * u;
    const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
    const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
    return h00 * derivative[0](i, j) + h10 * dt * derivative[1](i, j) +
           h01 * derivative[0](i, j + 1) + h11 * dt * derivative[1](i, j + 1);
}

DynamicSystem builtin_system(const std::string& name, const std::map<std::string, double>& overrides) {
    if (name == "gene_network") return make_gene_network(overrides);
    if (name == "spring_mass") return make_spring_mass(overrides);
    if (name == "oddm") return make_oddm(overrides);
    if (name == "harmonic") return make_harmonic(overrides);
    if (name == "pendulum") return make_pendulum(overrides);
    throw std::invalid_argument("builtin_system: unknown system '" + name + "'");
}

TrajectorySet solve_forward_with(const DynamicSystem& system, const VectorXd& beta,
                                 const MatrixXd& omega, const MatrixXd& init, double t0,
                                 double step, const VectorXd& output_grid) {
    if (step <= 0) throw std::invalid_argument("solve_forward: step must be positive");
    const int p = system.p, k = system.order_K;
    for (int h = 0; h < output_grid.size(); ++h)
        if (output_grid[h] < t0 - kBreakTol || output_grid[h] > system.domain_C + kBreakTol)
            throw std::invalid_argument("solve_forward: output grid outside [t0, C]");

    // Companion state y[i*K + j] = D^j X_i.
    VectorXd y(p * k);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < k; ++j) y[i * k + j] = init(i, j);

    auto deriv = [&](const VectorXd& state, double t) {
        VectorXd levels(p);
        for (int i = 0; i < p; ++i) levels[i] = state[i * k];
        const VectorXd f = system.drive(levels, t, beta);
        VectorXd dy(p * k);
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j + 1 < k; ++j) dy[i * k + j] = state[i * k + j + 1];
            double top = f[i];
            for (int j = 0; j < k; ++j) top -= omega(i, j) * state[i * k + j];
            dy[i * k + k - 1] = top;
        }
        return dy;
    };

    // Waypoints: output times plus forcing breakpoints, so no step straddles
    // a discontinuity.
    std::set<double> waypoint_set;
    for (int h = 0; h < output_grid.size(); ++h) waypoint_set.insert(output_grid[h]);
    for (double b : system.breakpoints)
        if (b > t0 + kBreakTol && b < system.domain_C - kBreakTol) waypoint_set.insert(b);
    waypoint_set.insert(t0);
    std::vector<double> waypoints(waypoint_set.begin(), waypoint_set.end());

    TrajectorySet traj;
    traj.grid = output_grid;
    traj.derivative.assign(k + 1, MatrixXd::Zero(p, output_grid.size()));

    int out_idx = 0;
    auto record = [&](double t, const VectorXd& state) {
        while (out_idx < output_grid.size() && std::abs(output_grid[out_idx] - t) <= kBreakTol) {
            VectorXd levels(p);
            for (int i = 0; i < p; ++i) levels[i] = state[i * k];
            const VectorXd f = system.drive(levels, t, beta);
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < k; ++j) traj.derivative[j](i, out_idx) = state[i * k + j];
                double top = f[i];
                for (int j = 0; j < k; ++j) top -= omega(i, j) * state[i * k + j];
                traj.derivative[k](i, out_idx) = top;
            }
            ++out_idx;
        }
    };

    record(t0, y);
    for (size_t w = 0; w + 1 < waypoints.size(); ++w) {
        const double a = waypoints[w], b = waypoints[w + 1];
        const int nsteps = std::max(1, static_cast<int>(std::ceil((b - a) / step - 1e-12)));
        const double h = (b - a) / nsteps;
        double t = a;
        for (int s = 0; s < nsteps; ++s) {
            const VectorXd k1 = deriv(y, t);
            const VectorXd k2 = deriv(y + 0.5 * h * k1, t + 0.5 * h);
            const VectorXd k3 = deriv(y + 0.5 * h * k2, t + 0.5 * h);
            const VectorXd k4 = deriv(y + h * k3, t + h);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = (s + 1 == nsteps) ? b : a + (s + 1) * h;
            if (!y.allFinite())
                throw NumericalError("solve_forward: state diverged near t = " + std::to_string(t));
        }
        record(b, y);
    }
    return traj;
}

TrajectorySet solve_forward(const DynamicSystem& system, double step, const VectorXd& output_grid) {
    return solve_forward_with(system, system.beta_truth(), system.omega, system.init, 0.0, step,
                              output_grid);
}

SampledData simulate_observations(const TrajectorySet& traj, const DynamicSystem& system, int n,
                                  double gamma, Sampling sampling, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("simulate_observations: need n >= 2");
    if (gamma < 0) throw std::invalid_argument("simulate_observations: gamma must be >= 0");
    const int p = system.p;

    GaussianSampler rng(seed);
    SampledData data;
    data.gamma = gamma;
    data.seed = seed;

    if (sampling == Sampling::equispaced) {
        data.times = linspace(0.0, system.domain_C, n);
    } else {
        data.times.resize(n);
        for (int j = 0; j < n; ++j) data.times[j] = system.domain_C * rng.uniform01();
        std::sort(data.times.data(), data.times.data() + n);
    }

    data.noise_sigma.resize(p);
    for (int i = 0; i < p; ++i) {
        const VectorXd sq = traj.derivative[0].row(i).array().square();
        data.noise_sigma[i] = gamma * std::sqrt(trapezoid(traj.grid, sq) / system.domain_C);
    }

    data.obs.resize(p, n);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < n; ++j) data.obs(i, j) = traj.interpolate_level(i, data.times[j]);
    if (gamma > 0) {
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < n; ++j) data.obs(i, j) += data.noise_sigma[i] * rng.normal();
    }
    return data;
}

}  // namespace greenmatch
