#include <doctest.h>

#include <random>

#include "greenmatch/greens.hpp"
#include "test_util.hpp"

using namespace greenmatch;

TEST_CASE("companion matrix layout") {
    SUBCASE("K=1") {
        VectorXd omega(1);
        omega << 0.7;
        const MatrixXd a = companion_matrix(omega);
        REQUIRE(a.rows() == 1);
        CHECK(a(0, 0) == doctest::Approx(-0.7).epsilon(1e-15));
    }
    SUBCASE("K=2 rotation generator") {
        VectorXd omega(2);
        omega << 1.0, 0.0;
        const MatrixXd a = companion_matrix(omega);
        CHECK(a(0, 0) == 0.0);
        CHECK(a(0, 1) == 1.0);
        CHECK(a(1, 0) == -1.0);
        CHECK(a(1, 1) == 0.0);
    }
    SUBCASE("K=3 zero omega is strictly superdiagonal") {
        const MatrixXd a = companion_matrix(VectorXd::Zero(3));
        MatrixXd expected = MatrixXd::Zero(3, 3);
        expected(0, 1) = 1.0;
        expected(1, 2) = 1.0;
        CHECK((a - expected).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("matrix exponential") {
    SUBCASE("zero matrix gives identity") {
        const MatrixXd e = matrix_exponential(MatrixXd::Zero(3, 3));
        CHECK((e - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("rotation by pi/2") {
        MatrixXd gen(2, 2);
        gen << 0, 1, -1, 0;
        const MatrixXd e = matrix_exponential(gen * (M_PI / 2.0));
        MatrixXd expected(2, 2);
        expected << 0, 1, -1, 0;
        CHECK((e - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("random 4x4 against the Taylor oracle") {
        std::mt19937_64 gen(42);
        std::uniform_real_distribution<double> unif(-2.0, 2.0);
        for (int trial = 0; trial < 20; ++trial) {
            MatrixXd m(4, 4);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) m(r, c) = unif(gen);
            const MatrixXd ours = matrix_exponential(m);
            const MatrixXd oracle = testutil::taylor_matrix_exponential(m);
            CHECK((ours - oracle).cwiseAbs().maxCoeff() /
                    std::max(1.0, oracle.cwiseAbs().maxCoeff()) <
                  1e-10);
        }
    }
    SUBCASE("large norm stays accurate") {
        MatrixXd gen_rot(2, 2);
        gen_rot << 0, 1, -1, 0;
        const MatrixXd e = matrix_exponential(gen_rot * 40.0);
        CHECK(e(0, 0) == doctest::Approx(std::cos(40.0)).epsilon(1e-11));
        CHECK(e(0, 1) == doctest::Approx(std::sin(40.0)).epsilon(1e-11));
    }
    SUBCASE("semigroup property") {
        std::mt19937_64 gen(7);
        std::uniform_real_distribution<double> unif(-2.0, 2.0);
        MatrixXd m(3, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = unif(gen);
        for (int trial = 0; trial < 10; ++trial) {
            const double a = unif(gen), b = unif(gen);
            const MatrixXd lhs = matrix_exponential((a + b) * m);
            const MatrixXd rhs = matrix_exponential(a * m) * matrix_exponential(b * m);
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, lhs.norm()));
        }
    }
    SUBCASE("non-square input throws") {
        CHECK_THROWS_AS(matrix_exponential(MatrixXd::Zero(2, 3)), std::invalid_argument);
    }
}

TEST_CASE("kernel basis") {
    SUBCASE("zero omega K=2 at t=3") {
        const VectorXd psi = kernel_basis(VectorXd::Zero(2), 3.0);
        CHECK(psi[0] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(psi[1] == doctest::Approx(3.0).epsilon(1e-14));
    }
    SUBCASE("omega=(1,0) at t=0") {
        VectorXd omega(2);
        omega << 1.0, 0.0;
        const VectorXd psi = kernel_basis(omega, 0.0);
        CHECK(psi[0] == doctest::Approx(1.0));
        CHECK(psi[1] == doctest::Approx(0.0));
    }
    SUBCASE("omega=(1,0) at t=pi is (cos pi, sin pi)") {
        VectorXd omega(2);
        omega << 1.0, 0.0;
        const VectorXd psi = kernel_basis(omega, M_PI);
        CHECK(psi[0] == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(std::abs(psi[1]) < 1e-12);
    }
    SUBCASE("K=1 basis solves D psi + w0 psi = 0") {
        VectorXd omega(1);
        omega << 0.7;
        const VectorXd psi = kernel_basis(omega, 1.3);
        CHECK(psi[0] == doctest::Approx(std::exp(-0.7 * 1.3)).epsilon(1e-12));
    }
    SUBCASE("K=3 zero omega basis is (1, t, t^2/2)") {
        const VectorXd psi = kernel_basis(VectorXd::Zero(3), 2.0);
        CHECK(psi[0] == doctest::Approx(1.0));
        CHECK(psi[1] == doctest::Approx(2.0));
        CHECK(psi[2] == doctest::Approx(2.0));
    }
}

TEST_CASE("basis annihilation by the operator (finite differences)") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int order = 1; order <= 3; ++order) {
        VectorXd omega(order);
        for (int k = 0; k < order; ++k) omega[k] = unif(gen);
        for (int basis_idx = 0; basis_idx < order; ++basis_idx) {
            auto psi_fn = [&](double t) { return kernel_basis(omega, t)[basis_idx]; };
            for (double t = 0.5; t < 3.0; t += 0.5) {
                double value = testutil::finite_difference(psi_fn, t, order, 0.02);
                for (int k = 0; k < order; ++k)
                    value += omega[k] * testutil::finite_difference(psi_fn, t, k, 0.02);
                CHECK(std::abs(value) < 1e-5);
            }
        }
    }
}

TEST_CASE("green kernel") {
    SUBCASE("zero omega K=2 reduces to t-s") {
        CHECK(green_kernel(VectorXd::Zero(2), 2.0, 1.0) == doctest::Approx(1.0).epsilon(1e-13));
    }
    SUBCASE("causality: t < s gives 0") {
        VectorXd omega(2);
        omega << 0.3, -0.4;
        CHECK(green_kernel(omega, 1.0, 3.0) == 0.0);
    }
    SUBCASE("rotation kernel equals sin(t-s)") {
        VectorXd omega(2);
        omega << 1.0, 0.0;
        CHECK(green_kernel(omega, M_PI / 2.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches poly kernel for omega = 0 everywhere") {
        for (int k = 1; k <= 3; ++k) {
            for (double t = 0.0; t <= 2.0; t += 0.25) {
                for (double s = 0.0; s <= 2.0; s += 0.25) {
                    CHECK(std::abs(green_kernel(VectorXd::Zero(k), t, s) -
                                   poly_green_kernel(k, t, s)) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("poly green kernel") {
    CHECK(poly_green_kernel(1, 5.0, 1.0) == 1.0);
    CHECK(poly_green_kernel(3, 2.0, 0.0) == doctest::Approx(2.0));
    CHECK(poly_green_kernel(2, 1.0, 3.0) == 0.0);
    CHECK_THROWS_AS(poly_green_kernel(0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("green kernel jump conditions at t = s+") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int order = 1; order <= 3; ++order) {
        VectorXd omega(order);
        for (int k = 0; k < order; ++k) omega[k] = unif(gen);
        const double s = 0.8;
        // One-sided derivatives from above via small forward steps on e^{(t-s)A}.
        auto g_fn = [&](double t) { return green_kernel(omega, t, s); };
        for (int k = 0; k <= order - 1; ++k) {
            // forward differences, 5-point, 4th order
            const double h = 1e-2;
            double acc;
            switch (k) {
                case 0:
                    acc = g_fn(s);
                    break;
                case 1:
                    acc = (-25.0 / 12 * g_fn(s) + 4 * g_fn(s + h) - 3 * g_fn(s + 2 * h) +
                           4.0 / 3 * g_fn(s + 3 * h) - 0.25 * g_fn(s + 4 * h)) /
                          h;
                    break;
                default:
                    acc = (2 * g_fn(s) - 5 * g_fn(s + h) + 4 * g_fn(s + 2 * h) - g_fn(s + 3 * h)) /
                          (h * h);
            }
            const double expected = (k == order - 1) ? 1.0 : 0.0;
            CHECK(std::abs(acc - expected) < 1e-4);
        }
    }
}

TEST_CASE("OperatorKernel cache matches pointwise evaluation") {
    VectorXd omega(2);
    omega << 0.5, -0.3;
    const VectorXd t_grid = linspace(0.0, 4.0, 17);
    const VectorXd s_grid = linspace(0.0, 4.0, 23);
    const OperatorKernel kernel(omega, t_grid, s_grid);
    for (int h = 0; h < t_grid.size(); ++h) {
        const VectorXd psi = kernel_basis(omega, t_grid[h]);
        CHECK((kernel.basis_rows().row(h).transpose() - psi).cwiseAbs().maxCoeff() < 1e-12);
        for (int j = 0; j < s_grid.size(); ++j) {
            CHECK(std::abs(kernel.green_values()(h, j) -
                           green_kernel(omega, t_grid[h], s_grid[j])) < 1e-11);
        }
    }
}

TEST_CASE("Green reproduction: u = int G f solves the ODE") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unif(-0.8, 0.8);
    const double domain = 3.0;
    const int grid_n = 2001;
    const VectorXd grid = linspace(0.0, domain, grid_n);
    auto forcing = [](double s) { return std::sin(1.3 * s) + 0.5 * s; };

    for (int order = 1; order <= 3; ++order) {
        VectorXd omega(order);
        for (int k = 0; k < order; ++k) omega[k] = unif(gen);
        const OperatorKernel kernel(omega, grid, grid);
        const double spacing = domain / (grid_n - 1);
        VectorXd u(grid_n);
        for (int h = 0; h < grid_n; ++h) {
            // Trapezoid over the kernel support [0, t_h].
            double acc = 0.0;
            for (int j = 0; j <= h; ++j) {
                const double tau = (j == 0 || j == h) ? 0.5 * spacing : spacing;
                acc += tau * kernel.green_values()(h, j) * forcing(grid[j]);
            }
            u[h] = (h == 0) ? 0.0 : acc;
        }
        // Evaluate u only at exact grid nodes so the finite differences are clean.
        const double delta = domain / (grid_n - 1);
        const int step_idx = 5;
        const double step = delta * step_idx;
        for (int center = 300; center <= 1700; center += 175) {
            auto u_at = [&](double t) {
                const int idx = center + static_cast<int>(std::lround((t - grid[center]) / delta));
                return u[idx];
            };
            const double t = grid[center];
            double lhs = testutil::finite_difference(u_at, t, order, step);
            for (int k = 0; k < order; ++k)
                lhs += omega[k] * testutil::finite_difference(u_at, t, k, step);
            CHECK(std::abs(lhs - forcing(t)) < 1e-3);
        }
    }
}

TEST_CASE("normal quantile") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-9));
    CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
}
