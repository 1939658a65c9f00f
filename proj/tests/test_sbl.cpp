#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "sense/sbl.hpp"

using namespace sense;

namespace {

Eigen::MatrixXcd random_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0, 1);
    Eigen::MatrixXcd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = cd(g(rng), g(rng));
    return m;
}

} // namespace

TEST_CASE("noise precision is the Gamma mean a'/b'") {
    VbiOptions opts;

    SUBCASE("no measurements leaves the prior mean a/b") {
        opts.shape = 2.0;
        opts.rate = 4.0;
        VbiState state;
        state.posterior_means.resize(1, 0);
        state.trace_terms.resize(0);
        const Eigen::MatrixXcd y(1, 0), phi = Eigen::MatrixXcd::Identity(1, 1);
        CHECK(update_noise_precision(y, phi, state, opts) == doctest::Approx(0.5));
    }

    SUBCASE("hand-evaluated scalar case") {
        opts.shape = 1.0;
        opts.rate = 1.0;
        VbiState state;
        state.posterior_means = Eigen::MatrixXcd::Zero(1, 1);
        state.posterior_covs = {Eigen::MatrixXcd::Zero(1, 1)};
        const Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(1, 1);
        const Eigen::MatrixXcd phi = Eigen::MatrixXcd::Identity(1, 1);
        CHECK(update_noise_precision(y, phi, state, opts) == doctest::Approx(2.0));
    }

    SUBCASE("exact fit approaches (a + count)/b, monotone in 1/b") {
        std::mt19937_64 rng(3);
        const Eigen::MatrixXcd phi = random_matrix(4, 3, rng);
        VbiState state;
        state.posterior_means = random_matrix(3, 2, rng);
        state.posterior_covs = {Eigen::MatrixXcd::Zero(3, 3), Eigen::MatrixXcd::Zero(3, 3)};
        const Eigen::MatrixXcd y = phi * state.posterior_means;
        opts.shape = 1.0;
        opts.rate = 1.0;
        const double at_b1 = update_noise_precision(y, phi, state, opts);
        CHECK(at_b1 == doctest::Approx((1.0 + 8.0) / 1.0));
        opts.rate = 0.5;
        CHECK(update_noise_precision(y, phi, state, opts) == doctest::Approx(2.0 * at_b1));
    }
}

TEST_CASE("posterior closed form on the diagonal case") {
    Eigen::VectorXcd y(2);
    y << cd(2, 0), cd(4, 0);
    const auto [u, sigma] = update_posterior(y, Eigen::MatrixXcd::Identity(2, 2), 1.0,
                                             Eigen::Vector2d::Ones());
    CHECK((sigma - 0.5 * Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(u(0) - cd(1, 0)) < 1e-15);
    CHECK(std::abs(u(1) - cd(2, 0)) < 1e-15);
}

TEST_CASE("infinite precision pins a coordinate to zero") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXcd phi = random_matrix(4, 3, rng);
    const Eigen::VectorXcd y = random_matrix(4, 1, rng);
    Eigen::Vector3d gamma(1e30, 1.0, 1.0);
    const auto [u, sigma] = update_posterior(y, phi, 1.0, gamma);
    CHECK(std::abs(u(0)) < 1e-25);
    CHECK(std::abs(u(1)) > 1e-6);
}

TEST_CASE("posterior matches an independent normal-equations solve") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ua(0.2, 5.0);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXcd phi = random_matrix(4, 6, rng);
        const Eigen::VectorXcd y = random_matrix(4, 1, rng);
        const double alpha = ua(rng);
        Eigen::VectorXd gamma(6);
        for (int i = 0; i < 6; ++i) gamma(i) = ua(rng);

        const auto [u, sigma] = update_posterior(y, phi, alpha, gamma);

        // Independent route: LU solve of the dense normal equations.
        Eigen::MatrixXcd system = alpha * (phi.adjoint() * phi);
        system += gamma.asDiagonal().toDenseMatrix().cast<cd>();
        const Eigen::MatrixXcd sigma_ref =
            system.fullPivLu().solve(Eigen::MatrixXcd::Identity(6, 6));
        const Eigen::VectorXcd u_ref = alpha * system.fullPivLu().solve(phi.adjoint() * y);

        CHECK((sigma - sigma_ref).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((u - u_ref).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("element precision means") {
    VbiOptions opts;
    opts.shape = 1.0;
    opts.rate = 1.0;

    Eigen::VectorXcd u(1);
    Eigen::MatrixXcd sigma(1, 1);

    u << cd(0, 0);
    sigma << cd(1, 0);
    CHECK(update_element_precisions(u, sigma, opts)(0) == doctest::Approx(1.0));

    u << cd(3, 0);
    sigma << cd(0, 0);
    CHECK(update_element_precisions(u, sigma, opts)(0) == doctest::Approx(0.2));

    u << cd(0, 0);
    sigma << cd(0, 0);
    CHECK(update_element_precisions(u, sigma, opts)(0) == doctest::Approx(2.0));
}

TEST_CASE("noiseless single atom is recovered at its support") {
    std::mt19937_64 rng(42);
    const Eigen::MatrixXcd phi = random_matrix(8, 16, rng);
    const int true_atom = 5;
    const Eigen::MatrixXcd y = phi.col(true_atom);

    // Oracle: exhaustive single-atom correlation.
    int oracle = -1;
    double best = -1;
    for (int j = 0; j < 16; ++j) {
        const double score = std::abs((phi.col(j).adjoint() * y)(0)) / phi.col(j).squaredNorm();
        if (score > best) { best = score; oracle = j; }
    }
    REQUIRE(oracle == true_atom);

    SUBCASE("default hyperpriors: exact support, value within 1e-3") {
        auto [x, state] = vbi_solve(y, phi, VbiOptions{});
        Eigen::Index argmax;
        x.col(0).cwiseAbs().maxCoeff(&argmax);
        CHECK(argmax == true_atom);
        CHECK(std::abs(x(true_atom, 0) - cd(1, 0)) < 1e-3);
        CHECK(state.converged);
    }

    SUBCASE("near non-informative hyperpriors: value within 1e-6") {
        VbiOptions opts;
        opts.shape = opts.rate = 1e-8;
        opts.tol = 1e-9;
        opts.max_iter = 500;
        auto [x, state] = vbi_solve(y, phi, opts);
        Eigen::Index argmax;
        x.col(0).cwiseAbs().maxCoeff(&argmax);
        CHECK(argmax == true_atom);
        CHECK(std::abs(x(true_atom, 0) - cd(1, 0)) < 1e-6);
    }
}

TEST_CASE("zero measurements give a zero estimate and converge") {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXcd phi = random_matrix(8, 16, rng);
    auto [x, state] = vbi_solve(Eigen::MatrixXcd::Zero(8, 2), phi, VbiOptions{});
    CHECK(x.cwiseAbs().maxCoeff() == 0.0);
    CHECK(state.converged);
    // The precisions settle jointly with the noise estimate; this takes a few
    // dozen sweeps under the default Gamma pair, not the 1-2 one might hope.
    CHECK(state.iter_count <= 60);
}

TEST_CASE("2-sparse instance with orthogonal atoms recovers exactly") {
    const int n = 8;
    Eigen::MatrixXcd phi(n, n); // DFT columns: orthogonal, unit modulus
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            phi(i, j) = std::exp(cd(0, -2.0 * std::numbers::pi * i * j / n));
    const cd c1(2.0, 0.0), c6(0.0, -1.0);
    const Eigen::MatrixXcd y = c1 * phi.col(1) + c6 * phi.col(6);

    // Oracle: least squares on the true support.
    Eigen::MatrixXcd sub(n, 2);
    sub << phi.col(1), phi.col(6);
    const Eigen::VectorXcd ls = sub.fullPivLu().solve(Eigen::VectorXcd(y));
    REQUIRE(std::abs(ls(0) - c1) < 1e-12);
    REQUIRE(std::abs(ls(1) - c6) < 1e-12);

    auto [x, state] = vbi_solve(y, phi, VbiOptions{});
    CHECK(std::abs(x(1, 0) - c1) < 1e-3);
    CHECK(std::abs(x(6, 0) - c6) < 1e-3);
    for (int p = 0; p < n; ++p)
        if (p != 1 && p != 6) CHECK(std::abs(x(p, 0)) < 1e-8);
}

TEST_CASE("posterior covariances stay Hermitian positive definite") {
    std::mt19937_64 rng(13);
    const Eigen::MatrixXcd phi = random_matrix(6, 10, rng);
    const Eigen::MatrixXcd y = random_matrix(6, 3, rng);
    for (int sweeps : {1, 2, 5, 20}) {
        VbiOptions opts;
        opts.max_iter = sweeps;
        opts.tol = 1e-300; // force the full sweep budget
        auto [x, state] = vbi_solve(y, phi, opts);
        CHECK(state.iter_count == sweeps);
        CHECK((state.precision_means.array() > 0).all());
        for (const auto& sigma : state.posterior_covs) {
            CHECK((sigma - sigma.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sigma);
            CHECK(es.eigenvalues().minCoeff() > 0);
        }
    }
}

TEST_CASE("infinite tolerance stops after exactly one sweep") {
    std::mt19937_64 rng(17);
    const Eigen::MatrixXcd phi = random_matrix(6, 10, rng);
    const Eigen::MatrixXcd y = random_matrix(6, 2, rng);
    VbiOptions opts;
    opts.tol = std::numeric_limits<double>::infinity();
    auto [x, state] = vbi_solve(y, phi, opts);
    CHECK(state.iter_count == 1);
    CHECK(state.converged);
}

TEST_CASE("lean sweep path agrees with the covariance-keeping path") {
    std::mt19937_64 rng(23);
    const Eigen::MatrixXcd phi = random_matrix(6, 20, rng);
    const Eigen::MatrixXcd y = random_matrix(6, 4, rng);
    VbiOptions full;
    full.max_iter = 25;
    full.tol = 1e-300;
    VbiOptions lean = full;
    lean.keep_covariances = false;
    auto [xf, sf] = vbi_solve(y, phi, full);
    auto [xl, sl] = vbi_solve(y, phi, lean);
    CHECK((xf - xl).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sf.posterior_var_diags - sl.posterior_var_diags).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sf.trace_terms - sl.trace_terms).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sf.noise_precision_mean == doctest::Approx(sl.noise_precision_mean).epsilon(1e-9));
    CHECK(sl.posterior_covs.empty());
}

TEST_CASE("posterior means scale with the measurements under flat priors") {
    std::mt19937_64 rng(42);
    const Eigen::MatrixXcd phi = random_matrix(8, 16, rng);
    const Eigen::MatrixXcd y = cd(1.0, 0.0) * phi.col(2) + cd(0.5, 0.5) * phi.col(9);
    VbiOptions opts;
    opts.shape = opts.rate = 1e-6;
    opts.tol = 1e-10;
    opts.max_iter = 2000;
    auto [xa, sa] = vbi_solve(y, phi, opts);
    auto [xb, sb] = vbi_solve(3.0 * y, phi, opts);
    const double rel =
        (xb - 3.0 * xa).cwiseAbs().maxCoeff() / (3.0 * xa.cwiseAbs().maxCoeff());
    CHECK(rel < 1e-3);
}
