#include "sense/sbl.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace sense {

namespace {

// Shared kernel of Lemma-2-style updates with the Gram matrix precomputed.
std::pair<Eigen::VectorXcd, Eigen::MatrixXcd> posterior_from_gram(
    const Eigen::MatrixXcd& phi_gram, const Eigen::VectorXcd& phi_h_y,
    double alpha_hat, const Eigen::VectorXd& gamma_col) {
    Eigen::MatrixXcd system = alpha_hat * phi_gram;
    system.diagonal() += gamma_col.cast<cd>();
    Eigen::LLT<Eigen::MatrixXcd> llt(system);
    if (llt.info() != Eigen::Success)
        throw NumericalError("posterior update: system matrix is not positive definite");
    Eigen::MatrixXcd sigma = llt.solve(Eigen::MatrixXcd::Identity(system.rows(), system.cols()));
    Eigen::VectorXcd u = alpha_hat * (sigma * phi_h_y);
    return {std::move(u), std::move(sigma)};
}

double trace_quadratic(const Eigen::MatrixXcd& phi_gram, const Eigen::MatrixXcd& sigma) {
    // tr(Phi Sigma Phi^H) = tr(Sigma Phi^H Phi)
    return (sigma.cwiseProduct(phi_gram.transpose())).sum().real();
}

// Allocation-free posterior pass for one column when only the mean, the
// covariance diagonal and tr(Phi Sigma Phi^H) are needed. `work` is
// factorized in place; the diagonal comes from the rows of L^{-1} and the
// trace from tr(Sigma M) = D resolved against the diagonal loading.
// Workspace for the allocation-free sweep; only the posterior mean, the
// covariance diagonal and tr(Phi Sigma Phi^H) are produced.
struct LeanSweepWorkspace {
    Eigen::VectorXd inv_gamma;
    Eigen::MatrixXcd b;       // Phi * diag(1/gamma), M x D
    Eigen::MatrixXcd core;    // alpha^{-1} I + Phi diag(1/gamma) Phi^H, M x M
    Eigen::MatrixXcd whitened; // L^{-1} Phi, M x D
    Eigen::VectorXcd g, t;
};

// One column via the Woodbury identity: with M measurement rows and D atoms
// (M typically << D), Sigma = D_g^{-1} - D_g^{-1} Phi^H W^{-1} Phi D_g^{-1}
// where W = alpha^{-1} I + Phi D_g^{-1} Phi^H is only M x M. The diagonal
// follows from column norms of L^{-1} Phi and the trace from
// tr(Sigma (alpha G + D_g)) = D.
void lean_posterior(const Eigen::MatrixXcd& Phi, const Eigen::VectorXcd& phi_h_y,
                    double alpha_hat, const Eigen::VectorXd& gamma_col,
                    LeanSweepWorkspace& ws, Eigen::Ref<Eigen::VectorXcd> u_out,
                    Eigen::Ref<Eigen::VectorXd> diag_out, double& trace_out) {
    const int dim = static_cast<int>(Phi.cols());
    ws.inv_gamma = gamma_col.cwiseInverse();
    ws.b.noalias() = Phi * ws.inv_gamma.asDiagonal();
    ws.core.noalias() = ws.b * Phi.adjoint();
    ws.core.diagonal().array() += 1.0 / alpha_hat;

    Eigen::LLT<Eigen::Ref<Eigen::MatrixXcd>> llt(ws.core);
    if (llt.info() != Eigen::Success)
        throw NumericalError("posterior update: system matrix is not positive definite");

    ws.whitened = Phi;
    llt.matrixL().solveInPlace(ws.whitened);
    for (int p = 0; p < dim; ++p) {
        const double proj = ws.whitened.col(p).squaredNorm();
        diag_out(p) = ws.inv_gamma(p) * std::max(1.0 - ws.inv_gamma(p) * proj, 0.0);
    }

    ws.g = ws.inv_gamma.asDiagonal() * phi_h_y;
    ws.t.noalias() = Phi * ws.g;
    llt.matrixL().solveInPlace(ws.t);
    llt.matrixU().solveInPlace(ws.t);
    u_out.noalias() = Phi.adjoint() * ws.t;
    u_out = alpha_hat * (ws.g - ws.inv_gamma.asDiagonal() * u_out);

    trace_out = (dim - gamma_col.dot(diag_out)) / alpha_hat;
}

std::pair<Eigen::MatrixXcd, VbiState> solve_impl(const Eigen::MatrixXcd& Y,
                                                 const Eigen::MatrixXcd& Phi,
                                                 const VbiOptions& opts,
                                                 Eigen::MatrixXd gamma0,
                                                 double noise_precision0) {
    opts.validate();
    if (Y.rows() != Phi.rows())
        throw std::invalid_argument("vbi_solve: Y and Phi row counts differ");
    const int n_cols = static_cast<int>(Y.cols());
    const int n_atoms = static_cast<int>(Phi.cols());

    VbiState state;
    state.noise_precision_mean = noise_precision0;
    state.precision_means = std::move(gamma0);
    state.posterior_means.resize(n_atoms, n_cols);
    state.posterior_var_diags.resize(n_atoms, n_cols);
    state.trace_terms.resize(n_cols);
    if (opts.keep_covariances) state.posterior_covs.resize(n_cols);

    const Eigen::MatrixXcd phi_gram = Phi.adjoint() * Phi;
    const Eigen::MatrixXcd phi_h_y = Phi.adjoint() * Y;

    const int n_rows = static_cast<int>(Phi.rows());
    LeanSweepWorkspace ws;
    ws.inv_gamma.resize(n_atoms);
    ws.b.resize(n_rows, n_atoms);
    ws.core.resize(n_rows, n_rows);
    ws.whitened.resize(n_rows, n_atoms);
    ws.g.resize(n_atoms);
    ws.t.resize(n_rows);

    auto sweep_posteriors = [&]() {
        for (int c = 0; c < n_cols; ++c) {
            if (opts.keep_covariances) {
                auto [u, sigma] = posterior_from_gram(phi_gram, phi_h_y.col(c),
                                                      state.noise_precision_mean,
                                                      state.precision_means.col(c));
                state.posterior_means.col(c) = u;
                state.posterior_var_diags.col(c) = sigma.diagonal().real();
                state.trace_terms(c) = trace_quadratic(phi_gram, sigma);
                state.posterior_covs[c] = std::move(sigma);
            } else {
                lean_posterior(Phi, phi_h_y.col(c), state.noise_precision_mean,
                               state.precision_means.col(c), ws,
                               state.posterior_means.col(c),
                               state.posterior_var_diags.col(c), state.trace_terms(c));
            }
            for (int p = 0; p < n_atoms; ++p)
                if (state.precision_means(p, c) >= opts.prune_threshold)
                    state.posterior_means(p, c) = cd(0, 0);
        }
    };
    sweep_posteriors();

    const int group = opts.metric_group_size > 0 ? opts.metric_group_size : n_cols;
    Eigen::MatrixXcd residual(Y.rows(), n_cols);
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        state.iter_count = iter;

        // Lemma-1/3 noise precision from the residuals and trace terms of
        // the current posteriors.
        residual.noalias() = Phi * state.posterior_means;
        residual = Y - residual;
        double b_post = opts.rate + residual.squaredNorm() + state.trace_terms.sum();
        if (!std::isfinite(b_post))
            throw NumericalError("update_noise_precision: non-finite residual");
        state.noise_precision_mean = (opts.shape + static_cast<double>(Y.size())) / b_post;

        sweep_posteriors();

        double metric = 0.0, diff_sq = 0.0, old_sq = 0.0;
        for (int c = 0; c < n_cols; ++c) {
            for (int p = 0; p < n_atoms; ++p) {
                const double second_moment = std::norm(state.posterior_means(p, c)) +
                                             std::max(state.posterior_var_diags(p, c), 0.0);
                double gamma_new = (opts.shape + 1.0) / (opts.rate + second_moment);
                if (gamma_new > opts.prune_threshold) gamma_new = opts.prune_threshold;
                const double d = gamma_new - state.precision_means(p, c);
                diff_sq += d * d;
                old_sq += state.precision_means(p, c) * state.precision_means(p, c);
                state.precision_means(p, c) = gamma_new;
            }
            if ((c + 1) % group == 0 || c + 1 == n_cols) {
                metric += old_sq > 0 ? diff_sq / old_sq : 0.0;
                diff_sq = old_sq = 0.0;
            }
        }
        if (metric <= opts.tol) {
            state.converged = true;
            break;
        }
    }
    return {state.posterior_means, std::move(state)};
}

} // namespace

double update_noise_precision(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& Phi,
                              const VbiState& state, const VbiOptions& opts) {
    double b_post = opts.rate;
    b_post += (Y - Phi * state.posterior_means).squaredNorm();
    if (!state.posterior_covs.empty()) {
        const Eigen::MatrixXcd phi_gram = Phi.adjoint() * Phi;
        for (const auto& sigma : state.posterior_covs) b_post += trace_quadratic(phi_gram, sigma);
    } else {
        b_post += state.trace_terms.sum();
    }
    if (!std::isfinite(b_post))
        throw NumericalError("update_noise_precision: non-finite residual");
    const double a_post = opts.shape + static_cast<double>(Y.size());
    return a_post / b_post;
}

std::pair<Eigen::VectorXcd, Eigen::MatrixXcd> update_posterior(
    const Eigen::VectorXcd& y, const Eigen::MatrixXcd& Phi, double alpha_hat,
    const Eigen::VectorXd& gamma_col) {
    if (!(alpha_hat > 0)) throw std::invalid_argument("update_posterior: alpha must be > 0");
    if ((gamma_col.array() <= 0).any())
        throw std::invalid_argument("update_posterior: precisions must be > 0");
    return posterior_from_gram(Phi.adjoint() * Phi, Phi.adjoint() * y, alpha_hat, gamma_col);
}

Eigen::VectorXd update_element_precisions(const Eigen::VectorXcd& u,
                                          const Eigen::MatrixXcd& sigma,
                                          const VbiOptions& opts) {
    const Eigen::VectorXd second_moment =
        u.cwiseAbs2() + sigma.diagonal().real().cwiseMax(0.0);
    return ((opts.shape + 1.0) / (opts.rate + second_moment.array())).matrix();
}

std::pair<Eigen::MatrixXcd, VbiState> vbi_solve(const Eigen::MatrixXcd& Y,
                                                const Eigen::MatrixXcd& Phi,
                                                const VbiOptions& opts) {
    const Eigen::MatrixXd gamma0 =
        Eigen::MatrixXd::Constant(Phi.cols(), Y.cols(), opts.init_precision);
    return solve_impl(Y, Phi, opts, gamma0, opts.init_noise_precision);
}

std::pair<Eigen::MatrixXcd, VbiState> vbi_solve_warm(const Eigen::MatrixXcd& Y,
                                                     const Eigen::MatrixXcd& Phi,
                                                     const VbiOptions& opts,
                                                     const Eigen::MatrixXd& gamma0,
                                                     double noise_precision0) {
    if (gamma0.rows() != Phi.cols() || gamma0.cols() != Y.cols())
        throw std::invalid_argument("vbi_solve_warm: gamma0 has wrong shape");
    return solve_impl(Y, Phi, opts, gamma0, noise_precision0);
}

} // namespace sense
