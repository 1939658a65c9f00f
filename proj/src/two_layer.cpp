#include "sense/two_layer.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace sense {

Eigen::MatrixXd propagate_precision(const Eigen::MatrixXd& gamma_d_n,
                                    const Eigen::MatrixXcd& a_tau) {
    if ((gamma_d_n.array() <= 0).any())
        throw std::invalid_argument("propagate_precision: gamma_d entries must be > 0");
    const int n_p = static_cast<int>(gamma_d_n.rows());
    const int n_q = static_cast<int>(gamma_d_n.cols());
    if (a_tau.cols() != n_p)
        throw std::invalid_argument("propagate_precision: a_tau column count must equal P");
    const int n_m = static_cast<int>(a_tau.rows());

    const Eigen::MatrixXd weights = a_tau.cwiseAbs2(); // |a_tau(m,p)|^2, N x P
    Eigen::MatrixXd gamma_c(n_q, n_m);
    for (int q = 0; q < n_q; ++q) {
        // gamma_x(q, p) = gamma_d(p, q)
        const Eigen::VectorXd inv_gamma_x = gamma_d_n.col(q).cwiseInverse();
        for (int m = 0; m < n_m; ++m)
            gamma_c(q, m) = 1.0 / weights.row(m).dot(inv_gamma_x);
    }
    return gamma_c;
}

namespace {

// Posterior refresh for every column of every slice. Columns of one slice
// share their system matrix whenever the propagated gamma_c is constant
// across m (exact for unit-modulus delay dictionaries), so one Cholesky per
// slice usually suffices.
void refresh_first_layer_posteriors(const std::vector<Eigen::MatrixXcd>& y_slices,
                                    const Eigen::MatrixXcd& a_nu,
                                    TwoLayerState& state) {
    const int n_slices = static_cast<int>(y_slices.size());
    const int n_q = static_cast<int>(a_nu.cols());
    const Eigen::MatrixXcd gram = a_nu.adjoint() * a_nu;
    const Eigen::MatrixXcd identity = Eigen::MatrixXcd::Identity(n_q, n_q);

    for (int n = 0; n < n_slices; ++n) {
        const int n_m = static_cast<int>(y_slices[n].cols());
        const Eigen::MatrixXcd phi_h_y = a_nu.adjoint() * y_slices[n];
        state.c_hat[n].resize(n_q, n_m);
        state.sigma_c[n].resize(n_m);
        state.trace_c[n].resize(n_m);

        const Eigen::MatrixXd& gc = state.gamma_c[n];
        bool shared_cols = true;
        for (int m = 1; m < n_m && shared_cols; ++m)
            shared_cols = (gc.col(m) - gc.col(0)).cwiseAbs().maxCoeff() <=
                          1e-12 * gc.col(0).cwiseAbs().maxCoeff();

        auto solve_column_set = [&](const Eigen::VectorXd& gamma_col, int m_begin, int m_end) {
            Eigen::MatrixXcd system = state.alpha_hat * gram;
            system.diagonal() += gamma_col.cast<cd>();
            Eigen::LLT<Eigen::MatrixXcd> llt(system);
            if (llt.info() != Eigen::Success)
                throw NumericalError("first layer: posterior system not positive definite");
            const Eigen::MatrixXcd sigma = llt.solve(identity);
            const double trace = (sigma.cwiseProduct(gram.transpose())).sum().real();
            for (int m = m_begin; m < m_end; ++m) {
                state.c_hat[n].col(m) = state.alpha_hat * (sigma * phi_h_y.col(m));
                state.sigma_c[n][m] = sigma;
                state.trace_c[n](m) = trace;
            }
        };

        if (shared_cols) {
            solve_column_set(gc.col(0), 0, n_m);
        } else {
            for (int m = 0; m < n_m; ++m) solve_column_set(gc.col(m), m, m + 1);
        }
    }
}

} // namespace

void first_layer_sweep(const std::vector<Eigen::MatrixXcd>& y_slices,
                       const Eigen::MatrixXcd& a_nu, TwoLayerState& state,
                       const TwoLayerOptions& opts) {
    opts.vbi.validate();
    const int n_slices = static_cast<int>(y_slices.size());
    if (static_cast<int>(state.gamma_c.size()) != n_slices)
        throw std::invalid_argument("first_layer_sweep: gamma_c not initialized per slice");

    if (state.c_hat.empty()) {
        state.c_hat.resize(n_slices);
        state.sigma_c.resize(n_slices);
        state.trace_c.resize(n_slices);
        refresh_first_layer_posteriors(y_slices, a_nu, state);
    }

    // Lemma-1 noise precision over every (n, m) column.
    double b_post = opts.vbi.rate;
    double count = 0.0;
    for (int n = 0; n < n_slices; ++n) {
        b_post += (y_slices[n] - a_nu * state.c_hat[n]).squaredNorm();
        b_post += state.trace_c[n].sum();
        count += static_cast<double>(y_slices[n].size());
    }
    if (!std::isfinite(b_post))
        throw NumericalError("first_layer_sweep: non-finite residual");
    state.alpha_hat = (opts.vbi.shape + count) / b_post;

    refresh_first_layer_posteriors(y_slices, a_nu, state);
}

int second_layer_solve(const std::vector<Eigen::MatrixXcd>& c_hat,
                       const Eigen::MatrixXcd& a_tau, TwoLayerState& state,
                       const TwoLayerOptions& opts) {
    const int n_slices = static_cast<int>(c_hat.size());
    const int n_q = static_cast<int>(c_hat.front().rows());
    const int n_p = static_cast<int>(a_tau.cols());

    VbiOptions inner = opts.vbi;
    inner.keep_covariances = false;

    if (static_cast<int>(state.gamma_d.size()) != n_slices) {
        state.gamma_d.assign(n_slices,
                             Eigen::MatrixXd::Constant(n_p, n_q, inner.init_precision));
        state.d_hat.assign(n_slices, Eigen::MatrixXcd::Zero(n_p, n_q));
    }
    if (!opts.warm_start) {
        for (auto& g : state.gamma_d) g.setConstant(inner.init_precision);
        state.beta_hat = inner.init_noise_precision;
    }

    int total_sweeps = 0;
    if (opts.shared_beta) {
        // Observed matrix: [C(0)^H ... C(N-1)^H], one group of Q columns per
        // slice for the summed convergence metric.
        Eigen::MatrixXcd y2(a_tau.rows(), static_cast<Eigen::Index>(n_slices) * n_q);
        Eigen::MatrixXd gamma0(n_p, static_cast<Eigen::Index>(n_slices) * n_q);
        for (int n = 0; n < n_slices; ++n) {
            y2.middleCols(static_cast<Eigen::Index>(n) * n_q, n_q) = c_hat[n].adjoint();
            gamma0.middleCols(static_cast<Eigen::Index>(n) * n_q, n_q) = state.gamma_d[n];
        }
        inner.metric_group_size = n_q;
        auto [means, vstate] = vbi_solve_warm(y2, a_tau, inner, gamma0, state.beta_hat);
        state.beta_hat = vstate.noise_precision_mean;
        for (int n = 0; n < n_slices; ++n) {
            state.d_hat[n] = means.middleCols(static_cast<Eigen::Index>(n) * n_q, n_q);
            state.gamma_d[n] =
                vstate.precision_means.middleCols(static_cast<Eigen::Index>(n) * n_q, n_q);
        }
        total_sweeps = vstate.iter_count;
    } else {
        for (int n = 0; n < n_slices; ++n) {
            auto [means, vstate] = vbi_solve_warm(c_hat[n].adjoint(), a_tau, inner,
                                                  state.gamma_d[n], state.beta_hat);
            state.d_hat[n] = means;
            state.gamma_d[n] = vstate.precision_means;
            total_sweeps = std::max(total_sweeps, vstate.iter_count);
        }
    }
    return total_sweeps;
}

std::pair<SparseTensor, TwoLayerDiagnostics> run_two_layer(
    const RealignedChannel& channel, const Dictionaries& dicts,
    const TwoLayerOptions& opts) {
    channel.validate();
    opts.vbi.validate();
    const int n_slices = channel.n_slices();
    if (dicts.a_tau.rows() != n_slices)
        throw std::invalid_argument("run_two_layer: delay dictionary rows must equal N");
    if (dicts.a_nu.rows() != channel.slices.front().cols())
        throw std::invalid_argument("run_two_layer: Doppler dictionary rows must equal K");
    const int n_q = dicts.n_dopplers();

    std::vector<Eigen::MatrixXcd> y_slices(n_slices);
    for (int n = 0; n < n_slices; ++n) y_slices[n] = channel.slices[n].adjoint();

    TwoLayerState state;
    state.alpha_hat = opts.vbi.init_noise_precision;
    state.beta_hat = opts.vbi.init_noise_precision;
    state.gamma_c.assign(
        n_slices, Eigen::MatrixXd::Constant(n_q, n_slices, opts.vbi.init_precision));

    TwoLayerDiagnostics diag;
    for (int outer = 1; outer <= opts.outer_max_iter; ++outer) {
        state.outer_iter = outer;
        first_layer_sweep(y_slices, dicts.a_nu, state, opts);
        state.inner_iters.push_back(second_layer_solve(state.c_hat, dicts.a_tau, state, opts));

        double metric = 0.0;
        for (int n = 0; n < n_slices; ++n) {
            const Eigen::MatrixXd gamma_c_new = propagate_precision(state.gamma_d[n], dicts.a_tau);
            const double old_sq = state.gamma_c[n].squaredNorm();
            metric += old_sq > 0 ? (gamma_c_new - state.gamma_c[n]).squaredNorm() / old_sq : 0.0;
            state.gamma_c[n] = gamma_c_new;
        }
        diag.metric_history.push_back(metric);
        if (metric <= opts.outer_tol) {
            diag.converged = true;
            break;
        }
    }

    diag.outer_iters = state.outer_iter;
    diag.inner_iters = state.inner_iters;
    diag.alpha_hat = state.alpha_hat;
    diag.beta_hat = state.beta_hat;
    const auto& h = diag.metric_history;
    for (size_t i = h.size() >= 3 ? h.size() - 2 : 1; i < h.size(); ++i)
        if (h[i] > h[i - 1]) diag.metric_nonincreasing_tail = false;
    diag.oscillation = !diag.metric_nonincreasing_tail;

    SparseTensor tensor;
    tensor.grid_meta = dicts;
    tensor.values.resize(n_slices);
    for (int n = 0; n < n_slices; ++n) tensor.values[n] = state.d_hat[n].conjugate();
    return {std::move(tensor), std::move(diag)};
}

} // namespace sense
