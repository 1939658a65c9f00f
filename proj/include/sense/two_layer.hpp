#pragma once

#include "sense/dictionary.hpp"
#include "sense/sbl.hpp"

namespace sense {

/// Controls for the layered estimator. The inner (second-layer) solver runs
/// under `vbi`; the outer loop has its own threshold and cap with the same
/// defaults. Warm-starting carries the second-layer precisions across outer
/// iterations, which does not move the fixed points.
struct TwoLayerOptions {
    VbiOptions vbi;
    double outer_tol = 1e-5;  ///< zeta_1
    int outer_max_iter = 167; ///< N_max1
    bool shared_beta = true;  ///< one error precision across all slices
    bool warm_start = true;
};

/// Mutable state of one run. gamma_c is only ever written by
/// propagate_precision (plus the all-ones initialization); it has no
/// hyperprior of its own.
struct TwoLayerState {
    double alpha_hat = 1.0;
    double beta_hat = 1.0;
    std::vector<Eigen::MatrixXcd> c_hat;                 ///< per n: Q x N, column m = u_{c_m(n)}
    std::vector<std::vector<Eigen::MatrixXcd>> sigma_c;  ///< [n][m]: Q x Q
    std::vector<Eigen::VectorXd> trace_c;                ///< per n: tr(A_nu Sigma A_nu^H) per column
    std::vector<Eigen::MatrixXcd> d_hat;                 ///< per n: P x Q
    std::vector<Eigen::MatrixXd> gamma_d;                ///< per n: P x Q
    std::vector<Eigen::MatrixXd> gamma_c;                ///< per n: Q x N
    int outer_iter = 0;
    std::vector<int> inner_iters;                        ///< second-layer sweeps per outer iteration
};

struct TwoLayerDiagnostics {
    int outer_iters = 0;
    std::vector<int> inner_iters;
    bool converged = false;
    std::vector<double> metric_history;     ///< outer relative-change values
    bool metric_nonincreasing_tail = true;  ///< over the last 3 outer iterations
    bool oscillation = false;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
};

/// Precision propagation of the first-layer prior from the second-layer
/// result: gamma_c(q, m) = (sum_p |a_tau(m, p)|^2 / gamma_x(q, p))^{-1}
/// with gamma_x(q, p) = gamma_d(p, q). Positivity is preserved.
Eigen::MatrixXd propagate_precision(const Eigen::MatrixXd& gamma_d_n,
                                    const Eigen::MatrixXcd& a_tau);

/// One first-layer pass: refresh alpha-hat from all (n, m) column residuals,
/// then recompute every column posterior (u_c, Sigma_c) against dictionary
/// a_nu under the current gamma_c. On first use the posteriors are
/// initialized before alpha-hat is touched.
void first_layer_sweep(const std::vector<Eigen::MatrixXcd>& y_slices,
                       const Eigen::MatrixXcd& a_nu, TwoLayerState& state,
                       const TwoLayerOptions& opts);

/// Second layer: solves C(n)^H = A_tau D(n) + E(n) jointly over slices with
/// the error precision beta shared (or per slice when shared_beta is off).
/// Updates d_hat, gamma_d and beta_hat in place; returns sweeps used.
int second_layer_solve(const std::vector<Eigen::MatrixXcd>& c_hat,
                       const Eigen::MatrixXcd& a_tau, TwoLayerState& state,
                       const TwoLayerOptions& opts);

/// The full alternating estimator: first-layer sweep, second-layer solve,
/// precision propagation, until the summed relative change of gamma_c drops
/// below outer_tol or outer_max_iter is hit. The returned tensor stores the
/// conjugated second-layer means (X(n) convention).
std::pair<SparseTensor, TwoLayerDiagnostics> run_two_layer(
    const RealignedChannel& channel, const Dictionaries& dicts,
    const TwoLayerOptions& opts);

} // namespace sense
