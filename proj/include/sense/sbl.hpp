#pragma once

#include "sense/types.hpp"

namespace sense {

/// Hyperparameters and iteration controls for the variational solver.
/// One (shape, rate) pair serves every Gamma prior in the model; defaults
/// are broad and near non-informative.
struct VbiOptions {
    double shape = 1e-4;            ///< Gamma shape a
    double rate = 1e-4;             ///< Gamma inverse scale b
    double tol = 1e-5;              ///< relative-change threshold on the precisions
    int max_iter = 167;             ///< sweep cap per solve
    double prune_threshold = 1e12;  ///< precisions are clamped here; pruned means go to zero
    double init_noise_precision = 1.0;
    double init_precision = 1.0;
    bool keep_covariances = true;   ///< store full posterior covariances in the state
    /// Convergence metric grouping: 0 compares the whole precision matrix at
    /// once; g > 0 sums the relative change over blocks of g consecutive
    /// columns (the per-slice sum used by the layered solver).
    int metric_group_size = 0;

    void validate() const {
        if (!(shape > 0) || !(rate > 0))
            throw std::invalid_argument("VbiOptions: shape/rate must be > 0");
        if (!(tol > 0)) throw std::invalid_argument("VbiOptions: tol must be > 0");
        if (max_iter < 1) throw std::invalid_argument("VbiOptions: max_iter must be >= 1");
    }
};

/// Posterior state of one multiple-measurement solve Y = Phi X + W.
/// Column c of Y owns its posterior mean, covariance and precision column;
/// the noise precision is shared by all columns.
struct VbiState {
    double noise_precision_mean = 1.0;              ///< alpha-hat (or beta-hat)
    Eigen::MatrixXcd posterior_means;               ///< D x C
    std::vector<Eigen::MatrixXcd> posterior_covs;   ///< C matrices, each D x D (optional)
    Eigen::MatrixXd posterior_var_diags;            ///< D x C, Re diag(Sigma_c)
    Eigen::VectorXd trace_terms;                    ///< tr(Phi Sigma_c Phi^H) per column
    Eigen::MatrixXd precision_means;                ///< D x C, all entries > 0
    int iter_count = 0;
    bool converged = false;
};

/// Gamma-posterior mean of the noise precision:
///   (a + #scalar measurements) / (b + sum_c ||y_c - Phi u_c||^2 + tr(Phi Sigma_c Phi^H)).
/// Uses the full covariances when the state holds them, otherwise the
/// cached per-column trace terms.
double update_noise_precision(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& Phi,
                              const VbiState& state, const VbiOptions& opts);

/// Gaussian posterior of one coefficient column:
///   Sigma = (alpha Phi^H Phi + diag(gamma))^{-1},  u = alpha Sigma Phi^H y.
/// The system matrix is Hermitian positive definite for gamma > 0; a failed
/// Cholesky factorization raises NumericalError.
std::pair<Eigen::VectorXcd, Eigen::MatrixXcd> update_posterior(
    const Eigen::VectorXcd& y, const Eigen::MatrixXcd& Phi, double alpha_hat,
    const Eigen::VectorXd& gamma_col);

/// Gamma-posterior means of the element precisions:
///   gamma_p = (a + 1) / (b + |u_p|^2 + Sigma_pp).
Eigen::VectorXd update_element_precisions(const Eigen::VectorXcd& u,
                                          const Eigen::MatrixXcd& sigma,
                                          const VbiOptions& opts);

/// Full solver: iterates noise precision -> per-column posteriors -> element
/// precisions until the relative change of the precision matrix drops below
/// tol or max_iter sweeps have run. Non-convergence is reported through the
/// state flag, never as an error. Returns the stacked posterior means.
std::pair<Eigen::MatrixXcd, VbiState> vbi_solve(const Eigen::MatrixXcd& Y,
                                                const Eigen::MatrixXcd& Phi,
                                                const VbiOptions& opts);

/// Same solver warm-started from a previous precision matrix and noise
/// precision (used by the outer loop of the two-layer method).
std::pair<Eigen::MatrixXcd, VbiState> vbi_solve_warm(const Eigen::MatrixXcd& Y,
                                                     const Eigen::MatrixXcd& Phi,
                                                     const VbiOptions& opts,
                                                     const Eigen::MatrixXd& gamma0,
                                                     double noise_precision0);

} // namespace sense
