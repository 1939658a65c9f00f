#pragma once

#include "sense/types.hpp"

namespace sense {

/// Per-block channel derivatives with respect to the 4L parameters
/// theta = {tau_1..tau_L, nu_1..nu_L, Re h_1..L, Im h_1..L}; each family
/// holds one N x N matrix per target.
struct ChannelDerivatives {
    std::vector<Eigen::MatrixXcd> d_tau;
    std::vector<Eigen::MatrixXcd> d_nu;
    std::vector<Eigen::MatrixXcd> d_re;
    std::vector<Eigen::MatrixXcd> d_im;
};

/// Fisher information over theta; symmetric positive semidefinite by its
/// Gram construction, scaled by 2/sigma^2.
struct FisherMatrix {
    Eigen::MatrixXd j;  ///< 4L x 4L
    double sigma2 = 0.0;
};

/// Cramer-Rao bounds grouped by parameter block: s^2 for delays, Hz^2 for
/// Dopplers, dimensionless for the gain parts.
struct CrbResult {
    Eigen::VectorXd delay_bounds;
    Eigen::VectorXd doppler_bounds;
    Eigen::VectorXd gain_re_bounds;
    Eigen::VectorXd gain_im_bounds;
};

/// Analytic derivatives of the un-realigned frequency-domain channel of
/// block k. The tau derivative multiplies each target term by -j 2 pi m f0;
/// the nu derivative differentiates both the inter-block phase and the sinc;
/// the gain derivatives drop h and keep (1, j) times the phase/sinc factors.
ChannelDerivatives channel_derivatives(const SystemConfig& config,
                                       const std::vector<Target>& targets,
                                       int block_index);

/// Cross-check route: differentiate in the re-aligned domain (where the
/// sinc argument depends only on the row index), pass each column through
/// the unitary DFT pair and undo the per-column circular shift with the
/// permutation matrices. Exercises the re-alignment bookkeeping end to end;
/// must agree with the analytic route to machine precision.
ChannelDerivatives channel_derivatives_permutation_route(
    const SystemConfig& config, const std::vector<Target>& targets, int block_index);

/// All-ones frequency-domain pilots (unit power), one per block.
std::vector<Eigen::VectorXcd> unit_pilots(const SystemConfig& config);

/// J_ij = (2/sigma^2) sum_k Re{ (d_j H(k) s(k))^H (d_i H(k) s(k)) }.
/// Pilots must have unit mean power.
FisherMatrix fisher_matrix(const SystemConfig& config, const std::vector<Target>& targets,
                           const std::vector<Eigen::VectorXcd>& pilots, double sigma2);

/// Diagonal of J^{-1} grouped by block. The inverse runs on the
/// diagonally equilibrated system so the conditioning test measures
/// parameter degeneracy (e.g. merging targets) rather than unit mismatch;
/// failure names the dominant parameter of the near-null direction.
CrbResult crb_diagonal(const FisherMatrix& fisher);

} // namespace sense
