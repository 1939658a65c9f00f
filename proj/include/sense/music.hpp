#pragma once

#include "sense/dictionary.hpp"
#include "sense/sbl.hpp"

namespace sense {

struct MusicResult {
    std::vector<double> delays_s;   ///< grid delays at the L largest peaks
    Eigen::VectorXd spectrum;       ///< pseudo-spectrum over the delay grid
    Eigen::VectorXd eigvals;        ///< correlation eigenvalues, descending
    int noise_subspace_dim = 0;     ///< N - L
    bool degenerate = false;        ///< flat spectrum, no usable peaks
    bool underflow = false;         ///< fewer than L local maxima found
};

/// Vertical stack of the conjugate-transposed slices: block row n of the
/// KN x N result is H(n)^H.
Eigen::MatrixXcd stack_h1(const RealignedChannel& channel);

/// Sample correlation R1 = H1^H H1 / (K N), numerically symmetrized.
Eigen::MatrixXcd correlation(const Eigen::MatrixXcd& h1);

/// MUSIC delay estimation: eigendecompose R1, span the noise subspace with
/// the N - L weakest eigenvectors and scan 1 / ||U_N^H a(tau_p)||^2 over the
/// delay grid. Peaks are local maxima (plateau ties resolve toward the
/// smaller delay) sorted by magnitude.
MusicResult music_delays(const Eigen::MatrixXcd& r1, const Eigen::VectorXd& delay_grid,
                         const SystemConfig& config, int n_targets);

/// Stage 2 of the simplified pipeline, also the known-delay genie: project
/// Y(n) = H(n)^H onto the given delays through the right pseudo-inverse of
/// the reduced steering matrix, then run the single-layer solver per slice
/// with the Doppler dictionary. Column l of the recovered sparse matrices
/// pairs with delays[l]. Throws on (near-)duplicate delays, which make the
/// reduced steering matrix rank deficient. The optional state reports the
/// inner solver's convergence.
std::vector<Estimate> doppler_stage(const RealignedChannel& channel,
                                    const Dictionaries& dicts,
                                    const std::vector<double>& delays_s,
                                    const VbiOptions& opts,
                                    VbiState* state_out = nullptr);

/// Mirror of doppler_stage for the known-Doppler genie: project each slice
/// onto the given Dopplers (fractional steering across blocks) and solve for
/// the delays with the delay dictionary.
std::vector<Estimate> delay_stage(const RealignedChannel& channel,
                                  const Dictionaries& dicts,
                                  const std::vector<double>& dopplers_hz,
                                  const VbiOptions& opts,
                                  VbiState* state_out = nullptr);

/// Algorithm-2 pipeline: MUSIC delays on the stacked correlation, then the
/// reduced Doppler solve. A degenerate MUSIC stage yields no estimates.
std::vector<Estimate> two_stage_solve(const RealignedChannel& channel,
                                      const Dictionaries& dicts, int n_targets,
                                      const VbiOptions& opts,
                                      MusicResult* music_out = nullptr,
                                      VbiState* stage2_out = nullptr);

} // namespace sense
