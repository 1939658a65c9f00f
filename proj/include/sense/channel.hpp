#pragma once

#include <random>

#include "sense/types.hpp"

namespace sense {

/// Time-window spectrum g2(f) = sinc(f*T) = sin(pi f T)/(pi f T), with
/// g2(0) = 1. Zeros fall on every non-zero integer multiple of f0.
double g2(double f_hz, const SystemConfig& config);

/// Analytic derivative d g2 / d f.
double g2_deriv(double f_hz, const SystemConfig& config);

/// Frequency-domain channel matrix of OFDM block k. Entry (n, m) is
///   sum_l h_l e^{j 2 pi nu_l k T} g2(wrap((n-m) mod N) f0 - nu_l) e^{-j 2 pi m f0 tau_l},
/// where wrap maps a mod-N index i to i - N for i > N/2 so the sinc stays
/// centered for negative Dopplers. Rejects targets with tau >= 1/f0.
Eigen::MatrixXcd build_fd_channel(const SystemConfig& config,
                                  const std::vector<Target>& targets,
                                  int block_index);

/// Re-align K per-block N x N matrices into the Doppler-indexed tensor:
/// slice n entry (m, k) = entry ((n + m) mod N, m) of block-k matrix,
/// i.e. column m circularly shifted up by m positions.
RealignedChannel realign(const std::vector<Eigen::MatrixXcd>& per_block);

/// Inverse of realign(); the re-alignment is a pure permutation.
std::vector<Eigen::MatrixXcd> unrealign(const RealignedChannel& channel);

/// Adds i.i.d. circularly-symmetric complex Gaussian noise with per-element
/// variance sigma2 (real/imaginary parts each sigma2/2). Same generator
/// state always produces the same output.
RealignedChannel add_noise(const RealignedChannel& channel, double sigma2,
                           std::mt19937_64& rng);

} // namespace sense
