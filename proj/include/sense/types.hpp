#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace sense {

using cd = std::complex<double>;

/// Thrown when a Hermitian system expected to be positive definite is not.
/// A pseudo-inverse fallback would silently degrade the estimates, so we fail.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// OFDM / sensing geometry shared by every module.
///
/// Derived quantities are computed, never stored: the bandwidth is
/// B = N*f0, the sample interval T0 = 1/B and the block duration
/// T = N*T0 = 1/f0.
struct SystemConfig {
    int n_subcarriers = 8;              ///< N
    int n_blocks = 8;                   ///< K
    double subcarrier_spacing_hz = 15e3; ///< f0
    double carrier_hz = 150e9;          ///< fc
    double noise_var_rx = 0.0;          ///< sigma1^2, receiver noise
    double noise_var_est = 0.0;         ///< sigma2^2, channel estimation error

    double bandwidth_hz() const { return n_subcarriers * subcarrier_spacing_hz; }
    double sample_interval_s() const { return 1.0 / bandwidth_hz(); }          // T0
    double block_duration_s() const { return 1.0 / subcarrier_spacing_hz; }    // T = N*T0
    double total_noise_var() const { return noise_var_rx + noise_var_est; }    // sigma^2
    double max_delay_s() const { return 1.0 / subcarrier_spacing_hz; }         // tau_max

    void validate() const {
        if (n_subcarriers < 1) throw std::invalid_argument("SystemConfig: n_subcarriers must be >= 1");
        if (n_blocks < 1) throw std::invalid_argument("SystemConfig: n_blocks must be >= 1");
        if (subcarrier_spacing_hz <= 0) throw std::invalid_argument("SystemConfig: subcarrier spacing must be > 0");
        if (carrier_hz <= 0) throw std::invalid_argument("SystemConfig: carrier frequency must be > 0");
        if (noise_var_rx < 0 || noise_var_est < 0)
            throw std::invalid_argument("SystemConfig: noise variances must be >= 0");
    }
};

/// One propagation path: complex gain, delay and Doppler.
/// The delay must stay below the maximum estimable delay 1/f0; the
/// integer/fractional Doppler split is computed where needed, not stored.
struct Target {
    cd gain{1.0, 0.0};
    double delay_s = 0.0;
    double doppler_hz = 0.0;
};

/// The Doppler-indexed channel tensor: N slices, each N x K.
/// Element (m, k) of slice n is the re-aligned channel coefficient for
/// quantized Doppler index n, subcarrier m and OFDM block k.
struct RealignedChannel {
    std::vector<Eigen::MatrixXcd> slices;

    int n_slices() const { return static_cast<int>(slices.size()); }

    void validate() const {
        const int n = n_slices();
        for (const auto& s : slices) {
            if (s.rows() != n)
                throw std::invalid_argument("RealignedChannel: slice row count must equal slice count");
            if (s.cols() != slices.front().cols())
                throw std::invalid_argument("RealignedChannel: inconsistent block count across slices");
        }
    }
};

} // namespace sense
