#pragma once

#include "sense/types.hpp"

namespace sense {

/// Delay/Doppler grids and the steering matrices built on them.
/// a_tau(m, p) = e^{-j 2 pi m f0 tau_p}  (N x P),
/// a_nu(k, q)  = e^{-j 2 pi xi_q k T}    (K x Q),
/// so the Hermitian transpose of a_nu carries the inter-block phases
/// e^{+j 2 pi xi_q k T}. All entries have unit modulus.
struct Dictionaries {
    Eigen::VectorXd delay_grid;    ///< P delays in [0, tau_range]
    Eigen::VectorXd doppler_grid;  ///< Q fractional Dopplers in (-f0/2, f0/2]
    Eigen::MatrixXcd a_tau;        ///< N x P delay steering matrix
    Eigen::MatrixXcd a_nu;         ///< K x Q Doppler steering matrix
    double subcarrier_spacing_hz = 0.0; ///< f0 the grids were built against

    int n_delays() const { return static_cast<int>(delay_grid.size()); }
    int n_dopplers() const { return static_cast<int>(doppler_grid.size()); }
};

/// P x Q x N sparse estimate. Slice n holds the X(n)-convention values
/// (conjugated path gains), so extraction conjugates back. Non-zero
/// locations encode (delay index p, fractional Doppler index q, integer
/// Doppler slice n).
struct SparseTensor {
    std::vector<Eigen::MatrixXcd> values; ///< N matrices, each P x Q
    Dictionaries grid_meta;

    int n_slices() const { return static_cast<int>(values.size()); }
};

/// One recovered target plus its support diagnostics. The Doppler is
/// reassembled as n_signed * f0 + xi_q.
struct Estimate {
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    cd gain{0.0, 0.0};
    int p = -1;
    int q = -1;
    int n_signed = 0;
};

struct ExtractionResult {
    std::vector<Estimate> estimates;
    bool underflow = false; ///< fewer than L usable peaks were available
};

/// Signed wrap of a mod-N index: n for n <= N/2, n - N otherwise.
int signed_slice_index(int n, int n_total);

/// Uniform grids and steering matrices. The delay grid spans [0, tau_range]
/// inclusive; the fractional Doppler grid spans (-f0/2, f0/2] with spacing
/// f0/Q (it contains 0 whenever Q is even). tau_range must stay below the
/// maximum estimable delay 1/f0.
Dictionaries build_dictionaries(const SystemConfig& config, int n_delays,
                                int n_dopplers, double tau_range);

/// Greedy top-L support readout: repeatedly take the largest-modulus entry,
/// excluding the 1-neighborhood in (p, q, n) of every peak already chosen
/// (n circularly). Entries below 1e-9 of the global peak are not eligible;
/// running out of eligible peaks sets the underflow flag.
ExtractionResult extract_estimates(const SparseTensor& tensor, int n_targets);

} // namespace sense
