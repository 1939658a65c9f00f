#include "sense/dictionary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sense {

int signed_slice_index(int n, int n_total) {
    if (n < 0 || n >= n_total)
        throw std::invalid_argument("signed_slice_index: index out of range");
    return (2 * n <= n_total) ? n : n - n_total;
}

Dictionaries build_dictionaries(const SystemConfig& config, int n_delays,
                                int n_dopplers, double tau_range) {
    config.validate();
    if (n_delays < 1 || n_dopplers < 1)
        throw std::invalid_argument("build_dictionaries: grid sizes must be >= 1");
    if (!(tau_range >= 0.0) || tau_range >= config.max_delay_s())
        throw std::invalid_argument("build_dictionaries: tau_range must lie in [0, 1/f0) to avoid aliasing");

    const double f0 = config.subcarrier_spacing_hz;
    const double T = config.block_duration_s();
    const double two_pi = 2.0 * std::numbers::pi;
    const int n = config.n_subcarriers;
    const int k_blocks = config.n_blocks;

    Dictionaries d;
    d.subcarrier_spacing_hz = f0;
    d.delay_grid.resize(n_delays);
    for (int p = 0; p < n_delays; ++p)
        d.delay_grid(p) = (n_delays == 1) ? 0.0 : tau_range * p / (n_delays - 1);

    // (-f0/2, f0/2], spacing f0/Q; q = Q/2 - 1 is exactly zero for even Q.
    d.doppler_grid.resize(n_dopplers);
    for (int q = 0; q < n_dopplers; ++q)
        d.doppler_grid(q) = -f0 / 2.0 + f0 * (q + 1) / n_dopplers;

    d.a_tau.resize(n, n_delays);
    for (int p = 0; p < n_delays; ++p)
        for (int m = 0; m < n; ++m)
            d.a_tau(m, p) = std::exp(cd(0.0, -two_pi * m * f0 * d.delay_grid(p)));

    d.a_nu.resize(k_blocks, n_dopplers);
    for (int q = 0; q < n_dopplers; ++q)
        for (int k = 0; k < k_blocks; ++k)
            d.a_nu(k, q) = std::exp(cd(0.0, -two_pi * d.doppler_grid(q) * k * T));

    return d;
}

ExtractionResult extract_estimates(const SparseTensor& tensor, int n_targets) {
    if (n_targets < 1) throw std::invalid_argument("extract_estimates: L must be >= 1");
    const int n_slices = tensor.n_slices();
    if (n_slices == 0) throw std::invalid_argument("extract_estimates: empty tensor");
    const int n_p = static_cast<int>(tensor.values.front().rows());
    const int n_q = static_cast<int>(tensor.values.front().cols());
    if (n_p != tensor.grid_meta.n_delays() || n_q != tensor.grid_meta.n_dopplers())
        throw std::invalid_argument("extract_estimates: tensor dimensions do not match grids");

    double max_abs = 0.0;
    for (const auto& s : tensor.values) max_abs = std::max(max_abs, s.cwiseAbs().maxCoeff());
    const double floor_abs = 1e-9 * max_abs;

    const double f0 = tensor.grid_meta.subcarrier_spacing_hz;
    // One target's main lobe spans a full resolution cell on fine grids, so
    // exclusion uses physical resolution rather than grid steps: peaks that
    // are unresolvable from a chosen one in both delay (1/(N f0)) and
    // aliased Doppler (f0/K) cannot claim another slot.
    const int n_rows = static_cast<int>(tensor.grid_meta.a_tau.rows());
    const int k_blocks = static_cast<int>(tensor.grid_meta.a_nu.rows());
    const double delay_res = n_rows > 0 ? 1.0 / (n_rows * f0) : 0.0;
    const double doppler_res = k_blocks > 0 ? f0 / k_blocks : 0.0;
    const double span = n_slices * f0;

    auto doppler_of = [&](int q, int slice) {
        return signed_slice_index(slice, n_slices) * f0 + tensor.grid_meta.doppler_grid(q);
    };
    auto alias_dist = [&](double a, double b) {
        const double d = std::remainder(a - b, span);
        return std::abs(d);
    };

    ExtractionResult result;
    std::vector<std::array<int, 3>> taken;
    for (int l = 0; l < n_targets; ++l) {
        double best = 0.0;
        int bp = -1, bq = -1, bn = -1;
        for (int slice = 0; slice < n_slices; ++slice)
            for (int q = 0; q < n_q; ++q)
                for (int p = 0; p < n_p; ++p) {
                    const double v = std::abs(tensor.values[slice](p, q));
                    if (v <= floor_abs || v <= best) continue;
                    bool excluded = false;
                    for (const auto& t : taken) {
                        const int dn = std::abs(slice - t[2]);
                        const bool neighbor = std::abs(p - t[0]) <= 1 &&
                                              std::abs(q - t[1]) <= 1 &&
                                              std::min(dn, n_slices - dn) <= 1;
                        const bool unresolvable =
                            std::abs(tensor.grid_meta.delay_grid(p) -
                                     tensor.grid_meta.delay_grid(t[0])) < delay_res &&
                            alias_dist(doppler_of(q, slice), doppler_of(t[1], t[2])) <
                                doppler_res;
                        if (neighbor || unresolvable) {
                            excluded = true;
                            break;
                        }
                    }
                    if (!excluded) { best = v; bp = p; bq = q; bn = slice; }
                }
        if (bp < 0) {
            result.underflow = true;
            break;
        }
        // Near-half fractions put comparable sinc energy into two adjacent
        // slices, and noise can hand the peak to the wrong one, which would
        // shift the glued Doppler by a full f0. Keep the slice whose sinc
        // profile better explains the whole tensor column.
        if (std::abs(tensor.grid_meta.doppler_grid(bq)) > 0.25 * f0) {
            const int side = tensor.grid_meta.doppler_grid(bq) > 0 ? -1 : 1;
            const int alt = ((bn + side) % n_slices + n_slices) % n_slices;
            auto profile_score = [&](int slice) {
                // Fold the candidate into the span first; the data follows
                // the plain (non-periodic) sinc of that representative.
                const double nu = std::remainder(
                    signed_slice_index(slice, n_slices) * f0 + tensor.grid_meta.doppler_grid(bq),
                    n_slices * f0);
                cd corr(0, 0);
                double energy = 0;
                for (int n2 = 0; n2 < n_slices; ++n2) {
                    const double x = signed_slice_index(n2, n_slices) * f0 - nu;
                    const double arg = std::numbers::pi * x / f0;
                    const double t = std::abs(arg) < 1e-9 ? 1.0 : std::sin(arg) / arg;
                    corr += t * tensor.values[n2](bp, bq);
                    energy += t * t;
                }
                return std::norm(corr) / energy;
            };
            if (profile_score(alt) > profile_score(bn)) bn = alt;
        }
        taken.push_back({bp, bq, bn});
        Estimate e;
        e.p = bp;
        e.q = bq;
        e.n_signed = signed_slice_index(bn, n_slices);
        e.delay_s = tensor.grid_meta.delay_grid(bp);
        e.doppler_hz = e.n_signed * f0 + tensor.grid_meta.doppler_grid(bq);
        e.gain = std::conj(tensor.values[bn](bp, bq)); // stored values follow X(n) = conj gains
        result.estimates.push_back(e);
    }
    return result;
}

} // namespace sense
