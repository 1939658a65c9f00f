#include "sense/music.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace sense {

namespace {

Eigen::VectorXcd delay_steering(double tau_s, double f0, int n) {
    Eigen::VectorXcd a(n);
    for (int m = 0; m < n; ++m)
        a(m) = std::exp(cd(0.0, -2.0 * std::numbers::pi * m * f0 * tau_s));
    return a;
}

// Right pseudo-inverse factor A (A^H A)^{-1}; throws when two steering
// columns (nearly) coincide.
Eigen::MatrixXcd right_pseudo_inverse(const Eigen::MatrixXcd& a_hat,
                                      const std::vector<double>& params,
                                      const char* what) {
    const Eigen::MatrixXcd gram = a_hat.adjoint() * a_hat;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi)) {
        double best = std::numeric_limits<double>::infinity();
        size_t bi = 0, bj = 1;
        for (size_t i = 0; i < params.size(); ++i)
            for (size_t j = i + 1; j < params.size(); ++j)
                if (std::abs(params[i] - params[j]) < best) {
                    best = std::abs(params[i] - params[j]);
                    bi = i;
                    bj = j;
                }
        std::ostringstream msg;
        msg << what << ": steering matrix is rank deficient; closest pair is #" << bi
            << "=" << (params.empty() ? 0.0 : params[bi]) << " vs #" << bj << "="
            << (params.size() > 1 ? params[bj] : 0.0);
        throw NumericalError(msg.str());
    }
    return a_hat * gram.inverse();
}

} // namespace

Eigen::MatrixXcd stack_h1(const RealignedChannel& channel) {
    channel.validate();
    const int n = channel.n_slices();
    if (n == 0) throw std::invalid_argument("stack_h1: empty channel");
    const int k_blocks = static_cast<int>(channel.slices.front().cols());

    Eigen::MatrixXcd h1(static_cast<Eigen::Index>(n) * k_blocks, n);
    for (int slice = 0; slice < n; ++slice)
        h1.middleRows(static_cast<Eigen::Index>(slice) * k_blocks, k_blocks) =
            channel.slices[slice].adjoint();
    return h1;
}

Eigen::MatrixXcd correlation(const Eigen::MatrixXcd& h1) {
    Eigen::MatrixXcd r = (h1.adjoint() * h1) / static_cast<double>(h1.rows());
    return 0.5 * (r + r.adjoint());
}

MusicResult music_delays(const Eigen::MatrixXcd& r1, const Eigen::VectorXd& delay_grid,
                         const SystemConfig& config, int n_targets) {
    const int n = static_cast<int>(r1.rows());
    if (n_targets >= n)
        throw std::invalid_argument("music_delays: need L < N for a noise subspace");
    if (n_targets < 1) throw std::invalid_argument("music_delays: L must be >= 1");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r1);
    if (es.info() != Eigen::Success)
        throw NumericalError("music_delays: eigendecomposition failed");

    MusicResult result;
    result.noise_subspace_dim = n - n_targets;
    result.eigvals = es.eigenvalues().reverse(); // descending
    // Eigen sorts ascending, so the noise subspace is the leading block.
    const Eigen::MatrixXcd u_noise = es.eigenvectors().leftCols(n - n_targets);

    const int n_grid = static_cast<int>(delay_grid.size());
    result.spectrum.resize(n_grid);
    for (int p = 0; p < n_grid; ++p) {
        const Eigen::VectorXcd a =
            delay_steering(delay_grid(p), config.subcarrier_spacing_hz, n);
        const double denom = (u_noise.adjoint() * a).squaredNorm();
        result.spectrum(p) = 1.0 / std::max(denom, 1e-300);
    }

    const double s_max = result.spectrum.maxCoeff();
    const double s_min = result.spectrum.minCoeff();
    if (s_max - s_min <= 1e-9 * s_max) {
        result.degenerate = true;
        return result;
    }

    std::vector<int> peaks;
    for (int p = 0; p < n_grid; ++p) {
        const bool rising = (p == 0) || result.spectrum(p) > result.spectrum(p - 1);
        const bool falling = (p == n_grid - 1) || result.spectrum(p) >= result.spectrum(p + 1);
        if (rising && falling) peaks.push_back(p);
    }
    std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
        if (result.spectrum(a) != result.spectrum(b))
            return result.spectrum(a) > result.spectrum(b);
        return a < b;
    });
    if (static_cast<int>(peaks.size()) < n_targets) result.underflow = true;
    for (int l = 0; l < std::min<int>(n_targets, peaks.size()); ++l)
        result.delays_s.push_back(delay_grid(peaks[l]));
    return result;
}

std::vector<Estimate> doppler_stage(const RealignedChannel& channel,
                                    const Dictionaries& dicts,
                                    const std::vector<double>& delays_s,
                                    const VbiOptions& opts,
                                    VbiState* state_out) {
    if (delays_s.empty()) return {};
    channel.validate();
    const int n = channel.n_slices();
    const int n_targets = static_cast<int>(delays_s.size());
    const double f0 = dicts.subcarrier_spacing_hz;

    Eigen::MatrixXcd a_hat(n, n_targets);
    for (int l = 0; l < n_targets; ++l) a_hat.col(l) = delay_steering(delays_s[l], f0, n);
    const Eigen::MatrixXcd projector = right_pseudo_inverse(a_hat, delays_s, "doppler_stage");

    Eigen::MatrixXcd y_reduced(dicts.a_nu.rows(), static_cast<Eigen::Index>(n) * n_targets);
    for (int slice = 0; slice < n; ++slice)
        y_reduced.middleCols(static_cast<Eigen::Index>(slice) * n_targets, n_targets) =
            channel.slices[slice].adjoint() * projector;

    VbiOptions inner = opts;
    inner.keep_covariances = false;
    inner.metric_group_size = n_targets;
    auto [x_reduced, vstate] = vbi_solve(y_reduced, dicts.a_nu, inner);
    if (state_out) *state_out = std::move(vstate);

    std::vector<Estimate> estimates;
    for (int l = 0; l < n_targets; ++l) {
        double best = -1.0;
        int bq = 0, bn = 0;
        for (int slice = 0; slice < n; ++slice)
            for (int q = 0; q < dicts.n_dopplers(); ++q) {
                const double v = std::abs(x_reduced(q, slice * n_targets + l));
                if (v > best) { best = v; bq = q; bn = slice; }
            }
        // Same slice disambiguation as the tensor readout: near-half
        // fractions split their sinc energy over two slices.
        if (std::abs(dicts.doppler_grid(bq)) > 0.25 * f0) {
            const int side = dicts.doppler_grid(bq) > 0 ? -1 : 1;
            const int alt = ((bn + side) % n + n) % n;
            auto profile_score = [&](int slice) {
                const double nu = std::remainder(
                    signed_slice_index(slice, n) * f0 + dicts.doppler_grid(bq), n * f0);
                cd corr(0, 0);
                double energy = 0;
                for (int n2 = 0; n2 < n; ++n2) {
                    const double x = signed_slice_index(n2, n) * f0 - nu;
                    const double arg = std::numbers::pi * x / f0;
                    const double t = std::abs(arg) < 1e-9 ? 1.0 : std::sin(arg) / arg;
                    corr += t * x_reduced(bq, n2 * n_targets + l);
                    energy += t * t;
                }
                return std::norm(corr) / energy;
            };
            if (profile_score(alt) > profile_score(bn)) bn = alt;
        }
        Estimate e;
        e.delay_s = delays_s[l];
        e.q = bq;
        e.n_signed = signed_slice_index(bn, n);
        e.doppler_hz = e.n_signed * f0 + dicts.doppler_grid(bq);
        e.gain = std::conj(x_reduced(bq, bn * n_targets + l));
        estimates.push_back(e);
    }
    return estimates;
}

std::vector<Estimate> delay_stage(const RealignedChannel& channel,
                                  const Dictionaries& dicts,
                                  const std::vector<double>& dopplers_hz,
                                  const VbiOptions& opts,
                                  VbiState* state_out) {
    if (dopplers_hz.empty()) return {};
    channel.validate();
    const int n = channel.n_slices();
    const int k_blocks = static_cast<int>(channel.slices.front().cols());
    const int n_targets = static_cast<int>(dopplers_hz.size());
    const double f0 = dicts.subcarrier_spacing_hz;
    const double block_t = 1.0 / f0;
    const double two_pi = 2.0 * std::numbers::pi;

    // Split each Doppler into slice index and fractional part; the steering
    // across blocks only sees the fraction.
    std::vector<int> slice_of(n_targets);
    Eigen::MatrixXcd b_hat(k_blocks, n_targets);
    std::vector<double> fractional(n_targets);
    for (int l = 0; l < n_targets; ++l) {
        const int n_int = static_cast<int>(std::lround(dopplers_hz[l] / f0));
        fractional[l] = dopplers_hz[l] - n_int * f0;
        slice_of[l] = ((n_int % n) + n) % n;
        for (int k = 0; k < k_blocks; ++k)
            b_hat(k, l) = std::exp(cd(0.0, -two_pi * fractional[l] * k * block_t));
    }
    const Eigen::MatrixXcd projector = right_pseudo_inverse(b_hat, fractional, "delay_stage");

    Eigen::MatrixXcd y_reduced(n, static_cast<Eigen::Index>(n) * n_targets);
    for (int slice = 0; slice < n; ++slice)
        y_reduced.middleCols(static_cast<Eigen::Index>(slice) * n_targets, n_targets) =
            channel.slices[slice] * projector;

    VbiOptions inner = opts;
    inner.keep_covariances = false;
    inner.metric_group_size = n_targets;
    auto [x_reduced, vstate] = vbi_solve(y_reduced, dicts.a_tau, inner);
    if (state_out) *state_out = std::move(vstate);

    std::vector<Estimate> estimates;
    for (int l = 0; l < n_targets; ++l) {
        const int slice = slice_of[l];
        double best = -1.0;
        int bp = 0;
        for (int p = 0; p < dicts.n_delays(); ++p) {
            const double v = std::abs(x_reduced(p, slice * n_targets + l));
            if (v > best) { best = v; bp = p; }
        }
        Estimate e;
        e.doppler_hz = dopplers_hz[l];
        e.p = bp;
        e.delay_s = dicts.delay_grid(bp);
        e.gain = x_reduced(bp, slice * n_targets + l);
        estimates.push_back(e);
    }
    return estimates;
}

std::vector<Estimate> two_stage_solve(const RealignedChannel& channel,
                                      const Dictionaries& dicts, int n_targets,
                                      const VbiOptions& opts,
                                      MusicResult* music_out, VbiState* stage2_out) {
    const Eigen::MatrixXcd r1 = correlation(stack_h1(channel));
    SystemConfig cfg;
    cfg.n_subcarriers = channel.n_slices();
    cfg.n_blocks = static_cast<int>(channel.slices.front().cols());
    cfg.subcarrier_spacing_hz = dicts.subcarrier_spacing_hz;
    const MusicResult music = music_delays(r1, dicts.delay_grid, cfg, n_targets);
    if (music_out) *music_out = music;
    if (music.degenerate) return {};
    return doppler_stage(channel, dicts, music.delays_s, opts, stage2_out);
}

} // namespace sense
