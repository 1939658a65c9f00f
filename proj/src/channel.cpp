#include "sense/channel.hpp"

#include <cmath>
#include <numbers>

#include "sense/dictionary.hpp"

namespace sense {

namespace {

// Normalized sinc with a series expansion near zero; the removable
// singularity makes the naive quotient lose digits below ~1e-8.
double sinc(double x) {
    const double px = std::numbers::pi * x;
    if (std::abs(px) < 1e-6) {
        const double p2 = px * px;
        return 1.0 - p2 / 6.0 + p2 * p2 / 120.0;
    }
    return std::sin(px) / px;
}

// d/dx sinc(x); odd function, -pi^2 x / 3 + O(x^3) near zero.
double sinc_deriv(double x) {
    const double pi = std::numbers::pi;
    const double px = pi * x;
    if (std::abs(px) < 1e-4) {
        const double p2 = px * px;
        return pi * px * (-1.0 / 3.0 + p2 / 30.0);
    }
    return (std::cos(px) - sinc(x)) / x;
}

} // namespace

double g2(double f_hz, const SystemConfig& config) {
    return sinc(f_hz * config.block_duration_s());
}

double g2_deriv(double f_hz, const SystemConfig& config) {
    const double T = config.block_duration_s();
    return T * sinc_deriv(f_hz * T);
}

Eigen::MatrixXcd build_fd_channel(const SystemConfig& config,
                                  const std::vector<Target>& targets,
                                  int block_index) {
    config.validate();
    const int n = config.n_subcarriers;
    if (block_index < 0 || block_index >= config.n_blocks)
        throw std::invalid_argument("build_fd_channel: block index out of range");
    for (const auto& t : targets)
        if (!(t.delay_s >= 0.0 && t.delay_s < config.max_delay_s()))
            throw std::invalid_argument("build_fd_channel: target delay outside [0, 1/f0)");

    const double f0 = config.subcarrier_spacing_hz;
    const double T = config.block_duration_s();
    const double two_pi = 2.0 * std::numbers::pi;

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& t : targets) {
        const cd block_phase = std::exp(cd(0.0, two_pi * t.doppler_hz * block_index * T));
        // Per-target the matrix factors into sinc weights along wrapped
        // diagonals and a phase ramp along columns.
        Eigen::VectorXd diag_weight(n);
        for (int d = 0; d < n; ++d)
            diag_weight(d) = g2(signed_slice_index(d, n) * f0 - t.doppler_hz, config);
        Eigen::VectorXcd col_phase(n);
        for (int m = 0; m < n; ++m)
            col_phase(m) = std::exp(cd(0.0, -two_pi * m * f0 * t.delay_s));
        for (int row = 0; row < n; ++row)
            for (int m = 0; m < n; ++m)
                h(row, m) += t.gain * block_phase * diag_weight(((row - m) % n + n) % n) * col_phase(m);
    }
    return h;
}

RealignedChannel realign(const std::vector<Eigen::MatrixXcd>& per_block) {
    if (per_block.empty()) throw std::invalid_argument("realign: no blocks");
    const int n = static_cast<int>(per_block.front().rows());
    const int k_blocks = static_cast<int>(per_block.size());
    for (const auto& b : per_block)
        if (b.rows() != n || b.cols() != n)
            throw std::invalid_argument("realign: blocks must be square and equally sized");

    RealignedChannel out;
    out.slices.assign(n, Eigen::MatrixXcd(n, k_blocks));
    for (int slice = 0; slice < n; ++slice)
        for (int m = 0; m < n; ++m)
            for (int k = 0; k < k_blocks; ++k)
                out.slices[slice](m, k) = per_block[k]((slice + m) % n, m);
    return out;
}

std::vector<Eigen::MatrixXcd> unrealign(const RealignedChannel& channel) {
    channel.validate();
    const int n = channel.n_slices();
    if (n == 0) return {};
    const int k_blocks = static_cast<int>(channel.slices.front().cols());

    std::vector<Eigen::MatrixXcd> blocks(k_blocks, Eigen::MatrixXcd(n, n));
    for (int k = 0; k < k_blocks; ++k)
        for (int row = 0; row < n; ++row)
            for (int m = 0; m < n; ++m)
                blocks[k](row, m) = channel.slices[((row - m) % n + n) % n](m, k);
    return blocks;
}

RealignedChannel add_noise(const RealignedChannel& channel, double sigma2,
                           std::mt19937_64& rng) {
    if (sigma2 < 0) throw std::invalid_argument("add_noise: sigma2 must be >= 0");
    RealignedChannel out = channel;
    if (sigma2 == 0.0) return out;
    std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2 / 2.0));
    for (auto& s : out.slices)
        for (Eigen::Index col = 0; col < s.cols(); ++col)
            for (Eigen::Index row = 0; row < s.rows(); ++row) {
                const double re = gauss(rng);
                const double im = gauss(rng);
                s(row, col) += cd(re, im);
            }
    return out;
}

} // namespace sense
