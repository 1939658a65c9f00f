#include "sense/crb.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sense/channel.hpp"
#include "sense/dictionary.hpp"

namespace sense {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct TargetFactors {
    cd block_phase;            // e^{j 2 pi nu k T}
    Eigen::VectorXcd col_phase; // e^{-j 2 pi m f0 tau} over m
    Eigen::VectorXd sinc_val;   // g2(wrap(d) f0 - nu) over diagonal index d
    Eigen::VectorXd sinc_der;   // g2'(wrap(d) f0 - nu)
};

TargetFactors make_factors(const SystemConfig& config, const Target& t, int k) {
    const int n = config.n_subcarriers;
    const double f0 = config.subcarrier_spacing_hz;
    const double block_t = config.block_duration_s();
    TargetFactors f;
    f.block_phase = std::exp(cd(0.0, kTwoPi * t.doppler_hz * k * block_t));
    f.col_phase.resize(n);
    for (int m = 0; m < n; ++m)
        f.col_phase(m) = std::exp(cd(0.0, -kTwoPi * m * f0 * t.delay_s));
    f.sinc_val.resize(n);
    f.sinc_der.resize(n);
    for (int d = 0; d < n; ++d) {
        const double arg = signed_slice_index(d, n) * f0 - t.doppler_hz;
        f.sinc_val(d) = g2(arg, config);
        f.sinc_der(d) = g2_deriv(arg, config);
    }
    return f;
}

} // namespace

ChannelDerivatives channel_derivatives(const SystemConfig& config,
                                       const std::vector<Target>& targets,
                                       int block_index) {
    config.validate();
    if (block_index < 0 || block_index >= config.n_blocks)
        throw std::invalid_argument("channel_derivatives: block index out of range");
    const int n = config.n_subcarriers;
    const double f0 = config.subcarrier_spacing_hz;
    const double block_t = config.block_duration_s();

    ChannelDerivatives out;
    for (const auto& t : targets) {
        const TargetFactors f = make_factors(config, t, block_index);
        Eigen::MatrixXcd d_tau(n, n), d_nu(n, n), d_re(n, n);
        const cd j_phase_rate = cd(0.0, kTwoPi * block_index * block_t);
        for (int row = 0; row < n; ++row)
            for (int m = 0; m < n; ++m) {
                const int d = ((row - m) % n + n) % n;
                const cd bare = f.block_phase * f.col_phase(m);
                d_re(row, m) = bare * f.sinc_val(d);
                d_tau(row, m) = t.gain * d_re(row, m) * cd(0.0, -kTwoPi * m * f0);
                // d/dnu [e^{j 2 pi nu k T} g2(x - nu)]
                d_nu(row, m) =
                    t.gain * bare * (j_phase_rate * f.sinc_val(d) - f.sinc_der(d));
            }
        out.d_tau.push_back(std::move(d_tau));
        out.d_nu.push_back(std::move(d_nu));
        out.d_im.push_back(cd(0.0, 1.0) * d_re);
        out.d_re.push_back(std::move(d_re));
    }
    return out;
}

ChannelDerivatives channel_derivatives_permutation_route(
    const SystemConfig& config, const std::vector<Target>& targets, int block_index) {
    config.validate();
    const int n = config.n_subcarriers;
    const double f0 = config.subcarrier_spacing_hz;
    const double block_t = config.block_duration_s();

    // Unitary DFT pair; the round trip is the identity but routes every
    // column through the frequency-time representation.
    Eigen::MatrixXcd dft(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            dft(a, b) = std::exp(cd(0.0, -kTwoPi * a * b / n)) / std::sqrt(double(n));

    auto unrealign_columns = [&](const Eigen::MatrixXcd& realigned) {
        Eigen::MatrixXcd out(n, n);
        for (int m = 0; m < n; ++m) {
            const Eigen::VectorXcd ft = dft.adjoint() * realigned.col(m);
            const Eigen::VectorXcd back = dft * ft;
            for (int i = 0; i < n; ++i) out(i, m) = back(((i - m) % n + n) % n);
        }
        return out;
    };

    ChannelDerivatives out;
    for (const auto& t : targets) {
        const TargetFactors f = make_factors(config, t, block_index);
        // In the re-aligned domain the sinc argument depends on the row only.
        Eigen::MatrixXcd r_tau(n, n), r_nu(n, n), r_re(n, n);
        const cd j_phase_rate = cd(0.0, kTwoPi * block_index * block_t);
        for (int row = 0; row < n; ++row)
            for (int m = 0; m < n; ++m) {
                const cd bare = f.block_phase * f.col_phase(m);
                r_re(row, m) = bare * f.sinc_val(row);
                r_tau(row, m) = t.gain * r_re(row, m) * cd(0.0, -kTwoPi * m * f0);
                r_nu(row, m) =
                    t.gain * bare * (j_phase_rate * f.sinc_val(row) - f.sinc_der(row));
            }
        out.d_tau.push_back(unrealign_columns(r_tau));
        out.d_nu.push_back(unrealign_columns(r_nu));
        out.d_re.push_back(unrealign_columns(r_re));
        out.d_im.push_back(cd(0.0, 1.0) * out.d_re.back());
    }
    return out;
}

std::vector<Eigen::VectorXcd> unit_pilots(const SystemConfig& config) {
    return std::vector<Eigen::VectorXcd>(
        config.n_blocks, Eigen::VectorXcd::Ones(config.n_subcarriers));
}

FisherMatrix fisher_matrix(const SystemConfig& config, const std::vector<Target>& targets,
                           const std::vector<Eigen::VectorXcd>& pilots, double sigma2) {
    config.validate();
    if (!(sigma2 > 0)) throw std::invalid_argument("fisher_matrix: sigma2 must be > 0");
    if (static_cast<int>(pilots.size()) != config.n_blocks)
        throw std::invalid_argument("fisher_matrix: need one pilot vector per block");
    for (const auto& s : pilots) {
        if (s.size() != config.n_subcarriers)
            throw std::invalid_argument("fisher_matrix: pilot length must equal N");
        if (std::abs(s.squaredNorm() / s.size() - 1.0) > 1e-9)
            throw std::invalid_argument("fisher_matrix: pilots must have unit mean power");
    }

    const int n_targets = static_cast<int>(targets.size());
    const int dim = 4 * n_targets;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 0; k < config.n_blocks; ++k) {
        const ChannelDerivatives der = channel_derivatives(config, targets, k);
        Eigen::MatrixXcd stacked(config.n_subcarriers, dim);
        for (int l = 0; l < n_targets; ++l) {
            stacked.col(l) = der.d_tau[l] * pilots[k];
            stacked.col(n_targets + l) = der.d_nu[l] * pilots[k];
            stacked.col(2 * n_targets + l) = der.d_re[l] * pilots[k];
            stacked.col(3 * n_targets + l) = der.d_im[l] * pilots[k];
        }
        j += (stacked.adjoint() * stacked).real();
    }
    FisherMatrix out;
    out.j = (2.0 / sigma2) * 0.5 * (j + j.transpose());
    out.sigma2 = sigma2;
    return out;
}

CrbResult crb_diagonal(const FisherMatrix& fisher) {
    const int dim = static_cast<int>(fisher.j.rows());
    if (dim == 0 || dim % 4 != 0)
        throw std::invalid_argument("crb_diagonal: FIM dimension must be 4L");
    const int n_targets = dim / 4;

    const Eigen::VectorXd diag = fisher.j.diagonal();
    if ((diag.array() <= 0).any())
        throw NumericalError("crb_diagonal: FIM has a non-positive diagonal entry");
    const Eigen::VectorXd scale = diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd balanced =
        scale.asDiagonal() * fisher.j * scale.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(balanced);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0) || hi / lo >= 1e12) {
        Eigen::Index weak = 0;
        es.eigenvectors().col(0).cwiseAbs().maxCoeff(&weak);
        static const char* block_names[4] = {"tau", "nu", "Re h", "Im h"};
        std::ostringstream msg;
        msg << "crb_diagonal: FIM is singular or ill-conditioned (cond="
            << (lo > 0 ? hi / lo : std::numeric_limits<double>::infinity())
            << "); near-null direction is dominated by " << block_names[weak / n_targets]
            << " of target " << (weak % n_targets);
        throw NumericalError(msg.str());
    }

    const Eigen::MatrixXd balanced_inv =
        es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
        es.eigenvectors().transpose();
    const Eigen::VectorXd bounds =
        balanced_inv.diagonal().cwiseProduct(scale.cwiseAbs2());

    CrbResult out;
    out.delay_bounds = bounds.segment(0, n_targets);
    out.doppler_bounds = bounds.segment(n_targets, n_targets);
    out.gain_re_bounds = bounds.segment(2 * n_targets, n_targets);
    out.gain_im_bounds = bounds.segment(3 * n_targets, n_targets);
    return out;
}

} // namespace sense
