#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "sense/channel.hpp"
#include "sense/music.hpp"

using namespace sense;

namespace {

SystemConfig default_config() {
    SystemConfig cfg;
    cfg.n_subcarriers = 8;
    cfg.n_blocks = 8;
    cfg.subcarrier_spacing_hz = 15e3;
    cfg.carrier_hz = 150e9;
    return cfg;
}

RealignedChannel synthesize(const SystemConfig& cfg, const std::vector<Target>& targets) {
    std::vector<Eigen::MatrixXcd> blocks;
    for (int k = 0; k < cfg.n_blocks; ++k) blocks.push_back(build_fd_channel(cfg, targets, k));
    return realign(blocks);
}

} // namespace

TEST_CASE("stacking concatenates the conjugate-transposed slices") {
    RealignedChannel rc;
    Eigen::MatrixXcd s0(2, 1), s1(2, 1);
    s0 << cd(1, 1), cd(2, -1);
    s1 << cd(3, 0), cd(4, 2);
    rc.slices = {s0, s1};
    const Eigen::MatrixXcd h1 = stack_h1(rc);
    REQUIRE(h1.rows() == 2);
    REQUIRE(h1.cols() == 2);
    CHECK(h1(0, 0) == cd(1, -1));
    CHECK(h1(0, 1) == cd(2, 1));
    CHECK(h1(1, 0) == cd(3, 0));
    CHECK(h1(1, 1) == cd(4, -2));
}

TEST_CASE("real-valued input stacks as a plain transpose") {
    RealignedChannel rc;
    Eigen::MatrixXcd s(3, 2);
    s << cd(1, 0), cd(2, 0), cd(3, 0), cd(4, 0), cd(5, 0), cd(6, 0);
    rc.slices = {s, s, s};
    const Eigen::MatrixXcd h1 = stack_h1(rc);
    for (int n = 0; n < 3; ++n)
        CHECK((h1.middleRows(2 * n, 2) - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero slices stack to the zero matrix") {
    RealignedChannel rc;
    rc.slices.assign(4, Eigen::MatrixXcd::Zero(4, 2));
    CHECK(stack_h1(rc).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("correlation of orthonormal columns is a scaled identity") {
    const int rows = 12, cols = 4;
    Eigen::MatrixXcd h1(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            h1(i, j) = std::exp(cd(0, -2.0 * std::numbers::pi * i * j / rows)) / std::sqrt(rows);
    const Eigen::MatrixXcd r = correlation(h1);
    CHECK((r - Eigen::MatrixXcd::Identity(cols, cols) / rows).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("rank-1 stack gives a rank-1 correlation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0, 1);
    Eigen::VectorXcd u(10), v(4);
    for (int i = 0; i < 10; ++i) u(i) = cd(g(rng), g(rng));
    for (int j = 0; j < 4; ++j) v(j) = cd(g(rng), g(rng));
    const Eigen::MatrixXcd r = correlation(u * v.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
    CHECK(es.eigenvalues()(3) > 1e-9);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(es.eigenvalues()(i)) < 1e-12 * es.eigenvalues()(3));
    const Eigen::MatrixXcd expected = (u.squaredNorm() / 10.0) * (v * v.adjoint());
    CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-12 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("correlation matches the brute-force entry sums") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0, 1);
    Eigen::MatrixXcd h1(14, 5);
    for (int i = 0; i < 14; ++i)
        for (int j = 0; j < 5; ++j) h1(i, j) = cd(g(rng), g(rng));
    const Eigen::MatrixXcd r = correlation(h1);
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) {
            cd acc(0, 0);
            for (int k = 0; k < 14; ++k) acc += std::conj(h1(k, a)) * h1(k, b);
            CHECK(std::abs(r(a, b) - acc / 14.0) < 1e-12);
        }
}

TEST_CASE("single noiseless target peaks at its grid delay for any Doppler") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 32, 8, 3 * cfg.sample_interval_s());
    for (double nu : {0.0, 1.3 * f0, -3.7 * f0}) {
        const double tau = d.delay_grid(17);
        const auto chan = synthesize(cfg, {Target{cd(0.8, -0.1), tau, nu}});
        const Eigen::MatrixXcd r1 = correlation(stack_h1(chan));
        const MusicResult res = music_delays(r1, d.delay_grid, cfg, 1);
        REQUIRE(res.delays_s.size() == 1);
        CHECK(res.delays_s[0] == doctest::Approx(tau).epsilon(1e-12));

        // Noise-subspace orthogonality at the true delay.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r1);
        const Eigen::MatrixXcd u_noise = es.eigenvectors().leftCols(7);
        Eigen::VectorXcd a(8);
        for (int m = 0; m < 8; ++m)
            a(m) = std::exp(cd(0, -2.0 * std::numbers::pi * m * f0 * tau));
        CHECK((u_noise.adjoint() * a).squaredNorm() <= 1e-8 * a.squaredNorm());
    }
}

TEST_CASE("identity correlation is flagged as degenerate") {
    const SystemConfig cfg = default_config();
    const Dictionaries d = build_dictionaries(cfg, 32, 8, 3 * cfg.sample_interval_s());
    const MusicResult res =
        music_delays(Eigen::MatrixXcd::Identity(8, 8), d.delay_grid, cfg, 2);
    CHECK(res.degenerate);
    CHECK(res.delays_s.empty());
}

TEST_CASE("spectrum is invariant under a global phase rotation") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 32, 8, 3 * cfg.sample_interval_s());
    auto chan = synthesize(cfg, {Target{cd(0.7, 0.2), d.delay_grid(9), 0.8 * f0},
                                 Target{cd(-0.4, 0.5), d.delay_grid(22), -2.2 * f0}});
    std::mt19937_64 rng(77);
    chan = add_noise(chan, 1e-3, rng); // keep the peaks finite
    RealignedChannel rotated = chan;
    const cd phase = std::polar(1.0, 1.234);
    for (auto& s : rotated.slices) s *= phase;
    const MusicResult a = music_delays(correlation(stack_h1(chan)), d.delay_grid, cfg, 2);
    const MusicResult b = music_delays(correlation(stack_h1(rotated)), d.delay_grid, cfg, 2);
    CHECK((a.spectrum - b.spectrum).cwiseAbs().maxCoeff() <
          1e-6 * a.spectrum.cwiseAbs().maxCoeff());
    REQUIRE(a.delays_s.size() == b.delays_s.size());
    for (size_t i = 0; i < a.delays_s.size(); ++i)
        CHECK(a.delays_s[i] == doctest::Approx(b.delays_s[i]).epsilon(1e-12));
}

TEST_CASE("two targets two grid steps apart survive 30 dB noise") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 16, 8, 3 * cfg.sample_interval_s());
    const int p1 = 3, p2 = 5;
    const std::vector<Target> targets = {{cd(1.0, 0.2), d.delay_grid(p1), 1.3 * f0},
                                         {cd(-0.6, 0.7), d.delay_grid(p2), -2.6 * f0}};
    const RealignedChannel clean = synthesize(cfg, targets);

    // Least-squares refit oracle: the two planted steering columns explain
    // the clean stack exactly, so the scene is separable.
    const Eigen::MatrixXcd h1 = stack_h1(clean);
    Eigen::MatrixXcd basis(8, 2);
    for (int m = 0; m < 8; ++m) {
        basis(m, 0) = std::exp(cd(0, -2.0 * std::numbers::pi * m * f0 * d.delay_grid(p1)));
        basis(m, 1) = std::exp(cd(0, -2.0 * std::numbers::pi * m * f0 * d.delay_grid(p2)));
    }
    const Eigen::MatrixXcd coeff =
        (basis.adjoint() * basis).fullPivLu().solve(basis.adjoint() * h1.adjoint());
    CHECK((h1.adjoint() - basis * coeff).norm() < 1e-9 * h1.norm());

    int hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(400 + seed);
        const auto noisy = add_noise(clean, 1e-3, rng);
        const auto res = music_delays(correlation(stack_h1(noisy)), d.delay_grid, cfg, 2);
        int found = 0;
        for (int p : {p1, p2})
            for (double got : res.delays_s)
                if (std::abs(got - d.delay_grid(p)) < 1e-12) { ++found; break; }
        if (found == 2) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("two-stage pipeline solves one on-grid target exactly") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 8, 8, 3 * cfg.sample_interval_s());
    const double tau = d.delay_grid(5);
    const double nu = -2 * f0 + d.doppler_grid(6);
    const auto chan = synthesize(cfg, {Target{cd(0.9, 0.1), tau, nu}});
    const auto est = two_stage_solve(chan, d, 1, VbiOptions{});
    REQUIRE(est.size() == 1);
    CHECK(est[0].delay_s == doctest::Approx(tau).epsilon(1e-12));
    CHECK(est[0].doppler_hz == doctest::Approx(nu).epsilon(1e-12));
}

TEST_CASE("column pairing keeps delay-Doppler association") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 8, 8, 3 * cfg.sample_interval_s());
    // Two targets sharing a Doppler, distinct delays.
    const double nu_shared = 1 * f0 + d.doppler_grid(2);
    std::vector<Target> targets = {{cd(1.0, 0.0), d.delay_grid(2), nu_shared},
                                   {cd(0.0, 1.0), d.delay_grid(6), nu_shared}};
    const auto est = two_stage_solve(synthesize(cfg, targets), d, 2, VbiOptions{});
    REQUIRE(est.size() == 2);
    for (const auto& t : targets) {
        bool matched = false;
        for (const auto& e : est)
            if (std::abs(e.delay_s - t.delay_s) < 1e-12 &&
                std::abs(e.doppler_hz - t.doppler_hz) < 1e-9)
                matched = true;
        CHECK(matched);
    }

    // Swapping the generator order permutes the estimates identically.
    std::swap(targets[0], targets[1]);
    const auto est2 = two_stage_solve(synthesize(cfg, targets), d, 2, VbiOptions{});
    REQUIRE(est2.size() == 2);
    std::vector<double> delays1, delays2;
    for (const auto& e : est) delays1.push_back(e.delay_s);
    for (const auto& e : est2) delays2.push_back(e.delay_s);
    std::sort(delays1.begin(), delays1.end());
    std::sort(delays2.begin(), delays2.end());
    for (size_t i = 0; i < delays1.size(); ++i)
        CHECK(delays1[i] == doctest::Approx(delays2[i]).epsilon(1e-12));
}

TEST_CASE("zero channel propagates the degeneracy flag as no estimates") {
    const SystemConfig cfg = default_config();
    const Dictionaries d = build_dictionaries(cfg, 8, 8, 3 * cfg.sample_interval_s());
    RealignedChannel zero;
    zero.slices.assign(8, Eigen::MatrixXcd::Zero(8, 8));
    MusicResult music;
    const auto est = two_stage_solve(zero, d, 2, VbiOptions{}, &music);
    CHECK(music.degenerate);
    CHECK(est.empty());
}

TEST_CASE("duplicate delays are rejected with the collision named") {
    const SystemConfig cfg = default_config();
    const Dictionaries d = build_dictionaries(cfg, 8, 8, 3 * cfg.sample_interval_s());
    const auto chan = synthesize(cfg, {Target{cd(1, 0), d.delay_grid(3), 0.0}});
    const std::vector<double> dup = {d.delay_grid(3), d.delay_grid(3)};
    CHECK_THROWS_AS(doppler_stage(chan, d, dup, VbiOptions{}), NumericalError);
}

TEST_CASE("known-Doppler genie recovers the delays") {
    const SystemConfig cfg = default_config();
    const double f0 = cfg.subcarrier_spacing_hz;
    const Dictionaries d = build_dictionaries(cfg, 8, 8, 3 * cfg.sample_interval_s());
    const std::vector<Target> targets = {{cd(1.0, 0.3), d.delay_grid(1), -2 * f0 + d.doppler_grid(1)},
                                         {cd(-0.7, 0.6), d.delay_grid(6), 3 * f0 + d.doppler_grid(5)}};
    const auto chan = synthesize(cfg, targets);
    const auto est = delay_stage(chan, d, {targets[0].doppler_hz, targets[1].doppler_hz},
                                 VbiOptions{});
    REQUIRE(est.size() == 2);
    CHECK(est[0].delay_s == doctest::Approx(targets[0].delay_s).epsilon(1e-12));
    CHECK(est[1].delay_s == doctest::Approx(targets[1].delay_s).epsilon(1e-12));
}
