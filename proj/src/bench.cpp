#include "sense/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "sense/channel.hpp"

namespace sense {

namespace {

constexpr double kSpeedOfLight = 299792458.0;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::TwoLayer: return "two_layer";
        case Method::TwoStage: return "two_stage";
        case Method::ClassicalVbi: return "classical_vbi";
        case Method::PerfectVbiDelay: return "perfect_vbi_delay";
        case Method::PerfectVbiDoppler: return "perfect_vbi_doppler";
        case Method::FftCoarse: return "fft_coarse";
        case Method::SummationMusic: return "summation_music";
    }
    return "unknown";
}

std::optional<Method> method_from_name(const std::string& name) {
    static const std::map<std::string, Method> table = {
        {"two_layer", Method::TwoLayer},
        {"two_stage", Method::TwoStage},
        {"classical_vbi", Method::ClassicalVbi},
        {"perfect_vbi_delay", Method::PerfectVbiDelay},
        {"perfect_vbi_doppler", Method::PerfectVbiDoppler},
        {"fft_coarse", Method::FftCoarse},
        {"summation_music", Method::SummationMusic},
    };
    const auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

TwoLayerOptions ScenarioConfig::two_layer_options() const {
    TwoLayerOptions o;
    o.vbi = vbi;
    o.outer_tol = outer_tol;
    o.outer_max_iter = outer_max_iter;
    o.shared_beta = shared_beta;
    o.warm_start = warm_start;
    return o;
}

void ScenarioConfig::validate() const {
    system.validate();
    vbi.validate();
    if (n_targets < 1) throw ConfigError("scenario: n_targets must be >= 1");
    if (n_trials < 1) throw ConfigError("scenario: n_trials must be >= 1");
    if (grid_p < 1 || grid_q < 1) throw ConfigError("scenario: grid sizes must be >= 1");
    if (!(delay_range_t0 >= 0) || delay_range_t0 >= system.n_subcarriers)
        throw ConfigError("scenario: delay_range_t0 must lie in [0, N) so tau < 1/f0");
    if (!(doppler_max_f0 > 0)) throw ConfigError("scenario: doppler_max_f0 must be > 0");
    if (snr_db.empty()) throw ConfigError("scenario: snr_db list is empty");
    if (methods.empty()) throw ConfigError("scenario: no methods selected");
    if (est_noise_fraction < 0 || est_noise_fraction > 1)
        throw ConfigError("scenario: est_noise_fraction must lie in [0, 1]");
    for (Method m : methods)
        if ((m == Method::TwoStage || m == Method::SummationMusic) &&
            n_targets >= system.n_subcarriers)
            throw ConfigError("scenario: MUSIC-based methods need n_targets < n_subcarriers");
    if (outer_max_iter < 1 || !(outer_tol > 0))
        throw ConfigError("scenario: bad outer loop controls");
}

std::vector<Estimate> fft_coarse_estimate(const RealignedChannel& channel,
                                          const SystemConfig& config, int n_targets) {
    channel.validate();
    const int n = channel.n_slices();
    const double t0 = config.sample_interval_s();
    const double f0 = config.subcarrier_spacing_hz;
    const double two_pi = 2.0 * std::numbers::pi;

    // Block-average each slice, then inverse DFT over the subcarrier axis.
    Eigen::MatrixXcd profiles(n, n); // (bin, slice)
    for (int slice = 0; slice < n; ++slice) {
        const Eigen::VectorXcd avg = channel.slices[slice].rowwise().mean();
        for (int bin = 0; bin < n; ++bin) {
            cd acc(0, 0);
            for (int m = 0; m < n; ++m)
                acc += avg(m) * std::exp(cd(0.0, two_pi * m * bin / n));
            profiles(bin, slice) = acc / double(n);
        }
    }

    std::vector<std::pair<double, std::pair<int, int>>> cells;
    for (int slice = 0; slice < n; ++slice)
        for (int bin = 0; bin < n; ++bin)
            cells.push_back({std::abs(profiles(bin, slice)), {bin, slice}});
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    std::vector<Estimate> out;
    for (int l = 0; l < std::min<int>(n_targets, cells.size()); ++l) {
        const auto [bin, slice] = cells[l].second;
        Estimate e;
        e.delay_s = bin * t0;
        e.n_signed = signed_slice_index(slice, n);
        e.doppler_hz = e.n_signed * f0;
        e.gain = profiles(bin, slice);
        out.push_back(e);
    }
    return out;
}

Eigen::MatrixXcd summation_correlation(const RealignedChannel& channel,
                                       SummationVariant variant) {
    channel.validate();
    const int n = channel.n_slices();
    if (n == 0) throw std::invalid_argument("summation_correlation: empty channel");
    const double k_blocks = static_cast<double>(channel.slices.front().cols());

    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(n, n);
    if (variant == SummationVariant::SumCorrelations) {
        for (const auto& slice : channel.slices) r += slice * slice.adjoint();
    } else {
        Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(channel.slices.front().cols(), n);
        for (const auto& slice : channel.slices) sum += slice.adjoint();
        r = sum.adjoint() * sum;
    }
    r /= (k_blocks * n);
    return 0.5 * (r + r.adjoint());
}

std::vector<double> summation_music_delays(const RealignedChannel& channel,
                                           const Dictionaries& dicts,
                                           const SystemConfig& config, int n_targets,
                                           SummationVariant variant) {
    const Eigen::MatrixXcd r = summation_correlation(channel, variant);
    const MusicResult res = music_delays(r, dicts.delay_grid, config, n_targets);
    return res.delays_s;
}

ScoredErrors match_and_score(const std::vector<Target>& truth,
                             const std::vector<Estimate>& estimates,
                             double delay_worst_s, double doppler_worst_hz,
                             double t0_s, double f0_hz,
                             double doppler_alias_span_hz) {
    const int n_truth = static_cast<int>(truth.size());
    const int n_est = static_cast<int>(estimates.size());
    if (n_est > n_truth)
        throw std::invalid_argument("match_and_score: more estimates than targets");

    auto doppler_diff = [&](double a, double b) {
        double d = a - b;
        if (doppler_alias_span_hz > 0) {
            d = std::remainder(d, doppler_alias_span_hz);
            if (d <= -doppler_alias_span_hz / 2) d += doppler_alias_span_hz;
        }
        return d;
    };
    if (doppler_alias_span_hz > 0)
        doppler_worst_hz = std::min(doppler_worst_hz, doppler_alias_span_hz / 2);

    const double worst_cost = (delay_worst_s / t0_s) * (delay_worst_s / t0_s) +
                              (doppler_worst_hz / f0_hz) * (doppler_worst_hz / f0_hz);

    std::vector<int> perm(n_truth);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best_perm = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < n_est; ++i) {
            const double dt = (estimates[i].delay_s - truth[perm[i]].delay_s) / t0_s;
            const double df =
                doppler_diff(estimates[i].doppler_hz, truth[perm[i]].doppler_hz) / f0_hz;
            cost += dt * dt + df * df;
        }
        cost += (n_truth - n_est) * worst_cost;
        if (cost < best_cost) {
            best_cost = cost;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    ScoredErrors errors;
    errors.delay_sq.assign(n_truth, delay_worst_s * delay_worst_s);
    errors.doppler_sq.assign(n_truth, doppler_worst_hz * doppler_worst_hz);
    for (int i = 0; i < n_est; ++i) {
        const double dt = estimates[i].delay_s - truth[best_perm[i]].delay_s;
        const double df = doppler_diff(estimates[i].doppler_hz, truth[best_perm[i]].doppler_hz);
        errors.delay_sq[best_perm[i]] = dt * dt;
        errors.doppler_sq[best_perm[i]] = df * df;
    }
    return errors;
}

namespace {

std::vector<Target> draw_targets(const ScenarioConfig& cfg, const SystemConfig& sys,
                                 const Dictionaries& dicts, std::mt19937_64& rng) {
    const int n_targets = cfg.n_targets;
    const double t0 = sys.sample_interval_s();
    const double f0 = sys.subcarrier_spacing_hz;
    const double tau_range = cfg.delay_range_s();
    const double nu_max = cfg.doppler_max_hz();
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5 / n_targets));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    std::vector<Target> targets;
    std::vector<std::array<int, 3>> supports;
    for (int l = 0; l < n_targets; ++l) {
        Target t;
        const double re = gauss(rng);
        const double im = gauss(rng);
        t.gain = cd(re, im);

        for (int attempt = 0; attempt < 10000; ++attempt) {
            if (cfg.on_grid) {
                const int p = static_cast<int>(u01(rng) * dicts.n_delays()) % dicts.n_delays();
                const int q = static_cast<int>(u01(rng) * dicts.n_dopplers()) % dicts.n_dopplers();
                const int n = static_cast<int>(u01(rng) * sys.n_subcarriers) % sys.n_subcarriers;
                t.delay_s = dicts.delay_grid(p);
                t.doppler_hz = signed_slice_index(n, sys.n_subcarriers) * f0 + dicts.doppler_grid(q);
                if (std::abs(t.doppler_hz) > nu_max) continue;
                if (std::find(supports.begin(), supports.end(), std::array<int, 3>{p, q, n}) !=
                    supports.end())
                    continue;
                bool ok = true;
                for (const auto& prev : targets)
                    if (cfg.min_separation > 0 &&
                        std::max(std::abs(t.delay_s - prev.delay_s) / t0,
                                 std::abs(t.doppler_hz - prev.doppler_hz) / f0) < cfg.min_separation)
                        ok = false;
                if (!ok) continue;
                supports.push_back({p, q, n});
                break;
            }
            t.delay_s = u01(rng) * tau_range;
            t.doppler_hz = (2.0 * u01(rng) - 1.0) * nu_max;
            bool ok = true;
            for (const auto& prev : targets)
                if (cfg.min_separation > 0 &&
                    std::max(std::abs(t.delay_s - prev.delay_s) / t0,
                             std::abs(t.doppler_hz - prev.doppler_hz) / f0) < cfg.min_separation)
                    ok = false;
            if (ok) break;
        }
        targets.push_back(t);
    }
    return targets;
}

struct MethodRun {
    std::vector<Estimate> estimates;
    bool nonconverged = false;
    int iter_cap_violation = 0;
};

MethodRun run_method(Method m, const RealignedChannel& noisy, const Dictionaries& dicts,
                     const ScenarioConfig& cfg, const SystemConfig& sys,
                     const std::vector<Target>& truth) {
    MethodRun run;
    switch (m) {
        case Method::TwoLayer: {
            auto [tensor, diag] = run_two_layer(noisy, dicts, cfg.two_layer_options());
            run.estimates = extract_estimates(tensor, cfg.n_targets).estimates;
            run.nonconverged = !diag.converged;
            if (diag.outer_iters > cfg.outer_max_iter) run.iter_cap_violation = 1;
            break;
        }
        case Method::TwoStage: {
            MusicResult music;
            VbiState stage2;
            run.estimates = two_stage_solve(noisy, dicts, cfg.n_targets, cfg.vbi, &music, &stage2);
            run.nonconverged = !music.degenerate && !stage2.converged;
            if (stage2.iter_count > cfg.vbi.max_iter) run.iter_cap_violation = 1;
            break;
        }
        case Method::ClassicalVbi: {
            const int n = sys.n_subcarriers;
            const int k_blocks = sys.n_blocks;
            const int n_p = dicts.n_delays();
            const int n_q = dicts.n_dopplers();
            // Phi = conj(A_nu) kron A_tau maps vec(D(n)) to vec(H(n)).
            Eigen::MatrixXcd phi(static_cast<Eigen::Index>(n) * k_blocks,
                                 static_cast<Eigen::Index>(n_p) * n_q);
            for (int k = 0; k < k_blocks; ++k)
                for (int q = 0; q < n_q; ++q)
                    phi.block(static_cast<Eigen::Index>(k) * n, static_cast<Eigen::Index>(q) * n_p,
                              n, n_p) = std::conj(dicts.a_nu(k, q)) * dicts.a_tau;
            Eigen::MatrixXcd y(static_cast<Eigen::Index>(n) * k_blocks, n);
            for (int slice = 0; slice < n; ++slice)
                y.col(slice) = noisy.slices[slice].reshaped();
            VbiOptions opts = cfg.vbi;
            opts.keep_covariances = false;
            opts.metric_group_size = 1; // one slice per column
            auto [x, state] = vbi_solve(y, phi, opts);
            SparseTensor tensor;
            tensor.grid_meta = dicts;
            tensor.values.resize(n);
            for (int slice = 0; slice < n; ++slice)
                tensor.values[slice] = x.col(slice).reshaped(n_p, n_q).conjugate();
            run.estimates = extract_estimates(tensor, cfg.n_targets).estimates;
            run.nonconverged = !state.converged;
            if (state.iter_count > cfg.vbi.max_iter) run.iter_cap_violation = 1;
            break;
        }
        case Method::PerfectVbiDelay: {
            std::vector<double> delays;
            for (const auto& t : truth) delays.push_back(t.delay_s);
            VbiState state;
            run.estimates = doppler_stage(noisy, dicts, delays, cfg.vbi, &state);
            run.nonconverged = !state.converged;
            break;
        }
        case Method::PerfectVbiDoppler: {
            std::vector<double> dopplers;
            for (const auto& t : truth) dopplers.push_back(t.doppler_hz);
            VbiState state;
            run.estimates = delay_stage(noisy, dicts, dopplers, cfg.vbi, &state);
            run.nonconverged = !state.converged;
            break;
        }
        case Method::FftCoarse:
            run.estimates = fft_coarse_estimate(noisy, sys, cfg.n_targets);
            break;
        case Method::SummationMusic: {
            const std::vector<double> delays = summation_music_delays(
                noisy, dicts, sys, cfg.n_targets, cfg.summation_variant);
            VbiState state;
            run.estimates = doppler_stage(noisy, dicts, delays, cfg.vbi, &state);
            run.nonconverged = !delays.empty() && !state.converged;
            break;
        }
    }
    return run;
}

struct TrialOutcome {
    std::vector<ScoredErrors> per_method;
    std::vector<char> failed;
    std::vector<char> nonconverged;
    long cap_violations = 0;
    long numerical_failures = 0;
    double crb_doppler = 0.0;
    double crb_delay = 0.0;
    bool crb_ok = false;
};

TrialOutcome run_trial(const ScenarioConfig& cfg, const Dictionaries& dicts,
                       double sigma_total, int snr_index, int trial_index) {
    SystemConfig sys = cfg.system;
    sys.noise_var_est = sigma_total * cfg.est_noise_fraction;
    sys.noise_var_rx = sigma_total - sys.noise_var_est;

    std::mt19937_64 rng(splitmix64(
        splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(snr_index) + 1)) ^
        (static_cast<std::uint64_t>(trial_index) + 0x51ED270BULL)));

    const std::vector<Target> targets = draw_targets(cfg, sys, dicts, rng);

    std::vector<Eigen::MatrixXcd> blocks;
    for (int k = 0; k < sys.n_blocks; ++k)
        blocks.push_back(build_fd_channel(sys, targets, k));
    const RealignedChannel noisy =
        add_noise(realign(blocks), sys.total_noise_var(), rng);

    const double delay_worst = cfg.delay_range_s();
    const double doppler_worst = 2.0 * cfg.doppler_max_hz();
    const double t0 = sys.sample_interval_s();
    const double f0 = sys.subcarrier_spacing_hz;

    TrialOutcome outcome;
    outcome.per_method.resize(cfg.methods.size());
    outcome.failed.assign(cfg.methods.size(), 0);
    outcome.nonconverged.assign(cfg.methods.size(), 0);

    const double alias_span = sys.n_subcarriers * f0;
    for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        try {
            MethodRun run = run_method(cfg.methods[mi], noisy, dicts, cfg, sys, targets);
            outcome.per_method[mi] = match_and_score(targets, run.estimates, delay_worst,
                                                     doppler_worst, t0, f0, alias_span);
            outcome.nonconverged[mi] = run.nonconverged ? 1 : 0;
            outcome.cap_violations += run.iter_cap_violation;
        } catch (const NumericalError&) {
            outcome.failed[mi] = 1;
            outcome.numerical_failures += 1;
            outcome.per_method[mi].delay_sq.assign(targets.size(), delay_worst * delay_worst);
            outcome.per_method[mi].doppler_sq.assign(targets.size(),
                                                     doppler_worst * doppler_worst);
        }
    }

    try {
        const FisherMatrix fim =
            fisher_matrix(sys, targets, unit_pilots(sys), sys.total_noise_var());
        const CrbResult crb = crb_diagonal(fim);
        outcome.crb_doppler = crb.doppler_bounds.mean();
        outcome.crb_delay = crb.delay_bounds.mean();
        outcome.crb_ok = true;
    } catch (const NumericalError&) {
        outcome.crb_ok = false;
    }
    return outcome;
}

int worker_count() {
    if (const char* env = std::getenv("SENSE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

} // namespace

SweepResult run_sweep(const ScenarioConfig& cfg) {
    cfg.validate();
    const Dictionaries dicts =
        build_dictionaries(cfg.system, cfg.grid_p, cfg.grid_q, cfg.delay_range_s());

    SweepResult result;
    const int n_workers = std::min(worker_count(), cfg.n_trials);

    for (size_t si = 0; si < cfg.snr_db.size(); ++si) {
        const double sigma_total = std::pow(10.0, -cfg.snr_db[si] / 10.0);
        std::vector<TrialOutcome> outcomes(cfg.n_trials);

        std::atomic<int> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        auto work = [&]() {
            for (;;) {
                const int trial = next.fetch_add(1);
                if (trial >= cfg.n_trials) break;
                try {
                    outcomes[trial] =
                        run_trial(cfg, dicts, sigma_total, static_cast<int>(si), trial);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    break;
                }
            }
        };
        if (n_workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        if (first_error) std::rethrow_exception(first_error);

        // Order-fixed reduction keeps the output independent of the pool size.
        double crb_doppler_sum = 0.0, crb_delay_sum = 0.0;
        long crb_count = 0;
        for (const auto& o : outcomes) {
            result.numerical_failures += o.numerical_failures;
            result.iteration_cap_violations += o.cap_violations;
            if (o.crb_ok) {
                crb_doppler_sum += o.crb_doppler;
                crb_delay_sum += o.crb_delay;
                ++crb_count;
            } else {
                ++result.crb_failures;
            }
        }

        for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            MseRow row;
            row.snr_db = cfg.snr_db[si];
            row.method = method_name(cfg.methods[mi]);
            row.n_trials = cfg.n_trials;
            double doppler_sum = 0.0, delay_sum = 0.0;
            double doppler_sq_sum = 0.0, delay_sq_sum = 0.0;
            for (const auto& o : outcomes) {
                const auto& errs = o.per_method[mi];
                const double trial_doppler =
                    std::accumulate(errs.doppler_sq.begin(), errs.doppler_sq.end(), 0.0) /
                    errs.doppler_sq.size();
                const double trial_delay =
                    std::accumulate(errs.delay_sq.begin(), errs.delay_sq.end(), 0.0) /
                    errs.delay_sq.size();
                doppler_sum += trial_doppler;
                delay_sum += trial_delay;
                doppler_sq_sum += trial_doppler * trial_doppler;
                delay_sq_sum += trial_delay * trial_delay;
                if (o.failed[mi]) ++row.n_failed;
                if (o.nonconverged[mi]) ++result.nonconverged_runs;
            }
            row.mse_doppler_hz2 = doppler_sum / cfg.n_trials;
            row.mse_delay_s2 = delay_sum / cfg.n_trials;
            if (cfg.n_trials > 1) {
                const double var_doppler =
                    std::max(0.0, doppler_sq_sum / cfg.n_trials -
                                      row.mse_doppler_hz2 * row.mse_doppler_hz2);
                const double var_delay = std::max(
                    0.0, delay_sq_sum / cfg.n_trials - row.mse_delay_s2 * row.mse_delay_s2);
                row.mse_doppler_se_hz2 = std::sqrt(var_doppler / (cfg.n_trials - 1));
                row.mse_delay_se_s2 = std::sqrt(var_delay / (cfg.n_trials - 1));
            }
            const double f0 = cfg.system.subcarrier_spacing_hz;
            const double t0 = cfg.system.sample_interval_s();
            row.mse_doppler_norm = row.mse_doppler_hz2 / (f0 * f0);
            row.mse_delay_norm = row.mse_delay_s2 / (t0 * t0);
            row.crb_doppler_hz2 = crb_count > 0 ? crb_doppler_sum / crb_count : 0.0;
            row.crb_delay_s2 = crb_count > 0 ? crb_delay_sum / crb_count : 0.0;
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

double velocity_to_doppler_hz(double velocity_kmh, double carrier_hz) {
    return (velocity_kmh / 3.6) * carrier_hz / kSpeedOfLight;
}

ScenarioConfig preset_config(const std::string& name) {
    ScenarioConfig cfg; // fig3 baseline: N=K=8, fc=150 GHz, f0=15 kHz, L=3
    if (name == "fig3") {
        return cfg;
    } else if (name == "fig4") {
        cfg.system.n_subcarriers = 16;
        cfg.system.n_blocks = 32;
        return cfg;
    } else if (name == "fig5") {
        cfg.snr_db = {15.0};
        return cfg;
    } else if (name == "fig6") {
        cfg.doppler_max_f0 =
            velocity_to_doppler_hz(120.0, cfg.system.carrier_hz) / cfg.system.subcarrier_spacing_hz;
        cfg.methods = {Method::TwoLayer, Method::TwoStage};
        return cfg;
    } else if (name == "fig8") {
        cfg.methods = {Method::TwoStage, Method::SummationMusic};
        return cfg;
    }
    throw ConfigError("unknown preset: " + name);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config: bad numeric value for '" + key + "': " + value);
    }
}

long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config: bad integer value for '" + key + "': " + value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: bad boolean value for '" + key + "': " + value);
}

} // namespace

std::vector<double> parse_snr_spec(const std::string& value) {
    if (value.find(':') != std::string::npos) {
        const auto parts = split(value, ':');
        if (parts.size() != 3) throw ConfigError("config: snr_db range must be min:step:max");
        const double lo = parse_double("snr_db", parts[0]);
        const double step = parse_double("snr_db", parts[1]);
        const double hi = parse_double("snr_db", parts[2]);
        if (!(step > 0)) throw ConfigError("config: snr_db step must be > 0");
        std::vector<double> out;
        for (double v = lo; v <= hi + 1e-9; v += step) out.push_back(v);
        return out;
    }
    std::vector<double> out;
    for (const auto& item : split(value, ',')) out.push_back(parse_double("snr_db", item));
    return out;
}

ScenarioConfig load_config_file(const std::string& path, ScenarioConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);

    std::map<std::string, std::string> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " is not key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: empty key or value on line " + std::to_string(line_no));
        if (!entries.emplace(key, value).second)
            throw ConfigError("config: duplicate key '" + key + "'");
    }

    if (entries.count("doppler_max_f0") && entries.count("velocity_kmh"))
        throw ConfigError("config: doppler_max_f0 and velocity_kmh are mutually exclusive");

    ScenarioConfig cfg = std::move(base);
    auto take = [&](const char* key) -> std::optional<std::string> {
        const auto it = entries.find(key);
        if (it == entries.end()) return std::nullopt;
        std::string v = it->second;
        entries.erase(it);
        return v;
    };

    if (auto v = take("n_subcarriers")) cfg.system.n_subcarriers = static_cast<int>(parse_int("n_subcarriers", *v));
    if (auto v = take("n_blocks")) cfg.system.n_blocks = static_cast<int>(parse_int("n_blocks", *v));
    if (auto v = take("subcarrier_spacing_hz")) cfg.system.subcarrier_spacing_hz = parse_double("subcarrier_spacing_hz", *v);
    if (auto v = take("carrier_hz")) cfg.system.carrier_hz = parse_double("carrier_hz", *v);
    if (auto v = take("n_targets")) cfg.n_targets = static_cast<int>(parse_int("n_targets", *v));
    if (auto v = take("delay_range_t0")) cfg.delay_range_t0 = parse_double("delay_range_t0", *v);
    if (auto v = take("doppler_max_f0")) cfg.doppler_max_f0 = parse_double("doppler_max_f0", *v);
    if (auto v = take("velocity_kmh"))
        cfg.doppler_max_f0 = velocity_to_doppler_hz(parse_double("velocity_kmh", *v),
                                                    cfg.system.carrier_hz) /
                             cfg.system.subcarrier_spacing_hz;
    if (auto v = take("grid_p")) cfg.grid_p = static_cast<int>(parse_int("grid_p", *v));
    if (auto v = take("grid_q")) cfg.grid_q = static_cast<int>(parse_int("grid_q", *v));
    if (auto v = take("snr_db")) cfg.snr_db = parse_snr_spec(*v);
    if (auto v = take("n_trials")) cfg.n_trials = static_cast<int>(parse_int("n_trials", *v));
    if (auto v = take("seed")) cfg.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
    if (auto v = take("methods")) {
        cfg.methods.clear();
        for (const auto& name : split(*v, ',')) {
            const auto m = method_from_name(name);
            if (!m) throw ConfigError("config: unknown method '" + name + "'");
            cfg.methods.push_back(*m);
        }
    }
    if (auto v = take("on_grid")) cfg.on_grid = parse_bool("on_grid", *v);
    if (auto v = take("est_noise_fraction")) cfg.est_noise_fraction = parse_double("est_noise_fraction", *v);
    if (auto v = take("summation_variant")) {
        if (*v == "slices") cfg.summation_variant = SummationVariant::SumSlices;
        else if (*v == "corr") cfg.summation_variant = SummationVariant::SumCorrelations;
        else throw ConfigError("config: summation_variant must be 'slices' or 'corr'");
    }
    if (auto v = take("min_separation")) cfg.min_separation = parse_double("min_separation", *v);
    if (auto v = take("vbi_tol")) cfg.vbi.tol = parse_double("vbi_tol", *v);
    if (auto v = take("vbi_max_iter")) cfg.vbi.max_iter = static_cast<int>(parse_int("vbi_max_iter", *v));
    if (auto v = take("vbi_shape")) cfg.vbi.shape = parse_double("vbi_shape", *v);
    if (auto v = take("vbi_rate")) cfg.vbi.rate = parse_double("vbi_rate", *v);
    if (auto v = take("vbi_prune_threshold")) cfg.vbi.prune_threshold = parse_double("vbi_prune_threshold", *v);
    if (auto v = take("outer_tol")) cfg.outer_tol = parse_double("outer_tol", *v);
    if (auto v = take("outer_max_iter")) cfg.outer_max_iter = static_cast<int>(parse_int("outer_max_iter", *v));
    if (auto v = take("shared_beta")) cfg.shared_beta = parse_bool("shared_beta", *v);
    if (auto v = take("warm_start")) cfg.warm_start = parse_bool("warm_start", *v);

    if (!entries.empty())
        throw ConfigError("config: unknown key '" + entries.begin()->first + "'");
    return cfg;
}

void write_csv(const std::vector<MseRow>& rows, std::ostream& out) {
    out << "snr_db,method,mse_doppler_hz2,mse_doppler_norm,mse_delay_s2,mse_delay_norm,"
           "crb_doppler_hz2,crb_delay_s2,n_trials,n_failed\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        out << fmt(r.snr_db) << ',' << r.method << ',' << fmt(r.mse_doppler_hz2) << ','
            << fmt(r.mse_doppler_norm) << ',' << fmt(r.mse_delay_s2) << ','
            << fmt(r.mse_delay_norm) << ',' << fmt(r.crb_doppler_hz2) << ','
            << fmt(r.crb_delay_s2) << ',' << r.n_trials << ',' << r.n_failed << '\n';
    }
}

} // namespace sense
