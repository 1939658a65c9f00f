#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "sense/crb.hpp"
#include "sense/music.hpp"
#include "sense/two_layer.hpp"

namespace sense {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Method {
    TwoLayer,
    TwoStage,
    ClassicalVbi,
    PerfectVbiDelay,    ///< delay supplied from truth, Doppler estimated
    PerfectVbiDoppler,  ///< Doppler supplied from truth, delay estimated
    FftCoarse,
    SummationMusic,
};

std::string method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

/// Which correlation the summation ablation builds before MUSIC.
enum class SummationVariant {
    SumCorrelations, ///< sum of per-slice correlations; proportional to the stacked R1
    SumSlices,       ///< correlate the slice sum; loses the per-slice separation
};

/// One Monte Carlo experiment. Ranges are kept in natural grid units so a
/// preset survives changes of N and f0; clamp them with validate() before
/// use. Per SNR point the total noise variance is 10^(-snr/10), split
/// between receiver and estimation noise by est_noise_fraction.
struct ScenarioConfig {
    SystemConfig system;
    int n_targets = 3;
    double delay_range_t0 = 3.0;   ///< tau drawn from [0, delay_range_t0 * T0]
    double doppler_max_f0 = 4.0;   ///< nu drawn from [-x*f0, x*f0]
    int grid_p = 32;
    int grid_q = 32;
    std::vector<double> snr_db = {0, 5, 10, 15, 20};
    int n_trials = 200;
    std::uint64_t seed = 1;
    std::vector<Method> methods = {Method::TwoLayer, Method::TwoStage, Method::FftCoarse};
    bool on_grid = false;              ///< draw targets exactly on grid supports
    double est_noise_fraction = 0.0;   ///< sigma2^2 share of the total noise
    SummationVariant summation_variant = SummationVariant::SumSlices;
    double min_separation = 0.0;       ///< normalized pairwise floor; 0 disables
    VbiOptions vbi;
    double outer_tol = 1e-5;
    int outer_max_iter = 167;
    bool shared_beta = true;
    bool warm_start = true;

    double delay_range_s() const { return delay_range_t0 * system.sample_interval_s(); }
    double doppler_max_hz() const { return doppler_max_f0 * system.subcarrier_spacing_hz; }
    TwoLayerOptions two_layer_options() const;
    void validate() const;
};

/// One CSV row: mean-squared errors of a method at one SNR point plus the
/// trial-averaged bound columns.
struct MseRow {
    double snr_db = 0;
    std::string method;
    double mse_doppler_hz2 = 0;
    double mse_doppler_norm = 0;  ///< per f0^2
    double mse_delay_s2 = 0;
    double mse_delay_norm = 0;    ///< per T0^2
    double crb_doppler_hz2 = 0;
    double crb_delay_s2 = 0;
    long n_trials = 0;
    long n_failed = 0;
    // Monte Carlo standard errors of the two MSE estimates; carried for the
    // bound comparisons but not part of the CSV schema.
    double mse_doppler_se_hz2 = 0;
    double mse_delay_se_s2 = 0;
};

struct SweepResult {
    std::vector<MseRow> rows;
    long numerical_failures = 0;      ///< positive-definiteness or rank assertions fired
    long crb_failures = 0;            ///< trials whose bound evaluation failed
    long nonconverged_runs = 0;       ///< solver runs that stopped at the iteration cap
    long iteration_cap_violations = 0; ///< cap exceeded without the flag; must stay 0
};

/// Coarse baseline: block-average each slice, inverse-DFT along the
/// subcarrier axis and take the L largest (delay-bin, slice) cells. Delays
/// come out at integer multiples of T0, Dopplers at integer multiples of f0.
std::vector<Estimate> fft_coarse_estimate(const RealignedChannel& channel,
                                          const SystemConfig& config, int n_targets);

/// Correlation matrix of the chosen summation variant (both N x N).
Eigen::MatrixXcd summation_correlation(const RealignedChannel& channel,
                                       SummationVariant variant);

/// MUSIC delays on the summation correlation; ablation counterpart of the
/// stacked pipeline.
std::vector<double> summation_music_delays(const RealignedChannel& channel,
                                           const Dictionaries& dicts,
                                           const SystemConfig& config, int n_targets,
                                           SummationVariant variant);

/// Squared errors after minimum-cost assignment on the normalized distance
/// (dtau/T0)^2 + (dnu/f0)^2. Missing estimates are charged the worst-case
/// errors of the search ranges. A positive doppler_alias_span_hz folds
/// Doppler differences into (-span/2, span/2]: the channel model cannot
/// distinguish nu from nu + N f0 (the inter-block phase drops integer
/// parts), so errors are measured on the representable circle.
struct ScoredErrors {
    std::vector<double> delay_sq;   ///< s^2, one per true target
    std::vector<double> doppler_sq; ///< Hz^2
};
ScoredErrors match_and_score(const std::vector<Target>& truth,
                             const std::vector<Estimate>& estimates,
                             double delay_worst_s, double doppler_worst_hz,
                             double t0_s, double f0_hz,
                             double doppler_alias_span_hz = 0.0);

/// The full Monte Carlo sweep: for every SNR point and trial, draw targets,
/// synthesize and re-align the channel, add noise, run every configured
/// method on the same realization, score against the truth and average.
/// Trials run on a worker pool capped by SENSE_THREADS; results depend only
/// on (config, seed), never on the worker count. A failed trial charges the
/// worst-case error and is counted in n_failed.
SweepResult run_sweep(const ScenarioConfig& cfg);

/// Named parameter presets for the benchmark figures.
ScenarioConfig preset_config(const std::string& name);

/// Flat key = value scenario file; '#' starts a comment; unknown keys are
/// errors. Values merge onto `base`.
ScenarioConfig load_config_file(const std::string& path, ScenarioConfig base);

void write_csv(const std::vector<MseRow>& rows, std::ostream& out);

/// SNR point list, either "min:step:max" or a comma list, in dB.
std::vector<double> parse_snr_spec(const std::string& spec);

/// One-way velocity to Doppler: nu = v * fc / c.
double velocity_to_doppler_hz(double velocity_kmh, double carrier_hz);

} // namespace sense
