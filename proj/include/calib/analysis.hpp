#pragma once

#include <calib/estimators.hpp>
#include <calib/recalibration.hpp>
#include <calib/rng.hpp>
#include <calib/synthetic.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace calib {

inline constexpr std::size_t default_replicates = 1000;

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
/// writes only its own output slot, so results do not depend on scheduling.
/// The exception of the lowest failing index is rethrown.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body&& body)
{
    auto const workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count <= 1)
    {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex               mu;
    std::size_t              failed_at = count;
    std::exception_ptr       failure;
    auto const               work = [&] {
        for (std::size_t i = next++; i < count; i = next++)
        {
            try
            {
                body(i);
            }
            catch (...)
            {
                std::lock_guard lock(mu);
                if (i < failed_at)
                {
                    failed_at = i;
                    failure   = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(work);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Replicate engine
// ---------------------------------------------------------------------------

/// Estimates of every estimator on every replicate, plus the first error (by
/// replicate index) per estimator.
struct ReplicateEstimates
{
    std::vector<std::vector<double>>        values;     // [estimator][replicate]
    std::vector<std::vector<int>>           bins_used;  // [estimator][replicate], 0 if not reported
    std::vector<std::optional<std::string>> errors;     // [estimator]
};

/// Samples `m` datasets of size `n` from substreams (seed, tag, prefix..., j)
/// and evaluates every estimator on each one.
inline auto run_replicates(SyntheticModel const& model, std::size_t n, std::size_t m,
                           std::span<EstimatorSpec const> estimators, std::uint64_t seed, std::string const& tag,
                           std::vector<std::uint64_t> const& prefix, int threads) -> ReplicateEstimates
{
    auto const         k = estimators.size();
    ReplicateEstimates out;
    out.values.assign(k, std::vector<double>(m, 0.0));
    out.bins_used.assign(k, std::vector<int>(m, 0));
    std::vector<std::vector<std::optional<std::string>>> errs(k, std::vector<std::optional<std::string>>(m));

    parallel_for(m, threads, [&](std::size_t j) {
        std::uint64_t key = mix64(seed);
        for (auto p : prefix) key = mix64(key ^ mix64(p));
        Rng  rng     = Rng::substream(key, tag, {static_cast<std::uint64_t>(j)});
        auto dataset = sample(model, n, rng);
        SortedDataset const sorted(dataset);
        for (std::size_t e = 0; e < k; ++e)
        {
            try
            {
                auto const r        = evaluate(estimators[e], sorted);
                out.values[e][j]    = r.value;
                out.bins_used[e][j] = r.bins_used.value_or(0);
            }
            catch (Error const& err)
            {
                errs[e][j] = err.what();
            }
        }
    });

    out.errors.resize(k);
    for (std::size_t e = 0; e < k; ++e)
        for (std::size_t j = 0; j < m; ++j)
            if (errs[e][j])
            {
                out.errors[e] = "replicate " + std::to_string(j) + ": " + *errs[e][j];
                break;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Bias estimation
// ---------------------------------------------------------------------------

struct SimulationConfig
{
    SyntheticModel             model{};
    std::size_t                n = 200;
    std::size_t                m = default_replicates;
    std::vector<EstimatorSpec> estimators;
    std::uint64_t              seed    = 0;
    int                        threads = 1;

    void validate() const
    {
        if (n < 1) fail_input("n must be >= 1");
        if (m < 1) fail_input("m must be >= 1");
        if (estimators.empty()) fail_input("at least one estimator is required");
        for (auto const& e : estimators) e.validate();
    }
};

struct BiasReport
{
    EstimatorSpec              estimator{};
    std::size_t                n         = 0;
    std::size_t                m         = 0;
    double                     mean_ece  = 0.0;
    double                     tce       = 0.0;
    double                     bias      = 0.0;  // mean_ece - tce
    double                     std       = 0.0;  // divisor m - 1
    double                     stderr_   = 0.0;  // std / sqrt(m)
    std::optional<double>      mean_bins;        // sweep estimators
    std::optional<std::string> error;            // set when the estimator failed
};

/// Mean, spread and bias of one estimator's replicate values against `tce`.
inline auto summarize_replicates(EstimatorSpec const& spec, std::size_t n, std::span<double const> values,
                                 std::span<int const> bins, double tce_value) -> BiasReport
{
    BiasReport r;
    r.estimator    = spec;
    r.n            = n;
    r.m            = values.size();
    r.tce          = tce_value;
    double const m = static_cast<double>(values.size());
    double       sum = 0.0;
    for (double v : values) sum += v;
    r.mean_ece = sum / m;
    double ss  = 0.0;
    for (double v : values) ss += (v - r.mean_ece) * (v - r.mean_ece);
    r.std     = values.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    r.stderr_ = r.std / std::sqrt(m);
    r.bias    = r.mean_ece - r.tce;
    if (spec.is_sweep())
    {
        double bsum = 0.0;
        for (int b : bins) bsum += b;
        r.mean_bins = bsum / m;
    }
    return r;
}

/// Caches TCE values per (curve, p) for one distribution.
class TceCache
{
public:
    explicit TceCache(ScoreDistribution dist) : quad_(dist) {}

    auto operator()(CalibrationCurve const& curve, Norm norm) -> double
    {
        auto const key = curve.name() + "|" + format_real(norm.p());
        auto       it  = values_.find(key);
        if (it == values_.end()) it = values_.emplace(key, quad_(curve, norm)).first;
        return it->second;
    }

    auto quadrature() -> TceQuadrature& { return quad_; }

private:
    TceQuadrature                 quad_;
    std::map<std::string, double> values_;
};

inline auto estimate_bias(SimulationConfig const& config) -> std::vector<BiasReport>
{
    config.validate();
    TceCache   tces(config.model.dist);
    auto const est = run_replicates(config.model, config.n, config.m, config.estimators, config.seed, "bias", {},
                                    config.threads);
    std::vector<BiasReport> out;
    for (std::size_t e = 0; e < config.estimators.size(); ++e)
    {
        auto const& spec = config.estimators[e];
        double const t   = tces(config.model.curve, spec.norm);
        if (est.errors[e])
        {
            BiasReport r;
            r.estimator = spec;
            r.n         = config.n;
            r.m         = config.m;
            r.tce       = t;
            r.error     = est.errors[e];
            out.push_back(r);
            continue;
        }
        out.push_back(summarize_replicates(spec, config.n, est.values[e], est.bins_used[e], t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bias over (n, b) grids
// ---------------------------------------------------------------------------

/// Bin count recorded for sweep estimators in heatmaps.
inline constexpr int sweep_sentinel_bins = -1;

struct HeatmapCell
{
    std::size_t n     = 0;
    int         bins  = 0;  // sweep_sentinel_bins for the sweep row
    bool        valid = true;
    BiasReport  report{};
};

inline auto sweep_for(BinningKind kind) -> EstimatorKind
{
    return kind == BinningKind::equal_width ? EstimatorKind::ew_sweep : EstimatorKind::em_sweep;
}

/// Bias of `base` for every (n, b) pair, followed per n by the matching sweep
/// estimator in a b = -1 row. Equal-mass cells with too many bins are
/// recorded as invalid.
inline auto bias_heatmap(SyntheticModel const& model, std::span<std::size_t const> n_grid, std::span<int const> b_grid,
                         EstimatorKind base, Norm norm, std::size_t m, std::uint64_t seed, int threads = 1)
    -> std::vector<HeatmapCell>
{
    if (n_grid.empty() || b_grid.empty()) fail_input("heatmap grids must be nonempty");
    if (m < 1) fail_input("m must be >= 1");
    if (base == EstimatorKind::kde) fail_input("heatmap needs a binned estimator");
    if (base == EstimatorKind::em_debiased && norm.p() != 2.0) fail_input("em-debiased is defined for p = 2 only");
    TceCache tces(model.dist);
    double const t = tces(model.curve, norm);

    EstimatorSpec const proto{base, 1, norm};
    bool const          base_is_sweep = proto.is_sweep();
    auto const          sweep_spec    = EstimatorSpec{sweep_for(proto.binning_kind()), 1, norm};

    std::vector<HeatmapCell> out;
    for (auto n : n_grid)
    {
        if (n < 1) fail_input("n must be >= 1");
        std::vector<EstimatorSpec> specs;
        std::vector<HeatmapCell>   cells;
        if (!base_is_sweep)
        {
            for (int b : b_grid)
            {
                if (b < 1) fail_input("bin counts must be >= 1");
                HeatmapCell cell{n, b, true, {}};
                EstimatorSpec spec{base, b, norm};
                auto const    bb = static_cast<std::size_t>(b);
                if (spec.binning_kind() == BinningKind::equal_mass && bb > n) cell.valid = false;
                if (base == EstimatorKind::em_debiased && 2 * bb > n) cell.valid = false;
                cell.report.estimator = spec;
                cell.report.n         = n;
                cell.report.m         = m;
                cell.report.tce       = t;
                cells.push_back(cell);
                if (cell.valid) specs.push_back(spec);
            }
        }
        specs.push_back(sweep_spec);
        cells.push_back({n, sweep_sentinel_bins, true, {}});

        auto const   est = run_replicates(model, n, m, specs, seed, "heatmap", {n}, threads);
        std::size_t  e   = 0;
        for (auto& cell : cells)
        {
            if (!cell.valid) continue;
            if (est.errors[e])
            {
                cell.report.estimator = specs[e];
                cell.report.error     = est.errors[e];
            }
            else
            {
                cell.report = summarize_replicates(specs[e], n, est.values[e], est.bins_used[e], t);
            }
            ++e;
        }
        out.insert(out.end(), cells.begin(), cells.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bias against TCE over the power family
// ---------------------------------------------------------------------------

struct BiasVsTceRow
{
    double     d = 1.0;
    BiasReport report{};
};

inline auto bias_vs_tce(ScoreDistribution const& dist, EstimatorSpec const& estimator, std::size_t n, std::size_t m,
                        std::span<double const> d_grid, std::uint64_t seed, int threads = 1) -> std::vector<BiasVsTceRow>
{
    estimator.validate();
    if (n < 1 || m < 1) fail_input("n and m must be >= 1");
    TceCache                  tces(dist);
    std::vector<BiasVsTceRow> out;
    for (std::size_t i = 0; i < d_grid.size(); ++i)
    {
        double const d = d_grid[i];
        if (!(d >= 1.0 && d <= 10.0)) fail_input("d must lie in [1, 10]");
        SyntheticModel const model{dist, CalibrationCurve::power(d)};
        double const         t   = tces(model.curve, estimator.norm);
        std::array const     one{estimator};
        auto const           est = run_replicates(model, n, m, one, seed, "bias-vs-tce", {i}, threads);
        BiasVsTceRow         row{d, {}};
        if (est.errors[0])
        {
            row.report = BiasReport{estimator, n, m, 0.0, t, 0.0, 0.0, 0.0, std::nullopt, est.errors[0]};
        }
        else
        {
            row.report = summarize_replicates(estimator, n, est.values[0], est.bins_used[0], t);
        }
        out.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Miscalibration detection power
// ---------------------------------------------------------------------------

struct PowerReport
{
    EstimatorSpec       estimator{};
    std::size_t         n         = 0;
    double              alpha     = 0.05;
    double              threshold = 0.0;
    double              null_min  = 0.0;
    double              null_max  = 0.0;
    std::vector<double> tce_grid;
    std::vector<double> d_grid;
    std::vector<double> type2;
};

/// Empirical (1 - alpha) quantile as an order statistic of the sample.
inline auto upper_quantile(std::vector<double> values, double alpha) -> double
{
    std::ranges::sort(values);
    auto const m   = values.size();
    auto       idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(m)));
    idx            = std::clamp<std::size_t>(idx, 1, m) - 1;
    return values[idx];
}

/// Type II error of a threshold test calibrated on a perfectly calibrated
/// null, for power-family alternatives hitting each target TCE.
inline auto power_test(ScoreDistribution const& dist, EstimatorSpec const& estimator, std::size_t n, double alpha,
                       std::span<double const> tce_targets, std::size_t m_null, std::size_t m_alt, std::uint64_t seed,
                       int threads = 1) -> PowerReport
{
    estimator.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) fail_input("alpha must lie in (0, 1)");
    if (n < 1 || m_null < 1 || m_alt < 1) fail_input("n, m_null and m_alt must be >= 1");

    std::array const one{estimator};
    PowerReport      rep;
    rep.estimator = estimator;
    rep.n         = n;
    rep.alpha     = alpha;

    SyntheticModel const null_model{dist, CalibrationCurve::identity()};
    auto const           null_est = run_replicates(null_model, n, m_null, one, seed, "power-null", {}, threads);
    if (null_est.errors[0]) fail_precondition(*null_est.errors[0]);
    rep.threshold = upper_quantile(null_est.values[0], alpha);
    rep.null_min  = *std::ranges::min_element(null_est.values[0]);
    rep.null_max  = *std::ranges::max_element(null_est.values[0]);

    TceQuadrature quad(dist);
    for (std::size_t i = 0; i < tce_targets.size(); ++i)
    {
        double const d = power_d_for_tce(quad, tce_targets[i], estimator.norm);
        SyntheticModel const alt{dist, d == 1.0 ? CalibrationCurve::identity() : CalibrationCurve::power(d)};
        auto const           est = run_replicates(alt, n, m_alt, one, seed, "power-alt", {i}, threads);
        if (est.errors[0]) fail_precondition(*est.errors[0]);
        auto const misses = std::ranges::count_if(est.values[0], [&](double v) { return v <= rep.threshold; });
        rep.tce_grid.push_back(tce_targets[i]);
        rep.d_grid.push_back(d);
        rep.type2.push_back(static_cast<double>(misses) / static_cast<double>(m_alt));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Recalibration ranking
// ---------------------------------------------------------------------------

/// Fixed method order; ties resolve toward the earlier entry.
inline constexpr std::array<char const*, 3> recalibration_methods{"histogram", "temperature", "isotonic"};

struct RankConfig
{
    std::size_t                val_size           = 5000;
    std::size_t                eval_size          = 10000;
    std::vector<EstimatorSpec> metrics;
    double                     subsample_fraction = 0.1;
    std::size_t                repeats            = 20;
    int                        histogram_bins     = default_histogram_bins;
    std::uint64_t              seed               = 0;
};

struct RankRow
{
    int                   repeat = -1;  // -1 for the full split
    EstimatorSpec         metric{};
    double                uncalibrated = 0.0;
    std::array<double, 3> ece{};  // in recalibration_methods order
    std::size_t           winner = 0;
    bool                  tie    = false;
};

namespace detail {

inline auto rank_split(std::span<LogitRecord const> val, std::span<LogitRecord const> eval,
                       std::span<EstimatorSpec const> metrics, int histogram_bins, int repeat) -> std::vector<RankRow>
{
    auto const val_scores = to_top1_scores(val, 1.0);
    int const  bins       = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(histogram_bins), val.size()));
    std::array<Recalibrator, 3> const fitted{fit_histogram(val_scores, bins), fit_temperature(val),
                                               fit_isotonic(val_scores)};

    SortedDataset const                uncal(to_top1_scores(eval, 1.0));
    std::vector<SortedDataset>         recal;
    for (auto const& r : fitted) recal.emplace_back(recalibrate(r, eval));

    std::vector<RankRow> rows;
    for (auto const& metric : metrics)
    {
        RankRow row;
        row.repeat       = repeat;
        row.metric       = metric;
        row.uncalibrated = evaluate(metric, uncal).value;
        for (std::size_t i = 0; i < 3; ++i) row.ece[i] = evaluate(metric, recal[i]).value;
        row.winner = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (row.ece[i] < row.ece[row.winner]) row.winner = i;
        for (std::size_t i = 0; i < 3; ++i)
            if (i != row.winner && row.ece[i] == row.ece[row.winner]) row.tie = true;
        rows.push_back(row);
    }
    return rows;
}

/// First `k` entries of a seeded Fisher-Yates shuffle of `items`.
template <typename T>
auto seeded_prefix(std::vector<T> items, std::size_t k, Rng& rng) -> std::vector<T>
{
    k = std::min(k, items.size());
    for (std::size_t i = 0; i < k; ++i)
    {
        auto const j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

}  // namespace detail

/// Fits the three recalibrators on a validation split, scores them on an
/// evaluation split under every metric, then repeats on random subsamples.
inline auto rank_recalibrators(std::span<LogitRecord const> records, RankConfig const& config, int threads = 1)
    -> std::vector<RankRow>
{
    if (config.metrics.empty()) fail_input("at least one metric is required");
    for (auto const& m : config.metrics) m.validate();
    if (config.val_size < 1 || config.eval_size < 1) fail_input("validation and evaluation sizes must be >= 1");
    if (config.val_size + config.eval_size > records.size())
        fail_input("insufficient records: need " + std::to_string(config.val_size + config.eval_size) + ", have " +
                   std::to_string(records.size()));
    if (!(config.subsample_fraction > 0.0 && config.subsample_fraction <= 1.0))
        fail_input("subsample fraction must lie in (0, 1]");
    if (config.histogram_bins < 1) fail_input("histogram bins must be >= 1");

    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng  shuffle_rng = Rng::substream(config.seed, "rank-shuffle", {});
    auto order       = detail::seeded_prefix(std::move(all), config.val_size + config.eval_size, shuffle_rng);

    auto const gather = [&](std::span<std::size_t const> idx) {
        std::vector<LogitRecord> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(records[i]);
        return out;
    };
    std::vector<std::size_t> const val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.val_size));
    std::vector<std::size_t> const eval_idx(order.begin() + static_cast<std::ptrdiff_t>(config.val_size), order.end());

    auto rows = detail::rank_split(gather(val_idx), gather(eval_idx), config.metrics, config.histogram_bins, -1);

    auto const sub_size = [&](std::size_t total) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.subsample_fraction * static_cast<double>(total))));
    };
    std::vector<std::vector<RankRow>> per_repeat(config.repeats);
    parallel_for(config.repeats, threads, [&](std::size_t r) {
        Rng        rng = Rng::substream(config.seed, "rank-subsample", {static_cast<std::uint64_t>(r)});
        auto const v   = detail::seeded_prefix(val_idx, sub_size(config.val_size), rng);
        auto const e   = detail::seeded_prefix(eval_idx, sub_size(config.eval_size), rng);
        per_repeat[r]  = detail::rank_split(gather(v), gather(e), config.metrics, config.histogram_bins, static_cast<int>(r));
    });
    for (auto& pr : per_repeat) rows.insert(rows.end(), pr.begin(), pr.end());
    return rows;
}

}  // namespace calib
