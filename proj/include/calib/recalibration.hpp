#pragma once

#include <calib/binning.hpp>
#include <calib/data.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace calib {

struct TemperatureScaling
{
    double t           = 1.0;
    bool   at_boundary = false;  // optimum clamped to the search range
};

/// Piecewise-constant map: bin k covers [edges[k], edges[k+1]), last bin closed.
struct HistogramBinning
{
    std::vector<double> edges;
    std::vector<double> values;

    [[nodiscard]] auto operator()(double score) const -> double
    {
        auto const interior_first = edges.begin() + 1;
        auto const interior_last  = edges.end() - 1;
        auto const k = std::upper_bound(interior_first, interior_last, score) - interior_first;
        return values[static_cast<std::size_t>(k)];
    }
};

/// Right-continuous step function through the pooled PAV blocks.
struct IsotonicRegression
{
    std::vector<double> breakpoints;
    std::vector<double> values;

    [[nodiscard]] auto operator()(double score) const -> double
    {
        auto const it = std::upper_bound(breakpoints.begin(), breakpoints.end(), score);
        if (it == breakpoints.begin()) return values.front();
        return values[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
    }
};

using Recalibrator = std::variant<TemperatureScaling, HistogramBinning, IsotonicRegression>;

inline auto kind_name(Recalibrator const& r) -> std::string
{
    return std::visit(
        [](auto const& m) -> std::string {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TemperatureScaling>)
                return "temperature";
            else if constexpr (std::is_same_v<T, HistogramBinning>)
                return "histogram";
            else
                return "isotonic";
        },
        r);
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

/// Multiclass NLL of the records at temperature t.
inline auto temperature_nll(std::span<LogitRecord const> records, double t) -> double
{
    double total = 0.0;
    for (auto const& r : records)
    {
        double const zmax = *std::ranges::max_element(r.logits);
        double       sum  = 0.0;
        for (double z : r.logits) sum += std::exp((z - zmax) / t);
        total += std::log(sum) - (r.logits[static_cast<std::size_t>(r.label)] - zmax) / t;
    }
    return total;
}

/// Golden-section search for the NLL-optimal temperature over ln t in [-3, 3].
inline auto fit_temperature(std::span<LogitRecord const> records) -> TemperatureScaling
{
    if (records.empty()) fail_input("temperature scaling needs at least one record");
    for (auto const& r : records) r.validate();

    constexpr double lo_bound = -3.0;
    constexpr double hi_bound = 3.0;
    constexpr double tol      = 1e-6;
    double const     inv_phi  = (std::sqrt(5.0) - 1.0) / 2.0;

    auto const f = [&](double x) { return temperature_nll(records, std::exp(x)); };

    double a  = lo_bound;
    double b  = hi_bound;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol)
    {
        if (f1 <= f2)
        {
            b  = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
        else
        {
            a  = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    double x = 0.5 * (a + b);
    // the interior search never evaluates the end points themselves
    bool at_boundary = false;
    for (double edge : {lo_bound, hi_bound})
    {
        if (std::abs(x - edge) < 10 * tol && f(edge) <= f(x))
        {
            x           = edge;
            at_boundary = true;
        }
    }
    return {std::exp(x), at_boundary};
}

// ---------------------------------------------------------------------------
// Histogram binning
// ---------------------------------------------------------------------------

inline constexpr int default_histogram_bins = 15;

/// Equal-mass histogram binning. Adjacent bins whose boundary scores tie are
/// merged, so the edges (midpoints between neighboring bins) stay strictly
/// ascending and every training score maps back to its own bin.
inline auto fit_histogram(ScoredDataset const& dataset, int bins = default_histogram_bins) -> HistogramBinning
{
    if (dataset.empty()) fail_input("histogram binning needs data");
    if (bins < 1) fail_input("histogram binning needs bins >= 1");
    if (static_cast<std::size_t>(bins) > dataset.n()) fail_input("more bins than samples");
    SortedDataset const data(dataset);
    auto const          scores = data.scores();
    auto                off    = data.offsets({BinningKind::equal_mass, bins});

    std::vector<std::size_t> merged{0};
    for (std::size_t k = 1; k + 1 < off.size(); ++k)
        if (scores[off[k] - 1] < scores[off[k]]) merged.push_back(off[k]);
    merged.push_back(data.n());

    HistogramBinning out;
    out.edges.push_back(0.0);
    for (std::size_t k = 0; k + 1 < merged.size(); ++k)
    {
        auto const cnt = merged[k + 1] - merged[k];
        out.values.push_back(static_cast<double>(data.positives(merged[k], merged[k + 1])) / static_cast<double>(cnt));
        if (k + 2 < merged.size()) out.edges.push_back(0.5 * (scores[merged[k + 1] - 1] + scores[merged[k + 1]]));
    }
    out.edges.push_back(1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Isotonic regression
// ---------------------------------------------------------------------------

/// Weighted pool-adjacent-violators: non-decreasing least-squares fit.
/// Returns one fitted value per input point.
inline auto pav(std::span<double const> y, std::span<double const> w) -> std::vector<double>
{
    struct Block
    {
        double      mean;
        double      weight;
        std::size_t size;
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean)
        {
            auto const top  = blocks.back();
            blocks.pop_back();
            auto&        prev = blocks.back();
            double const wt   = prev.weight + top.weight;
            prev.mean         = (prev.mean * prev.weight + top.mean * top.weight) / wt;
            prev.weight       = wt;
            prev.size += top.size;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (auto const& b : blocks) out.insert(out.end(), b.size, b.mean);
    return out;
}

/// Isotonic regression of labels on scores. Points with identical scores are
/// pooled first so the result is a function of the score.
inline auto fit_isotonic(ScoredDataset const& dataset) -> IsotonicRegression
{
    if (dataset.empty()) fail_input("isotonic regression needs data");
    SortedDataset const data(dataset);
    auto const          scores = data.scores();

    std::vector<double>      xs, ys, ws;
    for (std::size_t i = 0; i < data.n();)
    {
        std::size_t j = i;
        while (j < data.n() && scores[j] == scores[i]) ++j;
        xs.push_back(scores[i]);
        ys.push_back(static_cast<double>(data.positives(i, j)) / static_cast<double>(j - i));
        ws.push_back(static_cast<double>(j - i));
        i = j;
    }
    auto const fitted = pav(ys, ws);

    IsotonicRegression out;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        if (!out.values.empty() && fitted[i] == out.values.back()) continue;
        out.breakpoints.push_back(xs[i]);
        out.values.push_back(std::clamp(fitted[i], 0.0, 1.0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

/// Re-scores a dataset through a histogram or isotonic map.
inline auto recalibrate(Recalibrator const& recal, ScoredDataset const& dataset) -> ScoredDataset
{
    if (std::holds_alternative<TemperatureScaling>(recal))
        fail_input("temperature scaling must be applied to logit records");
    std::vector<ScoredSample> out(dataset.begin(), dataset.end());
    std::visit(
        [&](auto const& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (!std::is_same_v<T, TemperatureScaling>)
                for (auto& s : out) s.score = m(s.score);
        },
        recal);
    return ScoredDataset(std::move(out));
}

/// Re-scores logit records: temperature scaling re-softmaxes at z/t; the
/// score maps act on the top-1 scores at t = 1.
inline auto recalibrate(Recalibrator const& recal, std::span<LogitRecord const> records) -> ScoredDataset
{
    if (auto const* ts = std::get_if<TemperatureScaling>(&recal)) return to_top1_scores(records, ts->t);
    return recalibrate(recal, to_top1_scores(records, 1.0));
}

inline auto to_json(Recalibrator const& recal) -> nlohmann::ordered_json
{
    return std::visit(
        [](auto const& m) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TemperatureScaling>)
                return {{"kind", "temperature"}, {"t", m.t}, {"at_boundary", m.at_boundary}};
            else if constexpr (std::is_same_v<T, HistogramBinning>)
                return {{"kind", "histogram"}, {"edges", m.edges}, {"values", m.values}};
            else
                return {{"kind", "isotonic"}, {"breakpoints", m.breakpoints}, {"values", m.values}};
        },
        recal);
}

inline auto recalibrator_from_json(nlohmann::ordered_json const& j) -> Recalibrator
{
    try
    {
        auto const kind = j.at("kind").get<std::string>();
        if (kind == "temperature")
        {
            TemperatureScaling t{j.at("t").get<double>(), j.value("at_boundary", false)};
            if (!(t.t > 0.0)) fail_input("temperature must be positive");
            return t;
        }
        if (kind == "histogram")
        {
            HistogramBinning h{j.at("edges").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
            if (h.edges.size() < 2 || h.values.size() + 1 != h.edges.size()) fail_input("bad histogram recalibrator");
            for (std::size_t i = 1; i < h.edges.size(); ++i)
                if (!(h.edges[i - 1] < h.edges[i])) fail_input("histogram edges must be strictly ascending");
            return h;
        }
        if (kind == "isotonic")
        {
            IsotonicRegression r{j.at("breakpoints").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
            if (r.breakpoints.empty() || r.breakpoints.size() != r.values.size()) fail_input("bad isotonic recalibrator");
            for (std::size_t i = 1; i < r.values.size(); ++i)
                if (r.values[i - 1] > r.values[i]) fail_input("isotonic values must be non-decreasing");
            return r;
        }
        fail_input("unknown recalibrator kind '" + kind + "'");
    }
    catch (nlohmann::json::exception const& e)
    {
        fail_input(std::string("bad recalibrator JSON: ") + e.what());
    }
}

}  // namespace calib
