#pragma once

#include <calib/binning.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace calib {

/// The l_p norm exponent, p >= 1.
class Norm
{
public:
    constexpr Norm() = default;

    explicit Norm(double p) : p_(p)
    {
        if (!(p >= 1.0) || !std::isfinite(p)) fail_input("norm p must be a finite real >= 1");
    }

    [[nodiscard]] constexpr auto p() const noexcept -> double { return p_; }

    /// |x|^p
    [[nodiscard]] auto power(double x) const -> double
    {
        x = std::abs(x);
        if (p_ == 1.0) return x;
        if (p_ == 2.0) return x * x;
        return std::pow(x, p_);
    }

    /// x^(1/p) for x >= 0
    [[nodiscard]] auto root(double x) const -> double
    {
        x = std::max(x, 0.0);
        if (p_ == 1.0) return x;
        if (p_ == 2.0) return std::sqrt(x);
        return std::pow(x, 1.0 / p_);
    }

    friend auto operator==(Norm const&, Norm const&) -> bool = default;

private:
    double p_ = 2.0;
};

struct EstimateResult
{
    double                     value = 0.0;
    std::optional<int>         bins_used;
};

namespace detail {

inline void require_nonempty(std::size_t n)
{
    if (n == 0) fail_precondition("estimator requires n >= 1");
}

inline auto ece_bin_from(std::span<BinSummary const> bins, std::size_t n, Norm norm) -> double
{
    double sum = 0.0;
    for (auto const& bin : bins)
        if (bin.count > 0)
            sum += static_cast<double>(bin.count) / static_cast<double>(n) * norm.power(bin.mean_score - bin.mean_label);
    return std::min(norm.root(sum), 1.0);
}

/// True when the nonempty bins' label means are non-decreasing. Compared as
/// exact fractions positives/count.
inline auto heights_monotone(SortedDataset const& data, std::span<std::size_t const> offsets) -> bool
{
    std::uint64_t prev_pos = 0;
    std::uint64_t prev_cnt = 0;
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k)
    {
        auto const cnt = static_cast<std::uint64_t>(offsets[k + 1] - offsets[k]);
        if (cnt == 0) continue;
        auto const pos = data.positives(offsets[k], offsets[k + 1]);
        if (prev_cnt > 0 && prev_pos * cnt > pos * prev_cnt) return false;
        prev_pos = pos;
        prev_cnt = cnt;
    }
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binned estimators
// ---------------------------------------------------------------------------

/// Binned calibration error: bins collapse to (mean score, mean label) pairs
/// weighted by bin mass.
inline auto ece_bin(SortedDataset const& data, BinningScheme scheme, Norm norm = {}) -> double
{
    detail::require_nonempty(data.n());
    auto const bins = data.bins(scheme);
    return detail::ece_bin_from(bins, data.n(), norm);
}

inline auto ece_bin(ScoredDataset const& dataset, BinningScheme scheme, Norm norm = {}) -> double
{
    return ece_bin(SortedDataset(dataset), scheme, norm);
}

/// Label-binned calibration error: each sample keeps its own score and is
/// compared to its bin's mean label.
inline auto ece_lb(SortedDataset const& data, BinningScheme scheme, Norm norm = {}) -> double
{
    detail::require_nonempty(data.n());
    auto const off    = data.offsets(scheme);
    auto const scores = data.scores();
    double     sum    = 0.0;
    for (std::size_t k = 0; k + 1 < off.size(); ++k)
    {
        auto const cnt = off[k + 1] - off[k];
        if (cnt == 0) continue;
        double const ybar = static_cast<double>(data.positives(off[k], off[k + 1])) / static_cast<double>(cnt);
        for (std::size_t i = off[k]; i < off[k + 1]; ++i) sum += norm.power(scores[i] - ybar);
    }
    return std::min(norm.root(sum / static_cast<double>(data.n())), 1.0);
}

inline auto ece_lb(ScoredDataset const& dataset, BinningScheme scheme, Norm norm = {}) -> double
{
    return ece_lb(SortedDataset(dataset), scheme, norm);
}

/// Largest bin count b such that every count 1..b gives non-decreasing bin
/// label means; stops at the first violation.
inline auto sweep_bin_count(SortedDataset const& data, BinningKind kind) -> int
{
    detail::require_nonempty(data.n());
    auto const n = static_cast<int>(data.n());
    for (int b = 2; b <= n; ++b)
    {
        auto const off = data.offsets({kind, b});
        if (!detail::heights_monotone(data, off)) return b - 1;
    }
    return n;
}

/// Monotonic sweep calibration error.
inline auto ece_sweep(SortedDataset const& data, BinningKind kind, Norm norm = {}) -> EstimateResult
{
    int const b = sweep_bin_count(data, kind);
    return {ece_bin(data, {kind, b}, norm), b};
}

inline auto ece_sweep(ScoredDataset const& dataset, BinningKind kind, Norm norm = {}) -> EstimateResult
{
    return ece_sweep(SortedDataset(dataset), kind, norm);
}

/// l2 binned error with the per-bin Bernoulli variance of the label mean
/// subtracted before the root.
inline auto ece_debiased(SortedDataset const& data, BinningScheme scheme) -> double
{
    detail::require_nonempty(data.n());
    auto const bins = data.bins(scheme);
    auto const n    = static_cast<double>(data.n());
    double     sum  = 0.0;
    for (auto const& bin : bins)
    {
        if (bin.count == 0) continue;
        if (bin.count < 2) fail_precondition("debiasing requires >=2 samples per bin");
        double const cnt  = static_cast<double>(bin.count);
        double const ybar = bin.mean_label;
        double const gap  = bin.mean_score - ybar;
        sum += cnt / n * (gap * gap - ybar * (1.0 - ybar) / (cnt - 1.0));
    }
    return std::min(std::sqrt(std::max(0.0, sum)), 1.0);
}

inline auto ece_debiased(ScoredDataset const& dataset, BinningScheme scheme) -> double
{
    return ece_debiased(SortedDataset(dataset), scheme);
}

// ---------------------------------------------------------------------------
// Kernel smoothed estimator
// ---------------------------------------------------------------------------

inline constexpr int default_kde_grid = (1 << 10) + 1;

/// Triweight kernel (35/32)(1-u^2)^3 on |u| <= 1.
inline auto triweight(double u) -> double
{
    if (std::abs(u) >= 1.0) return 0.0;
    double const w = 1.0 - u * u;
    return 35.0 / 32.0 * w * w * w;
}

/// Linear-interpolation quantile of sorted values.
inline auto sorted_quantile(std::span<double const> sorted, double q) -> double
{
    auto const   n   = sorted.size();
    double const pos = q * static_cast<double>(n - 1);
    auto const   lo  = static_cast<std::size_t>(std::floor(pos));
    auto const   hi  = std::min(lo + 1, n - 1);
    double const t   = pos - static_cast<double>(lo);
    return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

/// Rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5), clamped to [1e-3, 1].
inline auto kde_bandwidth(std::span<double const> sorted) -> double
{
    auto const   n    = static_cast<double>(sorted.size());
    double       mean = 0.0;
    for (double s : sorted) mean += s;
    mean /= n;
    double ss = 0.0;
    for (double s : sorted) ss += (s - mean) * (s - mean);
    double const sd  = std::sqrt(ss / (n - 1.0));
    double const iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    double const h   = 0.9 * std::min(sd, iqr / 1.34) * std::pow(n, -0.2);
    return std::clamp(h, 1e-3, 1.0);
}

/// Kernel sums at one evaluation point, including the reflections of every
/// sample about 0 and 1.
struct KernelSums
{
    double weight   = 0.0;  // sum K
    double positive = 0.0;  // sum y K
};

inline auto kernel_sums(SortedDataset const& data, double c, double h) -> KernelSums
{
    auto const scores = data.scores();
    auto const labels = data.labels();
    KernelSums out;
    auto const accumulate = [&](double lo, double hi, auto&& position) {
        auto const first = std::lower_bound(scores.begin(), scores.end(), lo);
        auto const last  = std::upper_bound(first, scores.end(), hi);
        for (auto it = first; it != last; ++it)
        {
            auto const   i = static_cast<std::size_t>(it - scores.begin());
            double const k = triweight((c - position(scores[i])) / h);
            out.weight += k;
            out.positive += labels[i] * k;
        }
    };
    accumulate(c - h, c + h, [](double s) { return s; });
    accumulate(-c - h, h - c, [](double s) { return -s; });
    accumulate(2.0 - c - h, 2.0 - c + h, [](double s) { return 2.0 - s; });
    return out;
}

/// Smoothed calibration error: integral of |c - E[Y|c]|^p against the kernel
/// density of scores, by the trapezoid rule on `grid_points` uniform nodes.
inline auto ece_kde(SortedDataset const& data, Norm norm = {}, int grid_points = default_kde_grid) -> double
{
    if (data.n() < 2) fail_precondition("KDE requires n >= 2");
    if (grid_points < 2) fail_input("KDE grid needs >= 2 points");
    auto const scores = data.scores();
    if (scores.front() == scores.back()) fail_precondition("degenerate score distribution for KDE");

    double const h     = kde_bandwidth(scores);
    double const scale = 1.0 / (static_cast<double>(data.n()) * h);
    double const step  = 1.0 / static_cast<double>(grid_points - 1);
    double       total = 0.0;
    for (int j = 0; j < grid_points; ++j)
    {
        double const c    = static_cast<double>(j) * step;
        auto const   sums = kernel_sums(data, c, h);
        if (sums.weight <= 0.0) continue;
        double const accuracy  = sums.positive / sums.weight;
        double const integrand = norm.power(c - accuracy) * sums.weight * scale;
        total += (j == 0 || j == grid_points - 1) ? 0.5 * integrand : integrand;
    }
    return std::min(norm.root(total * step), 1.0);
}

inline auto ece_kde(ScoredDataset const& dataset, Norm norm = {}, int grid_points = default_kde_grid) -> double
{
    return ece_kde(SortedDataset(dataset), norm, grid_points);
}

// ---------------------------------------------------------------------------
// Estimator specs
// ---------------------------------------------------------------------------

enum class EstimatorKind
{
    ew_bin,
    em_bin,
    ew_lb,
    em_lb,
    ew_sweep,
    em_sweep,
    em_debiased,
    kde
};

struct EstimatorSpec
{
    EstimatorKind kind = EstimatorKind::ew_bin;
    int           bins = 15;  // ignored by sweep and kde
    Norm          norm{};

    [[nodiscard]] auto has_bins() const noexcept -> bool
    {
        return kind != EstimatorKind::ew_sweep && kind != EstimatorKind::em_sweep && kind != EstimatorKind::kde;
    }

    [[nodiscard]] auto is_sweep() const noexcept -> bool
    {
        return kind == EstimatorKind::ew_sweep || kind == EstimatorKind::em_sweep;
    }

    [[nodiscard]] auto binning_kind() const noexcept -> BinningKind
    {
        switch (kind)
        {
        case EstimatorKind::ew_bin:
        case EstimatorKind::ew_lb:
        case EstimatorKind::ew_sweep: return BinningKind::equal_width;
        default: return BinningKind::equal_mass;
        }
    }

    /// Stable identifier, e.g. `ew_bin_15`, `em_sweep`, `kde`.
    [[nodiscard]] auto id() const -> std::string
    {
        std::string base = base_name(kind);
        for (auto& ch : base)
            if (ch == '-') ch = '_';
        return has_bins() ? base + "_" + std::to_string(bins) : base;
    }

    static auto base_name(EstimatorKind kind) -> std::string
    {
        switch (kind)
        {
        case EstimatorKind::ew_bin: return "ew-bin";
        case EstimatorKind::em_bin: return "em-bin";
        case EstimatorKind::ew_lb: return "ew-lb";
        case EstimatorKind::em_lb: return "em-lb";
        case EstimatorKind::ew_sweep: return "ew-sweep";
        case EstimatorKind::em_sweep: return "em-sweep";
        case EstimatorKind::em_debiased: return "em-debiased";
        case EstimatorKind::kde: return "kde";
        }
        return "?";
    }

    void validate() const
    {
        if (has_bins() && bins < 1) fail_input("estimator " + base_name(kind) + " needs bins >= 1");
        if (kind == EstimatorKind::em_debiased && norm.p() != 2.0) fail_input("em-debiased is defined for p = 2 only");
    }

    friend auto operator==(EstimatorSpec const&, EstimatorSpec const&) -> bool = default;
};

inline auto parse_estimator_kind(std::string_view name) -> EstimatorKind
{
    for (auto kind : {EstimatorKind::ew_bin, EstimatorKind::em_bin, EstimatorKind::ew_lb, EstimatorKind::em_lb,
                      EstimatorKind::ew_sweep, EstimatorKind::em_sweep, EstimatorKind::em_debiased, EstimatorKind::kde})
        if (EstimatorSpec::base_name(kind) == name) return kind;
    fail_input("unknown metric '" + std::string(name) + "'");
}

/// Parses `name[:bins]`, e.g. `ew-bin:15`, `em-sweep`.
inline auto parse_estimator(std::string_view text, int default_bins = 15, Norm norm = {}) -> EstimatorSpec
{
    text                = trim(text);
    auto const   colon  = text.find(':');
    EstimatorSpec spec;
    spec.kind = parse_estimator_kind(text.substr(0, colon));
    spec.bins = default_bins;
    spec.norm = norm;
    if (colon != std::string_view::npos)
    {
        if (!spec.has_bins()) fail_input("metric '" + std::string(text) + "' takes no bin count");
        auto const b = parse_int(text.substr(colon + 1));
        if (!b || *b < 1 || *b > 1'000'000'000) fail_input("bad bin count in metric '" + std::string(text) + "'");
        spec.bins = static_cast<int>(*b);
    }
    spec.validate();
    return spec;
}

inline auto evaluate(EstimatorSpec const& spec, SortedDataset const& data) -> EstimateResult
{
    auto const scheme = BinningScheme{spec.binning_kind(), spec.bins};
    switch (spec.kind)
    {
    case EstimatorKind::ew_bin:
    case EstimatorKind::em_bin: return {ece_bin(data, scheme, spec.norm), std::nullopt};
    case EstimatorKind::ew_lb:
    case EstimatorKind::em_lb: return {ece_lb(data, scheme, spec.norm), std::nullopt};
    case EstimatorKind::ew_sweep:
    case EstimatorKind::em_sweep: return ece_sweep(data, spec.binning_kind(), spec.norm);
    case EstimatorKind::em_debiased: return {ece_debiased(data, scheme), std::nullopt};
    case EstimatorKind::kde: return {ece_kde(data, spec.norm), std::nullopt};
    }
    fail_input("unknown estimator");
}

inline auto evaluate(EstimatorSpec const& spec, ScoredDataset const& dataset) -> EstimateResult
{
    return evaluate(spec, SortedDataset(dataset));
}

}  // namespace calib
