#pragma once

#include <calib/data.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace calib {

enum class BinningKind
{
    equal_width,
    equal_mass
};

struct BinningScheme
{
    BinningKind kind = BinningKind::equal_width;
    int         bins = 15;

    friend auto operator==(BinningScheme const&, BinningScheme const&) -> bool = default;
};

struct BinSummary
{
    std::size_t count      = 0;
    double      mean_score = 0.0;
    double      mean_label = 0.0;
    double      lo         = 0.0;
    double      hi         = 0.0;
    std::size_t positives  = 0;  // sum of labels in the bin
};

/// Equal-width bin of a score: bin k covers [k/b, (k+1)/b), the last bin is closed at 1.
inline auto equal_width_index(double score, int bins) -> int
{
    auto const b = static_cast<double>(bins);
    int        k = static_cast<int>(std::floor(score * b));
    k            = std::clamp(k, 0, bins - 1);
    // keep the assignment consistent with the boundaries as computed below
    if (k > 0 && score < static_cast<double>(k) / b) --k;
    if (k + 1 < bins && score >= static_cast<double>(k + 1) / b) ++k;
    return k;
}

/// Samples stably sorted by score, with label prefix counts.
///
/// Every binning the library uses is a partition of this order into contiguous
/// index ranges, so bins are described by b+1 offsets into the sorted arrays.
class SortedDataset
{
public:
    explicit SortedDataset(ScoredDataset const& dataset)
    {
        auto const n = dataset.n();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return dataset[a].score < dataset[b].score; });
        scores_.resize(n);
        labels_.resize(n);
        positives_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i)
        {
            scores_[i]        = dataset[order[i]].score;
            labels_[i]        = dataset[order[i]].label;
            positives_[i + 1] = positives_[i] + static_cast<std::uint64_t>(labels_[i]);
        }
    }

    [[nodiscard]] auto n() const noexcept -> std::size_t { return scores_.size(); }
    [[nodiscard]] auto scores() const noexcept -> std::span<double const> { return scores_; }
    [[nodiscard]] auto labels() const noexcept -> std::span<int const> { return labels_; }

    /// Number of positive labels among sorted indices [first, last).
    [[nodiscard]] auto positives(std::size_t first, std::size_t last) const noexcept -> std::uint64_t
    {
        return positives_[last] - positives_[first];
    }

    /// b+1 offsets delimiting the bins in sorted order; empty bins repeat an offset.
    [[nodiscard]] auto offsets(BinningScheme scheme) const -> std::vector<std::size_t>
    {
        if (scheme.bins < 1) fail_input("bin count must be >= 1");
        auto const b = static_cast<std::size_t>(scheme.bins);
        auto const n = this->n();
        std::vector<std::size_t> out(b + 1);
        if (scheme.kind == BinningKind::equal_mass)
        {
            if (b > n) fail_precondition("more bins than samples");
            for (std::size_t k = 0; k <= b; ++k) out[k] = (k * n) / b;
            return out;
        }
        out[0] = 0;
        out[b] = n;
        // partition points of the (monotone) bin index over the sorted scores
        for (std::size_t k = 1; k < b; ++k)
        {
            auto const it = std::partition_point(scores_.begin() + static_cast<std::ptrdiff_t>(out[k - 1]), scores_.end(),
                                                 [&](double s) { return equal_width_index(s, scheme.bins) < static_cast<int>(k); });
            out[k] = static_cast<std::size_t>(it - scores_.begin());
        }
        return out;
    }

    [[nodiscard]] auto summarize(BinningScheme scheme, std::span<std::size_t const> offsets) const
        -> std::vector<BinSummary>
    {
        auto const b = offsets.size() - 1;
        std::vector<BinSummary> out(b);
        for (std::size_t k = 0; k < b; ++k)
        {
            auto&      bin   = out[k];
            auto const first = offsets[k];
            auto const last  = offsets[k + 1];
            bin.count        = last - first;
            bin.positives    = positives(first, last);
            if (scheme.kind == BinningKind::equal_width)
            {
                bin.lo = static_cast<double>(k) / static_cast<double>(b);
                bin.hi = static_cast<double>(k + 1) / static_cast<double>(b);
            }
            if (bin.count == 0) continue;
            double sum = 0.0;
            for (std::size_t i = first; i < last; ++i) sum += scores_[i];
            bin.mean_score = sum / static_cast<double>(bin.count);
            bin.mean_label = static_cast<double>(bin.positives) / static_cast<double>(bin.count);
            if (scheme.kind == BinningKind::equal_mass)
            {
                bin.lo = scores_[first];
                bin.hi = scores_[last - 1];
            }
        }
        return out;
    }

    [[nodiscard]] auto bins(BinningScheme scheme) const -> std::vector<BinSummary>
    {
        if (n() == 0) fail_precondition("empty dataset");
        auto const off = offsets(scheme);
        return summarize(scheme, off);
    }

private:
    std::vector<double>        scores_;
    std::vector<int>           labels_;
    std::vector<std::uint64_t> positives_;
};

/// Partitions the dataset and summarizes each bin, in ascending score order.
inline auto bin(ScoredDataset const& dataset, BinningScheme scheme) -> std::vector<BinSummary>
{
    return SortedDataset(dataset).bins(scheme);
}

inline auto to_string(BinningKind kind) -> std::string
{
    return kind == BinningKind::equal_width ? "ew" : "em";
}

}  // namespace calib
