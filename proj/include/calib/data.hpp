#pragma once

#include <calib/error.hpp>
#include <calib/format.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace calib {

/// One (confidence, correctness) pair.
struct ScoredSample
{
    double score = 0.0;
    int    label = 0;

    friend auto operator==(ScoredSample const&, ScoredSample const&) -> bool = default;
};

/// Immutable ordered sample of scored predictions.
class ScoredDataset
{
public:
    ScoredDataset() = default;

    explicit ScoredDataset(std::vector<ScoredSample> samples) : samples_(std::move(samples))
    {
        for (std::size_t i = 0; i < samples_.size(); ++i)
        {
            auto const& s = samples_[i];
            if (!(s.score >= 0.0 && s.score <= 1.0))
                fail_input("score out of range at index " + std::to_string(i));
            if (s.label != 0 && s.label != 1) fail_input("label not in {0,1} at index " + std::to_string(i));
        }
    }

    ScoredDataset(std::span<double const> scores, std::span<int const> labels)
        : ScoredDataset(zip(scores, labels))
    {}

    [[nodiscard]] auto n() const noexcept -> std::size_t { return samples_.size(); }
    [[nodiscard]] auto empty() const noexcept -> bool { return samples_.empty(); }
    [[nodiscard]] auto samples() const noexcept -> std::span<ScoredSample const> { return samples_; }
    [[nodiscard]] auto operator[](std::size_t i) const -> ScoredSample const& { return samples_[i]; }
    [[nodiscard]] auto begin() const noexcept { return samples_.begin(); }
    [[nodiscard]] auto end() const noexcept { return samples_.end(); }

    [[nodiscard]] auto scores() const -> std::vector<double>
    {
        std::vector<double> out(samples_.size());
        std::ranges::transform(samples_, out.begin(), &ScoredSample::score);
        return out;
    }

    [[nodiscard]] auto labels() const -> std::vector<int>
    {
        std::vector<int> out(samples_.size());
        std::ranges::transform(samples_, out.begin(), &ScoredSample::label);
        return out;
    }

    friend auto operator==(ScoredDataset const&, ScoredDataset const&) -> bool = default;

private:
    static auto zip(std::span<double const> scores, std::span<int const> labels) -> std::vector<ScoredSample>
    {
        if (scores.size() != labels.size()) fail_input("scores and labels differ in length");
        std::vector<ScoredSample> out(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {scores[i], labels[i]};
        return out;
    }

    std::vector<ScoredSample> samples_;
};

/// Multiclass logits with the index of the true class.
struct LogitRecord
{
    int                 label = 0;
    std::vector<double> logits;

    [[nodiscard]] auto classes() const noexcept -> std::size_t { return logits.size(); }

    void validate() const
    {
        if (logits.size() < 2) fail_input("logit record needs at least 2 classes");
        if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) fail_input("label out of range");
        for (double z : logits)
            if (!std::isfinite(z)) fail_input("non-finite logit");
    }
};

namespace detail {

// Lines that are blank or start with '#' are skipped everywhere; data rows are
// counted from 1 after the header.
inline auto is_skippable(std::string_view line) -> bool
{
    auto const t = trim(line);
    return t.empty() || t.front() == '#';
}

inline auto open_or_throw(std::string const& path) -> std::ifstream
{
    std::ifstream in(path);
    if (!in) fail_input("cannot open file: " + path);
    return in;
}

}  // namespace detail

/// Parses a `score,label` CSV.
inline auto parse_scores(std::istream& in) -> ScoredDataset
{
    std::string line;
    bool        have_header = false;
    while (!have_header && std::getline(in, line))
    {
        if (detail::is_skippable(line)) continue;
        auto const fields = split(trim(line), ',');
        if (fields.size() != 2 || trim(fields[0]) != "score" || trim(fields[1]) != "label")
            fail_input("expected header 'score,label'");
        have_header = true;
    }
    if (!have_header) fail_input("empty dataset");

    std::vector<ScoredSample> samples;
    std::size_t               row = 0;
    while (std::getline(in, line))
    {
        if (detail::is_skippable(line)) continue;
        ++row;
        auto const at     = " at row " + std::to_string(row);
        auto const fields = split(trim(line), ',');
        if (fields.size() != 2) fail_input("parse error" + at + ": expected 2 fields");
        auto const score = parse_real(fields[0]);
        auto const label = parse_int(fields[1]);
        if (!score) fail_input("parse error" + at + ": bad score");
        if (!label) fail_input("parse error" + at + ": bad label");
        if (!(*score >= 0.0 && *score <= 1.0)) fail_input("score out of range" + at);
        if (*label != 0 && *label != 1) fail_input("label not in {0,1}" + at);
        samples.push_back({*score, static_cast<int>(*label)});
    }
    if (samples.empty()) fail_input("empty dataset");
    return ScoredDataset(std::move(samples));
}

inline auto load_scores(std::string const& path) -> ScoredDataset
{
    auto in = detail::open_or_throw(path);
    return parse_scores(in);
}

/// Writes a `score,label` CSV with 17 significant digits per score.
inline void save_scores(std::ostream& out, ScoredDataset const& dataset)
{
    out << "score,label\n";
    for (auto const& s : dataset) out << format_real17(s.score) << ',' << s.label << '\n';
}

/// Parses a `label,logit_0,...,logit_{k-1}` CSV.
inline auto parse_logits(std::istream& in) -> std::vector<LogitRecord>
{
    std::string line;
    std::size_t k = 0;
    while (k == 0 && std::getline(in, line))
    {
        if (detail::is_skippable(line)) continue;
        auto const fields = split(trim(line), ',');
        if (fields.size() < 3 || trim(fields[0]) != "label")
            fail_input("expected header 'label,logit_0,...,logit_{k-1}' with k >= 2");
        for (std::size_t j = 1; j < fields.size(); ++j)
            if (trim(fields[j]) != "logit_" + std::to_string(j - 1))
                fail_input("bad logit header field " + std::string(trim(fields[j])));
        k = fields.size() - 1;
    }
    if (k == 0) fail_input("empty logit file");

    std::vector<LogitRecord> records;
    std::size_t              row = 0;
    while (std::getline(in, line))
    {
        if (detail::is_skippable(line)) continue;
        ++row;
        auto const at     = " at row " + std::to_string(row);
        auto const fields = split(trim(line), ',');
        if (fields.size() != k + 1) fail_input("inconsistent logit width" + at);
        auto const label = parse_int(fields[0]);
        if (!label) fail_input("parse error" + at + ": bad label");
        LogitRecord rec;
        rec.logits.reserve(k);
        for (std::size_t j = 1; j <= k; ++j)
        {
            auto const z = parse_real(fields[j]);
            if (!z) fail_input("parse error" + at + ": bad logit");
            if (!std::isfinite(*z)) fail_input("non-finite logit" + at);
            rec.logits.push_back(*z);
        }
        if (*label < 0 || static_cast<std::size_t>(*label) >= k) fail_input("label out of range" + at);
        rec.label = static_cast<int>(*label);
        records.push_back(std::move(rec));
    }
    if (records.empty()) fail_input("empty logit file");
    return records;
}

inline auto load_logits(std::string const& path) -> std::vector<LogitRecord>
{
    auto in = detail::open_or_throw(path);
    return parse_logits(in);
}

inline void save_logits(std::ostream& out, std::span<LogitRecord const> records)
{
    if (records.empty()) return;
    out << "label";
    for (std::size_t j = 0; j < records.front().classes(); ++j) out << ",logit_" << j;
    out << '\n';
    for (auto const& r : records)
    {
        out << r.label;
        for (double z : r.logits) out << ',' << format_real17(z);
        out << '\n';
    }
}

/// Top-1 softmax confidence and correctness of one record at temperature t.
inline auto top1(LogitRecord const& record, double temperature) -> ScoredSample
{
    auto const& z      = record.logits;
    auto const  argmax = static_cast<std::size_t>(std::ranges::max_element(z) - z.begin());  // first max
    double const zmax  = z[argmax];
    double       denom = 0.0;
    for (double zi : z) denom += std::exp((zi - zmax) / temperature);
    return {1.0 / denom, argmax == static_cast<std::size_t>(record.label) ? 1 : 0};
}

inline auto to_top1_scores(std::span<LogitRecord const> records, double temperature = 1.0) -> ScoredDataset
{
    if (!(temperature > 0.0) || !std::isfinite(temperature)) fail_input("temperature must be positive");
    std::vector<ScoredSample> out;
    out.reserve(records.size());
    for (auto const& r : records) out.push_back(top1(r, temperature));
    return ScoredDataset(std::move(out));
}

}  // namespace calib
