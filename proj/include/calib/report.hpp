#pragma once

#include <calib/analysis.hpp>
#include <calib/format.hpp>

#include <json.hpp>

#include <ostream>
#include <span>
#include <string>

namespace calib {

using Json = nlohmann::ordered_json;

namespace detail {

inline auto opt_real(std::optional<double> v) -> std::string { return v ? format_real(*v) : std::string{}; }

inline auto json_real(double v) -> Json { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline auto json_opt(std::optional<double> v) -> Json { return v ? json_real(*v) : Json(nullptr); }

inline auto estimator_json(EstimatorSpec const& e) -> Json
{
    Json j{{"id", e.id()}, {"metric", EstimatorSpec::base_name(e.kind)}};
    j["bins"] = e.has_bins() ? Json(e.bins) : Json(nullptr);
    j["p"]    = e.norm.p();
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bias reports
// ---------------------------------------------------------------------------

inline constexpr char const* bias_csv_header = "estimator,p,n,m,mean_ece,tce,bias,std,stderr,mean_bins,status";

inline void write_bias_row(std::ostream& out, BiasReport const& r)
{
    out << r.estimator.id() << ',' << format_real(r.estimator.norm.p()) << ',' << r.n << ',' << r.m << ',';
    if (r.error)
    {
        out << ",," << ",,,," << "error: " << *r.error << '\n';
        return;
    }
    out << format_real(r.mean_ece) << ',' << format_real(r.tce) << ',' << format_real(r.bias) << ','
        << format_real(r.std) << ',' << format_real(r.stderr_) << ',' << detail::opt_real(r.mean_bins) << ",ok\n";
}

inline void write_bias_csv(std::ostream& out, std::span<BiasReport const> reports)
{
    out << bias_csv_header << '\n';
    for (auto const& r : reports) write_bias_row(out, r);
}

inline auto to_json(BiasReport const& r) -> Json
{
    Json j{{"estimator", detail::estimator_json(r.estimator)}, {"n", r.n}, {"m", r.m}};
    if (r.error)
    {
        j["error"] = *r.error;
        return j;
    }
    j["mean_ece"]  = detail::json_real(r.mean_ece);
    j["tce"]       = detail::json_real(r.tce);
    j["bias"]      = detail::json_real(r.bias);
    j["std"]       = detail::json_real(r.std);
    j["stderr"]    = detail::json_real(r.stderr_);
    j["mean_bins"] = detail::json_opt(r.mean_bins);
    return j;
}

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

inline constexpr char const* heatmap_csv_header =
    "estimator,p,n,bins,valid,mean_ece,tce,bias,sqrt_variance,stderr,mean_bins,status";

inline void write_heatmap_csv(std::ostream& out, std::span<HeatmapCell const> cells)
{
    out << heatmap_csv_header << '\n';
    for (auto const& c : cells)
    {
        auto const& r = c.report;
        out << r.estimator.id() << ',' << format_real(r.estimator.norm.p()) << ',' << c.n << ',' << c.bins << ','
            << (c.valid ? 1 : 0) << ',';
        if (!c.valid)
            out << ",,,,,,invalid\n";
        else if (r.error)
            out << ",,,,,,error: " << *r.error << '\n';
        else
            out << format_real(r.mean_ece) << ',' << format_real(r.tce) << ',' << format_real(r.bias) << ','
                << format_real(r.std) << ',' << format_real(r.stderr_) << ',' << detail::opt_real(r.mean_bins)
                << ",ok\n";
    }
}

inline auto to_json(HeatmapCell const& c) -> Json
{
    Json j{{"n", c.n}, {"bins", c.bins}, {"valid", c.valid}};
    if (c.valid)
    {
        auto r           = to_json(c.report);
        j["estimator"]   = r["estimator"];
        for (auto const* key : {"mean_ece", "tce", "bias", "std", "stderr", "mean_bins", "error"})
            if (r.contains(key)) j[key == std::string("std") ? "sqrt_variance" : key] = r[key];
    }
    return j;
}

// ---------------------------------------------------------------------------
// Bias against TCE
// ---------------------------------------------------------------------------

inline constexpr char const* bias_vs_tce_csv_header = "estimator,p,n,m,d,tce,mean_ece,bias,std,stderr,status";

inline void write_bias_vs_tce_csv(std::ostream& out, std::span<BiasVsTceRow const> rows)
{
    out << bias_vs_tce_csv_header << '\n';
    for (auto const& row : rows)
    {
        auto const& r = row.report;
        out << r.estimator.id() << ',' << format_real(r.estimator.norm.p()) << ',' << r.n << ',' << r.m << ','
            << format_real(row.d) << ',' << format_real(r.tce) << ',';
        if (r.error)
            out << ",,,,error: " << *r.error << '\n';
        else
            out << format_real(r.mean_ece) << ',' << format_real(r.bias) << ',' << format_real(r.std) << ','
                << format_real(r.stderr_) << ",ok\n";
    }
}

inline auto to_json(BiasVsTceRow const& row) -> Json
{
    auto j = to_json(row.report);
    j["d"] = row.d;
    return j;
}

// ---------------------------------------------------------------------------
// Power
// ---------------------------------------------------------------------------

inline constexpr char const* power_csv_header = "estimator,p,n,alpha,threshold,target_tce,d,type2";

inline void write_power_csv(std::ostream& out, PowerReport const& r)
{
    out << power_csv_header << '\n';
    for (std::size_t i = 0; i < r.tce_grid.size(); ++i)
        out << r.estimator.id() << ',' << format_real(r.estimator.norm.p()) << ',' << r.n << ','
            << format_real(r.alpha) << ',' << format_real(r.threshold) << ',' << format_real(r.tce_grid[i]) << ','
            << format_real(r.d_grid[i]) << ',' << format_real(r.type2[i]) << '\n';
}

inline auto to_json(PowerReport const& r) -> Json
{
    return {{"estimator", detail::estimator_json(r.estimator)},
            {"n", r.n},
            {"alpha", r.alpha},
            {"threshold", r.threshold},
            {"null_min", r.null_min},
            {"null_max", r.null_max},
            {"tce_grid", r.tce_grid},
            {"d", r.d_grid},
            {"type2", r.type2}};
}

// ---------------------------------------------------------------------------
// Recalibration ranking
// ---------------------------------------------------------------------------

inline constexpr char const* rank_csv_header =
    "split,repeat,metric,p,uncalibrated,histogram,temperature,isotonic,winner,tie";

inline void write_rank_csv(std::ostream& out, std::span<RankRow const> rows)
{
    out << rank_csv_header << '\n';
    for (auto const& r : rows)
    {
        out << (r.repeat < 0 ? "full" : "subsample") << ',' << r.repeat << ',' << r.metric.id() << ','
            << format_real(r.metric.norm.p()) << ',' << format_real(r.uncalibrated);
        for (double v : r.ece) out << ',' << format_real(v);
        out << ',' << recalibration_methods[r.winner] << ',' << (r.tie ? 1 : 0) << '\n';
    }
}

inline auto to_json(RankRow const& r) -> Json
{
    Json ece;
    for (std::size_t i = 0; i < r.ece.size(); ++i) ece[recalibration_methods[i]] = detail::json_real(r.ece[i]);
    return {{"split", r.repeat < 0 ? "full" : "subsample"},
            {"repeat", r.repeat},
            {"metric", detail::estimator_json(r.metric)},
            {"uncalibrated", detail::json_real(r.uncalibrated)},
            {"ece", ece},
            {"winner", recalibration_methods[r.winner]},
            {"tie", r.tie}};
}

}  // namespace calib
