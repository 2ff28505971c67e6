#pragma once

#include <calib/beta.hpp>
#include <calib/data.hpp>
#include <calib/estimators.hpp>
#include <calib/glm.hpp>
#include <calib/rng.hpp>

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace calib {

/// Distribution of confidence scores: Uniform or Beta(alpha, beta).
class ScoreDistribution
{
public:
    enum class Kind
    {
        uniform,
        beta
    };

    ScoreDistribution() = default;

    static auto uniform() -> ScoreDistribution { return {}; }

    static auto beta(double alpha, double beta) -> ScoreDistribution
    {
        detail::require_beta_params(alpha, beta);
        ScoreDistribution d;
        d.kind_  = Kind::beta;
        d.alpha_ = alpha;
        d.beta_  = beta;
        return d;
    }

    [[nodiscard]] auto kind() const noexcept -> Kind { return kind_; }
    [[nodiscard]] auto alpha() const noexcept -> double { return alpha_; }
    [[nodiscard]] auto beta() const noexcept -> double { return beta_; }

    [[nodiscard]] auto quantile(double u) const -> double
    {
        return kind_ == Kind::uniform ? u : beta_quantile(alpha_, beta_, u);
    }

    [[nodiscard]] auto cdf(double x) const -> double
    {
        if (kind_ == Kind::uniform) return std::clamp(x, 0.0, 1.0);
        return beta_cdf(alpha_, beta_, x);
    }

    [[nodiscard]] auto mean() const noexcept -> double
    {
        return kind_ == Kind::uniform ? 0.5 : alpha_ / (alpha_ + beta_);
    }

    [[nodiscard]] auto name() const -> std::string
    {
        if (kind_ == Kind::uniform) return "uniform";
        return "beta:" + format_real(alpha_) + "," + format_real(beta_);
    }

    friend auto operator==(ScoreDistribution const&, ScoreDistribution const&) -> bool = default;

private:
    Kind   kind_  = Kind::uniform;
    double alpha_ = 1.0;
    double beta_  = 1.0;
};

/// True calibration curve T(c) = E[Y | f(X) = c].
class CalibrationCurve
{
public:
    enum class Kind
    {
        identity,
        power,
        logistic,
        glm
    };

    CalibrationCurve() = default;

    static auto identity() -> CalibrationCurve { return {}; }

    static auto power(double d) -> CalibrationCurve
    {
        if (!(d >= 1.0) || !std::isfinite(d)) fail_input("power curve exponent must be >= 1");
        CalibrationCurve c;
        c.kind_ = Kind::power;
        c.a_    = d;
        c.check_range();
        return c;
    }

    /// T(c) = 1 / (1 + exp(-(a c + c0)))
    static auto logistic(double a, double c0) -> CalibrationCurve
    {
        if (!std::isfinite(a) || !std::isfinite(c0)) fail_input("logistic curve parameters must be finite");
        CalibrationCurve c;
        c.kind_ = Kind::logistic;
        c.a_    = a;
        c.c0_   = c0;
        c.check_range();
        return c;
    }

    static auto glm(GlmModel model) -> CalibrationCurve
    {
        model.validate();
        CalibrationCurve c;
        c.kind_ = Kind::glm;
        c.glm_  = model;
        c.check_range();
        return c;
    }

    [[nodiscard]] auto kind() const noexcept -> Kind { return kind_; }
    [[nodiscard]] auto exponent() const noexcept -> double { return a_; }
    [[nodiscard]] auto model() const noexcept -> GlmModel const& { return glm_; }

    [[nodiscard]] auto operator()(double c) const -> double
    {
        switch (kind_)
        {
        case Kind::identity: return c;
        case Kind::power: return std::pow(c, a_);
        case Kind::logistic: return 1.0 / (1.0 + std::exp(-(a_ * c + c0_)));
        case Kind::glm: return glm_predict(glm_, c);
        }
        return c;
    }

    [[nodiscard]] auto name() const -> std::string
    {
        switch (kind_)
        {
        case Kind::identity: return "identity";
        case Kind::power: return "power:" + format_real(a_);
        case Kind::logistic: return "logistic:" + format_real(a_) + "," + format_real(c0_);
        case Kind::glm:
        {
            std::string out = "glm:" + glm_.name();
            if (glm_.has_b0) out += "," + format_real(glm_.b0);
            if (glm_.has_b1) out += "," + format_real(glm_.b1);
            return out;
        }
        }
        return "?";
    }

    friend auto operator==(CalibrationCurve const&, CalibrationCurve const&) -> bool = default;

private:
    void check_range() const
    {
        for (int i = 0; i <= 1000; ++i)
        {
            double const t = (*this)(i / 1000.0);
            if (!(t >= 0.0 && t <= 1.0)) fail_input("calibration curve leaves [0,1]: " + name());
        }
    }

    Kind     kind_ = Kind::identity;
    double   a_    = 1.0;
    double   c0_   = 0.0;
    GlmModel glm_{};
};

struct SyntheticModel
{
    ScoreDistribution dist;
    CalibrationCurve  curve;

    friend auto operator==(SyntheticModel const&, SyntheticModel const&) -> bool = default;
};

// ---------------------------------------------------------------------------
// Parsing of `name:args` parameter strings
// ---------------------------------------------------------------------------

namespace detail {

inline auto parse_args(std::string_view text, std::string_view what) -> std::vector<double>
{
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (auto field : split(text, ','))
    {
        auto const v = parse_real(field);
        if (!v) fail_input("bad number in " + std::string(what) + " '" + std::string(text) + "'");
        out.push_back(*v);
    }
    return out;
}

}  // namespace detail

/// `uniform` or `beta:alpha,beta`
inline auto parse_distribution(std::string_view text) -> ScoreDistribution
{
    text             = trim(text);
    auto const colon = text.find(':');
    auto const head  = text.substr(0, colon);
    auto const args  = colon == std::string_view::npos ? std::vector<double>{}
                                                        : detail::parse_args(text.substr(colon + 1), "distribution");
    if (head == "uniform" && args.empty()) return ScoreDistribution::uniform();
    if (head == "beta" && args.size() == 2) return ScoreDistribution::beta(args[0], args[1]);
    fail_input("bad distribution '" + std::string(text) + "' (expected uniform or beta:a,b)");
}

/// `identity`, `power:d`, `logistic:a,c0`, or `glm:<name>,<free coefficients>`
inline auto parse_curve(std::string_view text) -> CalibrationCurve
{
    text             = trim(text);
    auto const colon = text.find(':');
    auto const head  = text.substr(0, colon);
    auto const rest  = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    if (head == "identity" && rest.empty()) return CalibrationCurve::identity();
    if (head == "glm")
    {
        auto const comma = rest.find(',');
        auto       model = parse_glm_name(rest.substr(0, comma));
        auto const args  = comma == std::string_view::npos ? std::vector<double>{}
                                                           : detail::parse_args(rest.substr(comma + 1), "curve");
        if (static_cast<int>(args.size()) != model.free_parameters())
            fail_input("glm curve '" + std::string(text) + "' needs one value per free coefficient");
        std::size_t i = 0;
        if (model.has_b0) model.b0 = args[i++];
        if (model.has_b1) model.b1 = args[i++];
        return CalibrationCurve::glm(model);
    }
    auto const args = detail::parse_args(rest, "curve");
    if (head == "power" && args.size() == 1) return CalibrationCurve::power(args[0]);
    if (head == "logistic" && args.size() == 2) return CalibrationCurve::logistic(args[0], args[1]);
    fail_input("bad curve '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// True calibration error
// ---------------------------------------------------------------------------

/// Midpoint-rule TCE in quantile space, (int_0^1 |Q(u) - T(Q(u))|^p du)^(1/p).
///
/// Doubles the node count from 2^14 until successive values agree to 1e-8.
/// Quantile nodes are cached per level, so evaluating many curves against one
/// distribution pays for the quantiles once. Not thread-safe.
class TceQuadrature
{
public:
    static constexpr int    first_level = 14;
    static constexpr int    last_level  = 20;
    static constexpr double tolerance   = 1e-8;

    explicit TceQuadrature(ScoreDistribution dist) : dist_(dist) {}

    [[nodiscard]] auto distribution() const noexcept -> ScoreDistribution const& { return dist_; }

    auto operator()(CalibrationCurve const& curve, Norm norm = {}) -> double
    {
        double prev = at_level(curve, norm, first_level);
        for (int level = first_level + 1; level <= last_level; ++level)
        {
            double const cur = at_level(curve, norm, level);
            if (std::abs(cur - prev) < tolerance) return cur;
            prev = cur;
        }
        fail_precondition("quadrature failed to converge");
    }

    /// Single midpoint evaluation on 2^level nodes.
    auto at_level(CalibrationCurve const& curve, Norm norm, int level) -> double
    {
        auto const& q   = nodes(level);
        double      sum = 0.0;
        for (double c : q) sum += norm.power(c - curve(c));
        return norm.root(sum / static_cast<double>(q.size()));
    }

private:
    auto nodes(int level) -> std::vector<double> const&
    {
        auto& q = cache_[level];
        if (q.empty())
        {
            std::size_t const m = std::size_t{1} << level;
            q.resize(m);
            for (std::size_t j = 0; j < m; ++j)
                q[j] = dist_.quantile((static_cast<double>(j) + 0.5) / static_cast<double>(m));
        }
        return q;
    }

    ScoreDistribution                  dist_;
    std::map<int, std::vector<double>> cache_;
};

inline auto tce(SyntheticModel const& model, Norm norm = {}) -> double
{
    return TceQuadrature(model.dist)(model.curve, norm);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Inverse-CDF scores and Bernoulli(T(score)) labels, two uniforms per sample.
inline auto sample(SyntheticModel const& model, std::size_t n, Rng& rng) -> ScoredDataset
{
    std::vector<ScoredSample> out(n);
    for (auto& s : out)
    {
        s.score = model.dist.quantile(rng.uniform());
        s.label = rng.uniform() < model.curve(s.score) ? 1 : 0;
    }
    return ScoredDataset(std::move(out));
}

inline auto sample(SyntheticModel const& model, std::size_t n, std::uint64_t seed) -> ScoredDataset
{
    if (n == 0) fail_input("sample size must be >= 1");
    Rng rng(seed);
    return sample(model, n, rng);
}

// ---------------------------------------------------------------------------
// Inverting TCE over the power family
// ---------------------------------------------------------------------------

inline constexpr double default_d_max = 50.0;

/// d in [1, d_max] such that TCE(dist, c^d) is within 1e-6 of the target.
inline auto power_d_for_tce(TceQuadrature& quad, double target, Norm norm = {}, double d_max = default_d_max) -> double
{
    if (!(target >= 0.0 && target < 1.0)) fail_input("target TCE must lie in [0, 1)");
    if (target == 0.0) return 1.0;
    constexpr double accept = 1e-8;
    double const     top    = quad(CalibrationCurve::power(d_max), norm);
    if (top < target) fail_precondition("target TCE unreachable");
    if (std::abs(top - target) < accept) return d_max;
    double lo = 1.0;
    double hi = d_max;
    while (true)
    {
        double const mid = 0.5 * (lo + hi);
        double const t   = quad(CalibrationCurve::power(mid), norm);
        if (std::abs(t - target) < accept || hi - lo < 1e-12) return mid;
        (t < target ? lo : hi) = mid;
    }
}

inline auto power_d_for_tce(ScoreDistribution const& dist, double target, Norm norm = {},
                            double d_max = default_d_max) -> double
{
    TceQuadrature quad(dist);
    return power_d_for_tce(quad, target, norm, d_max);
}

}  // namespace calib
