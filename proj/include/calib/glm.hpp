#pragma once

#include <calib/error.hpp>
#include <calib/format.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

namespace calib {

/// Clamp applied to scores before transforms and to probabilities after link inverses.
inline constexpr double glm_epsilon = 1e-12;

/// Shared set of link and transform functions.
enum class GlmFunction
{
    logit,
    log,
    logflip  // ln(1 - x)
};

inline auto to_string(GlmFunction f) -> std::string
{
    switch (f)
    {
    case GlmFunction::logit: return "logit";
    case GlmFunction::log: return "log";
    case GlmFunction::logflip: return "logflip";
    }
    return "?";
}

inline auto apply_transform(GlmFunction f, double s) -> double
{
    switch (f)
    {
    case GlmFunction::logit: return std::log(s) - std::log1p(-s);
    case GlmFunction::log: return std::log(s);
    case GlmFunction::logflip: return std::log1p(-s);
    }
    return 0.0;
}

inline auto inverse_link(GlmFunction f, double eta) -> double
{
    switch (f)
    {
    case GlmFunction::logit: return 1.0 / (1.0 + std::exp(-eta));
    case GlmFunction::log: return std::exp(eta);
    case GlmFunction::logflip: return -std::expm1(eta);
    }
    return 0.0;
}

inline auto link(GlmFunction f, double p) -> double { return apply_transform(f, p); }

/// p = g^{-1}(b0 + b1 t(s)); a parameter that is not free is fixed at 0.
struct GlmModel
{
    GlmFunction link      = GlmFunction::logit;
    GlmFunction transform = GlmFunction::logit;
    bool        has_b0    = true;
    bool        has_b1    = true;
    double      b0        = 0.0;
    double      b1        = 0.0;

    [[nodiscard]] auto free_parameters() const noexcept -> int { return int{has_b0} + int{has_b1}; }
    [[nodiscard]] auto intercept() const noexcept -> double { return has_b0 ? b0 : 0.0; }
    [[nodiscard]] auto slope() const noexcept -> double { return has_b1 ? b1 : 0.0; }

    /// `<link>_<transform>_<params>`, e.g. `logflip_logflip_b0_b1`.
    [[nodiscard]] auto name() const -> std::string
    {
        std::string out = to_string(link) + "_" + to_string(transform);
        if (has_b0) out += "_b0";
        if (has_b1) out += "_b1";
        return out;
    }

    void validate() const
    {
        if (!has_b0 && !has_b1) fail_input("glm needs at least one free parameter");
        bool const ok = (link == GlmFunction::logit && transform == GlmFunction::logit) ||
                        (link == GlmFunction::logit && transform == GlmFunction::logflip) ||
                        (link == GlmFunction::logflip && transform == GlmFunction::logflip) ||
                        (link == GlmFunction::log && transform == GlmFunction::log);
        if (!ok) fail_input("unsupported glm combination " + name());
        if (!std::isfinite(intercept()) || !std::isfinite(slope())) fail_input("glm coefficients must be finite");
    }

    friend auto operator==(GlmModel const&, GlmModel const&) -> bool = default;
};

inline auto glm_predict(GlmModel const& model, double score) -> double
{
    double const s   = std::clamp(score, glm_epsilon, 1.0 - glm_epsilon);
    double const eta = model.intercept() + model.slope() * apply_transform(model.transform, s);
    double const p   = inverse_link(model.link, eta);
    return std::clamp(std::isnan(p) ? 0.5 : p, glm_epsilon, 1.0 - glm_epsilon);
}

/// The four link/transform pairings in the candidate family.
inline constexpr std::array<std::pair<GlmFunction, GlmFunction>, 4> glm_pairings{{
    {GlmFunction::logit, GlmFunction::logit},
    {GlmFunction::logit, GlmFunction::logflip},
    {GlmFunction::logflip, GlmFunction::logflip},
    {GlmFunction::log, GlmFunction::log},
}};

inline auto parse_glm_function(std::string_view s) -> GlmFunction
{
    if (s == "logit") return GlmFunction::logit;
    if (s == "log") return GlmFunction::log;
    if (s == "logflip") return GlmFunction::logflip;
    fail_input("unknown glm function '" + std::string(s) + "'");
}

/// Parses a model name such as `log_log_b0_b1`; coefficients start at 0.
inline auto parse_glm_name(std::string_view name) -> GlmModel
{
    auto const parts = split(name, '_');
    if (parts.size() < 3 || parts.size() > 4) fail_input("bad glm name '" + std::string(name) + "'");
    GlmModel m;
    m.link      = parse_glm_function(parts[0]);
    m.transform = parse_glm_function(parts[1]);
    m.has_b0    = false;
    m.has_b1    = false;
    for (std::size_t i = 2; i < parts.size(); ++i)
    {
        if (parts[i] == "b0" && !m.has_b0 && !m.has_b1)
            m.has_b0 = true;
        else if (parts[i] == "b1" && !m.has_b1)
            m.has_b1 = true;
        else
            fail_input("bad glm name '" + std::string(name) + "'");
    }
    m.validate();
    return m;
}

}  // namespace calib
