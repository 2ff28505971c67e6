#pragma once

#include <calib/beta.hpp>
#include <calib/data.hpp>
#include <calib/glm.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace calib {

// ---------------------------------------------------------------------------
// Beta maximum likelihood
// ---------------------------------------------------------------------------

struct BetaFit
{
    double alpha          = 1.0;
    double beta           = 1.0;
    double nll            = 0.0;
    double grid_tolerance = 0.0;  // final per-axis grid spacing (max over axes)
};

/// Negative log-likelihood of Beta(alpha, beta) for a score sample, reduced
/// to sufficient statistics.
///
/// Scores are clamped to [eps, 1-eps]. A clamped score carries no usable
/// position (doubles cannot resolve 1-x below ~1e-16, and heavily skewed fits
/// put a large share of their mass there), so clamped scores enter as
/// censored observations: ln P(X <= eps) or ln P(X >= 1-eps).
class BetaLikelihood
{
public:
    static constexpr double epsilon = 1e-12;

    explicit BetaLikelihood(ScoredDataset const& dataset)
    {
        for (auto const& s : dataset)
        {
            if (s.score <= epsilon)
                ++below_;
            else if (s.score >= 1.0 - epsilon)
                ++above_;
            else
            {
                ++interior_;
                sum_log_ += std::log(s.score);
                sum_log1m_ += std::log1p(-s.score);
            }
        }
    }

    [[nodiscard]] auto operator()(double a, double b) const -> double
    {
        double const lb  = log_beta(a, b);
        double       nll = -(a - 1.0) * sum_log_ - (b - 1.0) * sum_log1m_ + static_cast<double>(interior_) * lb;
        if (below_ > 0) nll -= static_cast<double>(below_) * detail::log_beta_cdf_direct(a, b, epsilon, lb);
        if (above_ > 0) nll -= static_cast<double>(above_) * detail::log_beta_cdf_direct(b, a, epsilon, lb);
        return nll;
    }

    [[nodiscard]] auto censored_below() const noexcept -> std::size_t { return below_; }
    [[nodiscard]] auto censored_above() const noexcept -> std::size_t { return above_; }

private:
    std::size_t below_     = 0;
    std::size_t above_     = 0;
    std::size_t interior_  = 0;
    double      sum_log_   = 0.0;
    double      sum_log1m_ = 0.0;
};

struct BetaGridOptions
{
    int    points      = 11;
    double contraction = 0.5;
    double alpha_max   = 200.0;
    double beta_max    = 50.0;
    double tolerance   = 1e-5;
    double floor       = 1e-12;  // grid stand-in for the excluded bound 0
};

/// Recursively refined brute-force grid search for the Beta MLE.
inline auto fit_beta_mle(ScoredDataset const& dataset, BetaGridOptions const& opt = {}) -> BetaFit
{
    if (dataset.n() < 2) fail_input("beta fit needs n >= 2");
    BetaLikelihood const nll(dataset);

    struct Axis
    {
        double lo, hi, upper;

        [[nodiscard]] auto spacing(int points) const -> double { return (hi - lo) / (points - 1); }

        [[nodiscard]] auto at(int i, int points) const -> double
        {
            return i == 0 ? lo : (i == points - 1 ? hi : lo + i * spacing(points));
        }

        /// Window of the given span centered on c, shifted to stay in bounds.
        void recenter(double c, double span, double floor)
        {
            span = std::min(span, upper - floor);
            lo   = c - 0.5 * span;
            hi   = c + 0.5 * span;
            if (lo < floor)
            {
                hi += floor - lo;
                lo = floor;
            }
            if (hi > upper)
            {
                lo -= hi - upper;
                hi = upper;
            }
            lo = std::max(lo, floor);
        }
    };

    int const n_pts = opt.points;
    Axis      a_axis{opt.floor, opt.alpha_max, opt.alpha_max};
    Axis      b_axis{opt.floor, opt.beta_max, opt.beta_max};

    BetaFit best{opt.floor, opt.floor, std::numeric_limits<double>::infinity(), 0.0};
    while (true)
    {
        int best_i = -1;
        int best_j = -1;
        for (int i = 0; i < n_pts; ++i)
        {
            double const a = a_axis.at(i, n_pts);
            for (int j = 0; j < n_pts; ++j)
            {
                double const b = b_axis.at(j, n_pts);
                double const v = nll(a, b);
                if (std::isfinite(v) && v < best.nll)
                {
                    best   = {a, b, v, 0.0};
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (!std::isfinite(best.nll)) fail_precondition("beta fit failed");

        double const da = a_axis.spacing(n_pts);
        double const db = b_axis.spacing(n_pts);
        best.grid_tolerance = std::max(da, db);
        if (da < opt.tolerance && db < opt.tolerance) return best;
        // an optimum on a window edge (away from the global bounds) keeps the span
        auto const factor = [&](Axis const& ax, int idx) {
            bool const edge = (idx == 0 && ax.lo > opt.floor) || (idx == n_pts - 1 && ax.hi < ax.upper);
            return edge ? 1.0 : opt.contraction;
        };
        double const fa = factor(a_axis, best_i);
        double const fb = factor(b_axis, best_j);
        a_axis.recenter(best.alpha, (a_axis.hi - a_axis.lo) * fa, opt.floor);
        b_axis.recenter(best.beta, (b_axis.hi - b_axis.lo) * fb, opt.floor);
    }
}

inline auto to_json(BetaFit const& fit) -> nlohmann::ordered_json
{
    return {{"alpha", fit.alpha}, {"beta", fit.beta}, {"nll", fit.nll}};
}

// ---------------------------------------------------------------------------
// GLM calibration curves
// ---------------------------------------------------------------------------

struct GlmFit
{
    GlmModel model{};
    double   nll        = 0.0;
    double   aic        = 0.0;
    int      iterations = 0;
    bool     converged  = false;
};

namespace detail {

/// Per-sample binary NLL and its first two derivatives in the linear predictor.
/// Derivatives vanish where the probability clamp is active, matching the
/// clamped objective.
struct GlmTerm
{
    double value = 0.0;
    double d1    = 0.0;
    double d2    = 0.0;
};

inline auto glm_term(GlmFunction link_fn, double eta, int y) -> GlmTerm
{
    constexpr double eps = glm_epsilon;
    double const     raw = inverse_link(link_fn, eta);
    double const     p   = std::clamp(std::isnan(raw) ? 0.5 : raw, eps, 1.0 - eps);
    GlmTerm          out;
    out.value = y == 1 ? -std::log(p) : -std::log1p(-p);
    if (!(raw > eps && raw < 1.0 - eps)) return out;
    double const q = 1.0 - p;
    switch (link_fn)
    {
    case GlmFunction::logit:
        out.d1 = p - y;
        out.d2 = p * q;
        break;
    case GlmFunction::log:
        out.d1 = y == 1 ? -1.0 : p / q;
        out.d2 = y == 1 ? 0.0 : p / (q * q);
        break;
    case GlmFunction::logflip:
        out.d1 = y == 1 ? q / p : -1.0;
        out.d2 = y == 1 ? q / (p * p) : 0.0;
        break;
    }
    return out;
}

class GlmObjective
{
public:
    GlmObjective(ScoredDataset const& dataset, GlmModel const& family) : family_(family)
    {
        t_.reserve(dataset.n());
        y_.reserve(dataset.n());
        for (auto const& s : dataset)
        {
            double const c = std::clamp(s.score, glm_epsilon, 1.0 - glm_epsilon);
            t_.push_back(apply_transform(family.transform, c));
            y_.push_back(s.label);
        }
    }

    /// Coefficients (b0, b1) with non-free entries held at 0.
    [[nodiscard]] auto coefficients(std::span<double const> theta) const -> std::array<double, 2>
    {
        std::array<double, 2> c{0.0, 0.0};
        std::size_t           i = 0;
        if (family_.has_b0) c[0] = theta[i++];
        if (family_.has_b1) c[1] = theta[i++];
        return c;
    }

    [[nodiscard]] auto value(std::span<double const> theta) const -> double
    {
        auto const c   = coefficients(theta);
        double     sum = 0.0;
        for (std::size_t i = 0; i < t_.size(); ++i) sum += glm_term(family_.link, c[0] + c[1] * t_[i], y_[i]).value;
        return sum;
    }

    struct Derivatives
    {
        double                value = 0.0;
        std::array<double, 2> grad{};
        std::array<double, 3> hess{};  // xx, xy, yy in free-parameter order
    };

    [[nodiscard]] auto derivatives(std::span<double const> theta) const -> Derivatives
    {
        auto const  c = coefficients(theta);
        Derivatives d;
        for (std::size_t i = 0; i < t_.size(); ++i)
        {
            auto const term = glm_term(family_.link, c[0] + c[1] * t_[i], y_[i]);
            d.value += term.value;
            // feature vector in free-parameter order
            std::array<double, 2> x{};
            std::size_t           k = 0;
            if (family_.has_b0) x[k++] = 1.0;
            if (family_.has_b1) x[k++] = t_[i];
            d.grad[0] += term.d1 * x[0];
            d.grad[1] += term.d1 * x[1];
            d.hess[0] += term.d2 * x[0] * x[0];
            d.hess[1] += term.d2 * x[0] * x[1];
            d.hess[2] += term.d2 * x[1] * x[1];
        }
        return d;
    }

    [[nodiscard]] auto mean_label() const -> double
    {
        double sum = 0.0;
        for (int y : y_) sum += y;
        return sum / static_cast<double>(y_.size());
    }

private:
    GlmModel            family_;
    std::vector<double> t_;
    std::vector<int>    y_;
};

}  // namespace detail

struct GlmFitOptions
{
    double gradient_tolerance = 1e-6;
    double step_tolerance     = 1e-10;
    int    max_iterations     = 500;
};

/// Damped Newton minimization of the binary NLL over the free coefficients.
inline auto fit_glm(ScoredDataset const& dataset, GlmModel family, GlmFitOptions const& opt = {}) -> GlmFit
{
    if (dataset.n() < 2) fail_input("glm fit needs n >= 2");
    family.validate();
    detail::GlmObjective const objective(dataset, family);

    int const             k = family.free_parameters();
    std::array<double, 2> theta{};
    if (k == 2)
        theta = {0.0, 1.0};
    else if (family.has_b1)
        theta = {1.0, 0.0};
    else  // intercept only: the constant-probability MLE
        theta = {link(family.link, std::clamp(objective.mean_label(), glm_epsilon, 1.0 - glm_epsilon)), 0.0};

    auto const params = [&](std::array<double, 2> const& t) { return std::span<double const>(t.data(), k); };

    GlmFit fit;
    auto   d = objective.derivatives(params(theta));
    if (!std::isfinite(d.value)) fail_precondition("glm fit failed");

    for (fit.iterations = 0; fit.iterations < opt.max_iterations; ++fit.iterations)
    {
        double const gnorm = k == 2 ? std::hypot(d.grad[0], d.grad[1]) : std::abs(d.grad[0]);
        if (gnorm < opt.gradient_tolerance)
        {
            fit.converged = true;
            break;
        }

        std::array<double, 2> step{};
        double                lambda = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt)
        {
            if (k == 1)
            {
                double const h = d.hess[0] + lambda;
                if (h > 0.0)
                {
                    step[0] = -d.grad[0] / h;
                    break;
                }
            }
            else
            {
                double const a   = d.hess[0] + lambda;
                double const b   = d.hess[1];
                double const c   = d.hess[2] + lambda;
                double const det = a * c - b * b;
                if (a > 0.0 && det > 0.0)
                {
                    step[0] = -(c * d.grad[0] - b * d.grad[1]) / det;
                    step[1] = -(a * d.grad[1] - b * d.grad[0]) / det;
                    break;
                }
            }
            double const scale = std::max({std::abs(d.hess[0]), std::abs(d.hess[2]), 1e-12});
            lambda             = lambda == 0.0 ? 1e-8 * scale + 1e-12 : lambda * 10.0;
        }

        double const slope = step[0] * d.grad[0] + step[1] * d.grad[1];
        double       t     = 1.0;
        bool         moved = false;
        for (int ls = 0; ls < 80; ++ls, t *= 0.5)
        {
            std::array<double, 2> trial{theta[0] + t * step[0], theta[1] + t * step[1]};
            double const          v = objective.value(params(trial));
            if (std::isfinite(v) && v <= d.value + 1e-4 * t * slope)
            {
                theta = trial;
                moved = true;
                break;
            }
        }
        double const step_norm = t * std::hypot(step[0], step[1]);
        if (!moved || step_norm < opt.step_tolerance)
        {
            fit.converged = true;
            break;
        }
        d = objective.derivatives(params(theta));
    }

    auto const c    = objective.coefficients(params(theta));
    fit.model       = family;
    fit.model.b0    = family.has_b0 ? c[0] : 0.0;
    fit.model.b1    = family.has_b1 ? c[1] : 0.0;
    fit.nll         = objective.value(params(theta));
    if (!std::isfinite(fit.nll)) fail_precondition("glm fit failed");
    fit.aic = 2.0 * k + 2.0 * fit.nll;
    return fit;
}

/// All 12 candidate families: 4 link/transform pairings x {b0, b1, b0+b1}.
inline auto glm_candidates() -> std::vector<GlmModel>
{
    std::vector<GlmModel> out;
    for (auto const& [link_fn, transform] : glm_pairings)
        for (auto const& [has_b0, has_b1] : {std::pair{true, false}, std::pair{false, true}, std::pair{true, true}})
            out.push_back(GlmModel{link_fn, transform, has_b0, has_b1, 0.0, 0.0});
    return out;
}

struct GlmSelection
{
    std::vector<GlmFit>                              fits;      // ascending AIC, head is selected
    std::vector<std::pair<std::string, std::string>> failures;  // (model name, reason)

    [[nodiscard]] auto best() const -> GlmFit const& { return fits.front(); }
};

inline auto select_glm_by_aic(ScoredDataset const& dataset, GlmFitOptions const& opt = {}) -> GlmSelection
{
    GlmSelection out;
    for (auto const& family : glm_candidates())
    {
        try
        {
            out.fits.push_back(fit_glm(dataset, family, opt));
        }
        catch (Error const& e)
        {
            out.failures.emplace_back(family.name(), e.what());
        }
    }
    if (out.fits.empty()) fail_precondition("glm fit failed for all candidates");
    std::ranges::stable_sort(out.fits, [](GlmFit const& a, GlmFit const& b) {
        if (std::abs(a.aic - b.aic) >= 1e-9) return a.aic < b.aic;
        if (a.model.free_parameters() != b.model.free_parameters())
            return a.model.free_parameters() < b.model.free_parameters();
        return a.model.name() < b.model.name();
    });
    return out;
}

inline auto to_json(GlmFit const& fit) -> nlohmann::ordered_json
{
    return {{"model_name", fit.model.name()}, {"b0", fit.model.b0}, {"b1", fit.model.b1},
            {"nll", fit.nll}, {"aic", fit.aic}};
}

/// Builds a model from a `{model_name, b0, b1, ...}` object.
inline auto glm_from_json(nlohmann::ordered_json const& j) -> GlmModel
{
    if (!j.is_object() || !j.contains("model_name")) fail_input("glm fit JSON needs model_name");
    auto model = parse_glm_name(j.at("model_name").get<std::string>());
    model.b0   = j.value("b0", 0.0);
    model.b1   = j.value("b1", 0.0);
    model.validate();
    return model;
}

}  // namespace calib
