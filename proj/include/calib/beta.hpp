#pragma once

#include <calib/error.hpp>

#include <cmath>
#include <limits>
#include <utility>

namespace calib {

inline auto log_beta(double a, double b) -> double { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

namespace detail {

inline void require_beta_params(double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        fail_input("beta parameters must be positive and finite");
}

/// Lentz evaluation of the incomplete beta continued fraction. Converges
/// quickly for x < (a+1)/(a+b+2).
inline auto beta_continued_fraction(double a, double b, double x) -> double
{
    constexpr int    max_iter = 10000;
    constexpr double eps      = 1e-16;
    constexpr double tiny     = 1e-300;

    double const qab = a + b;
    double const qap = a + 1.0;
    double const qam = a - 1.0;
    double       c   = 1.0;
    double       d   = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d        = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m)
    {
        double const m2 = 2.0 * m;
        double       aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d               = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d  = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d                = 1.0 / d;
        double const del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

/// ln I_x(a,b) evaluated directly from the continued fraction; accurate on
/// the side x < (a+1)/(a+b+2).
inline auto log_beta_cdf_direct(double a, double b, double x, double lbeta) -> double
{
    return a * std::log(x) + b * std::log1p(-x) - lbeta + std::log(beta_continued_fraction(a, b, x) / a);
}

inline auto on_direct_side(double a, double b, double x) -> bool { return x < (a + 1.0) / (a + b + 2.0); }

}  // namespace detail

/// ln of the regularized incomplete beta I_x(a,b).
inline auto log_beta_cdf(double a, double b, double x) -> double
{
    detail::require_beta_params(a, b);
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    if (x >= 1.0) return 0.0;
    double const lb = log_beta(a, b);
    if (detail::on_direct_side(a, b, x)) return detail::log_beta_cdf_direct(a, b, x, lb);
    return std::log1p(-std::exp(detail::log_beta_cdf_direct(b, a, 1.0 - x, lb)));
}

/// ln of the survival function 1 - I_x(a,b).
inline auto log_beta_sf(double a, double b, double x) -> double
{
    detail::require_beta_params(a, b);
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return -std::numeric_limits<double>::infinity();
    double const lb = log_beta(a, b);
    if (!detail::on_direct_side(a, b, x)) return detail::log_beta_cdf_direct(b, a, 1.0 - x, lb);
    return std::log1p(-std::exp(detail::log_beta_cdf_direct(a, b, x, lb)));
}

inline auto beta_cdf(double a, double b, double x) -> double { return std::exp(log_beta_cdf(a, b, x)); }

inline auto beta_log_pdf(double a, double b, double x, double lbeta) -> double
{
    return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta;
}

/// Beta density on the open interval, computed in log space.
inline auto beta_pdf(double a, double b, double x) -> double
{
    detail::require_beta_params(a, b);
    if (!(x > 0.0 && x < 1.0)) fail_input("beta_pdf requires 0 < x < 1");
    return std::exp(beta_log_pdf(a, b, x, log_beta(a, b)));
}

namespace detail {

/// Solves ln I_z(a,b) = log_target for z in (0, z_max], Newton in ln z with a
/// bisection fallback. The caller picks the parameter order so that this is
/// the tail where z carries full relative precision.
inline auto solve_small_tail(double a, double b, double log_target, double z_max, double lbeta) -> double
{
    double const t_max = std::log(z_max);
    auto const   g     = [&](double t) { return log_beta_cdf_direct(a, b, std::exp(t), lbeta) - log_target; };

    // power-law start: I_z ~ z^a / (a B)
    double t = std::min((log_target + std::log(a) + lbeta) / a, t_max);

    double lo   = t;
    double g_lo = g(lo);
    double span = 1.0;
    while (g_lo > 0.0)
    {
        lo -= span;
        span *= 2.0;
        if (lo < -745.0) return 0.0;
        g_lo = g(lo);
    }
    double hi = t_max;
    if (g_lo >= 0.0) return std::exp(lo);
    t = lo;

    constexpr int max_iter = 200;
    for (int iter = 0; iter < max_iter; ++iter)
    {
        double const z  = std::exp(t);
        double const gt = g(t);
        if (gt == 0.0) return z;
        if (gt < 0.0)
            lo = t;
        else
            hi = t;
        // d/dt ln I = z pdf(z) / I
        double const log_slope = t + beta_log_pdf(a, b, z, lbeta) - (gt + log_target);
        double       next      = t - gt / std::exp(log_slope);
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) < 1e-15 || hi - lo < 1e-15)
        {
            t = next;
            break;
        }
        t = next;
    }
    return std::exp(t);
}

}  // namespace detail

/// Inverse of the regularized incomplete beta: x with I_x(a,b) = u.
inline auto beta_quantile(double a, double b, double u) -> double
{
    detail::require_beta_params(a, b);
    if (!(u >= 0.0 && u <= 1.0)) fail_input("beta_quantile requires 0 <= u <= 1");
    if (u == 0.0) return 0.0;
    if (u == 1.0) return 1.0;
    if (a == 1.0 && b == 1.0) return u;

    double const lb    = log_beta(a, b);
    double const split = (a + 1.0) / (a + b + 2.0);
    double const log_at_split = detail::log_beta_cdf_direct(a, b, split, lb);
    if (std::log(u) <= log_at_split) return detail::solve_small_tail(a, b, std::log(u), split, lb);
    // upper tail: solve I_y(b,a) = 1 - u for y = 1 - x
    double const y = detail::solve_small_tail(b, a, std::log1p(-u), 1.0 - split, lb);
    return 1.0 - y;
}

}  // namespace calib
