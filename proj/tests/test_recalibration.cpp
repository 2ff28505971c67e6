#include <calib/recalibration.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace calib;

namespace {

auto make(std::vector<double> s, std::vector<int> y) -> ScoredDataset
{
    std::vector<ScoredSample> v;
    for (std::size_t i = 0; i < s.size(); ++i) v.push_back({s[i], y[i]});
    return ScoredDataset(v);
}

// every contiguous block structure, keep the feasible one with least squares
auto brute_monotone_ls(std::vector<double> const& y) -> std::vector<double>
{
    std::size_t const   n    = y.size();
    double              best = std::numeric_limits<double>::infinity();
    std::vector<double> arg;
    for (std::uint32_t cuts = 0; cuts < (1u << (n - 1)); ++cuts)
    {
        std::vector<double> v(n);
        std::size_t         start = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            if (i + 1 == n || (cuts >> i & 1u))
            {
                double m = 0;
                for (std::size_t j = start; j <= i; ++j) m += y[j];
                m /= static_cast<double>(i + 1 - start);
                for (std::size_t j = start; j <= i; ++j) v[j] = m;
                start = i + 1;
            }
        }
        bool ok = true;
        for (std::size_t i = 1; i < n; ++i) ok = ok && v[i - 1] <= v[i] + 1e-15;
        if (!ok) continue;
        double sse = 0;
        for (std::size_t i = 0; i < n; ++i) sse += (v[i] - y[i]) * (v[i] - y[i]);
        if (sse < best - 1e-12)
        {
            best = sse;
            arg  = v;
        }
    }
    return arg;
}

auto draw_records(std::size_t n, std::size_t k, double inflate, std::uint64_t seed) -> std::vector<LogitRecord>
{
    std::mt19937_64                  gen(seed);
    std::normal_distribution<double> z(0.0, 1.5);
    std::uniform_real_distribution<> u(0.0, 1.0);
    std::vector<LogitRecord>         out;
    for (std::size_t i = 0; i < n; ++i)
    {
        LogitRecord r;
        for (std::size_t c = 0; c < k; ++c) r.logits.push_back(z(gen));
        double const zmax = *std::ranges::max_element(r.logits);
        double       sum  = 0;
        for (double x : r.logits) sum += std::exp(x - zmax);
        double       draw = u(gen) * sum;
        std::size_t  c    = 0;
        for (; c + 1 < k; ++c)
        {
            draw -= std::exp(r.logits[c] - zmax);
            if (draw < 0) break;
        }
        r.label = static_cast<int>(c);
        for (double& x : r.logits) x *= inflate;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST(Pav, MatchesBruteForceExhaustively)
{
    for (std::size_t n = 1; n <= 8; ++n)
    {
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask)
        {
            std::vector<double> y(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
            std::vector<double> const w(n, 1.0);
            auto const                got  = pav(y, w);
            auto const                want = brute_monotone_ls(y);
            ASSERT_EQ(got.size(), n);
            for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << n << " " << mask;
        }
    }
}

TEST(Isotonic, Examples)
{
    auto const a = fit_isotonic(make({0.1, 0.2, 0.3}, {1, 0, 0}));
    for (double s : {0.0, 0.1, 0.25, 0.3, 1.0}) EXPECT_NEAR(a(s), 1.0 / 3.0, 1e-15);

    auto const b = fit_isotonic(make({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1}));
    EXPECT_EQ(b(0.1), 0.0);
    EXPECT_EQ(b(0.2), 0.5);
    EXPECT_EQ(b(0.3), 0.5);
    EXPECT_EQ(b(0.4), 1.0);
    EXPECT_EQ(b(0.05), 0.0);
    EXPECT_EQ(b(0.99), 1.0);

    auto const c = fit_isotonic(make({0.1, 0.4, 0.6, 0.9}, {0, 0, 1, 1}));
    EXPECT_EQ(c(0.1), 0.0);
    EXPECT_EQ(c(0.4), 0.0);
    EXPECT_EQ(c(0.6), 1.0);
    EXPECT_EQ(c(0.9), 1.0);
}

TEST(Isotonic, TiedScoresPooledToOneValue)
{
    auto const r = fit_isotonic(make({0.5, 0.5, 0.5, 0.7}, {1, 0, 0, 1}));
    EXPECT_NEAR(r(0.5), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(r(0.7), 1.0);
}

TEST(Isotonic, MonotoneAndBoundedOnRandomData)
{
    std::mt19937_64                  gen(3);
    std::uniform_real_distribution<> u(0.0, 1.0);
    std::vector<ScoredSample>        v;
    for (int i = 0; i < 2000; ++i)
    {
        double const s = std::round(u(gen) * 200) / 200;
        v.push_back({s, u(gen) < s * s ? 1 : 0});
    }
    ScoredDataset const ds(v);
    auto const          r    = fit_isotonic(ds);
    double              prev = -1;
    for (int i = 0; i <= 1000; ++i)
    {
        double const q = r(i / 1000.0);
        EXPECT_GE(q, prev);
        EXPECT_GE(q, 0.0);
        EXPECT_LE(q, 1.0);
        prev = q;
    }
    auto const out = recalibrate(Recalibrator{r}, ds);
    for (std::size_t i = 0; i < ds.n(); ++i) EXPECT_EQ(out[i].label, ds[i].label);
}

TEST(Histogram, Examples)
{
    auto const h = fit_histogram(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 2);
    ASSERT_EQ(h.values.size(), 2u);
    EXPECT_EQ(h.values[0], 0.0);
    EXPECT_EQ(h.values[1], 1.0);
    ASSERT_EQ(h.edges.size(), 3u);
    EXPECT_DOUBLE_EQ(h.edges[1], 0.5);
    EXPECT_EQ(h.edges.front(), 0.0);
    EXPECT_EQ(h.edges.back(), 1.0);

    auto const one = fit_histogram(make({0.1, 0.5, 0.6, 0.9}, {1, 0, 1, 1}), 1);
    for (double s : {0.0, 0.3, 1.0}) EXPECT_EQ(one(s), 0.75);

    EXPECT_THROW(fit_histogram(make({0.1, 0.2}, {0, 1}), 3), Error);
    EXPECT_THROW(fit_histogram(make({0.1, 0.2}, {0, 1}), 0), Error);
}

TEST(Histogram, FixedPointOnTrainingData)
{
    std::mt19937_64                  gen(5);
    std::uniform_real_distribution<> u(0.0, 1.0);
    std::vector<ScoredSample>        v;
    for (int i = 0; i < 997; ++i)
    {
        double const s = u(gen);
        v.push_back({s, u(gen) < s ? 1 : 0});
    }
    ScoredDataset const ds(v);
    auto const          h   = fit_histogram(ds, 15);
    auto const          out = recalibrate(Recalibrator{h}, ds);
    // group training points by recalibrated value; each group's accuracy equals that value
    for (double value : h.values)
    {
        double pos = 0, cnt = 0;
        for (std::size_t i = 0; i < ds.n(); ++i)
        {
            if (out[i].score != value) continue;
            pos += out[i].label;
            cnt += 1;
        }
        ASSERT_GT(cnt, 0);
        EXPECT_NEAR(pos / cnt, value, 1e-12);
    }
    for (auto const& s : out) EXPECT_NE(std::find(h.values.begin(), h.values.end(), s.score), h.values.end());
}

TEST(Histogram, TiedBoundaryScoresMerge)
{
    auto const h = fit_histogram(make({0.3, 0.3, 0.3, 0.3, 0.8, 0.9}, {0, 1, 0, 1, 1, 1}), 3);
    for (std::size_t i = 1; i < h.edges.size(); ++i) EXPECT_LT(h.edges[i - 1], h.edges[i]);
    EXPECT_EQ(h(0.3), 0.5);
    EXPECT_EQ(h.values.size() + 1, h.edges.size());
}

TEST(Temperature, RecoversInflation)
{
    auto const recs = draw_records(10000, 5, 2.0, 11);
    auto const t    = fit_temperature(recs);
    EXPECT_NEAR(t.t, 2.0, 0.05);
    EXPECT_FALSE(t.at_boundary);
    for (double other : {0.5, 1.0, 2.0, 4.0}) EXPECT_LE(temperature_nll(recs, t.t), temperature_nll(recs, other));
}

TEST(Temperature, CalibratedNearOne)
{
    auto const recs = draw_records(10000, 3, 1.0, 12);
    auto const t    = fit_temperature(recs);
    EXPECT_LE(temperature_nll(recs, t.t), temperature_nll(recs, 1.0));
    EXPECT_NEAR(t.t, 1.0, 0.05);
}

TEST(Temperature, MatchesScan)
{
    auto const recs = draw_records(300, 4, 0.7, 13);
    auto const t    = fit_temperature(recs);
    double     best = std::numeric_limits<double>::infinity(), arg = 0;
    for (int i = 0; i <= 60000; ++i)
    {
        double const x = -3.0 + i * 1e-4;
        double const f = temperature_nll(recs, std::exp(x));
        if (f < best)
        {
            best = f;
            arg  = x;
        }
    }
    EXPECT_NEAR(std::log(t.t), arg, 2e-4);
    EXPECT_LE(temperature_nll(recs, t.t), best + 1e-9);
}

TEST(Temperature, SingleRecordAndBoundary)
{
    std::vector<LogitRecord> one{{0, {2.0, 1.0, 0.0}}};
    auto const               t = fit_temperature(one);
    EXPECT_TRUE(std::isfinite(t.t));
    EXPECT_TRUE(t.at_boundary);
    EXPECT_NEAR(t.t, std::exp(-3.0), 1e-12);
    EXPECT_THROW(fit_temperature(std::vector<LogitRecord>{}), Error);
}

TEST(Apply, TemperaturePreservesCorrectness)
{
    auto const recs = draw_records(500, 4, 1.0, 14);
    auto const base = to_top1_scores(recs, 1.0);
    auto const same = recalibrate(Recalibrator{TemperatureScaling{1.0}}, recs);
    for (std::size_t i = 0; i < base.n(); ++i) EXPECT_EQ(same[i].score, base[i].score);
    for (double t : {0.1, 0.5, 3.0, 20.0})
    {
        auto const out = recalibrate(Recalibrator{TemperatureScaling{t}}, recs);
        for (std::size_t i = 0; i < base.n(); ++i) EXPECT_EQ(out[i].label, base[i].label);
    }
    EXPECT_THROW(recalibrate(Recalibrator{TemperatureScaling{2.0}}, base), Error);
}

TEST(Json, RoundTrip)
{
    std::vector<Recalibrator> const all{TemperatureScaling{1.7, false},
                                        fit_histogram(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 2),
                                        fit_isotonic(make({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1}))};
    for (auto const& r : all)
    {
        auto const j    = to_json(r);
        auto const back = recalibrator_from_json(nlohmann::ordered_json::parse(j.dump()));
        EXPECT_EQ(kind_name(back), kind_name(r));
        EXPECT_EQ(to_json(back), j);
    }
    EXPECT_THROW(recalibrator_from_json(nlohmann::ordered_json::parse(R"({"kind":"temperature","t":-1})")), Error);
    EXPECT_THROW(recalibrator_from_json(nlohmann::ordered_json::parse(R"({"kind":"platt"})")), Error);
    EXPECT_THROW(
        recalibrator_from_json(nlohmann::ordered_json::parse(R"({"kind":"isotonic","breakpoints":[0.1,0.2],"values":[0.5,0.2]})")),
        Error);
}
