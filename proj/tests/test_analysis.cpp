#include <calib/analysis.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace calib;

namespace {

auto spec(char const* text) -> EstimatorSpec { return parse_estimator(text); }

auto config(SyntheticModel model, std::size_t n, std::size_t m, std::vector<EstimatorSpec> est, std::uint64_t seed,
            int threads = 1) -> SimulationConfig
{
    SimulationConfig c;
    c.model      = model;
    c.n          = n;
    c.m          = m;
    c.estimators = std::move(est);
    c.seed       = seed;
    c.threads    = threads;
    return c;
}

auto same(BiasReport const& a, BiasReport const& b) -> bool
{
    return a.estimator.id() == b.estimator.id() && a.n == b.n && a.m == b.m && a.mean_ece == b.mean_ece &&
           a.tce == b.tce && a.bias == b.bias && a.std == b.std && a.stderr_ == b.stderr_ &&
           a.mean_bins == b.mean_bins && a.error == b.error;
}

auto balanced_records(std::size_t n) -> std::vector<LogitRecord>
{
    // tied logits score 0.5 at any temperature; half the labels hit the argmax
    std::vector<LogitRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({static_cast<int>(i % 2), {0.0, 0.0}});
    return out;
}

auto random_records(std::size_t n, std::uint64_t seed) -> std::vector<LogitRecord>
{
    std::mt19937_64                  gen(seed);
    std::normal_distribution<double> z(0.0, 2.0);
    std::uniform_int_distribution<>  lab(0, 3);
    std::vector<LogitRecord>         out;
    for (std::size_t i = 0; i < n; ++i)
    {
        LogitRecord r{lab(gen), {z(gen), z(gen), z(gen), z(gen)}};
        r.logits[static_cast<std::size_t>(r.label)] += 1.5;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST(EstimateBias, SummaryMatchesReplicates)
{
    SyntheticModel const model{ScoreDistribution::beta(2.7752, 0.0478), CalibrationCurve::power(2.0)};
    std::vector const    est{spec("ew-bin:15"), spec("em-sweep"), spec("em-debiased:10")};
    auto const           reports = estimate_bias(config(model, 300, 120, est, 9));
    auto const           raw     = run_replicates(model, 300, 120, est, 9, "bias", {}, 1);
    ASSERT_EQ(reports.size(), est.size());
    for (std::size_t e = 0; e < est.size(); ++e)
    {
        auto const& r = reports[e];
        ASSERT_FALSE(r.error);
        double mean = 0;
        for (double v : raw.values[e]) mean += v;
        mean /= 120.0;
        double ss = 0;
        for (double v : raw.values[e]) ss += (v - mean) * (v - mean);
        double const sd = std::sqrt(ss / 119.0);
        EXPECT_NEAR(r.mean_ece, mean, 1e-14);
        EXPECT_NEAR(r.std, sd, 1e-12);
        EXPECT_DOUBLE_EQ(r.stderr_, r.std / std::sqrt(120.0));
        EXPECT_EQ(r.bias, r.mean_ece - r.tce);
        EXPECT_EQ(r.bias + r.tce, r.mean_ece);
        EXPECT_DOUBLE_EQ(r.tce, tce(model));
    }
    EXPECT_TRUE(reports[1].mean_bins.has_value());
    EXPECT_FALSE(reports[0].mean_bins.has_value());
}

TEST(EstimateBias, DeterministicAndThreadIndependent)
{
    SyntheticModel const model{ScoreDistribution::uniform(), CalibrationCurve::power(3.0)};
    std::vector const    est{spec("ew-bin:15"), spec("em-sweep"), spec("kde")};
    auto const           a = estimate_bias(config(model, 200, 60, est, 77, 1));
    auto const           b = estimate_bias(config(model, 200, 60, est, 77, 1));
    auto const           c = estimate_bias(config(model, 200, 60, est, 77, 4));
    auto const           d = estimate_bias(config(model, 200, 60, est, 78, 1));
    for (std::size_t e = 0; e < est.size(); ++e)
    {
        EXPECT_TRUE(same(a[e], b[e]));
        EXPECT_TRUE(same(a[e], c[e]));
        EXPECT_NE(a[e].mean_ece, d[e].mean_ece);
    }
}

TEST(EstimateBias, AddingEstimatorsKeepsDatasets)
{
    SyntheticModel const model{ScoreDistribution::beta(1.1, 0.1), CalibrationCurve::identity()};
    auto const           one  = estimate_bias(config(model, 150, 40, {spec("em-bin:10")}, 5));
    auto const           many = estimate_bias(config(model, 150, 40, {spec("ew-sweep"), spec("em-bin:10"), spec("kde")}, 5));
    EXPECT_TRUE(same(one[0], many[1]));
}

TEST(EstimateBias, FailingEstimatorIsolated)
{
    SyntheticModel const model{ScoreDistribution::uniform(), CalibrationCurve::identity()};
    auto const r = estimate_bias(config(model, 20, 10, {spec("em-bin:50"), spec("ew-bin:15")}, 1));
    ASSERT_TRUE(r[0].error.has_value());
    EXPECT_FALSE(r[1].error.has_value());
    EXPECT_TRUE(std::isfinite(r[1].mean_ece));
    EXPECT_THROW(estimate_bias(config(model, 0, 10, {spec("ew-bin:15")}, 1)), Error);
    EXPECT_THROW(estimate_bias(config(model, 10, 0, {spec("ew-bin:15")}, 1)), Error);
}

TEST(EstimateBias, JensenInsideEveryReplicate)
{
    SyntheticModel const model{ScoreDistribution::beta(2, 5), CalibrationCurve::logistic(3, 0.4)};
    for (double p : {1.0, 2.0, 3.0})
    {
        std::vector<EstimatorSpec> est{{EstimatorKind::ew_lb, 15, Norm(p)}, {EstimatorKind::ew_bin, 15, Norm(p)},
                                       {EstimatorKind::em_lb, 7, Norm(p)}, {EstimatorKind::em_bin, 7, Norm(p)}};
        auto const raw = run_replicates(model, 250, 50, est, 3, "jensen", {}, 1);
        for (std::size_t j = 0; j < 50; ++j)
        {
            EXPECT_GE(raw.values[0][j], raw.values[1][j] - 1e-12);
            EXPECT_GE(raw.values[2][j], raw.values[3][j] - 1e-12);
        }
    }
}

TEST(EstimateBias, SkewedIdentityOverestimates)
{
    SyntheticModel const model{ScoreDistribution::beta(2.7752, 0.0478), CalibrationCurve::identity()};
    auto const           r = estimate_bias(config(model, 200, 1000, {spec("ew-bin:15")}, 21));
    EXPECT_EQ(r[0].tce, 0.0);
    EXPECT_GT(r[0].bias, 0.01);
}

TEST(Heatmap, CellsSentinelAndInvalid)
{
    SyntheticModel const     model{ScoreDistribution::uniform(), CalibrationCurve::power(2.0)};
    std::vector<std::size_t> ns{20, 60};
    std::vector<int>         bs{1, 5, 40};
    auto const cells = bias_heatmap(model, ns, bs, EstimatorKind::em_bin, Norm(2.0), 30, 4);
    ASSERT_EQ(cells.size(), ns.size() * (bs.size() + 1));
    for (auto const& c : cells)
    {
        bool const expect_valid = c.bins == sweep_sentinel_bins || static_cast<std::size_t>(c.bins) <= c.n;
        EXPECT_EQ(c.valid, expect_valid) << c.n << " " << c.bins;
        if (c.valid)
        {
            EXPECT_FALSE(c.report.error);
            EXPECT_TRUE(std::isfinite(c.report.bias));
        }
        if (c.bins == sweep_sentinel_bins) { EXPECT_EQ(c.report.estimator.kind, EstimatorKind::em_sweep); }
    }
    auto const again = bias_heatmap(model, ns, bs, EstimatorKind::em_bin, Norm(2.0), 30, 4, 3);
    for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_TRUE(same(cells[i].report, again[i].report));

    auto const deb = bias_heatmap(model, std::vector<std::size_t>{20}, std::vector<int>{10, 11},
                                  EstimatorKind::em_debiased, Norm(2.0), 10, 4);
    EXPECT_TRUE(deb[0].valid);
    EXPECT_FALSE(deb[1].valid);
    EXPECT_THROW(bias_heatmap(model, ns, bs, EstimatorKind::kde, Norm(2.0), 10, 4), Error);
    EXPECT_THROW(bias_heatmap(model, std::vector<std::size_t>{}, bs, EstimatorKind::ew_bin, Norm(2.0), 10, 4), Error);
}

TEST(Heatmap, ManyBinsWorseThanBest)
{
    SyntheticModel const     model{ScoreDistribution::uniform(), CalibrationCurve::power(2.0)};
    std::vector<std::size_t> ns{100};
    std::vector<int>         bs{2, 5, 10, 100};
    auto const cells = bias_heatmap(model, ns, bs, EstimatorKind::ew_bin, Norm(2.0), 200, 6);
    double     best  = INFINITY;
    for (std::size_t i = 0; i + 1 < bs.size(); ++i) best = std::min(best, std::abs(cells[i].report.bias));
    EXPECT_GT(std::abs(cells[3].report.bias), best);
}

TEST(Heatmap, StderrScalesWithReplicates)
{
    SyntheticModel const     model{ScoreDistribution::beta(1.1, 0.1), CalibrationCurve::power(2.0)};
    std::vector<std::size_t> ns{200};
    std::vector<int>         bs{15};
    auto const small = bias_heatmap(model, ns, bs, EstimatorKind::ew_bin, Norm(2.0), 250, 8);
    auto const large = bias_heatmap(model, ns, bs, EstimatorKind::ew_bin, Norm(2.0), 1000, 8);
    double const ratio = large[0].report.stderr_ / small[0].report.stderr_;
    EXPECT_NEAR(ratio, 0.5, 0.1);
}

TEST(BiasVsTce, CalibratedRowAndOrdering)
{
    std::vector<double> ds{1, 2, 4, 8};
    auto const          rows = bias_vs_tce(ScoreDistribution::uniform(), spec("em-sweep"), 5000, 60, ds, 2);
    ASSERT_EQ(rows.size(), ds.size());
    EXPECT_EQ(rows[0].report.tce, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].d, ds[i]);
    for (std::size_t i = 1; i < rows.size(); ++i)
    {
        auto const& a = rows[i - 1].report;
        auto const& b = rows[i].report;
        EXPECT_GT(b.tce, a.tce);
        EXPECT_GE(b.mean_ece, a.mean_ece - 3 * std::hypot(a.stderr_, b.stderr_));
    }
    EXPECT_THROW(bias_vs_tce(ScoreDistribution::uniform(), spec("em-sweep"), 100, 10, std::vector<double>{0.5}, 2), Error);
}

TEST(BiasVsTce, DistributionMatters)
{
    std::vector<double> d1{1};
    auto const u = bias_vs_tce(ScoreDistribution::uniform(), spec("ew-bin:15"), 200, 200, d1, 3);
    auto const b = bias_vs_tce(ScoreDistribution::beta(1.1, 0.1), spec("ew-bin:15"), 200, 200, d1, 3);
    EXPECT_GT(u[0].report.mean_ece, 0.0);
    EXPECT_GT(b[0].report.mean_ece, 0.0);
    EXPECT_GT(std::abs(u[0].report.mean_ece - b[0].report.mean_ece),
              3 * std::hypot(u[0].report.stderr_, b[0].report.stderr_));
}

TEST(Power, ThresholdAndNullTarget)
{
    std::vector<double> targets{0.0, 0.05, 0.1, 0.2};
    auto const r = power_test(ScoreDistribution::uniform(), spec("em-sweep"), 1000, 0.05, targets, 400, 400, 5);
    ASSERT_EQ(r.type2.size(), targets.size());
    ASSERT_EQ(r.d_grid.size(), targets.size());
    EXPECT_GE(r.threshold, r.null_min);
    EXPECT_LE(r.threshold, r.null_max);
    EXPECT_EQ(r.d_grid[0], 1.0);
    double const se = std::sqrt(0.95 * 0.05 / 400);
    EXPECT_NEAR(r.type2[0], 0.95, 3 * std::sqrt(2.0) * se + 1.0 / 400);
    for (std::size_t i = 1; i < targets.size(); ++i)
        EXPECT_LE(r.type2[i], r.type2[i - 1] + 3 * std::sqrt(0.25 / 400) * std::sqrt(2.0));
    for (double t : r.type2)
    {
        EXPECT_GE(t, 0.0);
        EXPECT_LE(t, 1.0);
    }
    EXPECT_THROW(power_test(ScoreDistribution::uniform(), spec("em-sweep"), 100, 1.0, targets, 10, 10, 5), Error);
}

TEST(Power, UpperQuantile)
{
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    EXPECT_EQ(upper_quantile(v, 0.05), 95.0);
    EXPECT_EQ(upper_quantile(v, 0.999), 1.0);
    EXPECT_EQ(upper_quantile({3.0}, 0.05), 3.0);
}

TEST(Power, LargeMiscalibrationDetected)
{
    std::vector<double> targets{0.10};
    auto const r = power_test(ScoreDistribution::uniform(), spec("em-sweep"), 500, 0.05, targets, 300, 300, 6);
    EXPECT_LT(r.type2[0], 0.1);
}

TEST(Rank, IdenticalScoresTieOnFirstMethod)
{
    auto const                 val  = balanced_records(8);
    auto const                 eval = balanced_records(6);
    std::vector<EstimatorSpec> metrics{spec("ew-bin:15"), spec("em-sweep")};
    auto const                 rows = detail::rank_split(val, eval, metrics, 15, -1);
    ASSERT_EQ(rows.size(), 2u);
    for (auto const& r : rows)
    {
        EXPECT_EQ(r.ece[0], r.ece[1]);
        EXPECT_EQ(r.ece[1], r.ece[2]);
        EXPECT_EQ(r.winner, 0u);
        EXPECT_TRUE(r.tie);
        EXPECT_EQ(r.repeat, -1);
    }
}

TEST(Rank, TableShapeWinnersAndDeterminism)
{
    auto const recs = random_records(3000, 17);
    RankConfig cfg;
    cfg.val_size           = 1000;
    cfg.eval_size          = 2000;
    cfg.metrics            = {spec("ew-bin:15"), spec("em-sweep")};
    cfg.subsample_fraction = 0.2;
    cfg.repeats            = 4;
    cfg.seed               = 3;
    auto const rows        = rank_recalibrators(recs, cfg, 1);
    ASSERT_EQ(rows.size(), cfg.metrics.size() * (1 + cfg.repeats));
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        auto const& r = rows[i];
        EXPECT_EQ(r.repeat, i < 2 ? -1 : static_cast<int>((i - 2) / 2));
        EXPECT_EQ(r.metric.id(), cfg.metrics[i % 2].id());
        for (double v : r.ece) EXPECT_GE(v, r.ece[r.winner]);
        for (std::size_t k = 0; k < r.winner; ++k) EXPECT_GT(r.ece[k], r.ece[r.winner]);
    }
    auto const again = rank_recalibrators(recs, cfg, 3);
    ASSERT_EQ(again.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        EXPECT_EQ(again[i].ece, rows[i].ece);
        EXPECT_EQ(again[i].uncalibrated, rows[i].uncalibrated);
        EXPECT_EQ(again[i].winner, rows[i].winner);
    }
    cfg.eval_size = 2001;
    EXPECT_THROW(rank_recalibrators(recs, cfg), Error);
}

TEST(ParallelFor, LowestFailureWins)
{
    std::vector<int> hit(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { hit[i] = 1; });
    EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
    try
    {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 30 || i == 70) fail_input("at " + std::to_string(i));
        });
        FAIL();
    }
    catch (Error const& e)
    {
        EXPECT_NE(std::string(e.what()).find("at 30"), std::string::npos);
    }
}
