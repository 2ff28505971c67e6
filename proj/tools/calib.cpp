// calib: command-line front end for the calibration toolkit.

#include <calib/calib.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using calib::Json;

struct Common
{
    std::string format = "csv";
    std::string output;
    int         threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool threaded)
{
    cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    cmd->add_option("-o,--output", c.output, "Output file (default stdout)");
    if (threaded) cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

auto manifest(std::string const& command, Json params) -> Json
{
    return {{"tool", "calib"}, {"version", calib::version}, {"command", command}, {"params", std::move(params)}};
}

/// Writes `body` after the manifest: a comment line for CSV, a key for JSON.
void emit(Common const& c, Json const& man, std::string const& csv_body, Json json_body)
{
    std::ostringstream out;
    if (c.format == "json")
    {
        Json doc{{"manifest", man}};
        for (auto& [k, v] : json_body.items()) doc[k] = v;
        out << doc.dump(2) << '\n';
    }
    else
    {
        out << "# calib " << calib::version << ' ' << man.dump() << '\n' << csv_body;
    }
    if (c.output.empty())
    {
        std::cout << out.str() << std::flush;
        return;
    }
    std::ofstream f(c.output, std::ios::binary);
    if (!f) calib::fail_input("cannot open output file: " + c.output);
    f << out.str();
    if (!f) calib::fail_input("write failed: " + c.output);
}

auto parse_metrics(std::vector<std::string> const& names, int bins, double p) -> std::vector<calib::EstimatorSpec>
{
    std::vector<calib::EstimatorSpec> out;
    for (auto const& list : names)
        for (auto item : calib::split(list, ','))
            if (!calib::trim(item).empty()) out.push_back(calib::parse_estimator(item, bins, calib::Norm(p)));
    if (out.empty()) calib::fail_input("no metric given");
    return out;
}

auto parse_real_list(std::string const& text, std::string const& what) -> std::vector<double>
{
    std::vector<double> out;
    for (auto item : calib::split(text, ','))
    {
        auto v = calib::parse_real(item);
        if (!v) calib::fail_input("bad number in " + what + ": '" + std::string(item) + "'");
        out.push_back(*v);
    }
    if (out.empty()) calib::fail_input(what + " is empty");
    return out;
}

template <typename Int>
auto parse_int_list(std::string const& text, std::string const& what) -> std::vector<Int>
{
    std::vector<Int> out;
    for (auto item : calib::split(text, ','))
    {
        auto v = calib::parse_int(item);
        if (!v || *v < 1) calib::fail_input("bad entry in " + what + ": '" + std::string(item) + "'");
        out.push_back(static_cast<Int>(*v));
    }
    if (out.empty()) calib::fail_input(what + " is empty");
    return out;
}

auto ids(std::vector<calib::EstimatorSpec> const& specs) -> Json
{
    Json out = Json::array();
    for (auto const& s : specs) out.push_back(s.id());
    return out;
}

auto read_json(std::string const& path) -> Json
{
    std::ifstream f(path);
    if (!f) calib::fail_input("cannot open file: " + path);
    try
    {
        return Json::parse(f);
    }
    catch (Json::exception const& e)
    {
        calib::fail_input("bad JSON in " + path + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Calibration error estimation and simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("calib ") + calib::version);

    // estimate
    Common                   est_c;
    std::string              est_file;
    std::vector<std::string> est_metrics{"ew-bin"};
    int                      est_bins = 15;
    double                   est_p    = 2.0;
    bool                     est_logits = false;
    auto* est = app.add_subcommand("estimate", "Estimate calibration error of a scores file");
    est->add_option("file", est_file, "Scores CSV (score,label)")->required();
    est->add_option("--metric", est_metrics, "Metrics, e.g. ew-bin:15,em-sweep")
        ->expected(1)
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->capture_default_str();
    est->add_option("--bins", est_bins, "Default bin count")->capture_default_str();
    est->add_option("--p", est_p, "Norm exponent p >= 1")->capture_default_str();
    est->add_flag("--logits", est_logits, "Input is a logits CSV; use top-1 scores");
    add_common(est, est_c, false);

    // simulate
    Common                   sim_c;
    std::string              sim_dist  = "uniform";
    std::string              sim_curve = "identity";
    std::vector<std::string> sim_metrics{"ew-bin"};
    int                      sim_bins = 15;
    double                   sim_p    = 2.0;
    std::size_t              sim_n    = 200;
    std::size_t              sim_m    = calib::default_replicates;
    std::uint64_t            sim_seed = 0;
    bool                     sim_tce_only = false;
    std::string              sim_from_fit;
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo bias of estimators on a synthetic model");
    auto* sim_dist_opt  = sim->add_option("--dist", sim_dist, "uniform | beta:a,b")->capture_default_str();
    auto* sim_curve_opt = sim->add_option("--curve", sim_curve, "identity | power:d | logistic:a,c0 | glm:name,coefs")
                              ->capture_default_str();
    sim->add_option("--metric", sim_metrics, "Metrics")
        ->expected(1)
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->capture_default_str();
    sim->add_option("--bins", sim_bins, "Default bin count")->capture_default_str();
    sim->add_option("--p", sim_p, "Norm exponent")->capture_default_str();
    sim->add_option("--n", sim_n, "Samples per replicate")->capture_default_str();
    sim->add_option("--m", sim_m, "Replicates")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
    sim->add_flag("--tce-only", sim_tce_only, "Print the true calibration error only");
    sim->add_option("--from-fit", sim_from_fit, "Fit JSON from `calib fit`")
        ->excludes(sim_dist_opt)
        ->excludes(sim_curve_opt);
    add_common(sim, sim_c, true);

    // fit
    Common      fit_c;
    fit_c.format = "json";
    std::string fit_file;
    bool        fit_beta = false;
    bool        fit_glm  = false;
    auto* fit = app.add_subcommand("fit", "Fit a Beta score distribution and GLM calibration curves");
    fit->add_option("file", fit_file, "Scores CSV")->required();
    fit->add_flag("--beta", fit_beta, "Fit the Beta distribution");
    fit->add_flag("--glm", fit_glm, "Fit all 12 GLM candidates");
    add_common(fit, fit_c, false);

    // power
    Common        pow_c;
    std::string   pow_dist   = "uniform";
    std::string   pow_metric = "em-sweep";
    int           pow_bins   = 15;
    double        pow_p      = 2.0;
    std::size_t   pow_n      = 1000;
    double        pow_alpha  = 0.05;
    std::string   pow_tce    = "0.02,0.05,0.1";
    std::size_t   pow_m_null = calib::default_replicates;
    std::size_t   pow_m_alt  = calib::default_replicates;
    std::uint64_t pow_seed   = 0;
    auto* pow = app.add_subcommand("power", "Type II error of a miscalibration test");
    pow->add_option("--dist", pow_dist, "Score distribution")->capture_default_str();
    pow->add_option("--metric", pow_metric, "Metric")->capture_default_str();
    pow->add_option("--bins", pow_bins, "Default bin count")->capture_default_str();
    pow->add_option("--p", pow_p, "Norm exponent")->capture_default_str();
    pow->add_option("--n", pow_n, "Samples per replicate")->capture_default_str();
    pow->add_option("--alpha", pow_alpha, "Type I error target")->capture_default_str();
    pow->add_option("--tce", pow_tce, "Target TCE list")->capture_default_str();
    pow->add_option("--m-null", pow_m_null, "Null replicates")->capture_default_str();
    pow->add_option("--m-alt", pow_m_alt, "Alternative replicates per target")->capture_default_str();
    pow->add_option("--seed", pow_seed, "Seed")->capture_default_str();
    add_common(pow, pow_c, true);

    // heatmap
    Common        hm_c;
    std::string   hm_dist   = "uniform";
    std::string   hm_curve  = "identity";
    std::string   hm_metric = "ew-bin";
    double        hm_p      = 2.0;
    std::string   hm_n      = "200,1000,5000";
    std::string   hm_bins   = "2,5,15,50";
    std::size_t   hm_m      = calib::default_replicates;
    std::uint64_t hm_seed   = 0;
    auto* hm = app.add_subcommand("heatmap", "Bias and spread over (n, bins) grids");
    hm->add_option("--dist", hm_dist, "Score distribution")->capture_default_str();
    hm->add_option("--curve", hm_curve, "Calibration curve")->capture_default_str();
    hm->add_option("--metric", hm_metric, "Binned metric kind")->capture_default_str();
    hm->add_option("--p", hm_p, "Norm exponent")->capture_default_str();
    hm->add_option("--n", hm_n, "Sample sizes")->capture_default_str();
    hm->add_option("--bins", hm_bins, "Bin counts")->capture_default_str();
    hm->add_option("--m", hm_m, "Replicates")->capture_default_str();
    hm->add_option("--seed", hm_seed, "Seed")->capture_default_str();
    add_common(hm, hm_c, true);

    // bias-vs-tce
    Common        bvt_c;
    std::string   bvt_dist   = "uniform";
    std::string   bvt_metric = "ew-bin";
    int           bvt_bins   = 15;
    double        bvt_p      = 2.0;
    std::size_t   bvt_n      = 200;
    std::size_t   bvt_m      = calib::default_replicates;
    std::string   bvt_d      = "1,2,4,6,8,10";
    std::uint64_t bvt_seed   = 0;
    auto* bvt = app.add_subcommand("bias-vs-tce", "Mean estimate against TCE over the c^d family");
    bvt->add_option("--dist", bvt_dist, "Score distribution")->capture_default_str();
    bvt->add_option("--metric", bvt_metric, "Metric")->capture_default_str();
    bvt->add_option("--bins", bvt_bins, "Default bin count")->capture_default_str();
    bvt->add_option("--p", bvt_p, "Norm exponent")->capture_default_str();
    bvt->add_option("--n", bvt_n, "Samples per replicate")->capture_default_str();
    bvt->add_option("--m", bvt_m, "Replicates")->capture_default_str();
    bvt->add_option("--d", bvt_d, "Exponents in [1, 10]")->capture_default_str();
    bvt->add_option("--seed", bvt_seed, "Seed")->capture_default_str();
    add_common(bvt, bvt_c, true);

    // rank
    Common                   rk_c;
    std::string              rk_logits;
    calib::RankConfig        rk;
    std::vector<std::string> rk_metrics{"ew-bin:15,em-sweep"};
    double                   rk_p = 2.0;
    auto* rank = app.add_subcommand("rank", "Rank recalibration methods under each metric");
    rank->add_option("--logits", rk_logits, "Logits CSV (label,logit_0,...)")->required();
    rank->add_option("--val", rk.val_size, "Validation size")->capture_default_str();
    rank->add_option("--eval", rk.eval_size, "Evaluation size")->capture_default_str();
    rank->add_option("--metric", rk_metrics, "Metrics")
        ->expected(1)
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->capture_default_str();
    rank->add_option("--p", rk_p, "Norm exponent")->capture_default_str();
    rank->add_option("--subsample", rk.subsample_fraction, "Subsample fraction")->capture_default_str();
    rank->add_option("--repeats", rk.repeats, "Subsample repeats")->capture_default_str();
    rank->add_option("--hist-bins", rk.histogram_bins, "Histogram binning bins")->capture_default_str();
    rank->add_option("--seed", rk.seed, "Seed")->capture_default_str();
    add_common(rank, rk_c, true);

    // convert-logits
    std::string cv_in;
    std::string cv_out;
    double      cv_t = 1.0;
    auto* cv = app.add_subcommand("convert-logits", "Convert a logits CSV into top-1 scores");
    cv->add_option("file", cv_in, "Logits CSV")->required();
    cv->add_option("-o,--output", cv_out, "Output scores CSV (default stdout)");
    cv->add_option("--temperature", cv_t, "Softmax temperature")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try
    {
        if (est->parsed())
        {
            auto const specs = parse_metrics(est_metrics, est_bins, est_p);
            auto const data  = est_logits ? calib::to_top1_scores(calib::load_logits(est_file))
                                          : calib::load_scores(est_file);
            calib::SortedDataset const sorted(data);
            std::ostringstream         csv;
            Json                       rows = Json::array();
            csv << "metric,value,bins\n";
            for (auto const& s : specs)
            {
                auto const r = calib::evaluate(s, sorted);
                csv << s.id() << ',' << calib::format_real(r.value) << ','
                    << (r.bins_used ? std::to_string(*r.bins_used) : std::string{}) << '\n';
                rows.push_back({{"metric", s.id()},
                                {"value", r.value},
                                {"bins", r.bins_used ? Json(*r.bins_used) : Json(nullptr)}});
            }
            Json params{{"file", est_file}, {"logits", est_logits}, {"metrics", ids(specs)}, {"p", est_p},
                        {"n", data.n()}};
            emit(est_c, manifest("estimate", params), csv.str(), {{"estimates", rows}});
        }
        else if (sim->parsed())
        {
            auto const specs = parse_metrics(sim_metrics, sim_bins, sim_p);
            calib::SyntheticModel model{calib::parse_distribution(sim_dist), calib::parse_curve(sim_curve)};
            Json                  fit_source = nullptr;
            if (!sim_from_fit.empty())
            {
                auto const doc = read_json(sim_from_fit);
                if (!doc.contains("beta")) calib::fail_input("fit JSON has no beta entry: " + sim_from_fit);
                auto const& b = doc.at("beta");
                model.dist = calib::ScoreDistribution::beta(b.at("alpha").get<double>(), b.at("beta").get<double>());
                if (doc.contains("glm") && !doc.at("glm").empty())
                    model.curve = calib::CalibrationCurve::glm(calib::glm_from_json(doc.at("glm").at(0)));
                else
                    model.curve = calib::CalibrationCurve::identity();
                fit_source = sim_from_fit;
            }
            Json params{{"dist", model.dist.name()}, {"curve", model.curve.name()}, {"from_fit", fit_source},
                        {"p", sim_p}};
            if (sim_tce_only)
            {
                double const t = calib::tce(model, calib::Norm(sim_p));
                std::ostringstream csv;
                csv << "dist,curve,p,tce\n"
                    << model.dist.name() << ',' << model.curve.name() << ',' << calib::format_real(sim_p) << ','
                    << calib::format_real(t) << '\n';
                emit(sim_c, manifest("simulate", params), csv.str(), {{"tce", t}});
            }
            else
            {
                calib::SimulationConfig cfg{model, sim_n, sim_m, specs, sim_seed, sim_c.threads};
                auto const              reports = calib::estimate_bias(cfg);
                params["metrics"] = ids(specs);
                params["n"]       = sim_n;
                params["m"]       = sim_m;
                params["seed"]    = sim_seed;
                std::ostringstream csv;
                calib::write_bias_csv(csv, reports);
                Json rows = Json::array();
                for (auto const& r : reports) rows.push_back(calib::to_json(r));
                emit(sim_c, manifest("simulate", params), csv.str(), {{"reports", rows}});
            }
        }
        else if (fit->parsed())
        {
            if (!fit_beta && !fit_glm) fit_beta = fit_glm = true;
            auto const data = calib::load_scores(fit_file);
            Json       body = Json::object();
            std::ostringstream csv;
            csv << "model,param1,param2,nll,aic\n";
            if (fit_beta)
            {
                auto const f = calib::fit_beta_mle(data);
                body["beta"] = calib::to_json(f);
                csv << "beta," << calib::format_real(f.alpha) << ',' << calib::format_real(f.beta) << ','
                    << calib::format_real(f.nll) << ",\n";
            }
            if (fit_glm)
            {
                auto const sel = calib::select_glm_by_aic(data);
                if (sel.fits.empty()) calib::fail_precondition("glm fit failed for every candidate");
                Json arr = Json::array();
                for (auto const& g : sel.fits)
                {
                    arr.push_back(calib::to_json(g));
                    csv << g.model.name() << ',' << calib::format_real(g.model.b0) << ','
                        << calib::format_real(g.model.b1) << ',' << calib::format_real(g.nll) << ','
                        << calib::format_real(g.aic) << '\n';
                }
                body["glm"] = arr;
                if (!sel.failures.empty())
                {
                    Json fails = Json::array();
                    for (auto const& [name, why] : sel.failures) fails.push_back({{"model_name", name}, {"error", why}});
                    body["glm_failures"] = fails;
                }
            }
            Json params{{"file", fit_file}, {"beta", fit_beta}, {"glm", fit_glm}, {"n", data.n()}};
            emit(fit_c, manifest("fit", params), csv.str(), body);
        }
        else if (pow->parsed())
        {
            auto const spec    = calib::parse_estimator(pow_metric, pow_bins, calib::Norm(pow_p));
            auto const dist    = calib::parse_distribution(pow_dist);
            auto const targets = parse_real_list(pow_tce, "--tce");
            auto const rep = calib::power_test(dist, spec, pow_n, pow_alpha, targets, pow_m_null, pow_m_alt, pow_seed,
                                               pow_c.threads);
            Json params{{"dist", dist.name()}, {"metric", spec.id()}, {"p", pow_p},          {"n", pow_n},
                        {"alpha", pow_alpha},  {"tce", targets},      {"m_null", pow_m_null}, {"m_alt", pow_m_alt},
                        {"seed", pow_seed}};
            std::ostringstream csv;
            calib::write_power_csv(csv, rep);
            emit(pow_c, manifest("power", params), csv.str(), {{"report", calib::to_json(rep)}});
        }
        else if (hm->parsed())
        {
            calib::SyntheticModel const model{calib::parse_distribution(hm_dist), calib::parse_curve(hm_curve)};
            auto const kind   = calib::parse_estimator_kind(hm_metric);
            auto const n_grid = parse_int_list<std::size_t>(hm_n, "--n");
            auto const b_grid = parse_int_list<int>(hm_bins, "--bins");
            auto const cells  = calib::bias_heatmap(model, n_grid, b_grid, kind, calib::Norm(hm_p), hm_m, hm_seed,
                                                    hm_c.threads);
            Json params{{"dist", model.dist.name()}, {"curve", model.curve.name()}, {"metric", hm_metric},
                        {"p", hm_p}, {"n", n_grid}, {"bins", b_grid}, {"m", hm_m}, {"seed", hm_seed}};
            std::ostringstream csv;
            calib::write_heatmap_csv(csv, cells);
            Json rows = Json::array();
            for (auto const& c : cells) rows.push_back(calib::to_json(c));
            emit(hm_c, manifest("heatmap", params), csv.str(), {{"cells", rows}});
        }
        else if (bvt->parsed())
        {
            auto const spec   = calib::parse_estimator(bvt_metric, bvt_bins, calib::Norm(bvt_p));
            auto const dist   = calib::parse_distribution(bvt_dist);
            auto const d_grid = parse_real_list(bvt_d, "--d");
            auto const rows   = calib::bias_vs_tce(dist, spec, bvt_n, bvt_m, d_grid, bvt_seed, bvt_c.threads);
            Json params{{"dist", dist.name()}, {"metric", spec.id()}, {"p", bvt_p}, {"n", bvt_n},
                        {"m", bvt_m},          {"d", d_grid},         {"seed", bvt_seed}};
            std::ostringstream csv;
            calib::write_bias_vs_tce_csv(csv, rows);
            Json arr = Json::array();
            for (auto const& r : rows) arr.push_back(calib::to_json(r));
            emit(bvt_c, manifest("bias-vs-tce", params), csv.str(), {{"rows", arr}});
        }
        else if (rank->parsed())
        {
            rk.metrics         = parse_metrics(rk_metrics, 15, rk_p);
            auto const records = calib::load_logits(rk_logits);
            auto const rows    = calib::rank_recalibrators(records, rk, rk_c.threads);
            Json params{{"logits", rk_logits},
                        {"records", records.size()},
                        {"val", rk.val_size},
                        {"eval", rk.eval_size},
                        {"metrics", ids(rk.metrics)},
                        {"subsample", rk.subsample_fraction},
                        {"repeats", rk.repeats},
                        {"hist_bins", rk.histogram_bins},
                        {"seed", rk.seed}};
            std::ostringstream csv;
            calib::write_rank_csv(csv, rows);
            Json arr = Json::array();
            for (auto const& r : rows) arr.push_back(calib::to_json(r));
            emit(rk_c, manifest("rank", params), csv.str(), {{"rows", arr}});
        }
        else if (cv->parsed())
        {
            auto const         data = calib::to_top1_scores(calib::load_logits(cv_in), cv_t);
            std::ostringstream out;
            out << "# calib " << calib::version << ' '
                << manifest("convert-logits", {{"file", cv_in}, {"temperature", cv_t}}).dump() << '\n';
            calib::save_scores(out, data);
            if (cv_out.empty())
                std::cout << out.str() << std::flush;
            else
            {
                std::ofstream f(cv_out, std::ios::binary);
                if (!(f << out.str())) calib::fail_input("cannot write output file: " + cv_out);
            }
        }
    }
    catch (calib::Error const& e)
    {
        std::cerr << "calib: " << e.what() << '\n';
        return e.kind() == calib::ErrorKind::precondition ? 2 : 1;
    }
    catch (std::exception const& e)
    {
        std::cerr << "calib: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
