#include "adaptkan/cli.hpp"

#include "adaptkan/clf.hpp"
#include "adaptkan/csv.hpp"
#include "adaptkan/errors.hpp"
#include "adaptkan/model_io.hpp"
#include "adaptkan/ood.hpp"
#include "adaptkan/optim.hpp"
#include "adaptkan/tasks.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace adaptkan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

// Walks a dotted path; throws ConfigError naming the first missing key.
const json& require(const json& root, const std::string& path) {
    const json* node = &root;
    std::size_t start = 0;
    while (start <= path.size()) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) {
            throw ConfigError("missing config key '" + path + "'");
        }
        node = &node->at(key);
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return *node;
}

template <class T>
T value_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

template <class T>
T as(const json& j, const std::string& what) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + what + "': " + e.what());
    }
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

fs::path out_path(const Globals& g, const std::string& name) {
    std::error_code ec;
    fs::create_directories(g.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + g.out_dir + "': " + ec.message());
    return fs::path(g.out_dir) / name;
}

std::vector<std::size_t> read_shape(const json& cfg) {
    const auto shape = as<std::vector<std::size_t>>(require(cfg, "shape"), "shape");
    if (shape.size() < 2) throw ConfigError("config key 'shape' needs at least two widths");
    return shape;
}

InitOptions read_init(const json& cfg, std::uint64_t seed) {
    InitOptions init;
    init.seed = seed;
    if (cfg.contains("init")) {
        const json& j = cfg.at("init");
        init.mode = parse_init_mode(value_or<std::string>(j, "mode", "kan"));
        init.noise = value_or(j, "noise", init.noise);
        init.omega = value_or(j, "omega", init.omega);
        init.domain_lo = value_or(j, "domain_lo", init.domain_lo);
        init.domain_hi = value_or(j, "domain_hi", init.domain_hi);
        if (j.contains("slope")) init.slope = as<double>(j.at("slope"), "init.slope");
    }
    if (cfg.contains("adapt")) init.adapt = adapt_config_from_json(cfg.at("adapt"));
    return init;
}

AdaptMode read_adapt_mode(const json& cfg) {
    const std::string mode = value_or<std::string>(cfg, "adapt_mode", "automatic");
    if (mode == "automatic") return AdaptMode::automatic;
    if (mode == "manual") return AdaptMode::manual;
    if (mode == "off") return AdaptMode::off;
    throw ConfigError("unknown adapt_mode '" + mode + "'");
}

TrainPlan read_plan(const json& cfg, std::uint64_t seed) {
    const json& jp = require(cfg, "plan");
    TrainPlan plan;
    const json& rounds = require(cfg, "plan.rounds");
    if (!rounds.is_array()) throw ConfigError("config key 'plan.rounds' must be a list");
    for (const json& r : rounds) {
        Round round;
        round.lr = as<double>(require(r, "lr"), "plan.rounds[].lr");
        round.steps = as<std::size_t>(require(r, "steps"), "plan.rounds[].steps");
        round.omega = as<int>(require(r, "omega"), "plan.rounds[].omega");
        plan.rounds.push_back(round);
    }
    plan.optimizer = parse_optimizer(value_or<std::string>(jp, "optimizer", "adam"));
    plan.weight_decay = value_or(jp, "weight_decay", plan.weight_decay);
    plan.lr_decay = value_or(jp, "lr_decay", plan.lr_decay);
    plan.batch_size = value_or(jp, "batch_size", plan.batch_size);
    plan.sparsity_lambda = value_or(jp, "sparsity_lambda", plan.sparsity_lambda);
    plan.manual_interval = value_or(jp, "manual_interval", plan.manual_interval);
    plan.record = value_or(jp, "record", plan.record);
    plan.seed = seed;
    plan.validate();
    return plan;
}

json plan_to_json(const TrainPlan& plan) {
    json rounds = json::array();
    for (const Round& r : plan.rounds) rounds.push_back({{"lr", r.lr}, {"steps", r.steps}, {"omega", r.omega}});
    return {{"rounds", rounds},
            {"optimizer", to_string(plan.optimizer)},
            {"weight_decay", plan.weight_decay},
            {"lr_decay", plan.lr_decay},
            {"batch_size", plan.batch_size},
            {"sparsity_lambda", plan.sparsity_lambda},
            {"manual_interval", plan.manual_interval},
            {"record", plan.record},
            {"seed", plan.seed}};
}

// Feature columns then one target column.
Dataset dataset_from_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.values.cols() < 2) throw DataError("'" + path + "' needs feature columns and a target column");
    Dataset d;
    d.x = t.values.leftCols(t.values.cols() - 1);
    d.y = t.values.rightCols(1);
    return d;
}

std::uint64_t seed_of(const Globals& g, const json& cfg) {
    if (g.seed) return *g.seed;
    return value_or<std::uint64_t>(cfg, "seed", 0);
}

std::string fmt(double v) {
    return format_real(v);
}

int cmd_train(const Globals& g, std::ostream& out) {
    if (g.config.empty()) throw ConfigError("train needs --config");
    const json cfg = read_json(g.config);
    const std::uint64_t seed = seed_of(g, cfg);
    const std::vector<std::size_t> shape = read_shape(cfg);
    const TrainPlan plan = read_plan(cfg, seed);

    Dataset train_set;
    Dataset test_set;
    if (cfg.contains("task")) {
        SymbolicTask task = find_task(as<std::string>(cfg.at("task"), "task"));
        task.n_train = value_or(cfg, "n_train", task.n_train);
        task.n_test = value_or(cfg, "n_test", task.n_test);
        std::tie(train_set, test_set) = generate(task, seed);
    } else {
        train_set = dataset_from_csv(as<std::string>(require(cfg, "data.train"), "data.train"));
        test_set = dataset_from_csv(as<std::string>(require(cfg, "data.test"), "data.test"));
    }
    if (static_cast<std::size_t>(train_set.x.cols()) != shape.front()) {
        throw ConfigError("config key 'shape' starts at " + std::to_string(shape.front()) +
                          " but the data has " + std::to_string(train_set.x.cols()) + " features");
    }

    AdaptKanNet net = AdaptKanNet::init(shape, read_init(cfg, seed));
    net.set_adapt_mode(read_adapt_mode(cfg));
    const std::vector<RoundRecord> history = train(net, train_set, test_set, plan);

    std::vector<std::vector<std::string>> rows;
    bool failed = false;
    for (const RoundRecord& r : history) {
        rows.push_back({std::to_string(r.round), std::to_string(r.omega), fmt(r.lr), fmt(r.train_rmse),
                        fmt(r.test_rmse), std::to_string(r.adapt_events), r.fail ? "1" : "0"});
        failed = failed || r.fail;
    }
    write_csv_rows(out_path(g, "metrics.csv").string(),
                   {"round", "omega", "lr", "train_rmse", "test_rmse", "adapt_events", "fail"}, rows);
    save_model(out_path(g, "model.json").string(), net,
               {{"seed", seed}, {"plan", plan_to_json(plan)}, {"shape", shape}});
    out << "best_test_rmse " << fmt(best_test_rmse(history)) << '\n';
    return failed ? kExitNumerical : kExitOk;
}

int cmd_eval(const Globals& g, const std::string& model_path, const std::string& data_path,
             const std::string& pred_name, std::ostream& out) {
    const ModelFile model = load_model(model_path);
    const Dataset data = dataset_from_csv(data_path);
    const Matrix pred = model.net.predict(data.x);
    out << "rmse " << fmt(rmse(pred, data.y)) << '\n';
    if (!pred_name.empty()) {
        std::vector<std::string> header;
        for (Eigen::Index c = 0; c < pred.cols(); ++c) header.push_back("pred" + std::to_string(c));
        write_csv(out_path(g, pred_name).string(), header, pred);
    }
    return kExitOk;
}

json scorer_to_json(const OodScorer& scorer) {
    json features = json::array();
    for (std::size_t j = 0; j < scorer.num_features(); ++j) {
        const FeatureHistogram& h = scorer.histogram(j);
        const auto counts = h.counts();
        features.push_back({{"a", h.domain().a()},
                            {"b", h.domain().b()},
                            {"bins", h.domain().omega()},
                            {"hist", std::vector<double>(counts.begin(), counts.end())},
                            {"ood_hist", {h.ood_counts()[0], h.ood_counts()[1]}},
                            {"ood_a", h.ood_a()},
                            {"ood_b", h.ood_b()}});
    }
    return {{"format_version", 1}, {"features", features}, {"widened", scorer.widened()}};
}

OodScorer scorer_from_json(const json& doc) {
    std::vector<FeatureHistogram> hists;
    for (const json& f : require(doc, "features")) {
        const GridDomain dom(as<double>(require(f, "a"), "a"), as<double>(require(f, "b"), "b"),
                             as<int>(require(f, "bins"), "bins"));
        const auto ood = as<std::vector<double>>(require(f, "ood_hist"), "ood_hist");
        if (ood.size() != 2) throw ConfigError("scorer ood_hist must have 2 entries");
        hists.push_back(FeatureHistogram::from_state(
            dom, 1.0, as<std::vector<double>>(require(f, "hist"), "hist"), {ood[0], ood[1]},
            as<double>(require(f, "ood_a"), "ood_a"), as<double>(require(f, "ood_b"), "ood_b")));
    }
    return OodScorer::from_histograms(std::move(hists));
}

std::vector<double> read_scores(const std::string& path) {
    const CsvTable t = read_csv(path);
    const Eigen::Index c = t.column("score");
    std::vector<double> s(static_cast<std::size_t>(t.values.rows()));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) s[static_cast<std::size_t>(r)] = t.values(r, c);
    return s;
}

json read_clf_config(const Globals& g, ClfLossConfig& loss, ClfTrainPlan& plan) {
    if (g.config.empty()) throw ConfigError("clf train needs --config");
    const json cfg = read_json(g.config);
    plan.seed = seed_of(g, cfg);
    const json& jp = require(cfg, "plan");
    plan.epochs = as<std::size_t>(require(cfg, "plan.epochs"), "plan.epochs");
    plan.batch_size = value_or(jp, "batch_size", plan.batch_size);
    plan.lr = value_or(jp, "lr", plan.lr);
    plan.lr_decay = value_or(jp, "lr_decay", plan.lr_decay);
    plan.optimizer = parse_optimizer(value_or<std::string>(jp, "optimizer", "adam"));
    plan.weight_decay = value_or(jp, "weight_decay", plan.weight_decay);
    plan.record = value_or(jp, "record", plan.record);
    plan.manual_interval = value_or(jp, "manual_interval", plan.manual_interval);
    if (cfg.contains("loss")) {
        const json& jl = cfg.at("loss");
        if (jl.contains("lambda")) {
            const auto l = as<std::vector<double>>(jl.at("lambda"), "loss.lambda");
            if (l.size() != 5) throw ConfigError("config key 'loss.lambda' needs 5 weights");
            std::copy(l.begin(), l.end(), loss.lambda.begin());
        }
        loss.tau = value_or(jl, "tau", loss.tau);
        loss.k1 = value_or(jl, "k1", loss.k1);
        loss.k2 = value_or(jl, "k2", loss.k2);
        loss.eps = value_or(jl, "eps", loss.eps);
        loss.output_mode = parse_clf_output_mode(value_or<std::string>(jl, "output_mode", "squared_norm"));
    }
    return cfg;
}

int cmd_clf_train(const Globals& g, std::ostream& out) {
    ClfLossConfig loss;
    ClfTrainPlan plan;
    const json cfg = read_clf_config(g, loss, plan);
    const std::vector<std::size_t> shape = read_shape(cfg);
    loss.output_dim = shape.back();
    loss.validate();

    const auto n_train = value_or<std::size_t>(cfg, "n_train", 8000);
    const auto n_test = value_or<std::size_t>(cfg, "n_test", 2000);
    const Matrix train_x = uniform_points(n_train, plan.seed);
    const Matrix val_x = uniform_points(n_test, plan.seed + 1);

    Poisoner poison;
    if (value_or(cfg, "poison", false)) {
        PoisonPlan pp;
        pp.total_epochs = plan.epochs;
        pp.seed = plan.seed;
        poison = Poisoner(pp);
    }

    AdaptKanNet net = AdaptKanNet::init(shape, read_init(cfg, plan.seed));
    net.set_adapt_mode(read_adapt_mode(cfg));
    const std::vector<ClfEpochRecord> history = train_clf(net, train_x, val_x, plan, loss, poison);

    std::vector<std::vector<std::string>> rows;
    bool failed = false;
    for (const ClfEpochRecord& r : history) {
        rows.push_back({std::to_string(r.epoch), fmt(r.train_loss), fmt(r.val_loss),
                        std::to_string(r.adapt_events), r.poisoned ? "1" : "0", r.fail ? "1" : "0"});
        failed = failed || r.fail;
    }
    write_csv_rows(out_path(g, "clf_metrics.csv").string(),
                   {"epoch", "train_loss", "val_loss", "adapt_events", "poisoned", "fail"}, rows);
    save_model(out_path(g, "clf_model.json").string(), net,
               {{"seed", plan.seed}, {"output_mode", to_string(loss.output_mode)}, {"shape", shape}});
    out << "final_val_loss " << fmt(history.back().val_loss) << '\n';
    return failed ? kExitNumerical : kExitOk;
}

struct SimulateArgs {
    bool analytical = false;
    std::string model;
    std::string output_mode;
    std::size_t trajectories = 1000;
    double dt = 0.01;
    double horizon = 10.0;
    std::string report = "conformal_report.csv";
};

int cmd_clf_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
    std::optional<ModelFile> model;
    ClfProvider provider;
    if (a.analytical) {
        provider = analytical_clf;
    } else {
        if (a.model.empty()) throw ConfigError("clf simulate needs --analytical or --model");
        model = load_model(a.model);
        std::string mode = a.output_mode;
        if (mode.empty()) mode = value_or<std::string>(model->metadata, "output_mode", "squared_norm");
        provider = network_provider(model->net, parse_clf_output_mode(mode));
    }
    const std::uint64_t seed = g.seed.value_or(0);
    const std::vector<Vec2> starts = uniform_starts(a.trajectories, seed);
    SimOptions opts;
    opts.dt = a.dt;
    opts.horizon = a.horizon;
    opts.keep_states = false;

    std::vector<std::vector<std::string>> rows;
    std::vector<double> distances;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const Trajectory t = simulate(starts[i], provider, opts);
        distances.push_back(t.final_distance());
        rows.push_back({std::to_string(i), fmt(starts[i][0]), fmt(starts[i][1]), fmt(t.final[0]),
                        fmt(t.final[1]), fmt(t.final_distance()), t.failed ? "1" : "0"});
    }
    write_csv_rows(out_path(g, a.report).string(),
                   {"index", "x0_1", "x0_2", "xf_1", "xf_2", "distance", "failed"}, rows);
    const ConformalReport report(std::move(distances));
    out << "confidence_C0.5 " << fmt(report.confidence(0.5)) << '\n';
    return kExitOk;
}

int cmd_clf_conformal(const std::string& report_path, std::optional<double> c,
                      std::optional<double> delta, std::ostream& out) {
    const CsvTable t = read_csv(report_path);
    const Eigen::Index col = t.column("distance");
    std::vector<double> r(static_cast<std::size_t>(t.values.rows()));
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) r[static_cast<std::size_t>(i)] = t.values(i, col);
    const ConformalReport report(std::move(r));
    if (!c && !delta) throw ConfigError("clf conformal needs --C or --delta");
    if (c) out << "confidence " << fmt(report.confidence(*c)) << '\n';
    if (delta) out << "quantile " << fmt(report.quantile(*delta)) << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive-domain Kolmogorov-Arnold networks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--seed", g.seed, "Random seed (overrides the config)");
    app.add_option("--out-dir", g.out_dir, "Directory for output files");

    auto* train_cmd = app.add_subcommand("train", "Train a network from a JSON config");

    std::string eval_model;
    std::string eval_data;
    std::string eval_pred;
    auto* eval_cmd = app.add_subcommand("eval", "RMSE of a saved model on a CSV dataset");
    eval_cmd->add_option("--model", eval_model)->required();
    eval_cmd->add_option("--data", eval_data, "CSV with feature columns then the target")->required();
    eval_cmd->add_option("--predictions", eval_pred, "Write predictions to this file in --out-dir");

    auto* ood_cmd = app.add_subcommand("ood", "Histogram OOD scoring");
    ood_cmd->require_subcommand(1);
    std::string fit_features;
    int fit_bins = kOodBinsHist;
    std::string fit_out = "scorer.json";
    auto* ood_fit = ood_cmd->add_subcommand("fit", "Fit per-feature histograms");
    ood_fit->add_option("--features", fit_features)->required();
    ood_fit->add_option("--bins", fit_bins)->capture_default_str();
    ood_fit->add_option("--out", fit_out)->capture_default_str();
    std::string score_scorer;
    std::string score_features;
    std::string score_logits;
    double score_lambda = kOodMspLambda;
    std::string score_out = "scores.csv";
    auto* ood_score = ood_cmd->add_subcommand("score", "Score feature rows");
    ood_score->add_option("--scorer", score_scorer)->required();
    ood_score->add_option("--features", score_features)->required();
    ood_score->add_option("--logits", score_logits, "CSV of logits; enables the MSP term");
    ood_score->add_option("--lambda", score_lambda)->capture_default_str();
    ood_score->add_option("--out", score_out)->capture_default_str();
    std::string auroc_id;
    std::string auroc_ood;
    auto* ood_auroc = ood_cmd->add_subcommand("auroc", "AUROC of two score files");
    ood_auroc->add_option("--id", auroc_id)->required();
    ood_auroc->add_option("--ood", auroc_ood)->required();

    auto* clf_cmd = app.add_subcommand("clf", "Control Lyapunov function tools");
    clf_cmd->require_subcommand(1);
    auto* clf_train = clf_cmd->add_subcommand("train", "Train a CLF candidate");
    SimulateArgs sim;
    auto* clf_sim = clf_cmd->add_subcommand("simulate", "Closed-loop RK4 runs from uniform starts");
    clf_sim->add_flag("--analytical", sim.analytical, "Use the closed-form CLF");
    clf_sim->add_option("--model", sim.model);
    clf_sim->add_option("--output-mode", sim.output_mode, "direct or squared_norm");
    clf_sim->add_option("--trajectories", sim.trajectories)->capture_default_str();
    clf_sim->add_option("--dt", sim.dt)->capture_default_str();
    clf_sim->add_option("--horizon", sim.horizon)->capture_default_str();
    clf_sim->add_option("--report", sim.report)->capture_default_str();
    std::string conf_report;
    std::optional<double> conf_c;
    std::optional<double> conf_delta;
    auto* clf_conf = clf_cmd->add_subcommand("conformal", "Confidence or quantile of a report");
    clf_conf->add_option("--report", conf_report)->required();
    clf_conf->add_option("--C", conf_c);
    clf_conf->add_option("--delta", conf_delta);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(g, out);
        if (*eval_cmd) return cmd_eval(g, eval_model, eval_data, eval_pred, out);
        if (*ood_fit) {
            const CsvTable t = read_csv(fit_features);
            const OodScorer scorer = OodScorer::fit(t.values, fit_bins);
            std::ofstream f(out_path(g, fit_out));
            if (!f) throw IoError("cannot write scorer");
            f << scorer_to_json(scorer).dump(1) << '\n';
            for (std::size_t j : scorer.widened()) {
                err << "note: feature " << j << " was constant; bounds widened by 1e-6\n";
            }
            return kExitOk;
        }
        if (*ood_score) {
            const OodScorer scorer = scorer_from_json(read_json(score_scorer));
            const CsvTable feats = read_csv(score_features);
            std::optional<CsvTable> logits;
            if (!score_logits.empty()) {
                logits = read_csv(score_logits);
                if (logits->values.rows() != feats.values.rows()) {
                    throw DataError("logits and features have different row counts");
                }
            }
            Matrix scores(feats.values.rows(), 1);
            std::vector<double> row(static_cast<std::size_t>(feats.values.cols()));
            for (Eigen::Index r = 0; r < feats.values.rows(); ++r) {
                for (Eigen::Index c = 0; c < feats.values.cols(); ++c) row[static_cast<std::size_t>(c)] = feats.values(r, c);
                if (logits) {
                    std::vector<double> l(static_cast<std::size_t>(logits->values.cols()));
                    for (Eigen::Index c = 0; c < logits->values.cols(); ++c) l[static_cast<std::size_t>(c)] = logits->values(r, c);
                    scores(r, 0) = scorer.score_hist_msp(row, l, score_lambda);
                } else {
                    scores(r, 0) = scorer.score_hist(row);
                }
            }
            write_csv(out_path(g, score_out).string(), {"score"}, scores);
            return kExitOk;
        }
        if (*ood_auroc) {
            out << format_real(auroc(read_scores(auroc_id), read_scores(auroc_ood))) << '\n';
            return kExitOk;
        }
        if (*clf_train) return cmd_clf_train(g, out);
        if (*clf_sim) return cmd_clf_simulate(g, sim, out);
        if (*clf_conf) return cmd_clf_conformal(conf_report, conf_c, conf_delta, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitConfig;
}

}  // namespace adaptkan
