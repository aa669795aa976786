#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "oodnorm/config.hpp"
#include "oodnorm/csv.hpp"
#include "oodnorm/errors.hpp"
#include "oodnorm/quadrature.hpp"
#include "oodnorm/scoring.hpp"
#include "oodnorm/serialize.hpp"
#include "oodnorm/stats.hpp"
#include "oodnorm/synth.hpp"
#include "oodnorm/train.hpp"

namespace fs = std::filesystem;
using namespace oodnorm;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = ".";
};

Config load_config(const CommonOpts& opts) {
    Config cfg = Config::from_file(opts.config_path);
    for (const auto& assignment : opts.overrides) cfg.apply_override(assignment);
    return cfg;
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
    fs::path p(name);
    if (p.is_absolute()) return name;
    return (fs::path(opts.out_dir) / p).string();
}

void ensure_out_dir(const CommonOpts& opts) {
    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    if (ec) throw DataError("cannot create output directory '" + opts.out_dir + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    std::string cell;
    std::stringstream ss(text);
    while (std::getline(ss, cell, ',')) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
            throw ConfigError(what + ": expected a comma-separated integer list, got '" + text +
                              "'");
        }
        out.push_back(v);
    }
    return out;
}

Vector parse_double_list(const std::string& text, const std::string& what) {
    Vector out;
    std::string cell;
    std::stringstream ss(text);
    while (std::getline(ss, cell, ',')) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
            throw ConfigError(what + ": expected a comma-separated number list, got '" + text +
                              "'");
        }
        out.push_back(v);
    }
    return out;
}

ScenarioSpec data_scenario(const Config& cfg, std::size_t n, std::uint64_t seed) {
    ScenarioSpec spec = parse_scenario(cfg.require("data", "scenario"));
    spec.n = n;
    spec.seed = seed;
    return spec;
}

StatisticConfig stat_config(const Config& cfg, const std::string& section) {
    StatisticConfig sc;
    sc.b = cfg.get_size(section, "b", 64);
    sc.r1 = cfg.get_double(section, "r1", 0.1);
    sc.r2 = cfg.get_double(section, "r2", 0.9);
    sc.mc_reps = cfg.get_size(section, "mc_reps", 8);
    sc.seed = cfg.get_u64(section, "stat_seed", 7);
    sc.validate();
    return sc;
}

FlowModel build_model(const Config& cfg, std::size_t dim) {
    const std::string kind = cfg.get("model", "kind", "conditioner");
    if (kind == "paired") {
        return make_paired_bn_flow(dim, cfg.get_double("model", "bn_eps", 1e-5),
                                   cfg.get_double("model", "bn_momentum", 0.1));
    }
    if (kind != "conditioner") {
        throw ConfigError("model.kind must be 'conditioner' or 'paired'");
    }
    ConditionerFlowOptions opts;
    opts.couplings = cfg.get_size("model", "couplings", 2);
    opts.hidden = parse_size_list(cfg.get("model", "hidden", "16,16"), "model.hidden");
    opts.scale_cap = cfg.get_double("model", "scale_cap", 3.0);
    opts.alternating = cfg.get_size("model", "alternating", 0) != 0;
    opts.hidden_bn = cfg.get_size("model", "hidden_bn", 1) != 0;
    opts.bn_eps = cfg.get_double("model", "bn_eps", 1e-5);
    opts.bn_momentum = cfg.get_double("model", "bn_momentum", 0.1);
    Rng rng(derive_seed(cfg.get_u64("model", "seed", 3), 0x1417));
    return make_conditioner_flow(dim, opts, rng);
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig tc;
    tc.steps = cfg.get_size("train", "steps", 3000);
    tc.batch_size = cfg.get_size("train", "batch_size", 64);
    tc.learning_rate = cfg.get_double("train", "learning_rate", 1e-3);
    tc.beta1 = cfg.get_double("train", "beta1", 0.9);
    tc.beta2 = cfg.get_double("train", "beta2", 0.999);
    tc.adam_eps = cfg.get_double("train", "adam_eps", 1e-8);
    tc.seed = cfg.get_u64("train", "seed", 2);
    tc.holdout_fraction = cfg.get_double("train", "holdout_fraction", 0.1);
    tc.validate();
    return tc;
}

std::string member_name(const std::string& model_name, std::size_t i) {
    const auto dot = model_name.rfind('.');
    const std::string stem = dot == std::string::npos ? model_name : model_name.substr(0, dot);
    const std::string ext = dot == std::string::npos ? "" : model_name.substr(dot);
    return stem + ".member" + std::to_string(i) + ext;
}

void write_manifest(const CommonOpts& opts, const Config& cfg, const std::string& command,
                    std::vector<std::pair<std::string, std::string>> extra) {
    std::vector<std::pair<std::string, std::string>> rows;
    rows.emplace_back("command", command);
    rows.emplace_back("config_hash", cfg.hash());
    rows.emplace_back("threads", std::to_string(omp_get_max_threads()));
    for (auto& kv : extra) rows.push_back(std::move(kv));
    write_kv_csv(out_path(opts, "manifest_" + command + ".csv"), rows);
}

int cmd_train(const CommonOpts& opts) {
    const Config cfg = load_config(opts);
    ensure_out_dir(opts);

    const std::size_t n = cfg.get_size("data", "n", 4096);
    const std::uint64_t data_seed = cfg.get_u64("data", "seed", 1);
    const Dataset ds = sample(data_scenario(cfg, n, data_seed));

    FlowModel init = build_model(cfg, ds.data.cols());
    validate_model(init);
    const TrainConfig tc = train_config(cfg);
    TrainResult res = train_mle(init, ds.data, tc);

    const std::string model_name = cfg.get("train", "model", "model.json");
    save_model(res.model, out_path(opts, model_name));
    write_matrix_csv(out_path(opts, cfg.get("train", "data_out", "train_pool.csv")), ds.data);
    write_train_log_csv(out_path(opts, cfg.get("train", "log_out", "train_log.csv")), res.log);

    const std::size_t ensemble_k = cfg.get_size("train", "ensemble_k", 0);
    if (ensemble_k > 0) {
        EnsembleSpec spec;
        spec.k = ensemble_k;
        spec.base_seed = cfg.get_u64("train", "ensemble_seed", tc.seed + 1);
        const auto members = train_ensemble(init, ds.data, tc, spec);
        for (std::size_t i = 0; i < members.size(); ++i) {
            save_model(members[i], out_path(opts, member_name(model_name, i)));
        }
    }

    write_manifest(opts, cfg, "train",
                   {{"scenario", ds.scenario},
                    {"n", std::to_string(n)},
                    {"data_seed", std::to_string(data_seed)},
                    {"steps", std::to_string(tc.steps)},
                    {"ensemble_k", std::to_string(ensemble_k)}});
    const TrainLogRow& last = res.log.back();
    std::cout << "trained " << model_name << ": step " << last.step << ", train loss "
              << last.train_loss << " nats, holdout " << last.eval_bpd << " bpd\n";
    return 0;
}

int cmd_sample(const CommonOpts& opts) {
    const Config cfg = load_config(opts);
    ensure_out_dir(opts);

    ScenarioSpec spec = parse_scenario(cfg.require("sample", "scenario"));
    spec.n = cfg.get_size("sample", "n", 256);
    spec.seed = cfg.get_u64("sample", "seed", 5);

    FlowModel model;
    const FlowModel* model_ptr = nullptr;
    if (cfg.has("sample", "model")) {
        model = load_model(out_path(opts, cfg.get("sample", "model", "")));
        model_ptr = &model;
    }
    const Dataset ds = sample(spec, model_ptr);
    const std::string output = cfg.get("sample", "output", "samples.csv");
    write_matrix_csv(out_path(opts, output), ds.data);
    write_manifest(opts, cfg, "sample",
                   {{"scenario", ds.scenario}, {"n", std::to_string(spec.n)}});
    std::cout << "sampled " << ds.data.rows() << " rows from " << ds.scenario << " into "
              << output << "\n";
    return 0;
}

int cmd_detect(const CommonOpts& opts) {
    const Config cfg = load_config(opts);
    ensure_out_dir(opts);

    const FlowModel model = load_model(out_path(opts, cfg.get("detect", "model", "model.json")));
    const Matrix train_pool =
        read_matrix_csv(out_path(opts, cfg.get("detect", "train_data", "train_pool.csv")));

    const std::uint64_t data_seed = cfg.get_u64("data", "seed", 1);
    const std::size_t ref_n = cfg.get_size("detect", "ref_n", 256);
    const std::size_t neg_n = cfg.get_size("detect", "neg_n", 256);
    const std::size_t pos_n = cfg.get_size("detect", "pos_n", 256);

    const Dataset ref = sample(data_scenario(cfg, ref_n, derive_seed(data_seed, 0x4ef)));
    const Dataset neg = sample(data_scenario(cfg, neg_n, derive_seed(data_seed, 0x7e9)));

    ScenarioSpec pos_spec = parse_scenario(cfg.require("detect", "pos_scenario"));
    pos_spec.n = pos_n;
    pos_spec.seed = derive_seed(data_seed, 0xba5);
    const Dataset pos = sample(pos_spec, &model);

    std::vector<FlowModel> ensemble;
    const std::size_t ensemble_k = cfg.get_size("detect", "ensemble_k", 0);
    const std::string model_name = cfg.get("detect", "model", "model.json");
    for (std::size_t i = 0; i < ensemble_k; ++i) {
        ensemble.push_back(load_model(out_path(opts, member_name(model_name, i))));
    }

    DetectionInputs inputs;
    inputs.model = &model;
    inputs.ensemble = ensemble;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref.data;
    inputs.negatives = &neg.data;
    inputs.positives = &pos.data;

    const StatisticConfig sc = stat_config(cfg, "detect");
    const DetectionResult result = run_detection(inputs, sc);

    write_scores_csv(out_path(opts, cfg.get("detect", "scores_out", "scores.csv")),
                     result.scored);
    write_report_csv(out_path(opts, cfg.get("detect", "report_out", "report.csv")),
                     result.reports);
    Matrix ref_d(result.reference_deltas.size(), 1);
    for (std::size_t i = 0; i < result.reference_deltas.size(); ++i) {
        ref_d(i, 0) = result.reference_deltas[i];
    }
    write_matrix_csv(out_path(opts, cfg.get("detect", "ref_deltas_out", "reference_deltas.csv")),
                     ref_d);

    write_manifest(opts, cfg, "detect",
                   {{"pos_scenario", pos.scenario},
                    {"ref_n", std::to_string(ref_n)},
                    {"neg_n", std::to_string(neg_n)},
                    {"pos_n", std::to_string(pos_n)},
                    {"b", std::to_string(sc.b)},
                    {"mc_reps", std::to_string(sc.mc_reps)}});
    for (const auto& rep : result.reports) {
        std::cout << rep.statistic << ": auc " << rep.auc << ", ap " << rep.ap << " ("
                  << rep.n_pos << " pos / " << rep.n_neg << " neg)\n";
    }
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    const Config cfg = load_config(opts);
    ensure_out_dir(opts);

    const FlowModel model = load_model(out_path(opts, cfg.get("sweep", "model", "model.json")));
    const Matrix train_pool =
        read_matrix_csv(out_path(opts, cfg.get("sweep", "train_data", "train_pool.csv")));

    ScenarioSpec test_spec =
        cfg.has("sweep", "test_scenario")
            ? parse_scenario(cfg.require("sweep", "test_scenario"))
            : parse_scenario(cfg.require("data", "scenario"));
    test_spec.n = cfg.get_size("sweep", "test_n", 128);
    test_spec.seed = derive_seed(cfg.get_u64("data", "seed", 1), 0x5ee);
    const Dataset test = sample(test_spec, &model);

    const Vector ratios =
        parse_double_list(cfg.require("sweep", "ratios"), "sweep.ratios");
    StatisticConfig sc = stat_config(cfg, "sweep");
    const auto rows = sweep_ratio(model, test.data, train_pool, ratios, sc);
    write_sweep_csv(out_path(opts, cfg.get("sweep", "output", "sweep.csv")), rows);
    write_manifest(opts, cfg, "sweep",
                   {{"test_scenario", test.scenario},
                    {"test_n", std::to_string(test_spec.n)},
                    {"ratios", cfg.require("sweep", "ratios")}});
    for (const auto& row : rows) {
        std::cout << "r=" << row.r << ": " << row.mean_bpd << " bpd (se " << row.stderr_bpd
                  << ")\n";
    }
    return 0;
}

int cmd_attack(const CommonOpts& opts) {
    const Config cfg = load_config(opts);
    ensure_out_dir(opts);

    const FlowModel p_model =
        load_model(out_path(opts, cfg.get("attack", "p_model", "model.json")));
    const Matrix train_pool =
        read_matrix_csv(out_path(opts, cfg.get("attack", "train_data", "train_pool.csv")));

    FlowModel q_model;
    if (cfg.has("attack", "q_model")) {
        q_model = load_model(out_path(opts, cfg.get("attack", "q_model", "")));
    } else if (cfg.has("attack", "q_scenario")) {
        ScenarioSpec q_spec = parse_scenario(cfg.require("attack", "q_scenario"));
        q_spec.n = cfg.get_size("attack", "q_n", 2048);
        q_spec.seed = cfg.get_u64("attack", "q_data_seed", 17);
        const Dataset q_data = sample(q_spec);
        if (q_data.data.cols() != p_model.dim) {
            throw ConfigError("attack: q_scenario dimension does not match the target model");
        }
        FlowModel q_init = build_model(cfg, p_model.dim);
        TrainConfig q_tc = train_config(cfg);
        q_tc.steps = cfg.get_size("attack", "q_steps", 800);
        q_tc.seed = cfg.get_u64("attack", "q_seed", 11);
        q_model = train_mle(q_init, q_data.data, q_tc).model;
        save_model(q_model, out_path(opts, cfg.get("attack", "q_model_out", "q_model.json")));
    } else {
        throw ConfigError("attack: needs q_model (file) or q_scenario (train one)");
    }

    const std::uint64_t data_seed = cfg.get_u64("data", "seed", 1);
    const std::size_t holdout_n = cfg.get_size("attack", "holdout_n", 256);
    const std::size_t ref_n = cfg.get_size("attack", "ref_n", 256);
    const Dataset holdout = sample(data_scenario(cfg, holdout_n, derive_seed(data_seed, 0xa0d)));
    const Dataset ref = sample(data_scenario(cfg, ref_n, derive_seed(data_seed, 0xa4e)));

    AttackConfig ac;
    ac.t_lo = cfg.get_double("attack", "t_lo", 0.25);
    ac.t_hi = cfg.get_double("attack", "t_hi", 1.5);
    ac.n_samples = cfg.get_size("attack", "n", 256);
    ac.max_iters = cfg.get_size("attack", "max_iters", 30);
    ac.tol_bpd = cfg.get_double("attack", "tol_bpd", 0.05);
    ac.seed = cfg.get_u64("attack", "seed", 13);

    const Vector train_lls = eval_logliks(p_model, train_pool);
    const AttackResult attack = attack_tune_temperature(p_model, q_model, train_lls,
                                                        holdout.data, ac);

    DetectionInputs inputs;
    inputs.model = &p_model;
    inputs.train_pool = &train_pool;
    inputs.ref_set = &ref.data;
    inputs.negatives = &holdout.data;
    inputs.positives = &attack.attacked;
    const StatisticConfig sc = stat_config(cfg, "attack");
    const DetectionResult detection = run_detection(inputs, sc);

    write_matrix_csv(out_path(opts, cfg.get("attack", "samples_out", "attacked_samples.csv")),
                     attack.attacked);
    write_scores_csv(out_path(opts, cfg.get("attack", "scores_out", "attack_scores.csv")),
                     detection.scored);
    write_report_csv(out_path(opts, cfg.get("attack", "report_out", "attack_report.csv")),
                     detection.reports);

    std::vector<std::pair<std::string, std::string>> summary;
    summary.emplace_back("tuned_temperature", fmt17(attack.tuned_temperature));
    summary.emplace_back("median_gap_bpd", fmt17(attack.median_gap_bpd));
    summary.emplace_back("bisection_iters", std::to_string(attack.iters));
    summary.emplace_back("fooled_auc", fmt17(attack.fooled_auc));
    for (const auto& rep : detection.reports) {
        summary.emplace_back(rep.statistic + "_auc", fmt17(rep.auc));
    }
    write_kv_csv(out_path(opts, cfg.get("attack", "summary_out", "attack_summary.csv")), summary);

    write_manifest(opts, cfg, "attack",
                   {{"n", std::to_string(ac.n_samples)},
                    {"holdout_n", std::to_string(holdout_n)},
                    {"ref_n", std::to_string(ref_n)}});
    std::cout << "tuned temperature " << attack.tuned_temperature << " (gap "
              << attack.median_gap_bpd << " bpd, " << attack.iters << " iters)\n";
    for (const auto& rep : detection.reports) {
        std::cout << rep.statistic << ": auc " << rep.auc << "\n";
    }
    return 0;
}

int cmd_report(const CommonOpts& opts, const std::string& scores_name,
               const std::string& output_name) {
    ensure_out_dir(opts);
    const auto scored = read_scores_csv(out_path(opts, scores_name));
    const auto reports = build_report(scored);
    write_report_csv(out_path(opts, output_name), reports);
    for (const auto& rep : reports) {
        std::cout << rep.statistic << ": auc " << rep.auc << ", ap " << rep.ap << " ("
                  << rep.n_pos << " pos / " << rep.n_neg << " neg)\n";
    }
    return 0;
}

void apply_thread_cap() {
    if (const char* env = std::getenv("OODNORM_THREADS")) {
        int threads = 0;
        const std::string text(env);
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), threads);
        if (ec != std::errc() || ptr != text.data() + text.size() || threads < 1) {
            throw ConfigError("OODNORM_THREADS must be a positive integer");
        }
        omp_set_num_threads(threads);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch-composition statistics for likelihood-based anomaly detection"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string scores_name = "scores.csv";
    std::string report_name = "report.csv";

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* copt = sub->add_option("--config", opts.config_path, "INI configuration file");
        if (needs_config) copt->required();
        sub->add_option("--set", opts.overrides, "override, e.g. --set train.steps=100");
        sub->add_option("--out", opts.out_dir, "output directory (default .)");
    };

    CLI::App* train = app.add_subcommand("train", "fit a flow to a synthetic scenario");
    add_common(train, true);
    CLI::App* samp = app.add_subcommand("sample", "draw from a scenario or a model");
    add_common(samp, true);
    CLI::App* detect = app.add_subcommand("detect", "score a test pool with every statistic");
    add_common(detect, true);
    CLI::App* sweep = app.add_subcommand("sweep", "mixed-batch bpd across composition ratios");
    add_common(sweep, true);
    CLI::App* attack = app.add_subcommand("attack", "temperature-tune a sampler to fool the "
                                                    "likelihood-rank test");
    add_common(attack, true);
    CLI::App* report = app.add_subcommand("report", "recompute metrics from a scores file");
    add_common(report, false);
    report->add_option("--scores", scores_name, "scores file name (default scores.csv)");
    report->add_option("--output", report_name, "report file name (default report.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_cap();
        if (*train) return cmd_train(opts);
        if (*samp) return cmd_sample(opts);
        if (*detect) return cmd_detect(opts);
        if (*sweep) return cmd_sweep(opts);
        if (*attack) return cmd_attack(opts);
        if (*report) return cmd_report(opts, scores_name, report_name);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
