#include "failsearch/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace failsearch;

namespace {

const std::vector<std::string> kArtifacts = {"config.json", "episodes.jsonl", "policy.json",
                                             "critic.json", "avf.json",       "gmm.json",
                                             "bench.csv",   "bench.md"};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed_override;
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (args.seed_override) cfg.seed = *args.seed_override;
    return cfg;
}

void require_artifact(const std::string& out_dir, const std::string& name,
                      const std::string& producer) {
    if (!fs::exists(fs::path(out_dir) / name))
        throw std::runtime_error(name + " not found; run " + producer);
}

std::string artifact(const std::string& out_dir, const std::string& name) {
    return (fs::path(out_dir) / name).string();
}

void finish_stage(const std::string& out_dir, const RunConfig& cfg) {
    atomic_write(artifact(out_dir, "config.json"), config_to_json(cfg));
    write_manifest(out_dir, kArtifacts);
}

Policy load_policy(const std::string& out_dir) {
    auto [params, norm] = model_from_json(read_file(artifact(out_dir, "policy.json")));
    return Policy{std::move(params)};
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    fs::create_directories(fs::path(args.out_dir) / "checkpoints");
    auto dist = InitialConditionDistribution::for_scenario(cfg.scenario_id);
    Rng rng(seed_derive(cfg.seed, "ddpg", 0));

    CheckpointFn checkpoint = [&](long ep, const Policy& p, const MlpParams& c) {
        const std::string dir = (fs::path(args.out_dir) / "checkpoints").string();
        atomic_write(dir + "/policy_" + std::to_string(ep + 1) + ".json",
                     model_to_json(p.actor, std::nullopt));
        log_line(LogLevel::Debug, "checkpoint at episode " + std::to_string(ep + 1));
    };
    log_line(LogLevel::Info, "training scenario " + std::to_string(cfg.scenario_id) + " for " +
                                 std::to_string(cfg.ddpg.episodes) + " episodes");
    TrainResult result = ddpg_train(cfg.sim, dist, cfg.ddpg, rng, checkpoint);

    std::ostringstream log;
    for (const auto& rec : result.log) log << episode_to_jsonl(rec) << "\n";
    atomic_write(artifact(args.out_dir, "episodes.jsonl"), log.str());
    atomic_write(artifact(args.out_dir, "policy.json"),
                 model_to_json(result.policy.actor, std::nullopt));
    atomic_write(artifact(args.out_dir, "critic.json"),
                 model_to_json(result.critic, std::nullopt));
    finish_stage(args.out_dir, cfg);

    long failures = 0;
    for (const auto& rec : result.log) failures += rec.c;
    std::cout << "trained " << result.log.size() << " episodes, " << failures << " failures\n";
    return 0;
}

int cmd_train_avf(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    require_artifact(args.out_dir, "episodes.jsonl", "train");
    auto log = load_episode_log(artifact(args.out_dir, "episodes.jsonl"));
    AvfDataset ds = build_dataset(log, cfg.avf.window_size);
    if (ds.no_failures)
        log_line(LogLevel::Error, "warning: training window contains no failures");
    Rng rng(seed_derive(cfg.seed, "avf-train", 0));
    AvfModel model = train_avf(ds, {cfg.avf.epochs, cfg.avf.lr}, rng);
    save_avf(model, artifact(args.out_dir, "avf.json"));
    finish_stage(args.out_dir, cfg);
    std::cout << "avf trained on episodes " << ds.first_episode << ".." << ds.last_episode
              << "\n";
    return 0;
}

int cmd_fit_gmm(const CommonArgs& args, const std::string& import_path) {
    RunConfig cfg = resolve_config(args);
    require_artifact(args.out_dir, "episodes.jsonl", "train");
    auto log = load_episode_log(artifact(args.out_dir, "episodes.jsonl"));
    auto dist = InitialConditionDistribution::for_scenario(cfg.scenario_id);

    std::vector<EpisodeRecord> window(log.end() - std::min(log.size(), cfg.avf.window_size),
                                      log.end());
    FailureSet data = failures_from_log(window);
    if (!import_path.empty()) {
        FailureSet imported = import_failures(import_path, dist);
        for (size_t i = 0; i < imported.size(); ++i)
            data.add(imported.points[i], imported.sources[i]);
    }
    Rng rng(seed_derive(cfg.seed, "gmm-fit", 0));
    EmOpts opts;
    opts.n_inits = cfg.gmm.n_inits;
    int n = cfg.gmm.n;
    if (cfg.gmm.auto_n)
        n = select_components(data, cfg.gmm.candidate_lo, cfg.gmm.candidate_hi, opts, rng,
                              dist.support_lo(), dist.support_hi());
    EmFitResult fit = em_fit(data, n, opts, rng, dist.support_lo(), dist.support_hi());
    save_gmm(fit.model, artifact(args.out_dir, "gmm.json"));
    finish_stage(args.out_dir, cfg);
    std::cout << "gmm fitted: n=" << n << " on " << data.size()
              << " failure points, log-likelihood " << fit.log_likelihood << "\n";
    return 0;
}

int cmd_search(const CommonArgs& args, const std::string& strategy) {
    RunConfig cfg = resolve_config(args);
    require_artifact(args.out_dir, "policy.json", "train");
    Policy policy = load_policy(args.out_dir);
    auto dist = InitialConditionDistribution::for_scenario(cfg.scenario_id);
    EpisodeOracle oracle = make_episode_oracle(cfg.sim, policy);
    Rng rng(seed_derive(cfg.seed, "search/" + strategy, 0));

    SearchOutcome out;
    if (strategy == "vmc") {
        out = vmc_search(oracle, dist, cfg.search.budget, rng);
    } else if (strategy == "avf") {
        require_artifact(args.out_dir, "avf.json", "train-avf");
        AvfModel avf = load_avf(artifact(args.out_dir, "avf.json"));
        out = avf_search(oracle, avf, dist, cfg.avf.n_candidates, cfg.search.budget, rng);
    } else if (strategy == "gmm") {
        require_artifact(args.out_dir, "gmm.json", "fit-gmm");
        GmmModel gmm = load_gmm(artifact(args.out_dir, "gmm.json"));
        out = gmm_search(oracle, gmm, cfg.search.budget, rng);
    } else if (strategy == "hybrid") {
        require_artifact(args.out_dir, "avf.json", "train-avf");
        require_artifact(args.out_dir, "gmm.json", "fit-gmm");
        AvfModel avf = load_avf(artifact(args.out_dir, "avf.json"));
        GmmModel gmm = load_gmm(artifact(args.out_dir, "gmm.json"));
        require_artifact(args.out_dir, "episodes.jsonl", "train");
        auto log = load_episode_log(artifact(args.out_dir, "episodes.jsonl"));
        FailureSet data = failures_from_log(log);
        HybridOpts hopts;
        hopts.n_candidates = cfg.avf.n_candidates;
        hopts.gmm_first = cfg.search.gmm_first;
        HybridResult hres =
            hybrid_search(oracle, avf, gmm, dist, data, hopts, cfg.search.budget, rng);
        out = std::move(hres.outcome);
    } else if (strategy == "pr") {
        require_artifact(args.out_dir, "episodes.jsonl", "train");
        auto log = load_episode_log(artifact(args.out_dir, "episodes.jsonl"));
        auto still_failing = pr_search(oracle, log);
        std::cout << "priority replay: " << still_failing.size()
                  << " training-time failures still fail\n";
        return 0;
    } else {
        std::cerr << "unknown strategy: " << strategy << "\n";
        return 2;
    }

    if (out.found) {
        std::cout << "failure found after " << out.episodes_used << " episode(s); x = [";
        for (int i = 0; i < out.failing_x->size(); ++i)
            std::cout << (i ? ", " : "") << (*out.failing_x)(i);
        std::cout << "]\n";
        return 0;
    }
    std::cout << "no failure found within budget " << cfg.search.budget << "\n";
    return 1;
}

int cmd_bench(const CommonArgs& args, int failures_override) {
    RunConfig cfg = resolve_config(args);
    if (failures_override > 0) cfg.search.k_failures = failures_override;
    require_artifact(args.out_dir, "policy.json", "train");
    Policy policy = load_policy(args.out_dir);
    auto dist = InitialConditionDistribution::for_scenario(cfg.scenario_id);
    EpisodeOracle oracle = make_episode_oracle(cfg.sim, policy);

    std::optional<AvfModel> avf;
    std::optional<GmmModel> gmm;
    FailureSet data;
    for (const auto& s : cfg.search.strategies) {
        if ((s == "avf" || s == "hybrid") && !avf) {
            require_artifact(args.out_dir, "avf.json", "train-avf");
            avf = load_avf(artifact(args.out_dir, "avf.json"));
        }
        if ((s == "gmm" || s == "hybrid") && !gmm) {
            require_artifact(args.out_dir, "gmm.json", "fit-gmm");
            gmm = load_gmm(artifact(args.out_dir, "gmm.json"));
        }
        if (s == "hybrid" && data.size() == 0) {
            require_artifact(args.out_dir, "episodes.jsonl", "train");
            data = failures_from_log(load_episode_log(artifact(args.out_dir, "episodes.jsonl")));
        }
    }

    BenchOpts opts;
    opts.strategies = cfg.search.strategies;
    opts.k_failures = cfg.search.k_failures;
    opts.budget = cfg.search.budget;
    opts.n_candidates = cfg.avf.n_candidates;
    opts.hybrid_reset = cfg.search.hybrid_reset;
    opts.gmm_first = cfg.search.gmm_first;
    const uint64_t master = cfg.seed;
    BenchTable table = run_bench(
        oracle, dist, avf ? &*avf : nullptr, gmm ? &*gmm : nullptr, std::move(data), opts,
        [master](const std::string& label, long index) {
            return seed_derive(master, label, index);
        });
    emit_tables(table, artifact(args.out_dir, "bench.csv"), artifact(args.out_dir, "bench.md"));
    finish_stage(args.out_dir, cfg);

    for (const auto& s : table.stats())
        std::cout << s.strategy << ": min " << s.min << " avg " << s.avg << " max " << s.max
                  << (s.censored ? " (" + std::to_string(s.censored) + " censored)" : "") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rare-failure search toolkit for a learned braking controller"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string strategy = "vmc";
    std::string import_path;
    int failures_override = 0;
    uint64_t seed_flag = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "run configuration JSON")->required();
        sub->add_option("--out", args.out_dir, "run directory")->required();
        sub->add_option("--seed", seed_flag, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    auto* train = app.add_subcommand("train", "train the braking controller");
    add_common(train);
    auto* train_avf = app.add_subcommand("train-avf", "train the failure predictor");
    add_common(train_avf);
    auto* fit_gmm = app.add_subcommand("fit-gmm", "fit the generative failure model");
    add_common(fit_gmm);
    fit_gmm->add_option("--import", import_path, "JSONL file of extra failure points");
    auto* search = app.add_subcommand("search", "run one failure search");
    add_common(search);
    search->add_option("--strategy", strategy, "vmc|pr|avf|gmm|hybrid");
    auto* bench = app.add_subcommand("bench", "benchmark all strategies");
    add_common(bench);
    bench->add_option("--failures", failures_override, "failures per strategy");
    auto* replay = app.add_subcommand("replay", "replay training failures (priority replay)");
    add_common(replay);

    CLI11_PARSE(app, argc, argv);
    if (seed_set) args.seed_override = seed_flag;

    try {
        if (train->parsed()) return cmd_train(args);
        if (train_avf->parsed()) return cmd_train_avf(args);
        if (fit_gmm->parsed()) return cmd_fit_gmm(args, import_path);
        if (search->parsed()) return cmd_search(args, strategy);
        if (bench->parsed()) return cmd_bench(args, failures_override);
        if (replay->parsed()) return cmd_search(args, "pr");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
