// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] is the CLI binary path (used by the pipeline-determinism
// criterion).

#include "failsearch/avf.hpp"
#include "failsearch/ddpg.hpp"
#include "failsearch/gmm.hpp"
#include "failsearch/harness.hpp"
#include "failsearch/mlp.hpp"
#include "failsearch/search.hpp"
#include "failsearch/sim.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

using namespace failsearch;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::cout << "criterion " << criterion << " (" << name << "): " << (pass ? "PASS" : "FAIL")
              << " — " << detail << "\n"
              << std::flush;
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

MlpSpec random_spec(Rng& rng) {
    std::uniform_int_distribution<int> width(1, 8);
    std::uniform_int_distribution<int> depth(1, 3);
    std::uniform_int_distribution<int> act(0, 3);
    const int layers = depth(rng);
    std::vector<int> sizes{width(rng)};
    std::vector<Activation> acts;
    for (int l = 0; l < layers; ++l) {
        sizes.push_back(width(rng));
        acts.push_back(static_cast<Activation>(act(rng)));
    }
    return MlpSpec(sizes, acts);
}

double max_rel_error_vs_fd(const MlpParams& params, const Vec& input, const Vec& out_grad) {
    ForwardCache cache;
    mlp_forward(params, input, &cache);
    MlpGrads analytic = mlp_backward(params, cache, out_grad);
    const double h = 1e-5;
    double worst = 0.0;
    auto scalar_out = [&](const MlpParams& p) { return mlp_forward(p, input).dot(out_grad); };
    MlpParams pert = params;
    for (size_t l = 0; l < params.w.size(); ++l) {
        for (int i = 0; i < params.w[l].rows(); ++i)
            for (int j = 0; j < params.w[l].cols(); ++j) {
                pert.w[l](i, j) = params.w[l](i, j) + h;
                const double up = scalar_out(pert);
                pert.w[l](i, j) = params.w[l](i, j) - h;
                const double down = scalar_out(pert);
                pert.w[l](i, j) = params.w[l](i, j);
                const double fd = (up - down) / (2 * h);
                const double denom =
                    std::max({std::abs(fd), std::abs(analytic.w[l](i, j)), 1e-6});
                worst = std::max(worst, std::abs(fd - analytic.w[l](i, j)) / denom);
            }
        for (int i = 0; i < params.b[l].size(); ++i) {
            pert.b[l](i) = params.b[l](i) + h;
            const double up = scalar_out(pert);
            pert.b[l](i) = params.b[l](i) - h;
            const double down = scalar_out(pert);
            pert.b[l](i) = params.b[l](i);
            const double fd = (up - down) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(analytic.b[l](i)), 1e-6});
            worst = std::max(worst, std::abs(fd - analytic.b[l](i)) / denom);
        }
    }
    return worst;
}

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2026);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    int done = 0;
    while (done < 100) {
        MlpSpec spec = random_spec(rng);
        MlpParams p = mlp_init(spec, rng);
        Vec input(spec.input_dim());
        for (int i = 0; i < input.size(); ++i) input(i) = n(rng);
        Vec og(spec.output_dim());
        for (int i = 0; i < og.size(); ++i) og(i) = n(rng);
        ForwardCache cache;
        mlp_forward(p, input, &cache);
        bool near_kink = false;
        for (int l = 0; l < spec.num_layers(); ++l)
            if (spec.activations[l] == Activation::Relu &&
                cache.pre[l].cwiseAbs().minCoeff() < 1e-3)
                near_kink = true;
        if (near_kink) continue;
        worst = std::max(worst, max_rel_error_vs_fd(p, input, og));
        ++done;
    }
    const double t = elapsed_s(t0);
    std::ostringstream d;
    d << "100 random nets, max relative error " << worst << ", " << t << " s";
    report(1, "gradient correctness", worst < 1e-4 && t < 10.0, d.str());
}

// ---------------------------------------------------------------- criterion 2

void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(7);
    const Vec lo = Vec::Constant(1, -1e9), hi = Vec::Constant(1, 1e9);

    bool monotone = true;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> sz(30, 300);
        std::uniform_int_distribution<int> comps(1, 3);
        std::normal_distribution<double> n(0.0, 3.0);
        FailureSet data;
        const int N = sz(rng);
        for (int i = 0; i < N; ++i) data.add(Vec::Constant(1, n(rng)), FailureSource::TrainingLog);
        EmOpts opts;
        opts.n_inits = 3;
        EmFitResult fit = em_fit(data, comps(rng), opts, rng, lo, hi);
        for (size_t i = 1; i < fit.ll_trace.size(); ++i)
            if (fit.ll_trace[i] < fit.ll_trace[i - 1] - 1e-9) monotone = false;
    }

    FailureSet synth;
    std::normal_distribution<double> a(-2.0, 0.5), b(2.0, 0.5);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < 2000; ++i)
        synth.add(Vec::Constant(1, coin(rng) ? b(rng) : a(rng)), FailureSource::TrainingLog);
    EmOpts opts;
    opts.n_inits = 100;
    EmFitResult fit = em_fit(synth, 2, opts, rng, lo, hi);
    std::vector<double> means = {fit.model.means[0](0), fit.model.means[1](0)};
    std::sort(means.begin(), means.end());
    const bool recovered = std::abs(means[0] + 2.0) < 0.1 && std::abs(means[1] - 2.0) < 0.1;

    EmOpts bic_opts;
    bic_opts.n_inits = 20;
    const int n_sel = select_components(synth, 1, 5, bic_opts, rng, lo, hi);

    const double t = elapsed_s(t0);
    std::ostringstream d;
    d << "monotone=" << monotone << ", fitted means " << means[0] << "/" << means[1]
      << ", BIC n=" << n_sel << ", " << t << " s";
    report(2, "EM monotonicity and recovery", monotone && recovered && n_sel == 2 && t < 30.0,
           d.str());
}

// ---------------------------------------------------------------- criterion 3

void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream d;
    for (double mu : {0.3, 0.8}) {
        for (double v0 : {10.0, 20.0, 30.0}) {
            ScenarioConfig cfg;
            cfg.base_mu = mu;
            cfg.obstacle_m = 1e6;
            InitialCondition x(1);
            x << v0;
            auto [state, obs] = reset(cfg, x);
            while (step(state, 1.0, cfg).terminal == Terminal::Running) {
            }
            const double closed = v0 * v0 / (2.0 * mu * 9.81);
            const double err = std::abs(state.position - closed) / closed;
            if (err >= 0.01) ok = false;
        }
    }

    ScenarioConfig cfg;
    PolicyFn full_brake = [](const Vec&) { return 1.0; };
    double last_safe = 0.0, first_crash = 1e9;
    for (double v = 35.0; v <= 45.0; v += 0.01) {
        InitialCondition x(1);
        x << v;
        if (run_episode(cfg, x, full_brake, 0).c == 0)
            last_safe = v;
        else
            first_crash = std::min(first_crash, v);
    }
    const double v_star = std::sqrt(2.0 * 0.8 * 9.81 * 100.0);
    const double boundary = 0.5 * (last_safe + first_crash);
    const bool threshold_ok = std::abs(boundary - v_star) / v_star < 0.01;

    const double t = elapsed_s(t0);
    d << "stopping distances within 1%, crash boundary " << boundary << " vs " << v_star << ", "
      << t << " s";
    report(3, "simulator physics oracle", ok && threshold_ok && t < 5.0, d.str());
}

// ---------------------------------------------------------------- criterion 4

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(99);
    OuProcess p;
    double sum = 0.0, sumsq = 0.0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
        const double v = p.next(rng);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / N;
    const double var = sumsq / N - mean * mean;
    const double t = elapsed_s(t0);
    std::ostringstream d;
    d << "mean " << mean << " (target 0.2±0.02), variance " << var << " (target 0.005±20%), "
      << t << " s";
    report(4, "OU stationary statistics",
           std::abs(mean - 0.2) < 0.02 && std::abs(var - 0.005) / 0.005 < 0.20 && t < 5.0,
           d.str());
}

// ------------------------------------------------------------- criteria 5 & 6

struct SeedRun {
    TrainResult train;
    bool late_ok = false;
    bool decile_ok = false;
    long late_failures = 0;
};

void criteria_5_6_9() {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig cfg;
    auto dist = InitialConditionDistribution::for_scenario(1);
    DdpgHyper hyper = DdpgHyper::for_scenario(1);

    const std::vector<uint64_t> seeds = {1, 2, 3};
    std::vector<SeedRun> runs(seeds.size());
    {
        std::vector<std::thread> threads;
        for (size_t i = 0; i < seeds.size(); ++i)
            threads.emplace_back([&, i] {
                Rng rng(seeds[i]);
                runs[i].train = ddpg_train(cfg, dist, hyper, rng);
            });
        for (auto& th : threads) th.join();
    }

    int late_pass = 0;
    bool decile_all = true;
    std::ostringstream d5;
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& log = runs[i].train.log;
        long late = 0;
        for (size_t e = log.size() - 500; e < log.size(); ++e) late += log[e].c;
        runs[i].late_failures = late;
        runs[i].late_ok = late < 25;  // < 5% of 500
        if (runs[i].late_ok) ++late_pass;

        const size_t decile = log.size() / 10;
        long first = 0, last = 0;
        for (size_t e = 0; e < decile; ++e) first += log[e].c;
        for (size_t e = log.size() - decile; e < log.size(); ++e) last += log[e].c;
        runs[i].decile_ok = first > last;
        if (!runs[i].decile_ok) decile_all = false;
        d5 << "seed " << seeds[i] << ": late failures " << late << "/500, deciles " << first
           << ">" << last << "; ";
    }
    const double t5 = elapsed_s(t0);
    d5 << t5 << " s";
    report(5, "training sanity", late_pass >= 2 && decile_all && t5 < 900.0, d5.str());

    // pick the bench agent: the first seed that met the late-training bar and
    // whose final policy still shows failures during post-training testing
    // (deterministic evaluation rollouts, the paper's testing phase)
    const auto t6 = std::chrono::steady_clock::now();
    int chosen = -1;
    std::vector<EpisodeRecord> eval_log;
    for (size_t i = 0; i < runs.size() && chosen < 0; ++i) {
        if (!runs[i].late_ok) continue;
        Rng eval_rng(21);
        std::vector<EpisodeRecord> candidate_log;
        long found = 0;
        const long eval_cap = 100000;
        for (long e = 0; e < eval_cap && found < 8; ++e) {
            InitialCondition x = dist.sample(eval_rng);
            EpisodeRecord rec = run_episode(cfg, x, runs[i].train.policy.as_fn(), e);
            found += rec.c;
            candidate_log.push_back(std::move(rec));
        }
        if (found >= 2) {
            chosen = static_cast<int>(i);
            eval_log = std::move(candidate_log);
        }
    }
    if (chosen < 0) {
        report(6, "guided-search speedup", false,
               "no criterion-5 agent produced evaluation failures");
        report(9, "re-verification", false, "no bench was run");
        return;
    }
    const Policy& policy = runs[chosen].train.policy;
    long eval_failures = 0;
    for (const auto& rec : eval_log) eval_failures += rec.c;

    // guide training data: all evaluation failures plus a thinned sample of
    // evaluation successes, so the class weighting can balance the labels
    std::vector<EpisodeRecord> curated;
    const size_t stride = std::max<size_t>(1, eval_log.size() / (100 * eval_failures));
    for (size_t e = 0; e < eval_log.size(); ++e)
        if (eval_log[e].c || e % stride == 0) curated.push_back(eval_log[e]);
    for (size_t e = 0; e < curated.size(); ++e) curated[e].theta = static_cast<long>(e);

    AvfDataset ds = build_dataset(curated, curated.size());
    Rng avf_rng(11);
    AvfModel avf = train_avf(ds, {.epochs = 500}, avf_rng);

    FailureSet fdata = failures_from_log(eval_log);
    Rng gmm_rng(12);
    EmOpts em_opts;
    EmFitResult gmm_fit = em_fit(fdata, 2, em_opts, gmm_rng, dist.support_lo(), dist.support_hi());

    EpisodeOracle oracle = make_episode_oracle(cfg, policy);
    BenchOpts opts;
    opts.strategies = {"vmc", "avf", "hybrid"};
    opts.k_failures = 10;
    opts.budget = 30000;
    opts.n_candidates = 1000;
    BenchTable table =
        run_bench(oracle, dist, &avf, &gmm_fit.model, fdata, opts,
                  [](const std::string& label, long index) { return seed_derive(77, label, index); });

    auto mean_of = [&](const std::string& s) {
        for (const auto& st : table.stats())
            if (st.strategy == s) return st.avg;
        return -1.0;
    };
    const double vmc_mean = mean_of("vmc");
    const double avf_mean = mean_of("avf");
    const double hyb_mean = mean_of("hybrid");
    const double time6 = elapsed_s(t6);
    const bool speedup = avf_mean <= vmc_mean / 10.0 && hyb_mean <= vmc_mean / 10.0;
    const bool hybrid_close = hyb_mean <= avf_mean * 1.2;
    std::ostringstream d6;
    d6 << "means over 10 searches: VMC " << vmc_mean << ", AVF " << avf_mean << ", hybrid "
       << hyb_mean << " (seed " << seeds[chosen] << ", " << eval_log.size()
       << " evaluation episodes, " << fdata.size() << " failure points), " << time6 << " s";
    report(6, "guided-search speedup", speedup && hybrid_close && time6 < 1200.0, d6.str());

    // criterion 9: every reported failing_x reproduces C=1 when re-run
    bool all_reproduce = true;
    long checked = 0;
    for (const auto& row : table.rows)
        if (row.failing_x) {
            ++checked;
            if (run_episode(cfg, *row.failing_x, policy.as_fn(), 0).c != 1) all_reproduce = false;
        }
    std::ostringstream d9;
    d9 << checked << " failing initial conditions re-run deterministically";
    report(9, "re-verification", all_reproduce && checked > 0, d9.str());
}

// ---------------------------------------------------------------- criterion 7

EpisodeOracle bernoulli_oracle(double p, uint64_t salt) {
    return [p, salt](const InitialCondition& x) {
        uint64_t h = salt;
        h ^= static_cast<uint64_t>(std::llround(x(0) * 1e9));
        h *= 0x9e3779b97f4a7c15ull;
        h ^= h >> 32;
        return static_cast<double>(h % 1000000) / 1e6 < p;
    };
}

void criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    auto dist = InitialConditionDistribution::for_scenario(1);
    EpisodeOracle stub = bernoulli_oracle(0.01, 2027);

    AvfModel flat;
    {
        MlpSpec spec({2, 2, 1}, {Activation::Relu, Activation::Sigmoid});
        flat.network.spec = spec;
        flat.network.w = {Mat::Zero(2, 2), Mat::Zero(1, 2)};
        flat.network.b = {Vec::Zero(2), Vec::Zero(1)};
        flat.norm.mean = Vec::Zero(2);
        flat.norm.std = Vec::Ones(2);
    }
    GmmModel matched;
    {
        Rng mrng(5);
        double sum = 0.0, sumsq = 0.0;
        const int N = 200000;
        for (int i = 0; i < N; ++i) {
            const double v = dist.sample(mrng)(0);
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / N;
        matched.weights = Vec::Ones(1);
        matched.means = {Vec::Constant(1, mean)};
        matched.covariances = {Mat::Constant(1, 1, sumsq / N - mean * mean)};
        matched.support_lo = dist.support_lo();
        matched.support_hi = dist.support_hi();
    }

    const int trials = 500;
    Rng rng(31);
    double vmc = 0.0, avf = 0.0, gmm = 0.0, hyb = 0.0;
    FailureSet dummy;
    for (int i = 0; i < trials; ++i) {
        vmc += vmc_search(stub, dist, 100000, rng).episodes_used;
        avf += avf_search(stub, flat, dist, 10, 100000, rng).episodes_used;
        gmm += gmm_search(stub, matched, 100000, rng).episodes_used;
        HybridOpts hopts;
        hopts.n_candidates = 10;
        FailureSet data;
        hyb += hybrid_search(stub, flat, matched, dist, data, hopts, 100000, rng)
                   .outcome.episodes_used;
    }
    vmc /= trials;
    avf /= trials;
    gmm /= trials;
    hyb /= trials;
    const bool ok = std::abs(avf - vmc) / vmc < 0.20 && std::abs(gmm - vmc) / vmc < 0.20 &&
                    std::abs(hyb - vmc) / vmc < 0.20;
    const double t = elapsed_s(t0);
    std::ostringstream d;
    d << "means: VMC " << vmc << ", AVF " << avf << ", GMM " << gmm << ", hybrid " << hyb << ", "
      << t << " s";
    report(7, "search-equivalence null test", ok && t < 60.0, d.str());
}

// ---------------------------------------------------------------- criterion 8

void criterion_8(const std::string& cli) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string base = "/tmp/failsearch_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string cfg_path = base + "/config.json";
    atomic_write(cfg_path,
                 R"({"scenario_id":1,"seed":42,
                     "ddpg":{"episodes":400,"warmup_steps":500,"gamma":0.99},
                     "avf":{"window_size":400,"epochs":100},
                     "gmm":{"n":2,"n_inits":10}})");

    auto pipeline = [&](const std::string& out) {
        const std::string common = " --config " + cfg_path + " --out " + out + " >/dev/null 2>&1";
        if (std::system((cli + " train" + common).c_str()) != 0) return false;
        if (std::system((cli + " train-avf" + common).c_str()) != 0) return false;
        if (std::system((cli + " fit-gmm" + common).c_str()) != 0) return false;
        return true;
    };
    const bool ran = pipeline(base + "/a") && pipeline(base + "/b");
    bool identical = ran;
    std::string differing;
    if (ran)
        for (const std::string name :
             {"episodes.jsonl", "policy.json", "avf.json", "gmm.json"})
            if (read_file(base + "/a/" + name) != read_file(base + "/b/" + name)) {
                identical = false;
                differing = name;
            }
    const double t = elapsed_s(t0);
    std::ostringstream d;
    if (!ran)
        d << "pipeline stage failed";
    else if (!identical)
        d << differing << " differs between identical runs";
    else
        d << "episodes.jsonl, policy.json, avf.json, gmm.json byte-identical";
    d << ", " << t << " s";
    report(8, "pipeline determinism", identical, d.str());
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "./failsearch";
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_7();
    criterion_8(cli);
    criteria_5_6_9();
    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT") << "\n";
    return g_failures == 0 ? 0 : 1;
}
