#include "failsearch/search.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace failsearch {

std::vector<BenchStats> BenchTable::stats() const {
    std::vector<BenchStats> out;
    for (const auto& row : rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const BenchStats& s) { return s.strategy == row.strategy; });
        if (it == out.end()) {
            out.push_back({row.strategy, std::numeric_limits<long>::max(), 0, 0.0, 0});
            it = out.end() - 1;
        }
        it->min = std::min(it->min, row.episodes_used);
        it->max = std::max(it->max, row.episodes_used);
        it->avg += static_cast<double>(row.episodes_used);
        if (row.censored) it->censored += 1;
    }
    for (auto& s : out) {
        long count = std::count_if(rows.begin(), rows.end(),
                                   [&](const BenchRow& r) { return r.strategy == s.strategy; });
        s.avg /= static_cast<double>(count);
    }
    return out;
}

EpisodeOracle make_episode_oracle(const ScenarioConfig& config, const Policy& policy) {
    return [config, policy](const InitialCondition& x) {
        return run_episode(config, x, policy.as_fn(), 0).c == 1;
    };
}

namespace {

SearchOutcome propose_and_run(const EpisodeOracle& oracle, const ProposalFn& propose,
                              ProposalSource source, const std::string& strategy, long budget,
                              Rng& rng) {
    if (budget < 1) throw std::invalid_argument("search budget must be >= 1");
    SearchOutcome out;
    out.strategy = strategy;
    while (out.episodes_used < budget) {
        InitialCondition x = propose(rng);
        out.episodes_used += 1;
        out.trace.push_back(source);
        if (oracle(x)) {
            out.found = true;
            out.failing_x = std::move(x);
            return out;
        }
    }
    return out;
}

}  // namespace

SearchOutcome vmc_search(const EpisodeOracle& oracle, const InitialConditionDistribution& dist,
                         long budget, Rng& rng) {
    return propose_and_run(
        oracle, [&dist](Rng& r) { return dist.sample(r); }, ProposalSource::Vmc, "vmc", budget,
        rng);
}

std::vector<InitialCondition> pr_search(const EpisodeOracle& oracle,
                                        const std::vector<EpisodeRecord>& training_log) {
    std::vector<InitialCondition> still_failing;
    for (const auto& rec : training_log)
        if (rec.c == 1 && oracle(rec.x)) still_failing.push_back(rec.x);
    return still_failing;
}

SearchOutcome avf_search(const EpisodeOracle& oracle, const AvfModel& avf,
                         const InitialConditionDistribution& dist, int n_candidates, long budget,
                         Rng& rng) {
    return propose_and_run(
        oracle, [&](Rng& r) { return avf_select(avf, dist, n_candidates, r); },
        ProposalSource::Avf, "avf", budget, rng);
}

SearchOutcome gmm_search(const EpisodeOracle& oracle, const GmmModel& gmm, long budget, Rng& rng) {
    return propose_and_run(
        oracle, [&gmm](Rng& r) { return gmm_sample(gmm, r); }, ProposalSource::Gmm, "gmm", budget,
        rng);
}

HybridResult hybrid_search(const EpisodeOracle& oracle, const AvfModel& avf, const GmmModel& gmm,
                           const InitialConditionDistribution& dist, FailureSet& failure_data,
                           const HybridOpts& opts, long budget, Rng& rng) {
    if (budget < 1) throw std::invalid_argument("search budget must be >= 1");
    HybridResult res;
    res.gmm = gmm;
    res.outcome.strategy = "hybrid";

    while (res.outcome.episodes_used < budget) {
        const bool even = res.outcome.episodes_used % 2 == 0;
        const bool use_gmm = even == opts.gmm_first;
        InitialCondition x = use_gmm ? gmm_sample(res.gmm, rng)
                                     : avf_select(avf, dist, opts.n_candidates, rng);
        res.outcome.episodes_used += 1;
        res.outcome.trace.push_back(use_gmm ? ProposalSource::Gmm : ProposalSource::Avf);
        if (oracle(x)) {
            res.outcome.found = true;
            res.outcome.failing_x = x;
            if (!use_gmm) {
                FailureSet fresh;
                fresh.add(std::move(x), FailureSource::SearchFound);
                res.gmm = gmm_update(res.gmm, fresh, failure_data, opts.em);
            }
            return res;
        }
    }
    return res;
}

BenchTable run_bench(const EpisodeOracle& oracle, const InitialConditionDistribution& dist,
                     const AvfModel* avf, const GmmModel* gmm, FailureSet failure_data,
                     const BenchOpts& opts, const SeedDeriveFn& derive_seed) {
    BenchTable table;
    for (const auto& strategy : opts.strategies) {
        if ((strategy == "avf" || strategy == "hybrid") && !avf)
            throw std::runtime_error("bench: strategy '" + strategy + "' requires an AVF model");
        if ((strategy == "gmm" || strategy == "hybrid") && !gmm)
            throw std::runtime_error("bench: strategy '" + strategy + "' requires a GMM model");

        GmmModel carried;  // hybrid's GMM adapts across consecutive searches
        if (gmm) carried = *gmm;
        FailureSet hybrid_data = failure_data;

        for (int k = 0; k < opts.k_failures; ++k) {
            Rng rng(derive_seed("bench/" + strategy, k));
            SearchOutcome out;
            if (strategy == "vmc") {
                out = vmc_search(oracle, dist, opts.budget, rng);
            } else if (strategy == "avf") {
                out = avf_search(oracle, *avf, dist, opts.n_candidates, opts.budget, rng);
            } else if (strategy == "gmm") {
                out = gmm_search(oracle, carried, opts.budget, rng);
            } else if (strategy == "hybrid") {
                if (opts.hybrid_reset) {
                    carried = *gmm;
                    hybrid_data = failure_data;
                }
                HybridOpts hopts{opts.n_candidates, opts.gmm_first, opts.em};
                HybridResult hres =
                    hybrid_search(oracle, *avf, carried, dist, hybrid_data, hopts, opts.budget, rng);
                out = std::move(hres.outcome);
                carried = std::move(hres.gmm);
            } else {
                throw std::runtime_error("bench: unknown strategy '" + strategy + "'");
            }
            BenchRow row;
            row.strategy = strategy;
            row.search_index = k;
            row.episodes_used = out.episodes_used;
            row.censored = !out.found;
            row.failing_x = std::move(out.failing_x);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace failsearch
