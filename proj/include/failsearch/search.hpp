#pragma once

#include "failsearch/avf.hpp"
#include "failsearch/ddpg.hpp"
#include "failsearch/gmm.hpp"
#include "failsearch/sim.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace failsearch {

enum class ProposalSource { Vmc, Avf, Gmm };

struct SearchOutcome {
    bool found = false;
    long episodes_used = 0;  // counts simulator runs only
    std::optional<InitialCondition> failing_x;
    std::string strategy;
    std::vector<ProposalSource> trace;  // proposal source per evaluated episode
};

struct BenchRow {
    std::string strategy;
    int search_index = 0;
    long episodes_used = 0;
    bool censored = false;
    std::optional<InitialCondition> failing_x;
};

struct BenchStats {
    std::string strategy;
    long min = 0, max = 0;
    double avg = 0.0;
    int censored = 0;
};

struct BenchTable {
    std::vector<BenchRow> rows;
    std::vector<BenchStats> stats() const;
};

/// Runs one episode and reports whether it failed (C=1). The search loops
/// are written against this so tests can substitute analytic stubs.
using EpisodeOracle = std::function<bool(const InitialCondition&)>;

EpisodeOracle make_episode_oracle(const ScenarioConfig& config, const Policy& policy);

/// Proposal generator paired with its trace tag.
using ProposalFn = std::function<InitialCondition(Rng&)>;

SearchOutcome vmc_search(const EpisodeOracle& oracle, const InitialConditionDistribution& dist,
                         long budget, Rng& rng);

/// Replays all training-time failures against the final policy; returns
/// those that still fail.
std::vector<InitialCondition> pr_search(const EpisodeOracle& oracle,
                                        const std::vector<EpisodeRecord>& training_log);

SearchOutcome avf_search(const EpisodeOracle& oracle, const AvfModel& avf,
                         const InitialConditionDistribution& dist, int n_candidates, long budget,
                         Rng& rng);

SearchOutcome gmm_search(const EpisodeOracle& oracle, const GmmModel& gmm, long budget, Rng& rng);

struct HybridOpts {
    int n_candidates = 1000;
    bool gmm_first = true;
    EmOpts em;
};

struct HybridResult {
    SearchOutcome outcome;
    GmmModel gmm;
};

/// Alternates GMM and AVF proposals; an AVF-proposed failure triggers a
/// warm-started GMM refit before returning.
HybridResult hybrid_search(const EpisodeOracle& oracle, const AvfModel& avf, const GmmModel& gmm,
                           const InitialConditionDistribution& dist, FailureSet& failure_data,
                           const HybridOpts& opts, long budget, Rng& rng);

struct BenchOpts {
    std::vector<std::string> strategies;  // subset of vmc, avf, gmm, hybrid
    int k_failures = 10;
    long budget = 200000;
    int n_candidates = 1000;
    bool hybrid_reset = false;  // reset the hybrid GMM between searches
    bool gmm_first = true;
    EmOpts em;
};

using SeedDeriveFn = std::function<uint64_t(const std::string& label, long index)>;

BenchTable run_bench(const EpisodeOracle& oracle, const InitialConditionDistribution& dist,
                     const AvfModel* avf, const GmmModel* gmm, FailureSet failure_data,
                     const BenchOpts& opts, const SeedDeriveFn& derive_seed);

}  // namespace failsearch
