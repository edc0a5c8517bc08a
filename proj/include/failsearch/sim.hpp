#pragma once

#include "failsearch/mlp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace failsearch {

constexpr double kMphToMs = 0.44704;

inline double mph_to_ms(double mph) { return mph * kMphToMs; }

struct RewardConstants {
    double k_imm = 0.1;
    double r_goal = 100.0;
    double k_far = 2.0;
    double k_near = 20.0;
    double r_crash = -100.0;
};

struct ScenarioConfig {
    int scenario_id = 1;
    double obstacle_m = 100.0;
    double base_mu = 0.8;
    double g = 9.81;
    double dt = 0.05;
    int max_steps = 4000;
    double v_norm = 40.0;
    RewardConstants reward;

    int x_dim() const { return scenario_id == 1 ? 1 : 4; }
    int obs_dim() const { return scenario_id == 1 ? 3 : 4; }
    void validate() const;
};

/// The scenario's random initial condition X.
/// Scenario 1: [v0 m/s]. Scenario 2: [v0 m/s, patch_mu, patch_start m, patch_len m].
using InitialCondition = Vec;

/// P_X: truncated-normal initial speed plus, for scenario 2, independent
/// uniform friction-patch parameters.
struct InitialConditionDistribution {
    int scenario_id = 1;
    double speed_mean_mph = 38.0;
    double speed_sd_mph = 11.0;
    double speed_cap_mph = 80.0;
    double patch_mu_lo = 0.05, patch_mu_hi = 0.5;
    double patch_start_lo = 10.0, patch_start_hi = 80.0;
    double patch_len_lo = 5.0, patch_len_hi = 30.0;

    static InitialConditionDistribution for_scenario(int scenario_id);

    int dim() const { return scenario_id == 1 ? 1 : 4; }
    Vec support_lo() const;
    Vec support_hi() const;
    bool in_support(const InitialCondition& x) const;
    InitialCondition sample(Rng& rng) const;
};

enum class Terminal { Running, Stopped, Crashed, Timeout };

struct SimState {
    int scenario_id = 1;
    double position = 0.0;
    double velocity = 0.0;
    int step = 0;
    double patch_mu = 0.0;
    double patch_start = 0.0;
    double patch_len = 0.0;
};

struct StepResult {
    Vec observation;
    double reward = 0.0;
    Terminal terminal = Terminal::Running;
};

struct EpisodeRecord {
    InitialCondition x;
    long theta = 0;
    int c = 0;
    double episode_return = 0.0;
    std::optional<double> stop_gap_m;
};

double friction_at(const SimState& state, const ScenarioConfig& config);

std::pair<SimState, Vec> reset(const ScenarioConfig& config, const InitialCondition& x);

StepResult step(SimState& state, double brake, const ScenarioConfig& config);

/// Terminal reward by outcome: crash/timeout penalized, stopping in the
/// 5-10 m gap band gets the full bonus, linear falloff outside it.
double terminal_reward(Terminal outcome, double stop_gap_m, const RewardConstants& r);

using PolicyFn = std::function<double(const Vec& observation)>;
using NoiseFn = std::function<double()>;

EpisodeRecord run_episode(const ScenarioConfig& config, const InitialCondition& x,
                          const PolicyFn& policy, long theta, const NoiseFn* noise = nullptr);

std::string episode_to_jsonl(const EpisodeRecord& rec);
EpisodeRecord episode_from_jsonl(const std::string& line);
std::vector<EpisodeRecord> load_episode_log(const std::string& path);
void save_episode_log(const std::vector<EpisodeRecord>& log, const std::string& path);

}  // namespace failsearch
