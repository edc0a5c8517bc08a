#include "failsearch/sim.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace failsearch {

using nlohmann::json;

void ScenarioConfig::validate() const {
    if (scenario_id != 1 && scenario_id != 2)
        throw std::invalid_argument("scenario_id must be 1 or 2");
    if (obstacle_m <= 0) throw std::invalid_argument("obstacle_m must be > 0");
    if (base_mu <= 0 || base_mu > 1.5)
        throw std::invalid_argument("base_mu must be in (0, 1.5]");
    if (dt <= 0) throw std::invalid_argument("dt must be > 0");
    if (max_steps <= 0) throw std::invalid_argument("max_steps must be > 0");
    if (v_norm <= 0) throw std::invalid_argument("v_norm must be > 0");
}

InitialConditionDistribution InitialConditionDistribution::for_scenario(int scenario_id) {
    InitialConditionDistribution d;
    d.scenario_id = scenario_id;
    if (scenario_id == 2) {
        d.speed_mean_mph = 35.0;
        d.speed_sd_mph = 9.0;
    }
    return d;
}

Vec InitialConditionDistribution::support_lo() const {
    Vec lo(dim());
    lo(0) = 0.0;
    if (scenario_id == 2) {
        lo(1) = patch_mu_lo;
        lo(2) = patch_start_lo;
        lo(3) = patch_len_lo;
    }
    return lo;
}

Vec InitialConditionDistribution::support_hi() const {
    Vec hi(dim());
    hi(0) = mph_to_ms(speed_cap_mph);
    if (scenario_id == 2) {
        hi(1) = patch_mu_hi;
        hi(2) = patch_start_hi;
        hi(3) = patch_len_hi;
    }
    return hi;
}

bool InitialConditionDistribution::in_support(const InitialCondition& x) const {
    if (x.size() != dim()) return false;
    if (!(x(0) > 0.0 && x(0) <= mph_to_ms(speed_cap_mph))) return false;
    if (scenario_id == 2) {
        if (x(1) < patch_mu_lo || x(1) > patch_mu_hi) return false;
        if (x(2) < patch_start_lo || x(2) > patch_start_hi) return false;
        if (x(3) < patch_len_lo || x(3) > patch_len_hi) return false;
    }
    return true;
}

InitialCondition InitialConditionDistribution::sample(Rng& rng) const {
    std::normal_distribution<double> speed_mph(speed_mean_mph, speed_sd_mph);
    double v_mph;
    do {
        v_mph = speed_mph(rng);
    } while (!(v_mph > 0.0 && v_mph <= speed_cap_mph));
    InitialCondition x(dim());
    x(0) = mph_to_ms(v_mph);
    if (scenario_id == 2) {
        x(1) = std::uniform_real_distribution<double>(patch_mu_lo, patch_mu_hi)(rng);
        x(2) = std::uniform_real_distribution<double>(patch_start_lo, patch_start_hi)(rng);
        x(3) = std::uniform_real_distribution<double>(patch_len_lo, patch_len_hi)(rng);
    }
    return x;
}

double friction_at(const SimState& state, const ScenarioConfig& config) {
    if (state.scenario_id == 2 && state.position >= state.patch_start &&
        state.position < state.patch_start + state.patch_len)
        return state.patch_mu;
    return config.base_mu;
}

namespace {

Vec observe(const SimState& state, const ScenarioConfig& config) {
    const double mu = friction_at(state, config);
    if (config.scenario_id == 1) {
        Vec obs(3);
        obs << state.position / config.obstacle_m, mu, state.velocity / config.v_norm;
        return obs;
    }
    Vec obs(4);
    obs << state.position / config.obstacle_m, state.velocity / config.v_norm, config.base_mu, mu;
    return obs;
}

}  // namespace

std::pair<SimState, Vec> reset(const ScenarioConfig& config, const InitialCondition& x) {
    if (x.size() != config.x_dim())
        throw std::invalid_argument("initial condition dimension does not match scenario");
    if (!(x(0) > 0.0)) throw std::invalid_argument("initial speed must be > 0");
    SimState s;
    s.scenario_id = config.scenario_id;
    s.position = 0.0;
    s.velocity = x(0);
    s.step = 0;
    if (config.scenario_id == 2) {
        s.patch_mu = x(1);
        s.patch_start = x(2);
        s.patch_len = x(3);
    }
    return {s, observe(s, config)};
}

StepResult step(SimState& state, double brake, const ScenarioConfig& config) {
    const double b = std::clamp(brake, 0.0, 1.0);
    const double mu = friction_at(state, config);
    const double a = b * mu * config.g;
    const double v = state.velocity;
    const double v_next = std::max(0.0, v - a * config.dt);
    state.position += 0.5 * (v + v_next) * config.dt;
    state.velocity = v_next;
    state.step += 1;

    StepResult res;
    res.reward = config.reward.k_imm * (v - v_next);
    if (state.position >= config.obstacle_m) {
        res.terminal = Terminal::Crashed;
    } else if (v_next == 0.0) {
        res.terminal = Terminal::Stopped;
    } else if (state.step >= config.max_steps) {
        res.terminal = Terminal::Timeout;
    }
    if (res.terminal != Terminal::Running) {
        const double gap = config.obstacle_m - state.position;
        res.reward += terminal_reward(res.terminal, gap, config.reward);
    }
    res.observation = observe(state, config);
    return res;
}

double terminal_reward(Terminal outcome, double stop_gap_m, const RewardConstants& r) {
    switch (outcome) {
        case Terminal::Crashed:
        case Terminal::Timeout:
            return r.r_crash;
        case Terminal::Stopped:
            if (stop_gap_m > 10.0) return r.r_goal - r.k_far * (stop_gap_m - 10.0);
            if (stop_gap_m < 5.0) return r.r_goal - r.k_near * (5.0 - stop_gap_m);
            return r.r_goal;
        case Terminal::Running:
            break;
    }
    throw std::invalid_argument("terminal_reward called on non-terminal outcome");
}

EpisodeRecord run_episode(const ScenarioConfig& config, const InitialCondition& x,
                          const PolicyFn& policy, long theta, const NoiseFn* noise) {
    auto [state, obs] = reset(config, x);
    EpisodeRecord rec;
    rec.x = x;
    rec.theta = theta;
    while (true) {
        double brake = policy(obs);
        if (noise) brake += (*noise)();
        brake = std::clamp(brake, 0.0, 1.0);
        StepResult res = step(state, brake, config);
        rec.episode_return += res.reward;
        if (res.terminal != Terminal::Running) {
            if (res.terminal == Terminal::Stopped) {
                rec.c = 0;
                rec.stop_gap_m = config.obstacle_m - state.position;
            } else {
                rec.c = 1;  // crash or timeout
            }
            return rec;
        }
        obs = std::move(res.observation);
    }
}

std::string episode_to_jsonl(const EpisodeRecord& rec) {
    json doc;
    doc["episode"] = rec.theta;
    doc["x"] = std::vector<double>(rec.x.data(), rec.x.data() + rec.x.size());
    doc["theta"] = rec.theta;
    doc["c"] = rec.c;
    doc["return"] = rec.episode_return;
    if (rec.stop_gap_m)
        doc["stop_gap_m"] = *rec.stop_gap_m;
    else
        doc["stop_gap_m"] = nullptr;
    return doc.dump();
}

EpisodeRecord episode_from_jsonl(const std::string& line) {
    json doc = json::parse(line);
    EpisodeRecord rec;
    auto xv = doc.at("x").get<std::vector<double>>();
    rec.x = Eigen::Map<Vec>(xv.data(), xv.size());
    rec.theta = doc.at("theta").get<long>();
    rec.c = doc.at("c").get<int>();
    rec.episode_return = doc.at("return").get<double>();
    if (!doc.at("stop_gap_m").is_null()) rec.stop_gap_m = doc["stop_gap_m"].get<double>();
    return rec;
}

std::vector<EpisodeRecord> load_episode_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open episode log: " + path);
    std::vector<EpisodeRecord> log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        log.push_back(episode_from_jsonl(line));
    }
    return log;
}

void save_episode_log(const std::vector<EpisodeRecord>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write episode log: " + path);
    for (const auto& rec : log) out << episode_to_jsonl(rec) << "\n";
}

}  // namespace failsearch
