#pragma once

#include "failsearch/mlp.hpp"
#include "failsearch/sim.hpp"

#include <deque>
#include <vector>

namespace failsearch {

/// Mean-reverting exploration noise added to the actor output during
/// training. Euler-Maruyama discretization; the sqrt(dt) noise scaling keeps
/// the stationary variance at sigma^2 / (2 theta) in the small-dt limit.
struct OuProcess {
    double mu = 0.2;
    double theta = 1.0;
    double sigma = 0.1;
    double dt_ou = 0.1;
    double value = 0.2;

    double next(Rng& rng) {
        std::normal_distribution<double> n(0.0, 1.0);
        value += theta * (mu - value) * dt_ou + sigma * std::sqrt(dt_ou) * n(rng);
        return value;
    }
    void reset() { value = mu; }
};

struct DdpgHyper {
    long episodes = 5000;
    double gamma = 0.999;
    double tau = 0.005;
    size_t buffer_capacity = 1000000;
    int batch_size = 64;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    long warmup_steps = 1000;
    double noise_decay = 1.0;  // per-episode multiplier on OU sigma; 1.0 = none

    static DdpgHyper for_scenario(int scenario_id);
    void validate() const;
};

/// Deterministic braking policy: sigmoid-output actor over the observation.
struct Policy {
    MlpParams actor;

    double act(const Vec& observation) const { return mlp_forward(actor, observation)(0); }
    PolicyFn as_fn() const {
        return [this](const Vec& obs) { return act(obs); };
    }
};

struct Transition {
    Vec obs;
    double action = 0.0;
    double reward = 0.0;
    Vec next_obs;
    bool done = false;
};

/// Fixed-capacity ring buffer, oldest transitions evicted first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    size_t size() const { return data_.size(); }
    const Transition& sample(Rng& rng) const;

private:
    size_t capacity_;
    size_t next_ = 0;
    std::vector<Transition> data_;
};

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

struct TrainResult {
    Policy policy;
    MlpParams critic;
    std::vector<EpisodeRecord> log;
};

/// Hook invoked every `checkpoint_stride` episodes; may be empty.
using CheckpointFn = std::function<void(long episode, const Policy&, const MlpParams& critic)>;

TrainResult ddpg_train(const ScenarioConfig& config, const InitialConditionDistribution& dist,
                       const DdpgHyper& hyper, Rng& rng,
                       const CheckpointFn& checkpoint = nullptr);

}  // namespace failsearch
