#include "failsearch/ddpg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace failsearch {

DdpgHyper DdpgHyper::for_scenario(int scenario_id) {
    DdpgHyper h;
    h.episodes = scenario_id == 1 ? 5000 : 15000;
    return h;
}

void DdpgHyper::validate() const {
    if (episodes <= 0) throw std::invalid_argument("ddpg.episodes must be > 0");
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("ddpg.gamma must be in (0,1)");
    if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("ddpg.tau must be in (0,1]");
    if (static_cast<size_t>(batch_size) > buffer_capacity)
        throw std::invalid_argument("ddpg.batch_size must be <= buffer_capacity");
    if (!(noise_decay > 0 && noise_decay <= 1))
        throw std::invalid_argument("ddpg.noise_decay must be in (0,1]");
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
    std::uniform_int_distribution<size_t> u(0, data_.size() - 1);
    return data_[u(rng)];
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
    for (size_t i = 0; i < target.w.size(); ++i) {
        target.w[i] = tau * online.w[i] + (1.0 - tau) * target.w[i];
        target.b[i] = tau * online.b[i] + (1.0 - tau) * target.b[i];
    }
}

TrainResult ddpg_train(const ScenarioConfig& config, const InitialConditionDistribution& dist,
                       const DdpgHyper& hyper, Rng& rng, const CheckpointFn& checkpoint) {
    config.validate();
    hyper.validate();
    const int obs_dim = config.obs_dim();

    MlpSpec actor_spec({obs_dim, 64, 64, 1},
                       {Activation::Relu, Activation::Relu, Activation::Sigmoid});
    MlpSpec critic_spec({obs_dim + 1, 64, 64, 1},
                        {Activation::Relu, Activation::Relu, Activation::Linear});

    MlpParams actor = mlp_init(actor_spec, rng);
    MlpParams critic = mlp_init(critic_spec, rng);
    MlpParams actor_target = actor;
    MlpParams critic_target = critic;

    AdamState actor_opt = AdamState::init(actor, {.lr = hyper.actor_lr});
    AdamState critic_opt = AdamState::init(critic, {.lr = hyper.critic_lr});

    ReplayBuffer buffer(hyper.buffer_capacity);
    OuProcess ou;
    const double base_sigma = ou.sigma;
    long total_steps = 0;

    TrainResult result;
    result.log.reserve(hyper.episodes);

    const long stride = std::max<long>(1, hyper.episodes / 10);
    const int B = hyper.batch_size;
    Mat s(obs_dim, B), s_next(obs_dim, B), sa(obs_dim + 1, B);
    Vec r(B), done(B), a(B);

    for (long ep = 0; ep < hyper.episodes; ++ep) {
        ou.reset();
        ou.sigma = base_sigma * std::pow(hyper.noise_decay, static_cast<double>(ep));
        InitialCondition x = dist.sample(rng);
        auto [state, obs] = reset(config, x);

        EpisodeRecord rec;
        rec.x = x;
        rec.theta = ep;

        Terminal terminal = Terminal::Running;
        while (terminal == Terminal::Running) {
            const double raw = mlp_forward(actor, obs)(0);
            const double action = std::clamp(raw + ou.next(rng), 0.0, 1.0);
            StepResult res = step(state, action, config);
            terminal = res.terminal;
            rec.episode_return += res.reward;

            Transition t;
            t.obs = obs;
            t.action = action;
            t.reward = res.reward;
            t.next_obs = res.observation;
            t.done = terminal != Terminal::Running;
            buffer.push(std::move(t));
            obs = std::move(res.observation);
            total_steps += 1;

            if (total_steps >= hyper.warmup_steps &&
                buffer.size() >= static_cast<size_t>(B)) {
                for (int i = 0; i < B; ++i) {
                    const Transition& tr = buffer.sample(rng);
                    s.col(i) = tr.obs;
                    s_next.col(i) = tr.next_obs;
                    a(i) = tr.action;
                    r(i) = tr.reward;
                    done(i) = tr.done ? 1.0 : 0.0;
                }

                // critic regression target r + gamma (1-done) Q'(s', pi'(s'))
                Mat a_next = mlp_forward_batch(actor_target, s_next);
                sa.topRows(obs_dim) = s_next;
                sa.bottomRows(1) = a_next;
                Mat q_next = mlp_forward_batch(critic_target, sa);
                Vec y = r.array() +
                        hyper.gamma * (1.0 - done.array()) * q_next.row(0).transpose().array();

                sa.topRows(obs_dim) = s;
                sa.bottomRows(1) = a.transpose();
                ForwardCache critic_cache;
                Mat q = mlp_forward_batch(critic, sa, &critic_cache);
                Vec grad;
                const double critic_loss = mse_loss(q.row(0).transpose(), y, &grad);
                if (!std::isfinite(critic_loss))
                    throw std::runtime_error(
                        "ddpg_train: non-finite critic loss at episode " + std::to_string(ep) +
                        ", step " + std::to_string(total_steps));
                MlpGrads critic_grads =
                    mlp_backward(critic, critic_cache, grad.transpose());
                adam_step(critic_opt, critic, critic_grads);

                // actor ascends Q(s, pi(s)); dQ/da flows back through the critic input
                ForwardCache actor_cache;
                Mat a_pi = mlp_forward_batch(actor, s, &actor_cache);
                sa.bottomRows(1) = a_pi;
                ForwardCache q_cache;
                mlp_forward_batch(critic, sa, &q_cache);
                Mat dq_input;
                mlp_backward(critic, q_cache, Mat::Ones(1, B) / B, &dq_input);
                Mat actor_out_grad = -dq_input.bottomRows(1);
                MlpGrads actor_grads = mlp_backward(actor, actor_cache, actor_out_grad);
                adam_step(actor_opt, actor, actor_grads);

                soft_update(critic_target, critic, hyper.tau);
                soft_update(actor_target, actor, hyper.tau);
            }

            if (terminal != Terminal::Running) {
                if (terminal == Terminal::Stopped)
                    rec.stop_gap_m = config.obstacle_m - state.position;
                rec.c = terminal == Terminal::Stopped ? 0 : 1;
            }
        }
        result.log.push_back(std::move(rec));

        if (checkpoint && (ep + 1) % stride == 0)
            checkpoint(ep, Policy{actor}, critic);
    }

    result.policy = Policy{std::move(actor)};
    result.critic = std::move(critic);
    return result;
}

}  // namespace failsearch
