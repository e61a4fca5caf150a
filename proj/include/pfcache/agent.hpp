#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pfcache/env.hpp"
#include "pfcache/neural.hpp"
#include "pfcache/rng.hpp"
#include "pfcache/workload.hpp"

namespace pfcache {

struct Transition {
    std::vector<double> state;        // flattened EnvState, 2C
    std::vector<std::uint8_t> action; // raw action as selected
    double reward = 0;
    std::vector<double> next_state;   // 2C
};

// FIFO ring; eviction is strictly oldest-first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    }

    void push(Transition t) {
        if (store_.size() < capacity_) {
            store_.push_back(std::move(t));
        } else {
            store_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return store_.size(); }
    size_t capacity() const { return capacity_; }

    const Transition& operator[](size_t i) const { return store_[i]; }

    // Sample without replacement within one mini-batch (partial Fisher-Yates).
    std::vector<const Transition*> sample(size_t batch_size, Rng& rng) const {
        const size_t n = store_.size();
        if (batch_size > n) throw std::invalid_argument("ReplayBuffer: batch larger than buffer");
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        std::vector<const Transition*> out;
        out.reserve(batch_size);
        for (size_t i = 0; i < batch_size; ++i) {
            const size_t j = i + rng.uniform_below(n - i);
            std::swap(idx[i], idx[j]);
            out.push_back(&store_[idx[i]]);
        }
        return out;
    }

private:
    size_t capacity_;
    size_t head_ = 0;  // oldest slot once full
    std::vector<Transition> store_;
};

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay = 1.0;  // per-slot multiplicative factor

    // Factor chosen so epsilon reaches `end` halfway through the run.
    static EpsilonSchedule half_run(double start, double end, long total_slots) {
        EpsilonSchedule s;
        s.start = start;
        s.end = end;
        const long half = std::max(1L, total_slots / 2);
        s.decay = (start > 0 && end > 0 && end < start)
                      ? std::pow(end / start, 1.0 / static_cast<double>(half))
                      : 1.0;
        return s;
    }

    double at(long slot) const {
        const double eps = start * std::pow(decay, static_cast<double>(slot));
        return std::max(end, eps);
    }
};

struct AgentConfig {
    double gamma = 0.99;
    double learning_rate = 0.002;
    double tau = 0.005;
    EpsilonSchedule epsilon;
    int batch_size = 64;
    size_t buffer_capacity = 10000;
    size_t learn_start = 256;
    Optimizer::Kind optimizer = Optimizer::Kind::Sgd;
};

struct ActionChoice {
    std::vector<std::uint8_t> action;  // raw, possibly infeasible
    std::vector<double> scores;        // per-head Q(cache) - Q(skip), greedy pass
};

// Per-head epsilon-greedy action selection. The random branch replaces the
// whole action vector with uniform bits; scores always come from the greedy
// pass so feasibility projection stays well-defined. Argmax ties pick 0.
inline ActionChoice select_action(const QNetwork& net, const std::vector<double>& state,
                                  double epsilon, Rng& rng, NetWorkspace& ws) {
    const int C = net.num_contents();
    const double* q = forward(net, state.data(), ws);

    ActionChoice choice;
    choice.action.resize(C);
    choice.scores.resize(C);
    for (int c = 0; c < C; ++c) {
        const double q0 = q[2 * c], q1 = q[2 * c + 1];
        choice.scores[c] = q1 - q0;
        choice.action[c] = (q1 > q0) ? 1 : 0;
    }
    if (epsilon > 0 && rng.uniform_double() < epsilon)
        for (int c = 0; c < C; ++c) choice.action[c] = rng.coin() ? 1 : 0;
    return choice;
}

// y_c = r + gamma * max_a Qbar_c(s', a); bootstraps at every slot.
inline std::vector<double> td_targets(const QNetwork& target_net, double reward,
                                      const std::vector<double>& next_state, double gamma,
                                      NetWorkspace& ws) {
    const int C = target_net.num_contents();
    const double* q = forward(target_net, next_state.data(), ws);
    std::vector<double> y(C);
    for (int c = 0; c < C; ++c)
        y[c] = reward + gamma * std::max(q[2 * c], q[2 * c + 1]);
    return y;
}

// MH-DQN agent for one MEC server: online + target networks, replay buffer,
// and its own exploration stream.
class Agent {
public:
    Agent(int num_contents, int hidden_width, int num_layers, AgentConfig config,
          std::uint64_t net_seed, std::uint64_t rng_seed)
        : config_(config),
          online_(QNetwork::make(num_contents, hidden_width, num_layers, net_seed)),
          target_(online_),
          buffer_(config.buffer_capacity),
          rng_(rng_seed) {
        opt_.kind = config.optimizer;
        opt_.learning_rate = config.learning_rate;
    }

    ActionChoice act(const std::vector<double>& state) {
        return select_action(online_, state, config_.epsilon.at(global_slot_), rng_, ws_);
    }

    void remember(Transition t) { buffer_.push(std::move(t)); }

    bool ready_to_learn() const {
        return buffer_.size() >= std::max(config_.learn_start,
                                          static_cast<size_t>(config_.batch_size));
    }

    // One Alg.-1 update: targets from the target net, gradients of the
    // multi-head TD loss, one optimizer step, one soft target update.
    // Returns the pre-update loss.
    double learn_step(const std::vector<const Transition*>& batch) {
        if (batch.empty()) throw std::invalid_argument("learn_step: empty batch");
        const int C = online_.num_contents();

        targets_.resize(batch.size());
        examples_.clear();
        examples_.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
            targets_[i] = td_targets(target_, batch[i]->reward, batch[i]->next_state,
                                     config_.gamma, ws_);
            if (static_cast<int>(targets_[i].size()) != C)
                throw std::runtime_error("learn_step: target dimension mismatch");
            examples_.push_back({batch[i]->state.data(), batch[i]->action.data(),
                                 targets_[i].data()});
        }

        const double loss = backward(online_, examples_, grads_, ws_);
        apply_gradients(online_, grads_, opt_);
        soft_update(target_, online_, config_.tau);
        return loss;
    }

    double learn_from_buffer() {
        auto batch = buffer_.sample(static_cast<size_t>(config_.batch_size), rng_);
        return learn_step(batch);
    }

    void advance_slot() { ++global_slot_; }

    double epsilon() const { return config_.epsilon.at(global_slot_); }
    long global_slot() const { return global_slot_; }
    const AgentConfig& config() const { return config_; }
    QNetwork& online() { return online_; }
    const QNetwork& online() const { return online_; }
    QNetwork& target() { return target_; }
    const QNetwork& target() const { return target_; }
    ReplayBuffer& buffer() { return buffer_; }
    Rng& rng() { return rng_; }

private:
    AgentConfig config_;
    QNetwork online_;
    QNetwork target_;
    Optimizer opt_;
    ReplayBuffer buffer_;
    Rng rng_;
    NetWorkspace ws_;
    Gradients grads_;
    long global_slot_ = 0;

    std::vector<std::vector<double>> targets_;
    std::vector<TrainingExample> examples_;
};

// One fixed-horizon training episode: observe -> act -> project -> step ->
// store -> sample -> learn, T times. The episode opens on a random feasible
// cache state; the request history carries over between episodes.
inline EpisodeStats run_episode(Agent& agent, CacheEnv& env, const ServerProfile& profile,
                                const std::vector<double>& pmf, Rng& request_rng, int slots) {
    if (slots < 1) throw std::invalid_argument("run_episode: need at least one slot");
    env.randomize_cache(agent.rng());
    EpisodeStats stats;
    for (int t = 0; t < slots; ++t) {
        const std::vector<double> state = env.state().flatten();
        ActionChoice choice = agent.act(state);
        const RequestVector requests = generate_requests(profile, pmf, request_rng);
        const SlotOutcome out = env.step(choice.action, choice.scores, requests);
        const std::vector<double> next_state = env.state().flatten();

        // the stored a_m^t is the materialized placement (act -> project ->
        // step -> store): sub-action credit then matches what was served
        agent.remember({state, env.cache().cached, out.reward, next_state});
        if (agent.ready_to_learn()) {
            stats.mean_loss += agent.learn_from_buffer();
            ++stats.learn_steps;
        }
        agent.advance_slot();

        stats.mean_chr += out.chr;
        stats.mean_cost += out.replacement_cost;
        stats.mean_reward += out.reward;
        stats.mean_utility += out.utility;
        stats.penalty_count += out.violated ? 1 : 0;
        stats.total_requests += requests.total();
    }
    stats.mean_chr /= slots;
    stats.mean_cost /= slots;
    stats.mean_reward /= slots;
    stats.mean_utility /= slots;
    if (stats.learn_steps > 0) stats.mean_loss /= stats.learn_steps;
    return stats;
}

}  // namespace pfcache
