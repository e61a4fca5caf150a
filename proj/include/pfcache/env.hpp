#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "pfcache/workload.hpp"

namespace pfcache {

struct RewardWeights {
    double omega1 = 1.0;
    double omega2 = 1.0;
    double omega3 = 1.0;
    double penalty_rho = 1.0;
};

// Materialized cache. Always satisfies C1 (used_gb <= capacity) and C2
// (binary entries); construction goes through project_feasible.
struct CacheState {
    std::vector<std::uint8_t> cached;
    double used_gb = 0;
};

// Ring of the last window-1 request vectors, most recent first.
struct RequestHistory {
    int window = 5;      // w >= 2
    double beta = 0.9;   // decay in (0,1)
    std::deque<RequestVector> recent;

    void push(RequestVector rv) {
        recent.push_front(std::move(rv));
        while (static_cast<int>(recent.size()) > window - 1) recent.pop_back();
    }
};

struct EnvState {
    std::vector<double> ewma;                 // d-bar, length C
    std::vector<std::uint8_t> prev_action;    // materialized cache of last slot

    // Agent input layout: [ewma..., prev_action...], dimension 2C.
    std::vector<double> flatten() const {
        std::vector<double> x;
        x.reserve(ewma.size() * 2);
        x.insert(x.end(), ewma.begin(), ewma.end());
        for (std::uint8_t a : prev_action) x.push_back(static_cast<double>(a));
        return x;
    }
};

struct SlotOutcome {
    double chr = 0;               // H_m^t
    double replacement_cost = 0;  // E_m^t
    bool violated = false;
    double reward = 0;            // w1*H - w2*E - w3*rho*violated
    double utility = 0;           // w1*H - w2*E
};

// Per-episode aggregates of slot outcomes; D_m is total_requests.
struct EpisodeStats {
    double mean_chr = 0;
    double mean_cost = 0;
    double mean_reward = 0;
    double mean_utility = 0;
    int penalty_count = 0;
    long total_requests = 0;
    double mean_loss = 0;
    int learn_steps = 0;
};

// EWMA of past requests: (sum_{k=1}^{w-1} beta^k d^(t-k)) / (sum_{k=1}^{w-1} beta^k).
// Missing history slots count as zero vectors; the denominator always spans
// the full window. Empty history yields the zero vector.
inline std::vector<double> ewma_observation(const RequestHistory& history, int num_contents) {
    std::vector<double> obs(num_contents, 0.0);
    if (history.recent.empty()) return obs;

    double weight = 1.0;
    double denom = 0.0;
    for (int k = 1; k <= history.window - 1; ++k) {
        weight *= history.beta;
        denom += weight;
        if (k <= static_cast<int>(history.recent.size())) {
            const auto& counts = history.recent[k - 1].counts;
            for (int i = 0; i < num_contents; ++i) obs[i] += weight * counts[i];
        }
    }
    for (double& v : obs) v /= denom;
    return obs;
}

// Eq.-style replacement cost: payments of newly fetched contents only,
// evictions are free.
inline double replacement_cost(const std::vector<std::uint8_t>& a_new,
                               const std::vector<std::uint8_t>& a_prev,
                               const ContentCatalog& catalog) {
    if (a_new.size() != a_prev.size() || a_new.size() != catalog.items.size())
        throw std::invalid_argument("replacement_cost: length mismatch");
    double cost = 0;
    for (size_t i = 0; i < a_new.size(); ++i)
        if (a_new[i] == 1 && a_prev[i] == 0) cost += catalog.items[i].payment;
    return cost;
}

// Fraction of this slot's requests served from cache; 0 when no requests.
inline double cache_hit_ratio(const std::vector<std::uint8_t>& cached,
                              const RequestVector& requests) {
    long hits = 0, total = 0;
    for (size_t i = 0; i < cached.size(); ++i) {
        total += requests.counts[i];
        if (cached[i]) hits += requests.counts[i];
    }
    if (total == 0) return 0.0;
    return static_cast<double>(hits) / static_cast<double>(total);
}

// Truncates an over-capacity raw action into a feasible cache: drops cached
// items in ascending score order (ties by ascending content id) until the
// capacity constraint holds. scores[i] is the agent's cache-vs-skip margin;
// non-learning callers pass zeros.
inline std::pair<CacheState, bool> project_feasible(const std::vector<std::uint8_t>& raw_action,
                                                    const std::vector<double>& scores,
                                                    const ContentCatalog& catalog,
                                                    double capacity_gb) {
    CacheState state;
    state.cached = raw_action;
    state.used_gb = 0;
    for (size_t i = 0; i < raw_action.size(); ++i)
        if (raw_action[i]) state.used_gb += catalog.items[i].size_gb;

    if (state.used_gb <= capacity_gb) return {std::move(state), false};

    std::vector<int> order;
    for (size_t i = 0; i < raw_action.size(); ++i)
        if (raw_action[i]) order.push_back(static_cast<int>(i));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    for (int idx : order) {
        if (state.used_gb <= capacity_gb) break;
        state.cached[idx] = 0;
        state.used_gb -= catalog.items[idx].size_gb;
    }
    return {std::move(state), true};
}

// One slot transition: materialize the action, charge fetches, serve this
// slot's requests, compute the reward, and append the requests to history.
inline std::pair<CacheState, SlotOutcome> env_step(const CacheState& prev,
                                                   const std::vector<std::uint8_t>& raw_action,
                                                   const std::vector<double>& scores,
                                                   const RequestVector& requests,
                                                   const RewardWeights& weights,
                                                   const ContentCatalog& catalog,
                                                   double capacity_gb,
                                                   RequestHistory& history) {
    if (raw_action.size() != prev.cached.size() ||
        requests.counts.size() != prev.cached.size())
        throw std::invalid_argument("env_step: dimension mismatch");

    auto [next, violated] = project_feasible(raw_action, scores, catalog, capacity_gb);

    SlotOutcome out;
    out.violated = violated;
    out.replacement_cost = replacement_cost(next.cached, prev.cached, catalog);
    out.chr = cache_hit_ratio(next.cached, requests);
    out.utility = weights.omega1 * out.chr - weights.omega2 * out.replacement_cost;
    out.reward = out.utility - weights.omega3 * weights.penalty_rho * (violated ? 1.0 : 0.0);

    history.push(requests);
    return {std::move(next), out};
}

// Per-server environment instance: owns the cache and request history.
class CacheEnv {
public:
    CacheEnv(ContentCatalog catalog, double capacity_gb, RewardWeights weights,
             int ewma_window, double ewma_beta)
        : catalog_(std::move(catalog)), capacity_gb_(capacity_gb), weights_(weights) {
        history_.window = ewma_window;
        history_.beta = ewma_beta;
        cache_.cached.assign(catalog_.items.size(), 0);
        cache_.used_gb = 0;
    }

    EnvState state() const {
        EnvState s;
        s.ewma = ewma_observation(history_, catalog_.num_contents());
        s.prev_action = cache_.cached;
        return s;
    }

    // Random feasible cache, for the per-episode state randomization of the
    // training loop. Request history is real and stays.
    void randomize_cache(Rng& rng) {
        std::vector<std::uint8_t> raw(catalog_.items.size());
        for (auto& b : raw) b = rng.coin() ? 1 : 0;
        auto [state, violated] =
            project_feasible(raw, std::vector<double>(raw.size(), 0.0), catalog_, capacity_gb_);
        (void)violated;
        cache_ = std::move(state);
    }

    SlotOutcome step(const std::vector<std::uint8_t>& raw_action,
                     const std::vector<double>& scores, const RequestVector& requests) {
        auto [next, out] = env_step(cache_, raw_action, scores, requests, weights_,
                                    catalog_, capacity_gb_, history_);
        cache_ = std::move(next);
        return out;
    }

    const CacheState& cache() const { return cache_; }
    const ContentCatalog& catalog() const { return catalog_; }
    double capacity_gb() const { return capacity_gb_; }
    const RewardWeights& weights() const { return weights_; }
    int num_contents() const { return catalog_.num_contents(); }

private:
    ContentCatalog catalog_;
    double capacity_gb_;
    RewardWeights weights_;
    RequestHistory history_;
    CacheState cache_;
};

}  // namespace pfcache
