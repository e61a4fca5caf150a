#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pfcache/env.hpp"
#include "pfcache/rng.hpp"
#include "pfcache/workload.hpp"

namespace pfcache {

// Mutable bookkeeping of the non-learning policies. Decisions depend only on
// this state, the request stream, and (for Random) the rng — never rewards.
struct LruState {
    std::vector<long> last_access;  // slot index of last request, 0 = never
    long slot = 0;
};

struct LfuState {
    std::vector<long> counts;  // cumulative request counts, no decay
};

namespace detail {

// Shared admission/eviction skeleton for LRU and LFU. Requested-but-uncached
// contents are admitted in descending request-count order (ties by ascending
// id); while over capacity the worst cached victim is evicted, where `worse`
// orders candidates. Contents requested this slot are never evicted, and an
// admission that cannot fit is undone.
template <typename WorseThan>
std::vector<std::uint8_t> admit_evict(const RequestVector& requests,
                                      const std::vector<std::uint8_t>& cache,
                                      const ContentCatalog& catalog, double capacity_gb,
                                      WorseThan worse) {
    const int C = catalog.num_contents();
    if (static_cast<int>(requests.counts.size()) != C ||
        static_cast<int>(cache.size()) != C)
        throw std::invalid_argument("baseline decide: dimension mismatch");

    std::vector<std::uint8_t> next = cache;
    double used = 0;
    for (int i = 0; i < C; ++i)
        if (next[i]) used += catalog.items[i].size_gb;

    std::vector<int> admit;
    for (int i = 0; i < C; ++i)
        if (requests.counts[i] > 0 && !next[i]) admit.push_back(i);
    std::sort(admit.begin(), admit.end(), [&](int a, int b) {
        if (requests.counts[a] != requests.counts[b])
            return requests.counts[a] > requests.counts[b];
        return a < b;
    });

    for (int cand : admit) {
        const double size = catalog.items[cand].size_gb;
        if (size > capacity_gb) continue;  // can never fit
        next[cand] = 1;
        used += size;
        while (used > capacity_gb) {
            int victim = -1;
            for (int i = 0; i < C; ++i) {
                if (!next[i] || requests.counts[i] > 0) continue;  // protected
                if (victim < 0 || worse(i, victim)) victim = i;
            }
            if (victim < 0) {  // nothing evictable; undo the admission
                next[cand] = 0;
                used -= size;
                break;
            }
            next[victim] = 0;
            used -= catalog.items[victim].size_gb;
        }
    }
    return next;
}

}  // namespace detail

// LRU: evicts the cached content with the oldest last-access (ties by
// ascending id). Recency is refreshed for all requested contents first.
inline std::vector<std::uint8_t> lru_decide(LruState& state, const RequestVector& requests,
                                            const std::vector<std::uint8_t>& cache,
                                            const ContentCatalog& catalog, double capacity_gb) {
    const int C = catalog.num_contents();
    if (static_cast<int>(state.last_access.size()) != C)
        throw std::invalid_argument("lru_decide: state dimension mismatch");

    ++state.slot;
    for (int i = 0; i < C; ++i)
        if (requests.counts[i] > 0) state.last_access[i] = state.slot;

    return detail::admit_evict(requests, cache, catalog, capacity_gb, [&](int a, int b) {
        if (state.last_access[a] != state.last_access[b])
            return state.last_access[a] < state.last_access[b];
        return a < b;
    });
}

// LFU: evicts the cached content with the smallest cumulative request count
// (ties by ascending id). Counts are updated before deciding.
inline std::vector<std::uint8_t> lfu_decide(LfuState& state, const RequestVector& requests,
                                            const std::vector<std::uint8_t>& cache,
                                            const ContentCatalog& catalog, double capacity_gb) {
    const int C = catalog.num_contents();
    if (static_cast<int>(state.counts.size()) != C)
        throw std::invalid_argument("lfu_decide: state dimension mismatch");

    for (int i = 0; i < C; ++i) state.counts[i] += requests.counts[i];

    return detail::admit_evict(requests, cache, catalog, capacity_gb, [&](int a, int b) {
        if (state.counts[a] != state.counts[b]) return state.counts[a] < state.counts[b];
        return a < b;
    });
}

// Random: uniform binary vector pushed through the shared feasibility
// projection with zero scores. Returns the materialized cache and whether
// the raw draw violated capacity.
inline std::pair<std::vector<std::uint8_t>, bool> random_decide(const ContentCatalog& catalog,
                                                                double capacity_gb, Rng& rng) {
    const int C = catalog.num_contents();
    std::vector<std::uint8_t> raw(C);
    for (int i = 0; i < C; ++i) raw[i] = rng.coin() ? 1 : 0;
    auto [state, violated] = project_feasible(raw, std::vector<double>(C, 0.0), catalog,
                                              capacity_gb);
    return {std::move(state.cached), violated};
}

enum class BaselinePolicy { Lru, Lfu, Random };

inline const char* baseline_name(BaselinePolicy p) {
    switch (p) {
        case BaselinePolicy::Lru: return "lru";
        case BaselinePolicy::Lfu: return "lfu";
        case BaselinePolicy::Random: return "random";
    }
    return "?";
}

// Runs one baseline in the same slot structure as the agent: a placement is
// emitted at the start of each slot, then requests arrive and are served by
// it. LRU/LFU react to the previous slot's requests (reactive policies seen
// through the proactive frame); Random redraws every slot.
class BaselineRunner {
public:
    BaselineRunner(BaselinePolicy policy, const ContentCatalog& catalog, double capacity_gb,
                   RewardWeights weights, std::uint64_t rng_seed)
        : policy_(policy),
          catalog_(catalog),
          capacity_gb_(capacity_gb),
          weights_(weights),
          rng_(rng_seed) {
        const int C = catalog_.num_contents();
        cache_.assign(C, 0);
        prev_requests_.counts.assign(C, 0);
        lru_.last_access.assign(C, 0);
        lfu_.counts.assign(C, 0);
    }

    EpisodeStats run_episode(const ServerProfile& profile, const std::vector<double>& pmf,
                             Rng& request_rng, int slots) {
        EpisodeStats stats;
        for (int t = 0; t < slots; ++t) {
            bool violated = false;
            std::vector<std::uint8_t> placement;
            switch (policy_) {
                case BaselinePolicy::Lru:
                    placement = lru_decide(lru_, prev_requests_, cache_, catalog_, capacity_gb_);
                    break;
                case BaselinePolicy::Lfu:
                    placement = lfu_decide(lfu_, prev_requests_, cache_, catalog_, capacity_gb_);
                    break;
                case BaselinePolicy::Random: {
                    auto [cached, v] = random_decide(catalog_, capacity_gb_, rng_);
                    placement = std::move(cached);
                    violated = v;
                    break;
                }
            }

            const double cost = replacement_cost(placement, cache_, catalog_);
            cache_ = std::move(placement);

            const RequestVector requests = generate_requests(profile, pmf, request_rng);
            const double chr = cache_hit_ratio(cache_, requests);
            const double utility = weights_.omega1 * chr - weights_.omega2 * cost;
            const double reward =
                utility - weights_.omega3 * weights_.penalty_rho * (violated ? 1.0 : 0.0);

            stats.mean_chr += chr;
            stats.mean_cost += cost;
            stats.mean_reward += reward;
            stats.mean_utility += utility;
            stats.penalty_count += violated ? 1 : 0;
            stats.total_requests += requests.total();
            prev_requests_ = requests;
        }
        stats.mean_chr /= slots;
        stats.mean_cost /= slots;
        stats.mean_reward /= slots;
        stats.mean_utility /= slots;
        return stats;
    }

    const std::vector<std::uint8_t>& cache() const { return cache_; }

private:
    BaselinePolicy policy_;
    ContentCatalog catalog_;
    double capacity_gb_;
    RewardWeights weights_;
    Rng rng_;
    std::vector<std::uint8_t> cache_;
    RequestVector prev_requests_;
    LruState lru_;
    LfuState lfu_;
};

}  // namespace pfcache
