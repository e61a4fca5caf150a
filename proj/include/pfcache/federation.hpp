#pragma once

#include <atomic>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pfcache/agent.hpp"

namespace pfcache {

enum class FederationMode { Pf, NonPer, NonFed };

inline const char* federation_mode_name(FederationMode m) {
    switch (m) {
        case FederationMode::Pf: return "pf";
        case FederationMode::NonPer: return "nonper";
        case FederationMode::NonFed: return "nonfed";
    }
    return "?";
}

// Base/personalized partition of the network layers. The base set is always
// a contiguous prefix from the input side.
struct LayerSplit {
    int num_layers = 6;
    int num_personal = 2;  // |L_P|; 0 = NonPer, num_layers = NonFed

    std::set<int> base_layers() const {
        std::set<int> s;
        for (int l = 0; l < num_layers - num_personal; ++l) s.insert(l);
        return s;
    }

    std::set<int> personal_layers() const {
        std::set<int> s;
        for (int l = num_layers - num_personal; l < num_layers; ++l) s.insert(l);
        return s;
    }

    FederationMode mode() const {
        if (num_personal == 0) return FederationMode::NonPer;
        if (num_personal == num_layers) return FederationMode::NonFed;
        return FederationMode::Pf;
    }
};

inline int personal_layers_for_mode(FederationMode mode, int num_layers, int pf_personal) {
    switch (mode) {
        case FederationMode::NonPer: return 0;
        case FederationMode::NonFed: return num_layers;
        case FederationMode::Pf: return pf_personal;
    }
    return pf_personal;
}

// theta_G(l) = sum_m (D_m / sum D) * theta_m(l), per layer.
inline std::vector<LayerParams> aggregate_base(
    const std::vector<std::vector<LayerParams>>& params_by_server,
    const std::vector<long>& weights) {
    if (params_by_server.empty())
        throw std::invalid_argument("aggregate_base: no servers");
    if (params_by_server.size() != weights.size())
        throw std::invalid_argument("aggregate_base: weight count mismatch");

    long total = 0;
    for (long w : weights) {
        if (w < 0) throw std::invalid_argument("aggregate_base: negative weight");
        total += w;
    }
    if (total <= 0) throw std::invalid_argument("aggregate_base: zero total weight");

    const auto& first = params_by_server.front();
    std::vector<LayerParams> agg = first;
    for (auto& layer : agg) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
    }

    for (size_t m = 0; m < params_by_server.size(); ++m) {
        const auto& params = params_by_server[m];
        if (params.size() != first.size())
            throw std::invalid_argument("aggregate_base: layer count mismatch");
        const double w = static_cast<double>(weights[m]) / static_cast<double>(total);
        for (size_t l = 0; l < params.size(); ++l) {
            const LayerParams& p = params[l];
            LayerParams& a = agg[l];
            if (p.layer_index != a.layer_index || p.in != a.in || p.out != a.out)
                throw std::invalid_argument("aggregate_base: shape mismatch");
            for (size_t i = 0; i < p.weights.size(); ++i) a.weights[i] += w * p.weights[i];
            for (size_t i = 0; i < p.biases.size(); ++i) a.biases[i] += w * p.biases[i];
        }
    }
    return agg;
}

// One simulated MEC server: workload profile, environment, agent, and its
// private request stream.
struct ServerNode {
    ServerProfile profile;
    std::vector<double> pmf;
    CacheEnv env;
    Agent agent;
    Rng request_rng;

    ServerNode(ServerProfile p, std::vector<double> pmf_in, CacheEnv e, Agent a,
               std::uint64_t request_seed)
        : profile(std::move(p)),
          pmf(std::move(pmf_in)),
          env(std::move(e)),
          agent(std::move(a)),
          request_rng(request_seed) {}
};

// Replaces the base layers of every server's online AND target networks with
// the aggregate; personalized layers are untouched in both.
inline void broadcast_sync(std::vector<std::unique_ptr<ServerNode>>& servers,
                           const std::vector<LayerParams>& aggregated) {
    for (auto& server : servers) {
        import_layers(server->agent.online(), aggregated);
        import_layers(server->agent.target(), aggregated);
    }
}

struct FederationRound {
    int episode = 0;
    std::vector<long> request_weights;        // D_m(e), by server order
    std::vector<LayerParams> aggregated_base; // empty in NonFed mode
    std::vector<EpisodeStats> stats;          // by server order
    bool aggregated = false;
};

// One PF-DRL-Ca round: every server trains one episode (parallelizable),
// then base layers are aggregated with request-count weights and broadcast.
// NonFed skips the exchange entirely. Results are independent of num_threads.
inline FederationRound federated_round(std::vector<std::unique_ptr<ServerNode>>& servers,
                                       const LayerSplit& split, int slots, int episode_index,
                                       int num_threads = 1) {
    FederationRound round;
    round.episode = episode_index;
    round.stats.resize(servers.size());
    round.request_weights.resize(servers.size());

    auto run_server = [&](size_t m) {
        ServerNode& s = *servers[m];
        round.stats[m] = run_episode(s.agent, s.env, s.profile, s.pmf, s.request_rng, slots);
        round.request_weights[m] = round.stats[m].total_requests;
    };

    if (num_threads <= 1 || servers.size() <= 1) {
        for (size_t m = 0; m < servers.size(); ++m) run_server(m);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        const int n = std::min<int>(num_threads, static_cast<int>(servers.size()));
        for (int t = 0; t < n; ++t)
            pool.emplace_back([&] {
                for (size_t m = next.fetch_add(1); m < servers.size(); m = next.fetch_add(1))
                    run_server(m);
            });
        for (auto& th : pool) th.join();
    }

    const std::set<int> base = split.base_layers();
    if (split.mode() == FederationMode::NonFed || base.empty()) return round;

    long total = 0;
    for (long w : round.request_weights) total += w;
    if (total <= 0) return round;  // degenerate zero-request round, nothing to weight

    std::vector<std::vector<LayerParams>> exported;
    exported.reserve(servers.size());
    for (auto& server : servers)
        exported.push_back(export_layers(server->agent.online(), base));

    round.aggregated_base = aggregate_base(exported, round.request_weights);
    broadcast_sync(servers, round.aggregated_base);
    round.aggregated = true;
    return round;
}

}  // namespace pfcache
