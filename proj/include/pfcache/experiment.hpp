#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pfcache/baselines.hpp"
#include "pfcache/config.hpp"
#include "pfcache/federation.hpp"
#include "pfcache/metrics.hpp"

namespace pfcache {

inline ContentCatalog build_catalog(const ExperimentConfig& cfg) {
    Rng rng(cfg.catalog_seed());
    return sample_catalog(cfg.catalog.num_contents, cfg.catalog.size_range_gb,
                          cfg.catalog.payment_range_hkd, rng);
}

inline std::vector<ServerProfile> build_profiles(const ExperimentConfig& cfg) {
    std::vector<ServerProfile> profiles;
    profiles.reserve(cfg.servers.size());
    for (size_t m = 0; m < cfg.servers.size(); ++m) {
        const ServerConfig& sc = cfg.servers[m];
        ServerProfile p;
        p.server_id = static_cast<int>(m) + 1;
        p.plateau_q = sc.plateau_q;
        p.zipf_k = sc.zipf_k;
        p.num_users = sc.num_users;
        p.capacity_gb = sc.capacity_gb;
        if (cfg.per_server_ranks) {
            Rng rank_rng(derive_seed(cfg.seed, seed_tag::ranks, p.server_id));
            p.rank_of = ServerProfile::shuffled_ranks(cfg.catalog.num_contents, rank_rng);
        } else {
            p.rank_of = ServerProfile::identity_ranks(cfg.catalog.num_contents);
        }
        profiles.push_back(std::move(p));
    }
    return profiles;
}

// All servers start from identical weights; per-server request and agent
// streams are independent, so adding a server never perturbs the others.
inline std::vector<std::unique_ptr<ServerNode>> build_servers(const ExperimentConfig& cfg,
                                                              const ContentCatalog& catalog) {
    const auto profiles = build_profiles(cfg);
    const std::uint64_t net_seed = derive_seed(cfg.seed, seed_tag::network);
    const AgentConfig agent_cfg = cfg.agent_config();

    std::vector<std::unique_ptr<ServerNode>> servers;
    servers.reserve(profiles.size());
    for (const auto& profile : profiles) {
        auto pmf = mzipf_pmf(profile, catalog.num_contents());
        CacheEnv env(catalog, profile.capacity_gb, cfg.reward, cfg.ewma.window, cfg.ewma.beta);
        Agent agent(catalog.num_contents(), cfg.network.hidden_width, cfg.network.num_layers,
                    agent_cfg, net_seed, derive_seed(cfg.seed, seed_tag::agent, profile.server_id));
        servers.push_back(std::make_unique<ServerNode>(
            profile, std::move(pmf), std::move(env), std::move(agent),
            derive_seed(cfg.seed, seed_tag::requests, profile.server_id)));
    }
    return servers;
}

inline int effective_threads(const ExperimentConfig& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    const unsigned hw = std::thread::hardware_concurrency();
    const int cap = hw == 0 ? 1 : static_cast<int>(hw);
    return std::min<int>(cap, static_cast<int>(cfg.servers.size()));
}

namespace detail {

inline MetricsRecord server_record(const std::string& run_id, const std::string& mode,
                                   int episode, int server_id, const EpisodeStats& s) {
    MetricsRecord r;
    r.run_id = run_id;
    r.mode = mode;
    r.episode = episode;
    r.server_id = std::to_string(server_id);
    r.chr = s.mean_chr;
    r.replacement_cost = s.mean_cost;
    r.penalties = s.penalty_count;
    r.reward = s.mean_reward;
    r.utility = s.mean_utility;
    r.requests = s.total_requests;
    return r;
}

inline MetricsRecord system_record(const std::string& run_id, const std::string& mode,
                                   int episode, const std::vector<EpisodeStats>& stats) {
    MetricsRecord r;
    r.run_id = run_id;
    r.mode = mode;
    r.episode = episode;
    r.server_id = "system";
    for (const auto& s : stats) {
        r.chr += s.mean_chr;
        r.replacement_cost += s.mean_cost;
        r.penalties += s.penalty_count;
        r.reward += s.mean_reward;
        r.utility += s.mean_utility;
        r.requests += s.total_requests;
    }
    if (!stats.empty()) r.chr /= static_cast<double>(stats.size());
    return r;
}

struct WindowSummary {
    double chr = 0, cost = 0, reward = 0, utility = 0;
    double penalties = 0;
    int episodes = 0;
};

// Mean over the final `window` episodes of the rows matching server_id.
inline WindowSummary final_window(const MetricsSink& sink, const std::string& server_id,
                                  int last_episode, int window) {
    WindowSummary w;
    const int first = std::max(1, last_episode - window + 1);
    for (const auto& r : sink.rows()) {
        if (r.server_id != server_id || r.episode < first || r.episode > last_episode) continue;
        w.chr += r.chr;
        w.cost += r.replacement_cost;
        w.reward += r.reward;
        w.utility += r.utility;
        w.penalties += r.penalties;
        ++w.episodes;
    }
    if (w.episodes > 0) {
        w.chr /= w.episodes;
        w.cost /= w.episodes;
        w.reward /= w.episodes;
        w.utility /= w.episodes;
        w.penalties /= w.episodes;
    }
    return w;
}

inline nlohmann::json window_json(const WindowSummary& w) {
    return {{"chr", w.chr},
            {"replacement_cost", w.cost},
            {"reward", w.reward},
            {"utility", w.utility},
            {"penalties_per_episode", w.penalties},
            {"episodes", w.episodes}};
}

inline void save_layer_params(const std::vector<LayerParams>& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
    const char magic[4] = {'P', 'F', 'L', 'P'};
    os.write(magic, 4);
    auto put_u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(static_cast<std::uint32_t>(p.layer_index));
        put_u32(static_cast<std::uint32_t>(p.in));
        put_u32(static_cast<std::uint32_t>(p.out));
        os.write(reinterpret_cast<const char*>(p.weights.data()),
                 static_cast<std::streamsize>(p.weights.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(p.biases.data()),
                 static_cast<std::streamsize>(p.biases.size() * sizeof(double)));
    }
}

}  // namespace detail

struct RunResult {
    std::string run_id;
    MetricsSink metrics;
    nlohmann::json summary;
};

// One full federated experiment; deterministic given cfg.seed, including
// across thread counts. Pass an empty out_dir to skip writing files.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir = "") {
    validate_config(cfg);

    const std::string mode = cfg.federation.mode;
    const std::string run_id = mode + "-seed" + std::to_string(cfg.seed);
    const LayerSplit split = cfg.layer_split();
    const int threads = effective_threads(cfg);

    const ContentCatalog catalog = build_catalog(cfg);
    auto servers = build_servers(cfg, catalog);

    RunResult result;
    result.run_id = run_id;

    const bool checkpoints = cfg.output.checkpoint_every > 0 && !out_dir.empty();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (int e = 1; e <= cfg.schedule.episodes; ++e) {
        FederationRound round =
            federated_round(servers, split, cfg.schedule.slots_per_episode, e, threads);
        for (size_t m = 0; m < servers.size(); ++m)
            result.metrics.append(detail::server_record(run_id, mode, e,
                                                        servers[m]->profile.server_id,
                                                        round.stats[m]));
        result.metrics.append(detail::system_record(run_id, mode, e, round.stats));

        if (checkpoints &&
            (e % cfg.output.checkpoint_every == 0 || e == cfg.schedule.episodes)) {
            char name[32];
            std::snprintf(name, sizeof(name), "round_%04d", e);
            const auto dir = std::filesystem::path(out_dir) / "checkpoints" / name;
            std::filesystem::create_directories(dir);
            for (const auto& server : servers)
                save_network_file(server->agent.online(),
                                  (dir / ("server_" + std::to_string(server->profile.server_id) +
                                          ".qnet")).string());
            if (round.aggregated)
                detail::save_layer_params(round.aggregated_base,
                                          (dir / "aggregate.qlp").string());
        }
    }

    const int E = cfg.schedule.episodes;
    const int W = cfg.output.final_window;
    nlohmann::json servers_json = nlohmann::json::array();
    for (const auto& server : servers) {
        auto w = detail::final_window(result.metrics,
                                      std::to_string(server->profile.server_id), E, W);
        auto j = detail::window_json(w);
        j["server_id"] = server->profile.server_id;
        servers_json.push_back(j);
    }
    result.summary = {
        {"run_id", run_id},
        {"mode", mode},
        {"seed", cfg.seed},
        {"episodes", E},
        {"slots_per_episode", cfg.schedule.slots_per_episode},
        {"final_window", W},
        {"final", {{"system", detail::window_json(detail::final_window(result.metrics, "system",
                                                                       E, W))},
                   {"servers", servers_json}}},
        {"config", serialize_config(cfg)},
    };

    if (!out_dir.empty()) {
        result.metrics.write_csv((std::filesystem::path(out_dir) / "metrics.csv").string());
        std::ofstream os(std::filesystem::path(out_dir) / "summary.json", std::ios::binary);
        os << result.summary.dump(2) << '\n';
        if (!os) throw std::runtime_error("run_experiment: cannot write summary.json");
    }
    return result;
}

// Non-learning policies in the same harness: identical catalog, profiles,
// and request streams as a learning run with the same seed.
inline RunResult run_baseline(const ExperimentConfig& cfg, BaselinePolicy policy,
                              const std::string& out_dir = "") {
    validate_config(cfg);

    const std::string mode = baseline_name(policy);
    const std::string run_id = mode + "-seed" + std::to_string(cfg.seed);

    const ContentCatalog catalog = build_catalog(cfg);
    const auto profiles = build_profiles(cfg);

    struct BaselineServer {
        ServerProfile profile;
        std::vector<double> pmf;
        BaselineRunner runner;
        Rng request_rng;
    };
    std::vector<BaselineServer> servers;
    servers.reserve(profiles.size());
    for (const auto& profile : profiles) {
        servers.push_back({profile, mzipf_pmf(profile, catalog.num_contents()),
                           BaselineRunner(policy, catalog, profile.capacity_gb, cfg.reward,
                                          derive_seed(cfg.seed, seed_tag::agent,
                                                      profile.server_id)),
                           Rng(derive_seed(cfg.seed, seed_tag::requests, profile.server_id))});
    }

    RunResult result;
    result.run_id = run_id;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (int e = 1; e <= cfg.schedule.episodes; ++e) {
        std::vector<EpisodeStats> stats;
        stats.reserve(servers.size());
        for (auto& s : servers)
            stats.push_back(s.runner.run_episode(s.profile, s.pmf, s.request_rng,
                                                 cfg.schedule.slots_per_episode));
        for (size_t m = 0; m < servers.size(); ++m)
            result.metrics.append(detail::server_record(run_id, mode, e,
                                                        servers[m].profile.server_id, stats[m]));
        result.metrics.append(detail::system_record(run_id, mode, e, stats));
    }

    const int E = cfg.schedule.episodes;
    const int W = cfg.output.final_window;
    nlohmann::json servers_json = nlohmann::json::array();
    for (const auto& s : servers) {
        auto w = detail::final_window(result.metrics, std::to_string(s.profile.server_id), E, W);
        auto j = detail::window_json(w);
        j["server_id"] = s.profile.server_id;
        servers_json.push_back(j);
    }
    result.summary = {
        {"run_id", run_id},
        {"mode", mode},
        {"seed", cfg.seed},
        {"episodes", E},
        {"slots_per_episode", cfg.schedule.slots_per_episode},
        {"final_window", W},
        {"final", {{"system", detail::window_json(detail::final_window(result.metrics, "system",
                                                                       E, W))},
                   {"servers", servers_json}}},
        {"config", serialize_config(cfg)},
    };

    if (!out_dir.empty()) {
        result.metrics.write_csv((std::filesystem::path(out_dir) / "metrics.csv").string());
        std::ofstream os(std::filesystem::path(out_dir) / "summary.json", std::ios::binary);
        os << result.summary.dump(2) << '\n';
        if (!os) throw std::runtime_error("run_baseline: cannot write summary.json");
    }
    return result;
}

enum class SweepAxis { PersonalLayers, NumContents, CapacityGb, AvgUsers };

inline const char* sweep_axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::PersonalLayers: return "personal_layers";
        case SweepAxis::NumContents: return "num_contents";
        case SweepAxis::CapacityGb: return "capacity_gb";
        case SweepAxis::AvgUsers: return "avg_users";
    }
    return "?";
}

// Applies one sweep axis value to a copy of the base config.
inline ExperimentConfig apply_axis(ExperimentConfig cfg, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::PersonalLayers: {
            const int p = static_cast<int>(value);
            if (p < 0 || p > cfg.network.num_layers)
                throw ConfigError("sweep: personal_layers value out of 0..num_layers");
            cfg.federation.personal_layers = p;
            if (p == 0)
                cfg.federation.mode = "nonper";
            else if (p == cfg.network.num_layers)
                cfg.federation.mode = "nonfed";
            else
                cfg.federation.mode = "pf";
            break;
        }
        case SweepAxis::NumContents:
            cfg.catalog.num_contents = static_cast<int>(value);
            break;
        case SweepAxis::CapacityGb:
            for (auto& s : cfg.servers) s.capacity_gb = value;
            break;
        case SweepAxis::AvgUsers: {
            double mean = 0;
            for (const auto& s : cfg.servers) mean += s.num_users;
            mean /= static_cast<double>(cfg.servers.size());
            if (mean <= 0) throw ConfigError("sweep: avg_users needs nonzero base user counts");
            for (auto& s : cfg.servers)
                s.num_users = std::max(1, static_cast<int>(std::lround(value * s.num_users / mean)));
            break;
        }
    }
    return cfg;
}

struct SweepPointSummary {
    double value = 0;
    int runs = 0;
    double chr_mean = 0, chr_std = 0;
    double cost_mean = 0, cost_std = 0;
    double utility_mean = 0, utility_std = 0;
    std::vector<std::string> errors;
};

struct SweepResult {
    SweepAxis axis;
    std::vector<SweepPointSummary> points;
    nlohmann::json summary;
};

// Runs run_experiment per (value, seed) and reports mean +/- stddev of the
// final-window system chr/cost/utility per point. Per-point failures are
// recorded and the sweep continues.
inline SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                             const std::vector<double>& values,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& out_dir = "") {
    if (values.empty()) throw ConfigError("sweep: no axis values");
    if (seeds.empty()) throw ConfigError("sweep: no seeds");

    SweepResult result;
    result.axis = axis;

    nlohmann::json points_json = nlohmann::json::array();
    for (double value : values) {
        SweepPointSummary point;
        point.value = value;
        std::vector<double> chrs, costs, utils;
        nlohmann::json runs_json = nlohmann::json::array();

        for (std::uint64_t seed : seeds) {
            try {
                ExperimentConfig cfg = apply_axis(base, axis, value);
                cfg.seed = seed;
                std::string run_dir;
                if (!out_dir.empty()) {
                    run_dir = (std::filesystem::path(out_dir) /
                               (std::string(sweep_axis_name(axis)) + "_" + format_double(value)) /
                               ("seed_" + std::to_string(seed)))
                                  .string();
                }
                RunResult run = run_experiment(cfg, run_dir);
                const auto& sys = run.summary.at("final").at("system");
                chrs.push_back(sys.at("chr").get<double>());
                costs.push_back(sys.at("replacement_cost").get<double>());
                utils.push_back(sys.at("utility").get<double>());
                runs_json.push_back({{"seed", seed},
                                     {"chr", chrs.back()},
                                     {"replacement_cost", costs.back()},
                                     {"utility", utils.back()}});
            } catch (const std::exception& e) {
                point.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
                runs_json.push_back({{"seed", seed}, {"error", e.what()}});
            }
        }

        auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
            mean = 0;
            sd = 0;
            if (xs.empty()) return;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            for (double x : xs) sd += (x - mean) * (x - mean);
            sd = xs.size() > 1 ? std::sqrt(sd / static_cast<double>(xs.size() - 1)) : 0.0;
        };
        point.runs = static_cast<int>(chrs.size());
        mean_std(chrs, point.chr_mean, point.chr_std);
        mean_std(costs, point.cost_mean, point.cost_std);
        mean_std(utils, point.utility_mean, point.utility_std);
        result.points.push_back(point);

        points_json.push_back({{"value", value},
                               {"runs", point.runs},
                               {"chr_mean", point.chr_mean},
                               {"chr_std", point.chr_std},
                               {"cost_mean", point.cost_mean},
                               {"cost_std", point.cost_std},
                               {"utility_mean", point.utility_mean},
                               {"utility_std", point.utility_std},
                               {"errors", point.errors},
                               {"detail", runs_json}});
    }

    result.summary = {{"axis", sweep_axis_name(axis)},
                      {"mode", base.federation.mode},
                      {"points", points_json}};

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream js(std::filesystem::path(out_dir) / "sweep_summary.json", std::ios::binary);
        js << result.summary.dump(2) << '\n';
        std::ofstream cs(std::filesystem::path(out_dir) / "sweep_summary.csv", std::ios::binary);
        cs << "axis,value,runs,chr_mean,chr_std,cost_mean,cost_std,utility_mean,utility_std\n";
        for (const auto& p : result.points)
            cs << sweep_axis_name(axis) << ',' << format_double(p.value) << ',' << p.runs << ','
               << format_double(p.chr_mean) << ',' << format_double(p.chr_std) << ','
               << format_double(p.cost_mean) << ',' << format_double(p.cost_std) << ','
               << format_double(p.utility_mean) << ',' << format_double(p.utility_std) << '\n';
        if (!js || !cs) throw std::runtime_error("run_sweep: cannot write summaries");
    }
    return result;
}

}  // namespace pfcache
