#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfcache/agent.hpp"
#include "pfcache/federation.hpp"

namespace pfcache {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CatalogConfig {
    int num_contents = 40;
    std::pair<double, double> size_range_gb = {1.0, 8.0};
    std::pair<double, double> payment_range_hkd = {0.05, 0.5};
    std::optional<std::uint64_t> seed;  // derived from the master seed by default
};

struct ServerConfig {
    double plateau_q = 100.0;
    double zipf_k = 0.60;
    int num_users = 15;
    double capacity_gb = 55.0;
};

struct EwmaConfig {
    int window = 5;
    double beta = 0.9;
};

struct AgentSection {
    double gamma = 0.99;
    double learning_rate = 0.002;
    double tau = 0.005;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::optional<double> epsilon_decay;  // per-slot factor; derived when absent
    int batch_size = 64;
    int buffer_capacity = 10000;
    int learn_start = 256;
    std::string optimizer = "sgd";  // or "adam"
};

struct NetworkConfig {
    int num_layers = 6;
    int hidden_width = 128;
};

struct FederationConfig {
    std::string mode = "pf";  // pf | nonper | nonfed
    int personal_layers = 2;
};

struct ScheduleConfig {
    int episodes = 300;
    int slots_per_episode = 50;
};

struct OutputConfig {
    std::string dir = "out";
    int checkpoint_every = 0;  // rounds between checkpoints, 0 = off
    int final_window = 50;     // episodes in the reported final window
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = one thread per server, capped by hardware
    CatalogConfig catalog;
    std::vector<ServerConfig> servers;
    bool per_server_ranks = false;  // shuffle rank_of per server when true
    RewardWeights reward;
    EwmaConfig ewma;
    AgentSection agent;
    NetworkConfig network;
    FederationConfig federation;
    ScheduleConfig schedule;
    OutputConfig output;

    static ExperimentConfig defaults() {
        ExperimentConfig cfg;
        cfg.servers = {
            {100.0, 0.60, 15, 55.0},
            {200.0, 0.60, 25, 55.0},
            {90.0, 0.75, 10, 55.0},
            {40.0, 0.90, 20, 55.0},
            {80.0, 0.90, 30, 55.0},
        };
        return cfg;
    }

    FederationMode mode() const {
        if (federation.mode == "pf") return FederationMode::Pf;
        if (federation.mode == "nonper") return FederationMode::NonPer;
        if (federation.mode == "nonfed") return FederationMode::NonFed;
        throw ConfigError("federation.mode: unknown mode '" + federation.mode + "'");
    }

    LayerSplit layer_split() const {
        LayerSplit split;
        split.num_layers = network.num_layers;
        split.num_personal =
            personal_layers_for_mode(mode(), network.num_layers, federation.personal_layers);
        return split;
    }

    long total_slots() const {
        return static_cast<long>(schedule.episodes) * schedule.slots_per_episode;
    }

    EpsilonSchedule epsilon_schedule() const {
        if (agent.epsilon_decay) {
            EpsilonSchedule s;
            s.start = agent.epsilon_start;
            s.end = agent.epsilon_end;
            s.decay = *agent.epsilon_decay;
            return s;
        }
        return EpsilonSchedule::half_run(agent.epsilon_start, agent.epsilon_end, total_slots());
    }

    AgentConfig agent_config() const {
        AgentConfig a;
        a.gamma = agent.gamma;
        a.learning_rate = agent.learning_rate;
        a.tau = agent.tau;
        a.epsilon = epsilon_schedule();
        a.batch_size = agent.batch_size;
        a.buffer_capacity = static_cast<size_t>(agent.buffer_capacity);
        a.learn_start = static_cast<size_t>(agent.learn_start);
        a.optimizer = agent.optimizer == "adam" ? Optimizer::Kind::Adam : Optimizer::Kind::Sgd;
        return a;
    }

    std::uint64_t catalog_seed() const {
        return catalog.seed ? *catalog.seed : derive_seed(seed, seed_tag::catalog);
    }
};

namespace detail {

using nlohmann::json;

inline void require_keys(const json& j, const std::string& scope,
                         std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok)
            throw ConfigError(scope.empty() ? "unknown key '" + it.key() + "'"
                                            : scope + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read_field(const json& j, const std::string& scope, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(scope + "." + key + ": wrong type");
    }
}

inline void read_range(const json& j, const std::string& scope, const char* key,
                       std::pair<double, double>& out) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number() || !arr[1].is_number())
        throw ConfigError(scope + "." + key + ": expected [low, high]");
    out = {arr[0].get<double>(), arr[1].get<double>()};
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::read_field;
    using detail::read_range;
    using detail::require_keys;

    ExperimentConfig cfg = ExperimentConfig::defaults();
    require_keys(j, "", {"seed", "threads", "catalog", "servers", "per_server_ranks", "reward",
                         "ewma", "agent", "network", "federation", "schedule", "output"});

    read_field(j, "", "seed", cfg.seed);
    read_field(j, "", "threads", cfg.threads);
    read_field(j, "", "per_server_ranks", cfg.per_server_ranks);

    if (j.contains("catalog")) {
        const auto& c = j.at("catalog");
        require_keys(c, "catalog", {"num_contents", "size_range_gb", "payment_range_hkd", "seed"});
        read_field(c, "catalog", "num_contents", cfg.catalog.num_contents);
        read_range(c, "catalog", "size_range_gb", cfg.catalog.size_range_gb);
        read_range(c, "catalog", "payment_range_hkd", cfg.catalog.payment_range_hkd);
        if (c.contains("seed")) {
            std::uint64_t s = 0;
            read_field(c, "catalog", "seed", s);
            cfg.catalog.seed = s;
        }
    }

    if (j.contains("servers")) {
        const auto& arr = j.at("servers");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("servers: expected a nonempty array");
        cfg.servers.clear();
        int idx = 0;
        for (const auto& s : arr) {
            const std::string scope = "servers[" + std::to_string(idx++) + "]";
            require_keys(s, scope, {"plateau_q", "zipf_k", "num_users", "capacity_gb"});
            ServerConfig sc;
            read_field(s, scope, "plateau_q", sc.plateau_q);
            read_field(s, scope, "zipf_k", sc.zipf_k);
            read_field(s, scope, "num_users", sc.num_users);
            read_field(s, scope, "capacity_gb", sc.capacity_gb);
            cfg.servers.push_back(sc);
        }
    }

    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        require_keys(r, "reward", {"omega1", "omega2", "omega3", "penalty_rho"});
        read_field(r, "reward", "omega1", cfg.reward.omega1);
        read_field(r, "reward", "omega2", cfg.reward.omega2);
        read_field(r, "reward", "omega3", cfg.reward.omega3);
        read_field(r, "reward", "penalty_rho", cfg.reward.penalty_rho);
    }

    if (j.contains("ewma")) {
        const auto& e = j.at("ewma");
        require_keys(e, "ewma", {"window", "beta"});
        read_field(e, "ewma", "window", cfg.ewma.window);
        read_field(e, "ewma", "beta", cfg.ewma.beta);
    }

    if (j.contains("agent")) {
        const auto& a = j.at("agent");
        require_keys(a, "agent",
                     {"gamma", "learning_rate", "tau", "epsilon_start", "epsilon_end",
                      "epsilon_decay", "batch_size", "buffer_capacity", "learn_start",
                      "optimizer"});
        read_field(a, "agent", "gamma", cfg.agent.gamma);
        read_field(a, "agent", "learning_rate", cfg.agent.learning_rate);
        read_field(a, "agent", "tau", cfg.agent.tau);
        read_field(a, "agent", "epsilon_start", cfg.agent.epsilon_start);
        read_field(a, "agent", "epsilon_end", cfg.agent.epsilon_end);
        if (a.contains("epsilon_decay") && !a.at("epsilon_decay").is_null()) {
            double d = 0;
            read_field(a, "agent", "epsilon_decay", d);
            cfg.agent.epsilon_decay = d;
        }
        read_field(a, "agent", "batch_size", cfg.agent.batch_size);
        read_field(a, "agent", "buffer_capacity", cfg.agent.buffer_capacity);
        read_field(a, "agent", "learn_start", cfg.agent.learn_start);
        read_field(a, "agent", "optimizer", cfg.agent.optimizer);
    }

    if (j.contains("network")) {
        const auto& n = j.at("network");
        require_keys(n, "network", {"num_layers", "hidden_width"});
        read_field(n, "network", "num_layers", cfg.network.num_layers);
        read_field(n, "network", "hidden_width", cfg.network.hidden_width);
    }

    if (j.contains("federation")) {
        const auto& f = j.at("federation");
        require_keys(f, "federation", {"mode", "personal_layers"});
        read_field(f, "federation", "mode", cfg.federation.mode);
        read_field(f, "federation", "personal_layers", cfg.federation.personal_layers);
    }

    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        require_keys(s, "schedule", {"episodes", "slots_per_episode"});
        read_field(s, "schedule", "episodes", cfg.schedule.episodes);
        read_field(s, "schedule", "slots_per_episode", cfg.schedule.slots_per_episode);
    }

    if (j.contains("output")) {
        const auto& o = j.at("output");
        require_keys(o, "output", {"dir", "checkpoint_every", "final_window"});
        read_field(o, "output", "dir", cfg.output.dir);
        read_field(o, "output", "checkpoint_every", cfg.output.checkpoint_every);
        read_field(o, "output", "final_window", cfg.output.final_window);
    }

    return cfg;
}

inline nlohmann::json serialize_config(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["per_server_ranks"] = cfg.per_server_ranks;
    j["catalog"]["num_contents"] = cfg.catalog.num_contents;
    j["catalog"]["size_range_gb"] = {cfg.catalog.size_range_gb.first,
                                     cfg.catalog.size_range_gb.second};
    j["catalog"]["payment_range_hkd"] = {cfg.catalog.payment_range_hkd.first,
                                         cfg.catalog.payment_range_hkd.second};
    if (cfg.catalog.seed) j["catalog"]["seed"] = *cfg.catalog.seed;
    j["servers"] = nlohmann::json::array();
    for (const auto& s : cfg.servers)
        j["servers"].push_back({{"plateau_q", s.plateau_q},
                                {"zipf_k", s.zipf_k},
                                {"num_users", s.num_users},
                                {"capacity_gb", s.capacity_gb}});
    j["reward"] = {{"omega1", cfg.reward.omega1},
                   {"omega2", cfg.reward.omega2},
                   {"omega3", cfg.reward.omega3},
                   {"penalty_rho", cfg.reward.penalty_rho}};
    j["ewma"] = {{"window", cfg.ewma.window}, {"beta", cfg.ewma.beta}};
    j["agent"] = {{"gamma", cfg.agent.gamma},
                  {"learning_rate", cfg.agent.learning_rate},
                  {"tau", cfg.agent.tau},
                  {"epsilon_start", cfg.agent.epsilon_start},
                  {"epsilon_end", cfg.agent.epsilon_end},
                  {"batch_size", cfg.agent.batch_size},
                  {"buffer_capacity", cfg.agent.buffer_capacity},
                  {"learn_start", cfg.agent.learn_start},
                  {"optimizer", cfg.agent.optimizer}};
    if (cfg.agent.epsilon_decay) j["agent"]["epsilon_decay"] = *cfg.agent.epsilon_decay;
    j["network"] = {{"num_layers", cfg.network.num_layers},
                    {"hidden_width", cfg.network.hidden_width}};
    j["federation"] = {{"mode", cfg.federation.mode},
                       {"personal_layers", cfg.federation.personal_layers}};
    j["schedule"] = {{"episodes", cfg.schedule.episodes},
                     {"slots_per_episode", cfg.schedule.slots_per_episode}};
    j["output"] = {{"dir", cfg.output.dir},
                   {"checkpoint_every", cfg.output.checkpoint_every},
                   {"final_window", cfg.output.final_window}};
    return j;
}

// Collects every violated field constraint; throws with all of them so a bad
// config is diagnosed in one pass, before any work starts.
inline void validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> errors;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };

    check(cfg.catalog.num_contents >= 1, "catalog.num_contents: must be >= 1");
    check(cfg.catalog.size_range_gb.first > 0 &&
              cfg.catalog.size_range_gb.first <= cfg.catalog.size_range_gb.second,
          "catalog.size_range_gb: must satisfy 0 < low <= high");
    check(cfg.catalog.payment_range_hkd.first > 0 &&
              cfg.catalog.payment_range_hkd.first <= cfg.catalog.payment_range_hkd.second,
          "catalog.payment_range_hkd: must satisfy 0 < low <= high");
    check(!cfg.servers.empty(), "servers: at least one server required");
    for (size_t m = 0; m < cfg.servers.size(); ++m) {
        const auto& s = cfg.servers[m];
        const std::string p = "servers[" + std::to_string(m) + "].";
        check(std::isfinite(s.plateau_q) && s.plateau_q >= 0, p + "plateau_q: must be >= 0");
        check(std::isfinite(s.zipf_k) && s.zipf_k > 0, p + "zipf_k: must be > 0");
        check(s.num_users >= 0, p + "num_users: must be >= 0");
        check(s.capacity_gb > 0, p + "capacity_gb: must be > 0");
    }
    check(cfg.reward.omega1 > 0, "reward.omega1: must be > 0");
    check(cfg.reward.omega2 >= 0 && cfg.reward.omega3 >= 0 && cfg.reward.penalty_rho >= 0,
          "reward: omega2/omega3/penalty_rho must be >= 0");
    check(cfg.ewma.window >= 2, "ewma.window: must be >= 2");
    check(cfg.ewma.beta > 0 && cfg.ewma.beta < 1, "ewma.beta: must lie in (0,1)");
    check(cfg.agent.gamma >= 0 && cfg.agent.gamma < 1, "agent.gamma: must lie in [0,1)");
    check(cfg.agent.learning_rate > 0, "agent.learning_rate: must be > 0");
    check(cfg.agent.tau >= 0 && cfg.agent.tau <= 1, "agent.tau: must lie in [0,1]");
    check(cfg.agent.epsilon_start >= 0 && cfg.agent.epsilon_start <= 1,
          "agent.epsilon_start: must lie in [0,1]");
    check(cfg.agent.epsilon_end >= 0 && cfg.agent.epsilon_end <= cfg.agent.epsilon_start,
          "agent.epsilon_end: must lie in [0, epsilon_start]");
    if (cfg.agent.epsilon_decay)
        check(*cfg.agent.epsilon_decay > 0 && *cfg.agent.epsilon_decay <= 1,
              "agent.epsilon_decay: must lie in (0,1]");
    check(cfg.agent.batch_size >= 1, "agent.batch_size: must be >= 1");
    check(cfg.agent.buffer_capacity >= cfg.agent.batch_size,
          "agent.buffer_capacity: must be >= batch_size");
    check(cfg.agent.learn_start >= 0, "agent.learn_start: must be >= 0");
    check(cfg.agent.optimizer == "sgd" || cfg.agent.optimizer == "adam",
          "agent.optimizer: must be 'sgd' or 'adam'");
    check(cfg.network.num_layers >= 1, "network.num_layers: must be >= 1");
    check(cfg.network.hidden_width >= 1, "network.hidden_width: must be >= 1");
    check(cfg.federation.mode == "pf" || cfg.federation.mode == "nonper" ||
              cfg.federation.mode == "nonfed",
          "federation.mode: must be pf|nonper|nonfed");
    if (cfg.federation.mode == "pf")
        check(cfg.federation.personal_layers >= 1 &&
                  cfg.federation.personal_layers <= cfg.network.num_layers - 1,
              "federation.personal_layers: pf mode needs 1..num_layers-1");
    check(cfg.schedule.episodes >= 1, "schedule.episodes: must be >= 1");
    check(cfg.schedule.slots_per_episode >= 1, "schedule.slots_per_episode: must be >= 1");
    check(cfg.output.checkpoint_every >= 0, "output.checkpoint_every: must be >= 0");
    check(cfg.output.final_window >= 1, "output.final_window: must be >= 1");
    check(cfg.threads >= 0, "threads: must be >= 0");

    if (!errors.empty()) {
        std::ostringstream os;
        os << "invalid config (" << errors.size() << " problem" << (errors.size() > 1 ? "s" : "")
           << "):";
        for (const auto& e : errors) os << "\n  - " << e;
        throw ConfigError(os.str());
    }
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    ExperimentConfig cfg = parse_config(j);
    validate_config(cfg);
    return cfg;
}

}  // namespace pfcache
