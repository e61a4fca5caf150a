// pfcache: desk-scale personalized federated DRL cache-placement lab.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pfcache/experiment.hpp"

namespace fs = std::filesystem;
using namespace pfcache;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

ExperimentConfig load_or_default(const CommonOpts& opts) {
    ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig::defaults()
                                                    : load_config_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output.dir = opts.out_dir;
    return cfg;
}

// --personal-layers wins and implies the mode; --mode alone picks the
// mode's canonical count. Contradictory combinations are rejected.
void apply_mode_flags(ExperimentConfig& cfg, const std::string& mode_flag, int personal_flag) {
    if (personal_flag >= 0) {
        cfg = apply_axis(cfg, SweepAxis::PersonalLayers, personal_flag);
        if (!mode_flag.empty() && cfg.federation.mode != mode_flag)
            throw ConfigError("--mode " + mode_flag + " contradicts --personal-layers " +
                              std::to_string(personal_flag));
        return;
    }
    if (mode_flag.empty()) return;
    cfg.federation.mode = mode_flag;
    if (mode_flag == "nonper")
        cfg.federation.personal_layers = 0;
    else if (mode_flag == "nonfed")
        cfg.federation.personal_layers = cfg.network.num_layers;
}

int cmd_run(const CommonOpts& opts, const std::string& mode_flag, int personal_flag) {
    ExperimentConfig cfg = load_or_default(opts);
    apply_mode_flags(cfg, mode_flag, personal_flag);
    validate_config(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    RunResult result = run_experiment(cfg, cfg.output.dir);
    const auto secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto& sys = result.summary.at("final").at("system");
    std::printf("%s: %d episodes x %d slots, %zu servers, %.1fs\n", result.run_id.c_str(),
                cfg.schedule.episodes, cfg.schedule.slots_per_episode, cfg.servers.size(), secs);
    std::printf("final window: chr=%.4f cost=%.4f utility=%.4f\n",
                sys.at("chr").get<double>(), sys.at("replacement_cost").get<double>(),
                sys.at("utility").get<double>());
    std::printf("wrote %s/metrics.csv and summary.json\n", cfg.output.dir.c_str());
    return 0;
}

int cmd_baseline(const CommonOpts& opts, const std::string& policy) {
    ExperimentConfig cfg = load_or_default(opts);
    validate_config(cfg);

    std::vector<BaselinePolicy> policies;
    if (policy == "lru") policies = {BaselinePolicy::Lru};
    else if (policy == "lfu") policies = {BaselinePolicy::Lfu};
    else if (policy == "random") policies = {BaselinePolicy::Random};
    else policies = {BaselinePolicy::Lru, BaselinePolicy::Lfu, BaselinePolicy::Random};

    for (BaselinePolicy p : policies) {
        const std::string dir = policies.size() == 1
                                    ? cfg.output.dir
                                    : (fs::path(cfg.output.dir) / baseline_name(p)).string();
        RunResult result = run_baseline(cfg, p, dir);
        const auto& sys = result.summary.at("final").at("system");
        std::printf("%s: chr=%.4f cost=%.4f utility=%.4f -> %s\n", result.run_id.c_str(),
                    sys.at("chr").get<double>(), sys.at("replacement_cost").get<double>(),
                    sys.at("utility").get<double>(), dir.c_str());
    }
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis_name,
              const std::vector<double>& values, std::vector<std::uint64_t> seeds) {
    ExperimentConfig cfg = load_or_default(opts);
    validate_config(cfg);

    SweepAxis axis;
    if (axis_name == "personal_layers") axis = SweepAxis::PersonalLayers;
    else if (axis_name == "num_contents") axis = SweepAxis::NumContents;
    else if (axis_name == "capacity_gb") axis = SweepAxis::CapacityGb;
    else if (axis_name == "avg_users") axis = SweepAxis::AvgUsers;
    else throw ConfigError("unknown sweep axis: " + axis_name);

    if (seeds.empty()) seeds = {cfg.seed};
    SweepResult sweep = run_sweep(cfg, axis, values, seeds, cfg.output.dir);

    std::printf("%-20s %6s %10s %10s %10s\n", "point", "runs", "chr", "cost", "utility");
    for (const auto& p : sweep.points) {
        std::printf("%-20s %6d %10.4f %10.4f %10.4f\n",
                    (axis_name + "=" + format_double(p.value)).c_str(), p.runs, p.chr_mean,
                    p.cost_mean, p.utility_mean);
        for (const auto& err : p.errors) std::fprintf(stderr, "  failed: %s\n", err.c_str());
    }
    std::printf("wrote %s/sweep_summary.csv and sweep_summary.json\n", cfg.output.dir.c_str());
    for (const auto& p : sweep.points)
        if (p.runs == 0) return 1;  // every run at some point failed
    return 0;
}

int cmd_gradcheck(int nets, double eps, double threshold, std::uint64_t seed) {
    const double worst = grad_check_suite(nets, eps, seed);
    std::printf("gradcheck: max relative error %.3e over %d networks (eps=%g)\n", worst, nets,
                eps);
    if (worst >= threshold) {
        std::fprintf(stderr, "gradcheck FAILED: %.3e >= threshold %.3e\n", worst, threshold);
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& dir, const std::string& out_path) {
    std::ostringstream table;

    const fs::path sweep_file = fs::path(dir) / "sweep_summary.json";
    if (fs::exists(sweep_file)) {
        std::ifstream is(sweep_file);
        nlohmann::json j;
        is >> j;
        table << "axis,value,runs,chr_mean,chr_std,cost_mean,cost_std,utility_mean,utility_std\n";
        for (const auto& p : j.at("points"))
            table << j.at("axis").get<std::string>() << ','
                  << format_double(p.at("value").get<double>()) << ','
                  << p.at("runs").get<int>() << ','
                  << format_double(p.at("chr_mean").get<double>()) << ','
                  << format_double(p.at("chr_std").get<double>()) << ','
                  << format_double(p.at("cost_mean").get<double>()) << ','
                  << format_double(p.at("cost_std").get<double>()) << ','
                  << format_double(p.at("utility_mean").get<double>()) << ','
                  << format_double(p.at("utility_std").get<double>()) << '\n';
    } else {
        std::vector<fs::path> summaries;
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().filename() == "summary.json")
                summaries.push_back(entry.path());
        if (summaries.empty()) {
            std::fprintf(stderr, "report: no summary.json or sweep_summary.json under %s\n",
                         dir.c_str());
            return 1;
        }
        std::sort(summaries.begin(), summaries.end());
        table << "run_id,mode,seed,episodes,chr,replacement_cost,utility\n";
        for (const auto& path : summaries) {
            std::ifstream is(path);
            nlohmann::json j;
            is >> j;
            const auto& sys = j.at("final").at("system");
            table << j.at("run_id").get<std::string>() << ','
                  << j.at("mode").get<std::string>() << ',' << j.at("seed").get<std::uint64_t>()
                  << ',' << j.at("episodes").get<int>() << ','
                  << format_double(sys.at("chr").get<double>()) << ','
                  << format_double(sys.at("replacement_cost").get<double>()) << ','
                  << format_double(sys.at("utility").get<double>()) << '\n';
        }
    }

    if (out_path.empty()) {
        std::fputs(table.str().c_str(), stdout);
    } else {
        std::ofstream os(out_path, std::ios::binary);
        os << table.str();
        if (!os) {
            std::fprintf(stderr, "report: cannot write %s\n", out_path.c_str());
            return 1;
        }
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized federated DRL edge-cache placement lab"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string mode_flag;
    int personal_flag = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON experiment config")
            ->check(CLI::ExistingFile);
        cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
            ->each([&](const std::string&) { opts.seed_set = true; });
        cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    };

    auto* run = app.add_subcommand("run", "run one federated experiment");
    add_common(run);
    run->add_option("--mode", mode_flag, "federation mode: pf|nonper|nonfed")
        ->check(CLI::IsMember({"pf", "nonper", "nonfed"}));
    run->add_option("--personal-layers", personal_flag, "personalized layer count (0..L)");

    auto* baseline = app.add_subcommand("baseline", "run a non-learning policy");
    add_common(baseline);
    std::string policy = "all";
    baseline->add_option("--policy", policy, "lru|lfu|random|all")
        ->check(CLI::IsMember({"lru", "lfu", "random", "all"}));

    auto* sweep = app.add_subcommand("sweep", "sweep one experiment axis");
    add_common(sweep);
    std::string axis;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
    sweep->add_option("--axis", axis, "personal_layers|num_contents|capacity_gb|avg_users")
        ->required()
        ->check(CLI::IsMember({"personal_layers", "num_contents", "capacity_gb", "avg_users"}));
    sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
    sweep->add_option("--seeds", seeds, "master seeds, one run per (value, seed)")
        ->delimiter(',');

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    int nets = 20;
    double eps = 1e-5, threshold = 1e-4;
    std::uint64_t gc_seed = 1;
    gradcheck->add_option("--nets", nets, "number of random networks")->check(CLI::Range(1, 1000));
    gradcheck->add_option("--eps", eps, "finite-difference step");
    gradcheck->add_option("--threshold", threshold, "max relative error allowed");
    gradcheck->add_option("--seed", gc_seed, "seed for network/batch generation");

    auto* report = app.add_subcommand("report", "summarize metrics into a flat table");
    std::string report_dir, report_out;
    report->add_option("--dir", report_dir, "directory of runs or a sweep")
        ->required()
        ->check(CLI::ExistingDirectory);
    report->add_option("--out", report_out, "write the table here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(opts, mode_flag, personal_flag);
        if (baseline->parsed()) return cmd_baseline(opts, policy);
        if (sweep->parsed()) return cmd_sweep(opts, axis, values, seeds);
        if (gradcheck->parsed()) return cmd_gradcheck(nets, eps, threshold, gc_seed);
        if (report->parsed()) return cmd_report(report_dir, report_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
