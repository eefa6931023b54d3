// sinkbisim: gen | run | sharpness | verify | report
//
// Failures print one JSON line {"error": ..., "command": ...} on stderr and
// exit with status 1 (2 for usage errors, 3 when verify checks fail).

#include "sinkbisim/sinkbisim.hpp"
#include "sinkbisim/verify.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace sinkbisim;

namespace {

std::string now_utc() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

struct GenArgs {
    std::string config;
    std::string family = "ring";
    std::size_t states = 200, classes = 20, actions = 10;
    double gamma = 0.9, perturbation = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen(const GenArgs& a) {
    EnvConfig env;
    if (!a.config.empty()) {
        env = load_config(a.config).env;
    } else {
        env.family = parse_family(a.family);
        env.num_states = a.states;
        env.num_classes = a.classes;
        env.num_actions = a.actions;
        env.gamma = a.gamma;
        env.perturbation = a.perturbation;
    }
    const GeneratedMdp g = generate(env, a.seed);
    if (a.out.empty()) {
        std::cout << mdp_to_json(g).dump() << "\n";
    } else {
        open_out(a.out) << mdp_to_json(g).dump() << "\n";
    }
    return 0;
}

struct RunArgs {
    std::string config;
    std::string mdp;
    std::string seeds = "0";
    std::string out = "out";
    std::string id;
    unsigned threads = 0;
    unsigned jobs = 1;
    std::size_t steps = 0;
};

int cmd_run(const RunArgs& a) {
    ApiConfig cfg = load_config(a.config);
    if (a.threads > 0) cfg.threads = a.threads;
    if (a.steps > 0) cfg.num_steps = a.steps;
    cfg.validate();
    const auto seeds = parse_seeds(a.seeds);
    std::optional<GeneratedMdp> fixed;
    if (!a.mdp.empty()) fixed = load_mdp(a.mdp);
    const std::string id = a.id.empty() ? fs::path(a.config).stem().string() : a.id;
    const fs::path dir(a.out);
    fs::create_directories(dir);

    RunManifest man;
    man.experiment_id = id;
    man.config = config_to_json(cfg);
    man.seeds = seeds;
    man.started_at = now_utc();
    if (fixed) man.extra["mdp"] = a.mdp;
    std::vector<std::string> outputs(seeds.size());
    std::vector<std::vector<std::string>> warnings(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::string first_error;
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                ApiConfig c = cfg;
                c.seed = seeds[i];
                const ApiRun run = fixed ? run_api_on(fixed->mdp, c, fixed->ec_labels) : run_api(c);
                const std::string name = id + "_seed" + std::to_string(seeds[i]) + ".csv";
                auto out = open_out(dir / name);
                write_step_csv(out, run.steps);
                outputs[i] = name;
                warnings[i] = run.warnings;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error.empty()) first_error = "seed " + std::to_string(seeds[i]) + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < std::max(1u, a.jobs); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);

    man.outputs = outputs;
    man.finished_at = now_utc();
    Json w = Json::object();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!warnings[i].empty()) w[std::to_string(seeds[i])] = warnings[i];
    }
    man.extra["warnings"] = w;
    open_out(dir / (id + "_manifest.json")) << man.to_json().dump(2) << "\n";
    std::cout << "wrote " << seeds.size() << " run(s) to " << dir.string() << "\n";
    return 0;
}

struct SharpArgs {
    std::string out = "sharpness.csv";
    std::uint64_t seed = 0;
    std::vector<std::size_t> dims{2, 8, 32};
    std::size_t mu1 = 20, mu2 = 50;
};

int cmd_sharpness(const SharpArgs& a) {
    SharpnessConfig cfg;
    cfg.seed = a.seed;
    cfg.dims = a.dims;
    cfg.mu1_per_bucket = a.mu1;
    cfg.mu2_per_mu1 = a.mu2;
    const SharpnessReport rep = sinkhorn_sharpness_bench(cfg);
    auto out = open_out(a.out);
    write_sharpness_csv(out, rep.records);
    for (const auto& line : rep.log) std::cerr << "note: " << line << "\n";
    std::cout << "wrote " << rep.records.size() << " records to " << a.out << "\n";
    return 0;
}

struct VerifyArgs {
    bool quick = false;
    std::vector<int> only;
    unsigned threads = 1;
};

int cmd_verify(const VerifyArgs& a) {
    verify::Scale scale = a.quick ? verify::Scale::quick() : verify::Scale{};
    scale.threads = std::max(1u, a.threads);
    int failed = 0;
    verify::run_all(scale, a.only, [&](const verify::CheckResult& r) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << ": " << r.detail << " ("
                  << r.seconds << "s)" << std::endl;
        failed += r.passed ? 0 : 1;
    });
    return failed == 0 ? 0 : 3;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    std::vector<CsvTable> tables;
    for (const auto& p : a.inputs) tables.push_back(read_csv_file(p));
    const StepReport rep = aggregate_steps(tables);
    if (a.out.empty()) {
        write_report_csv(std::cout, rep);
    } else {
        auto out = open_out(a.out);
        write_report_csv(out, rep);
    }
    return 0;
}

void print_error(const std::string& command, const std::string& what) {
    std::cerr << Json{{"error", what}, {"command", command}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sinkhorn bisimulation metrics and approximate policy iteration"};
    app.require_subcommand(1);

    GenArgs ga;
    auto* gen = app.add_subcommand("gen", "Generate an MDP and write it as JSON");
    gen->add_option("--config", ga.config, "Take the environment from a run config");
    gen->add_option("--family", ga.family, "ring | dense | random_chain");
    gen->add_option("--states", ga.states);
    gen->add_option("--classes", ga.classes);
    gen->add_option("--actions", ga.actions, "random_chain only");
    gen->add_option("--gamma", ga.gamma);
    gen->add_option("--perturbation", ga.perturbation);
    gen->add_option("--seed", ga.seed);
    gen->add_option("--out", ga.out, "Output file (default stdout)");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run API from a config; one CSV per seed plus a manifest");
    run->add_option("--config", ra.config)->required()->check(CLI::ExistingFile);
    run->add_option("--mdp", ra.mdp, "Use a saved MDP instead of generating one per seed")->check(CLI::ExistingFile);
    run->add_option("--seeds", ra.seeds, "7 | 0..9 | 1,4,9");
    run->add_option("--out", ra.out, "Output directory");
    run->add_option("--id", ra.id, "Experiment id (default: config file stem)");
    run->add_option("--threads", ra.threads, "Threads per run (overrides the config)");
    run->add_option("--jobs", ra.jobs, "Seeds run concurrently");
    run->add_option("--steps", ra.steps, "Override num_steps");

    SharpArgs sa;
    auto* sharp = app.add_subcommand("sharpness", "Entropic sharpness benchmark");
    sharp->add_option("--out", sa.out);
    sharp->add_option("--seed", sa.seed);
    sharp->add_option("--dims", sa.dims);
    sharp->add_option("--mu1", sa.mu1, "mu1 draws per bucket");
    sharp->add_option("--mu2", sa.mu2, "mu2 draws per mu1");

    VerifyArgs va;
    auto* ver = app.add_subcommand("verify", "Run the property and reproduction checks");
    ver->add_flag("--quick", va.quick, "Small scale smoke run");
    ver->add_option("--only", va.only, "Check ids")->delimiter(',');
    ver->add_option("--threads", va.threads);

    ReportArgs rp;
    auto* rep = app.add_subcommand("report", "Per-step mean and standard error across seed CSVs");
    rep->add_option("inputs", rp.inputs)->required()->check(CLI::ExistingFile);
    rep->add_option("--out", rp.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), e.what());
        return 2;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (*gen) return cmd_gen(ga);
        if (*run) return cmd_run(ra);
        if (*sharp) return cmd_sharpness(sa);
        if (*ver) return cmd_verify(va);
        if (*rep) return cmd_report(rp);
    } catch (const std::exception& e) {
        print_error(name, e.what());
        return 1;
    }
    return 2;
}
