#include "csober/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "csober/baselines.hpp"
#include "csober/errors.hpp"
#include "csober/prop1.hpp"
#include "csober/records.hpp"

namespace csober {

namespace {

constexpr std::uint64_t kPoolConstructionSeed = 7;

Problem make_problem(const std::string& name) {
    if (name == "ackley") return ackley_mixed(false);
    if (name == "ackley-ordered") return ackley_mixed(true);
    if (name == "hartmann6") return hartmann6();
    if (name == "pool") return synthetic_ordered_pool(kPoolConstructionSeed);
    throw ConfigError("unknown problem: " + name);
}

struct ToleranceChoice {
    ToleranceMode mode = ToleranceMode::kAdaptive;
    double fixed = 1e-3;
    std::string label = "adaptive";
};

ToleranceChoice parse_tolerance(const std::string& text) {
    ToleranceChoice out;
    out.label = text;
    if (text == "adaptive") return out;
    if (text.rfind("fixed:", 0) == 0) {
        out.mode = ToleranceMode::kFixed;
        char* end = nullptr;
        out.fixed = std::strtod(text.c_str() + 6, &end);
        if (end == text.c_str() + 6 || out.fixed < 0.0)
            throw ConfigError("bad tolerance value: " + text);
        return out;
    }
    throw ConfigError("tolerance must be 'adaptive' or 'fixed:<v>': " + text);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::string current;
    for (const char c : text) {
        if (c == ',') {
            parts.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    parts.push_back(current);
    return parts;
}

struct RunSettings {
    std::string problem = "hartmann6";
    std::string method = "csober";
    int batch = 10;
    int iters = 5;
    std::string seeds = "0";
    std::string tolerance = "adaptive";
    bool no_fill = false;
    std::string out_path;
    std::string format = "csv";
    std::string config_path;
    int candidates = 1024;
    int nystrom = 256;
};

void apply_config_file(RunSettings& s, const CLI::App* cmd) {
    if (s.config_path.empty()) return;
    std::ifstream in(s.config_path);
    if (!in) throw ConfigError("cannot open config file: " + s.config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad config file: ") + e.what());
    }
    auto take = [&](const char* flag, const char* key, auto& slot) {
        if (cmd->count(flag) == 0 && j.contains(key)) j.at(key).get_to(slot);
    };
    take("--problem", "problem", s.problem);
    take("--method", "method", s.method);
    take("--batch", "batch", s.batch);
    take("--iters", "iters", s.iters);
    take("--seed", "seed", s.seeds);
    take("--tolerance", "tolerance", s.tolerance);
    take("--out", "out", s.out_path);
    take("--format", "format", s.format);
    take("--candidates", "candidates", s.candidates);
    take("--nystrom", "nystrom", s.nystrom);
    if (cmd->count("--no-fill") == 0 && j.contains("no_fill")) j.at("no_fill").get_to(s.no_fill);
}

LoopConfig make_loop_config(const RunSettings& s, std::uint64_t seed,
                            const ToleranceChoice& tol) {
    LoopConfig cfg;
    cfg.batch_size = s.batch;
    cfg.iterations = s.iters;
    cfg.seed = seed;
    cfg.tolerance_mode = tol.mode;
    cfg.fixed_tolerance = tol.fixed;
    cfg.fill_with_cts = !s.no_fill;
    cfg.num_candidates = s.candidates;
    cfg.num_nystrom = s.nystrom;
    return cfg;
}

void write_output(const std::string& out_path, const std::string& body,
                  const std::string& summary) {
    if (out_path.empty()) {
        std::cout << body;
        if (!summary.empty()) std::cerr << summary << '\n';
    } else {
        std::ofstream out(out_path);
        if (!out) throw ConfigError("cannot open output file: " + out_path);
        out << body;
        if (!summary.empty()) std::cout << summary << '\n';
    }
}

nlohmann::json record_to_json(const RunRecord& r) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["best_feasible"] = r.best_feasible;
    if (r.log_regret)
        j["log_regret"] = *r.log_regret;
    else
        j["log_regret"] = nullptr;
    j["eps_lp"] = r.eps_lp;
    j["est_rejection"] = r.est_rejection;
    j["realised_rejection"] = r.realised_rejection;
    j["batch_logdet"] = r.batch_logdet;
    j["wce"] = r.wce;
    j["batch_size"] = r.batch_size;
    j["elapsed_seconds"] = r.elapsed_seconds;
    j["seed"] = r.seed;
    return j;
}

nlohmann::json summarise(const std::vector<RunRecord>& records) {
    nlohmann::json j;
    if (records.empty()) return j;
    const RunRecord& last = records.back();
    j["final_best_feasible"] = last.best_feasible;
    if (last.log_regret)
        j["final_log_regret"] = *last.log_regret;
    else
        j["final_log_regret"] = nullptr;
    int total = 0;
    double elapsed = 0.0;
    for (const RunRecord& r : records) {
        total += r.batch_size;
        elapsed += r.elapsed_seconds;
    }
    j["total_queries"] = total;
    j["total_seconds"] = elapsed;
    return j;
}

int threads_cap(int cells) {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    if (const char* env = std::getenv("CSOBER_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) cap = v;
    }
    return std::min(cap, cells);
}

int command_run(const RunSettings& s) {
    const std::vector<std::string> seed_list = split_list(s.seeds);
    if (seed_list.size() != 1) throw ConfigError("run takes a single --seed");
    const std::uint64_t seed = std::strtoull(seed_list[0].c_str(), nullptr, 10);
    const ToleranceChoice tol = parse_tolerance(s.tolerance);
    const Method method = parse_method(s.method);
    const Problem problem = make_problem(s.problem);
    const LoopConfig cfg = make_loop_config(s, seed, tol);

    const RunOutput result = run_method(problem, method, cfg);

    nlohmann::json summary = summarise(result.records);
    summary["problem"] = s.problem;
    summary["method"] = s.method;
    summary["seed"] = seed;
    summary["tolerance"] = tol.label;

    if (s.format == "json") {
        nlohmann::json doc;
        doc["summary"] = summary;
        nlohmann::json rows = nlohmann::json::array();
        for (const RunRecord& r : result.records) rows.push_back(record_to_json(r));
        doc["records"] = std::move(rows);
        write_output(s.out_path, doc.dump(2) + "\n", "");
    } else if (s.format == "csv") {
        write_output(s.out_path, records_to_csv(result.records), summary.dump());
    } else {
        throw ConfigError("unknown format: " + s.format);
    }
    return 0;
}

int command_sweep(const RunSettings& s) {
    const std::vector<std::string> methods = split_list(s.method);
    const std::vector<std::string> tolerances = split_list(s.tolerance);
    const std::vector<std::string> seeds = split_list(s.seeds);
    const Problem problem = make_problem(s.problem);

    struct Cell {
        int group = 0;
        std::string method;
        ToleranceChoice tol;
        std::uint64_t seed = 0;
        std::vector<RunRecord> records;
    };
    std::vector<Cell> cells;
    int group = 0;
    for (const std::string& method : methods) {
        parse_method(method);  // validate up front
        for (const std::string& tol_text : tolerances) {
            const ToleranceChoice tol = parse_tolerance(tol_text);
            for (const std::string& seed_text : seeds) {
                Cell cell;
                cell.group = group;
                cell.method = method;
                cell.tol = tol;
                cell.seed = std::strtoull(seed_text.c_str(), nullptr, 10);
                cells.push_back(std::move(cell));
            }
            ++group;
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure_message;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cells.size() || failed.load()) return;
            Cell& cell = cells[k];
            try {
                const LoopConfig cfg = make_loop_config(s, cell.seed, cell.tol);
                cell.records =
                    run_method(problem, parse_method(cell.method), cfg).records;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failed.store(true);
                failure_message = e.what();
            }
        }
    };
    const int n_threads = threads_cap(static_cast<int>(cells.size()));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failed.load()) throw NumericalFailure("sweep cell failed: " + failure_message);

    if (s.format == "json") {
        nlohmann::json doc = nlohmann::json::array();
        for (const Cell& cell : cells) {
            nlohmann::json jc;
            jc["group"] = cell.group;
            jc["method"] = cell.method;
            jc["tolerance"] = cell.tol.label;
            jc["seed"] = cell.seed;
            jc["summary"] = summarise(cell.records);
            nlohmann::json rows = nlohmann::json::array();
            for (const RunRecord& r : cell.records) rows.push_back(record_to_json(r));
            jc["records"] = std::move(rows);
            doc.push_back(std::move(jc));
        }
        write_output(s.out_path, doc.dump(2) + "\n", "");
    } else if (s.format == "csv") {
        std::ostringstream out;
        out << "group,method,tolerance," << csv_header() << '\n';
        for (const Cell& cell : cells)
            for (const RunRecord& r : cell.records)
                out << cell.group << ',' << cell.method << ',' << cell.tol.label << ','
                    << to_csv_row(r) << '\n';
        write_output(s.out_path, out.str(), "");
    } else {
        throw ConfigError("unknown format: " + s.format);
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"constrained batch Bayesian optimisation via kernel recombination"};
    app.require_subcommand(1);

    RunSettings run_s;
    CLI::App* run_cmd = app.add_subcommand("run", "one method x problem x seed");
    run_cmd->add_option("--problem", run_s.problem);
    run_cmd->add_option("--method", run_s.method);
    run_cmd->add_option("--batch", run_s.batch);
    run_cmd->add_option("--iters", run_s.iters);
    run_cmd->add_option("--seed", run_s.seeds);
    run_cmd->add_option("--tolerance", run_s.tolerance);
    run_cmd->add_flag("--no-fill", run_s.no_fill);
    run_cmd->add_option("--out", run_s.out_path);
    run_cmd->add_option("--format", run_s.format);
    run_cmd->add_option("--config", run_s.config_path);
    run_cmd->add_option("--candidates", run_s.candidates);
    run_cmd->add_option("--nystrom", run_s.nystrom);

    RunSettings sweep_s;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "seed/tolerance/method grids");
    sweep_cmd->add_option("--problem", sweep_s.problem);
    sweep_cmd->add_option("--method", sweep_s.method);
    sweep_cmd->add_option("--batch", sweep_s.batch);
    sweep_cmd->add_option("--iters", sweep_s.iters);
    sweep_cmd->add_option("--seed", sweep_s.seeds);
    sweep_cmd->add_option("--tolerance", sweep_s.tolerance);
    sweep_cmd->add_flag("--no-fill", sweep_s.no_fill);
    sweep_cmd->add_option("--out", sweep_s.out_path);
    sweep_cmd->add_option("--format", sweep_s.format);
    sweep_cmd->add_option("--config", sweep_s.config_path);
    sweep_cmd->add_option("--candidates", sweep_s.candidates);
    sweep_cmd->add_option("--nystrom", sweep_s.nystrom);

    CLI::App* verify_cmd = app.add_subcommand("verify-prop1", "recombination bound checks");
    int v_instances = 20, v_trials = 1000;
    std::uint64_t v_seed = 0;
    double v_eps = -1.0;
    std::string v_out, v_format = "json";
    verify_cmd->add_option("--instances", v_instances);
    verify_cmd->add_option("--trials", v_trials);
    verify_cmd->add_option("--seed", v_seed);
    verify_cmd->add_option("--eps", v_eps, "fixed tolerance; negative draws per instance");
    verify_cmd->add_option("--out", v_out);
    verify_cmd->add_option("--format", v_format);

    CLI::App* list_cmd = app.add_subcommand("list", "available problems and methods");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run_cmd->parsed()) {
            apply_config_file(run_s, run_cmd);
            return command_run(run_s);
        }
        if (sweep_cmd->parsed()) {
            apply_config_file(sweep_s, sweep_cmd);
            return command_sweep(sweep_s);
        }
        if (verify_cmd->parsed()) {
            Prop1Config cfg;
            cfg.instances = v_instances;
            cfg.eps_lp = v_eps;
            const Prop1Report report = verify_prop1(cfg, v_trials, v_seed);
            std::ostringstream text;
            text << "instances=" << report.instances.size() << " trials=" << report.trials
                 << " reward_violations=" << report.total_reward_violations
                 << " integration_violations=" << report.total_integration_violations
                 << " clean=" << (report.clean() ? "true" : "false");
            write_output(v_out, to_json_string(report) + "\n", text.str());
            return 0;
        }
        if (list_cmd->parsed()) {
            std::cout << "problems: ackley ackley-ordered hartmann6 pool\n";
            std::cout << "methods: csober random cts\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const CLI::ParseError&) {
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}

}  // namespace csober
