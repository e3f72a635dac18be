#include "evopress/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evopress/baselines.hpp"
#include "evopress/errors.hpp"
#include "evopress/fitness.hpp"
#include "evopress/level_space.hpp"
#include "evopress/mutation_search.hpp"
#include "evopress/oracle_bridge.hpp"
#include "evopress/presets.hpp"
#include "evopress/theory_harness.hpp"

namespace evopress {

void configure_logging() {
    static std::shared_ptr<spdlog::logger> logger = [] {
        auto l = spdlog::stderr_color_mt("evopress");
        spdlog::set_default_logger(l);
        return l;
    }();
    const char* env = std::getenv("EVOPRESS_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        logger->set_level(spdlog::level::err);
    } else if (level == "info") {
        logger->set_level(spdlog::level::info);
    } else if (level == "debug") {
        logger->set_level(spdlog::level::debug);
    } else {
        throw ConfigError("EVOPRESS_LOG must be one of error, info, debug (got \"" + level + "\")");
    }
}

namespace {

struct OracleArgs {
    std::string oracle_path;
    std::string external_cmd;
    int handshake_timeout_ms = 120'000;
    int eval_timeout_ms = 600'000;

    void add_to(CLI::App* app) {
        auto* file = app->add_option("--oracle", oracle_path, "Synthetic oracle JSON");
        auto* ext = app->add_option("--external-cmd", external_cmd, "Command speaking the NDJSON oracle protocol");
        file->excludes(ext);
        app->add_option("--handshake-timeout-ms", handshake_timeout_ms)->check(CLI::PositiveNumber);
        app->add_option("--eval-timeout-ms", eval_timeout_ms)->check(CLI::PositiveNumber);
    }

    bool given() const { return !oracle_path.empty() || !external_cmd.empty(); }
};

// Owns whatever backs the oracle, so the session outlives every evaluation.
struct OracleHandle {
    std::shared_ptr<OracleSession> session;
    std::unique_ptr<FitnessOracle> oracle;
};

OracleHandle open_oracle(const OracleArgs& args, const LevelDatabase& db) {
    OracleHandle h;
    if (!args.oracle_path.empty()) {
        h.oracle = load_oracle(args.oracle_path);
        if (const auto* lin = dynamic_cast<const LinearOracle*>(h.oracle.get())) {
            check_table_shape(db, lin->weights(), "oracle weights");
        } else if (const auto* pl = dynamic_cast<const PlantedNonmonotoneOracle*>(h.oracle.get())) {
            check_table_shape(db, pl->base(), "oracle base");
            for (const auto& it : pl->interactions()) {
                if (it.u >= db.size() || it.v >= db.size()) {
                    throw ConfigError("oracle interaction refers to a unit outside the database");
                }
            }
        }
        return h;
    }
    const auto argv = split_command_line(args.external_cmd);
    if (argv.empty()) {
        throw ConfigError("--external-cmd is empty");
    }
    OracleTimeouts timeouts{std::chrono::milliseconds(args.handshake_timeout_ms),
                            std::chrono::milliseconds(args.eval_timeout_ms)};
    h.session = OracleSession::spawn(argv, timeouts);
    h.session->handshake(db);
    h.oracle = std::make_unique<ExternalOracle>(h.session);
    return h;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw ConfigError("cannot open " + path + " for writing");
    }
    return f;
}

void write_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << j.dump(2) << '\n';
        return;
    }
    auto f = open_output(path);
    f << j.dump(2) << '\n';
}

SearchConfig load_search_config_or_schedule(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("cannot open " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (j.is_object() && j.contains("stages")) {
        SearchConfig config;
        config.schedule = schedule_from_json(j);
        return config;
    }
    return search_config_from_json(j);
}

int compressed_units(const LevelAssignment& a) {
    return static_cast<int>(std::count_if(a.levels.begin(), a.levels.end(), [](int l) { return l > 0; }));
}

// search ------------------------------------------------------------------

struct SearchArgs {
    std::string db_path;
    OracleArgs oracle;
    std::string preset;
    std::string config_path;
    std::optional<std::int64_t> budget;
    std::optional<std::uint64_t> seed;
    std::optional<int> patience;
    std::optional<int> max_generations;
    int jobs = 1;
    std::string trace_path;
    std::string final_path;
};

void add_search(CLI::App& app, SearchArgs& a) {
    auto* cmd = app.add_subcommand("search", "Evolutionary search for a level assignment under a size budget");
    cmd->add_option("--db", a.db_path, "Level database JSON")->required();
    a.oracle.add_to(cmd);
    auto* preset = cmd->add_option("--preset", a.preset, "depth, sparsity, quantization or superfast");
    auto* config = cmd->add_option("--schedule", a.config_path,
                                   "Search configuration JSON, or a bare selection schedule object");
    preset->excludes(config);
    cmd->add_option("--budget", a.budget, "Maximum total size");
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--patience", a.patience, "Stop after this many generations without a new survivor (0: never)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-generations", a.max_generations)->check(CLI::NonNegativeNumber);
    cmd->add_option("--jobs", a.jobs, "Parallel evaluations for in-process oracles")->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.trace_path, "Per-generation trace CSV");
    cmd->add_option("--final", a.final_path, "Final assignment JSON (default: stdout)");
}

int run_search_command(const SearchArgs& a, std::ostream& out) {
    const LevelDatabase db = load_database(a.db_path);

    SearchConfig config;
    const Preset* preset = nullptr;
    if (!a.preset.empty()) {
        preset = &find_preset(a.preset);
        config.schedule = preset->schedule;
        config.max_generations = preset->generations;
    } else if (!a.config_path.empty()) {
        config = load_search_config_or_schedule(a.config_path);
    } else {
        throw ConfigError("search needs --preset or --schedule");
    }
    if (a.budget) {
        config.budget = *a.budget;
    }
    if (a.seed) {
        config.seed = *a.seed;
    }
    if (a.patience) {
        config.patience = *a.patience;
    }
    if (!config.budget) {
        throw ConfigError("no budget given (--budget or \"budget\" in the config)");
    }
    config.schedule.validate();
    if (!a.oracle.given()) {
        throw ConfigError("search needs --oracle or --external-cmd");
    }

    // Open the trace before doing any work so a bad path fails fast.
    std::ofstream trace;
    if (!a.trace_path.empty()) {
        trace = open_output(a.trace_path);
        SearchTrace::write_csv_header(trace);
        trace.flush();
    }

    OracleHandle handle = open_oracle(a.oracle, db);
    SearchOptions options;
    options.jobs = a.jobs;

    const Budget budget{*config.budget};
    Rng init_rng = make_rng(config.seed, {stream::kInit});
    const InitResult init = initialize(db, budget, *handle.oracle, config.schedule, init_rng, options);

    int generations = config.max_generations;
    if (a.max_generations) {
        generations = *a.max_generations;
    } else if (preset) {
        generations = resolve_generations(*preset, db.size(), static_cast<std::size_t>(compressed_units(init.assignment)));
    }
    spdlog::info("searching {} units, budget {}, {} generations, seed {}", db.size(), budget.max_size, generations,
                 config.seed);

    std::optional<GenerationRecord> last;
    auto on_generation = [&](const GenerationRecord& r) {
        if (trace.is_open()) {
            SearchTrace::write_csv_row(trace, r);
            trace.flush();
        }
        last = r;
    };
    const SearchResult result = evolve(db, init.assignment, *handle.oracle, config.schedule, config.mutations,
                                       generations, config.patience, config.seed, init.tokens_used, options,
                                       on_generation);
    if (handle.session) {
        handle.session->close();
    }

    nlohmann::json j;
    j["levels"] = result.assignment.levels;
    j["assignment"] = result.assignment.to_string();
    j["size"] = assignment_size(db, result.assignment);
    j["budget"] = budget.max_size;
    j["generations"] = result.generations;
    j["stopped_early"] = result.stopped_early;
    j["fitness"] = last ? nlohmann::json(last->survivor_fitness) : nlohmann::json(nullptr);
    j["evaluations_used"] = last ? last->evaluations_used : init.tokens_used;
    j["seed"] = config.seed;
    write_json(j, a.final_path, out);
    return kExitOk;
}

// brute -------------------------------------------------------------------

struct BruteArgs {
    std::string db_path;
    OracleArgs oracle;
    std::optional<int> choose;
    std::optional<std::int64_t> budget;
    bool balanced = false;
    std::uint64_t seed = 0;
    std::int64_t tokens = 65536;
    std::size_t cap = kDefaultEnumerationCap;
    int jobs = 1;
    std::string out_path;
};

void add_brute(CLI::App& app, BruteArgs& a) {
    auto* cmd = app.add_subcommand("brute", "Enumerate (and optionally score) every feasible assignment");
    cmd->add_option("--db", a.db_path, "Level database JSON")->required();
    a.oracle.add_to(cmd);
    auto* choose = cmd->add_option("--choose", a.choose, "Compress exactly this many units");
    auto* budget = cmd->add_option("--budget", a.budget, "Maximum total size");
    choose->excludes(budget);
    cmd->add_flag("--balanced", a.balanced, "Same number of compressed units in every kind");
    cmd->add_option("--seed", a.seed, "Seed of the shared evaluation batch");
    cmd->add_option("--tokens", a.tokens, "Tokens in the shared evaluation batch")->check(CLI::PositiveNumber);
    cmd->add_option("--cap", a.cap, "Refuse to enumerate more assignments than this");
    cmd->add_option("--jobs", a.jobs)->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out_path, "CSV of all enumerated assignments");
}

int run_brute_command(const BruteArgs& a, std::ostream& out) {
    const LevelDatabase db = load_database(a.db_path);
    FeasibilityRule rule;
    if (a.choose) {
        rule = choose_exactly(db, *a.choose);
    } else if (a.budget) {
        rule = FeasibilityRule::within(Budget{*a.budget});
    } else {
        throw ConfigError("brute needs --choose or --budget");
    }
    if (a.balanced) {
        rule.structural = balanced_kinds(db);
    }

    std::ofstream rows;
    if (!a.out_path.empty()) {
        rows = open_output(a.out_path);
    }
    nlohmann::json summary;
    if (!a.oracle.given()) {
        const auto all = enumerate_feasible(db, rule, a.cap);
        if (rows.is_open()) {
            rows << "index,assignment,size\n";
            for (std::size_t i = 0; i < all.size(); ++i) {
                rows << i << ',' << all[i].to_string() << ',' << assignment_size(db, all[i]) << '\n';
            }
        }
        summary["enumerated"] = all.size();
        write_json(summary, "", out);
        return kExitOk;
    }

    OracleHandle handle = open_oracle(a.oracle, db);
    const Batch batch{derive_seed(a.seed, {stream::kBatch}), a.tokens, {}};
    const ExhaustiveResult r = exhaustive_search(db, rule, *handle.oracle, batch, a.cap, a.jobs, rows.is_open());
    if (handle.session) {
        handle.session->close();
    }
    if (rows.is_open()) {
        rows << "index,assignment,size,fitness\n";
        char buf[64];
        for (std::size_t i = 0; i < r.assignments.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", r.fitness_values[i]);
            rows << i << ',' << r.assignments[i].to_string() << ',' << assignment_size(db, r.assignments[i]) << ','
                 << buf << '\n';
        }
    }
    summary["enumerated"] = r.enumerated;
    summary["best"] = r.best.levels;
    summary["assignment"] = r.best.to_string();
    summary["fitness"] = r.fitness;
    write_json(summary, "", out);
    return kExitOk;
}

// dp ----------------------------------------------------------------------

struct DpArgs {
    std::string table_path;
    std::int64_t budget = 0;
    std::string out_path;
};

void add_dp(CLI::App& app, DpArgs& a) {
    auto* cmd = app.add_subcommand("dp", "Knapsack allocation over a per-unit error table");
    cmd->add_option("--table", a.table_path, "Error table JSON")->required();
    cmd->add_option("--budget", a.budget, "Maximum total size")->required();
    cmd->add_option("--out", a.out_path, "Result JSON (default: stdout)");
}

int run_dp_command(const DpArgs& a, std::ostream& out) {
    const ErrorTable table = load_error_table(a.table_path);
    const LevelAssignment best = dp_allocate(table, Budget{a.budget});
    nlohmann::json j;
    j["levels"] = best.levels;
    j["total_error"] = table.total_error(best);
    j["total_size"] = table.total_size(best);
    write_json(j, a.out_path, out);
    return kExitOk;
}

// theory ------------------------------------------------------------------

struct TheoryArgs {
    int n = 0;
    int k = 0;
    std::vector<int> lambdas{1};
    int trials = 100;
    std::uint64_t seed = 0;
    std::string out_path;
};

void add_theory(CLI::App& app, TheoryArgs& a) {
    auto* cmd = app.add_subcommand("theory", "Convergence of the single-switch search on linear functions");
    cmd->add_option("--n", a.n, "Number of units")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--k", a.k, "Units to remove")->required()->check(CLI::NonNegativeNumber);
    cmd->add_option("--lambda", a.lambdas, "Offspring per generation (repeatable)")->check(CLI::PositiveNumber);
    cmd->add_option("--trials", a.trials)->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--out", a.out_path, "CSV (default: stdout)");
}

int run_theory_command(const TheoryArgs& a, std::ostream& out) {
    std::vector<ConvergenceStats> rows;
    for (int lambda : a.lambdas) {
        rows.push_back(measure_convergence(a.n, a.k, lambda, a.trials, a.seed));
        spdlog::info("lambda {}: {:.1f} generations on average (worst-start bound {:.1f})", lambda,
                     rows.back().mean_generations, worst_start_expectation(a.n, a.k));
    }
    if (a.out_path.empty()) {
        write_convergence_csv(out, rows);
    } else {
        auto f = open_output(a.out_path);
        write_convergence_csv(f, rows);
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Constrained evolutionary search over compression levels"};
    app.require_subcommand(1);
    SearchArgs search;
    BruteArgs brute;
    DpArgs dp;
    TheoryArgs theory;
    add_search(app, search);
    add_brute(app, brute);
    add_dp(app, dp);
    add_theory(app, theory);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        configure_logging();
        if (app.got_subcommand("search")) {
            return run_search_command(search, out);
        }
        if (app.got_subcommand("brute")) {
            return run_brute_command(brute, out);
        }
        if (app.got_subcommand("dp")) {
            return run_dp_command(dp, out);
        }
        return run_theory_command(theory, out);
    } catch (const OracleError& e) {
        err << "oracle error: " << e.what() << '\n';
        return kExitOracle;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace evopress
