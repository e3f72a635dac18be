#include "evopress/mutation_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evopress/errors.hpp"
#include "json_util.hpp"

namespace evopress {

void SelectionSchedule::validate() const {
    if (offspring < 1) {
        throw ConfigError("schedule: offspring must be positive");
    }
    if (stages.empty()) {
        throw ConfigError("schedule: at least one selection stage is required");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (stages[s].tokens < 1 || stages[s].survivors < 1) {
            throw ConfigError("schedule: stage " + std::to_string(s) + " needs positive tokens and survivors");
        }
        if (s > 0 && stages[s].tokens <= stages[s - 1].tokens) {
            throw ConfigError("schedule: stage tokens must be strictly increasing");
        }
        if (s > 0 && stages[s].survivors > stages[s - 1].survivors) {
            throw ConfigError("schedule: survivors must be non-increasing");
        }
    }
    if (stages.back().survivors != 1) {
        throw ConfigError("schedule: the last stage must keep exactly one survivor");
    }
    if (offspring < stages.back().survivors) {
        throw ConfigError("schedule: offspring must be at least the final survivor count");
    }
    if (initial_candidates < 0 || initial_tokens < 1) {
        throw ConfigError("schedule: initial_candidates must be >= 0 and initial_tokens positive");
    }
}

MutationCountDistribution MutationCountDistribution::min_of_two_uniform(int lo, int hi) {
    if (lo < 1 || hi < lo) {
        throw ConfigError("mutations: need 1 <= lo <= hi");
    }
    return {Kind::MinOfTwoUniform, lo, hi, 1};
}

MutationCountDistribution MutationCountDistribution::constant_count(int c) {
    if (c < 1) {
        throw ConfigError("mutations: constant count must be positive");
    }
    return {Kind::Constant, c, c, c};
}

int sample_num_mutations(const MutationCountDistribution& dist, Rng& rng) {
    if (dist.kind == MutationCountDistribution::Kind::Constant) {
        return dist.constant;
    }
    std::uniform_int_distribution<int> uniform(dist.lo, dist.hi);
    const int a = uniform(rng);
    const int b = uniform(rng);
    return std::min(a, b);
}

LevelAssignment level_switch_mutation(const LevelDatabase& db, const LevelAssignment& parent, Rng& rng,
                                      int num_switches) {
    db.validate(parent);
    if (num_switches < 1) {
        throw ConfigError("level_switch_mutation: num_switches must be positive");
    }
    const std::size_t n = db.size();
    LevelAssignment child = parent;
    std::vector<std::size_t> compressible;
    compressible.reserve(n);
    std::uniform_int_distribution<std::size_t> any_unit(0, n - 1);

    for (int s = 0; s < num_switches; ++s) {
        compressible.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (child.levels[i] < db.max_level(i)) {
                compressible.push_back(i);
            }
        }
        if (compressible.empty()) {
            throw NoFeasibleSwitch("every unit is already at its most compressed level");
        }
        std::uniform_int_distribution<std::size_t> pick(0, compressible.size() - 1);
        const std::size_t u = compressible[pick(rng)];

        bool found = false;
        const std::size_t attempts = static_cast<std::size_t>(kSwitchAttemptsPerUnit) * n;
        for (std::size_t t = 0; t < attempts; ++t) {
            const std::size_t v = any_unit(rng);
            if (exchangeable(db, child, u, v)) {
                ++child.levels[u];
                --child.levels[v];
                found = true;
                break;
            }
        }
        if (!found) {
            throw NoFeasibleSwitch("no step-matched partner for unit \"" + db.unit(u).id + "\"");
        }
    }
    return child;
}

namespace {

void check_fitness(double f) {
    if (!std::isfinite(f)) {
        throw OracleError("oracle returned a non-finite fitness");
    }
}

LevelAssignment uniform_assignment(const LevelDatabase& db, int level) {
    LevelAssignment a;
    a.levels.reserve(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        a.levels.push_back(std::min(level, db.max_level(i)));
    }
    return a;
}

// Moves units from `lo` to `lo + 1` in random order until the budget is met.
LevelAssignment sample_mixed_candidate(const LevelDatabase& db, Budget budget, int lo, Rng& rng) {
    LevelAssignment a = uniform_assignment(db, lo);
    std::int64_t size = assignment_size(db, a);

    std::vector<std::string> kinds;
    std::map<std::string, std::vector<std::size_t>> movable;
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (db.max_level(i) <= lo) {
            continue;
        }
        const std::string key = db.kind_restricted() ? db.unit(i).kind : std::string();
        if (!movable.contains(key)) {
            kinds.push_back(key);
        }
        movable[key].push_back(i);
    }
    for (const auto& k : kinds) {
        std::shuffle(movable[k].begin(), movable[k].end(), rng);
    }

    std::map<std::string, std::size_t> taken;
    auto move_next = [&](const std::string& kind) {
        auto& units = movable[kind];
        std::size_t& next = taken[kind];
        if (next >= units.size()) {
            return false;
        }
        const std::size_t i = units[next++];
        size -= db.step(i, lo);
        ++a.levels[i];
        return true;
    };

    // Round-robin over kinds (a single pseudo-kind when unrestricted).
    std::size_t cursor = 0;
    while (size > budget.max_size) {
        bool progressed = false;
        for (std::size_t tries = 0; tries < kinds.size() && !progressed; ++tries) {
            progressed = move_next(kinds[cursor]);
            cursor = (cursor + 1) % kinds.size();
        }
        if (!progressed) {
            throw InfeasibleBudget("budget cannot be reached by mixing levels " + std::to_string(lo) + " and " +
                                   std::to_string(lo + 1));
        }
    }
    if (db.kind_restricted()) {
        std::size_t target = 0;
        for (const auto& k : kinds) {
            target = std::max(target, taken[k]);
        }
        for (const auto& k : kinds) {
            while (taken[k] < target) {
                if (!move_next(k)) {
                    throw InfeasibleBudget("cannot compress an equal number of units of every kind");
                }
            }
        }
    }
    return a;
}

struct PoolEntry {
    LevelAssignment assignment;
    int offspring_index = 0;  // -1 for the parent
    double fitness = 0.0;
};

}  // namespace

InitResult initialize(const LevelDatabase& db, Budget budget, const FitnessOracle& oracle,
                      const SelectionSchedule& schedule, Rng& rng, const SearchOptions& options) {
    if (budget.max_size < db.min_total_size()) {
        throw InfeasibleBudget("budget " + std::to_string(budget.max_size) + " is below the minimal total size " +
                               std::to_string(db.min_total_size()));
    }
    int top = 0;
    for (std::size_t i = 0; i < db.size(); ++i) {
        top = std::max(top, db.max_level(i));
    }
    int level = 0;
    std::int64_t size = assignment_size(db, uniform_assignment(db, 0));
    while (size > budget.max_size && level < top) {
        ++level;
        size = assignment_size(db, uniform_assignment(db, level));
    }
    if (size == budget.max_size || level == 0) {
        spdlog::debug("initialize: uniform level {} meets the budget", level);
        return InitResult{uniform_assignment(db, level), 0, 0};
    }

    const int count = std::max(schedule.initial_candidates, 1);
    std::vector<LevelAssignment> candidates;
    candidates.reserve(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        candidates.push_back(sample_mixed_candidate(db, budget, level - 1, rng));
    }
    if (count == 1) {
        return InitResult{std::move(candidates.front()), 0, 0};
    }

    const Batch batch{rng(), schedule.initial_tokens, {}};
    const auto fitness = oracle.evaluate_many(db, candidates, batch, options.jobs);
    std::size_t best = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        check_fitness(fitness[c]);
        if (options.on_evaluation) {
            options.on_evaluation(EvaluationEvent{0, -1, &candidates[c], fitness[c], false});
        }
        if (fitness[c] < fitness[best]) {
            best = c;
        }
    }
    spdlog::debug("initialize: best of {} candidates has fitness {}", count, fitness[best]);
    return InitResult{std::move(candidates[best]), schedule.initial_tokens * count, count};
}

std::pair<SearchState, GenerationRecord> run_generation(const SearchState& state, const LevelDatabase& db,
                                                        const FitnessOracle& oracle,
                                                        const SelectionSchedule& schedule,
                                                        const MutationCountDistribution& dist,
                                                        const SearchOptions& options) {
    const int generation = state.generation + 1;
    const std::int64_t parent_size = assignment_size(db, state.parent);

    Rng mutation_rng = make_rng(state.rng_seed, {stream::kMutation, static_cast<std::uint64_t>(generation)});
    std::vector<PoolEntry> pool;
    pool.reserve(static_cast<std::size_t>(schedule.offspring) + 1);
    const int max_attempts = kOffspringAttemptsPerChild * schedule.offspring;
    for (int attempt = 0; attempt < max_attempts && std::cmp_less(pool.size(), schedule.offspring); ++attempt) {
        const int switches = sample_num_mutations(dist, mutation_rng);
        try {
            pool.push_back({level_switch_mutation(db, state.parent, mutation_rng, switches),
                            static_cast<int>(pool.size()), 0.0});
        } catch (const NoFeasibleSwitch&) {
            continue;
        }
    }
    const int offspring_generated = static_cast<int>(pool.size());

    std::int64_t tokens_used = 0;
    double parent_fitness = 0.0;
    for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
        const auto& stage = schedule.stages[s];
        const bool last = s + 1 == schedule.stages.size();
        if (last) {
            pool.push_back({state.parent, -1, 0.0});
        }
        if (pool.empty()) {
            continue;
        }
        const Batch batch{derive_seed(state.rng_seed, {stream::kBatch, static_cast<std::uint64_t>(generation), s}),
                          stage.tokens,
                          {}};
        std::vector<LevelAssignment> members;
        members.reserve(pool.size());
        for (const auto& e : pool) {
            if (assignment_size(db, e.assignment) != parent_size) {
                throw std::logic_error("candidate " + e.assignment.to_string() + " changed the total size");
            }
            members.push_back(e.assignment);
        }
        const auto fitness = oracle.evaluate_many(db, members, batch, options.jobs);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            check_fitness(fitness[i]);
            pool[i].fitness = fitness[i];
            if (options.on_evaluation) {
                options.on_evaluation(EvaluationEvent{generation, static_cast<int>(s), &members[i], fitness[i],
                                                      pool[i].offspring_index < 0});
            }
            if (pool[i].offspring_index < 0) {
                parent_fitness = fitness[i];
            }
        }
        tokens_used += stage.tokens * static_cast<std::int64_t>(pool.size());

        // Parent wins ties, then the lower offspring index.
        std::sort(pool.begin(), pool.end(), [](const PoolEntry& a, const PoolEntry& b) {
            if (a.fitness != b.fitness) {
                return a.fitness < b.fitness;
            }
            return a.offspring_index < b.offspring_index;
        });
        pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(stage.survivors)));
    }

    const PoolEntry& winner = pool.front();
    if (winner.fitness > parent_fitness) {
        throw std::logic_error("elitism violated: survivor is worse than the parent");
    }

    SearchState next = state;
    next.generation = generation;
    next.evaluations_used += tokens_used;
    next.best_fitness_history.push_back(winner.fitness);
    const bool kept = winner.assignment == state.parent;
    next.stagnation_counter = kept ? state.stagnation_counter + 1 : 0;
    next.parent = winner.assignment;

    GenerationRecord record;
    record.generation = generation;
    record.survivor_fitness = winner.fitness;
    record.parent_fitness = parent_fitness;
    record.survivor = winner.assignment;
    record.evaluations_used = next.evaluations_used;
    record.offspring_generated = offspring_generated;
    record.parent_kept = kept;
    return {std::move(next), std::move(record)};
}

SearchResult evolve(const LevelDatabase& db, const LevelAssignment& initial, const FitnessOracle& oracle,
                    const SelectionSchedule& schedule, const MutationCountDistribution& dist, int max_generations,
                    int patience, std::uint64_t seed, std::int64_t tokens_already_used, const SearchOptions& options,
                    const std::function<void(const GenerationRecord&)>& on_generation) {
    schedule.validate();
    db.validate(initial);
    const auto start = std::chrono::steady_clock::now();

    SearchState state;
    state.parent = initial;
    state.rng_seed = seed;
    state.evaluations_used = tokens_already_used;

    SearchResult result;
    for (int g = 0; g < max_generations; ++g) {
        auto [next, record] = run_generation(state, db, oracle, schedule, dist, options);
        record.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        spdlog::debug("generation {}: fitness {} (parent {}), stagnation {}", record.generation,
                      record.survivor_fitness, record.parent_fitness, next.stagnation_counter);
        if (on_generation) {
            on_generation(record);
        }
        result.trace.records.push_back(std::move(record));
        state = std::move(next);
        if (patience > 0 && state.stagnation_counter >= patience) {
            result.stopped_early = true;
            spdlog::info("stopping after {} generations without a new survivor", patience);
            break;
        }
    }
    result.assignment = state.parent;
    result.generations = state.generation;
    return result;
}

SearchResult run_search(const LevelDatabase& db, Budget budget, const FitnessOracle& oracle,
                        const SelectionSchedule& schedule, const MutationCountDistribution& dist, int max_generations,
                        int patience, std::uint64_t seed, const SearchOptions& options) {
    schedule.validate();
    Rng init_rng = make_rng(seed, {stream::kInit});
    InitResult init = initialize(db, budget, oracle, schedule, init_rng, options);
    return evolve(db, init.assignment, oracle, schedule, dist, max_generations, patience, seed, init.tokens_used,
                  options);
}

void SearchTrace::write_csv_header(std::ostream& out, bool include_elapsed) {
    out << (include_elapsed ? "generation,survivor_fitness,evaluations_used,elapsed_s,assignment\n"
                            : "generation,survivor_fitness,evaluations_used,assignment\n");
}

void SearchTrace::write_csv_row(std::ostream& out, const GenerationRecord& r, bool include_elapsed) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.survivor_fitness);
    out << r.generation << ',' << buf << ',' << r.evaluations_used << ',';
    if (include_elapsed) {
        std::snprintf(buf, sizeof buf, "%.6f", r.elapsed_s);
        out << buf << ',';
    }
    out << r.survivor.to_string() << '\n';
}

void SearchTrace::write_csv(std::ostream& out, bool include_elapsed) const {
    write_csv_header(out, include_elapsed);
    for (const auto& r : records) {
        write_csv_row(out, r, include_elapsed);
    }
}

std::string SearchTrace::to_csv(bool include_elapsed) const {
    std::ostringstream out;
    write_csv(out, include_elapsed);
    return out.str();
}

SelectionSchedule schedule_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "schedule";
    detail::expect_object(j, what);
    detail::reject_unknown_keys(j, {"offspring", "stages", "initial_candidates", "initial_tokens"}, what);
    SelectionSchedule s;
    s.offspring = detail::require<int>(j, "offspring", what);
    const auto& stages = j.at("stages");
    if (!stages.is_array()) {
        throw ConfigError("schedule: \"stages\" must be an array");
    }
    for (const auto& st : stages) {
        detail::expect_object(st, "stage");
        detail::reject_unknown_keys(st, {"tokens", "survivors"}, "stage");
        s.stages.push_back({detail::require<std::int64_t>(st, "tokens", "stage"),
                            detail::require<int>(st, "survivors", "stage")});
    }
    s.initial_candidates = detail::optional_field<int>(j, "initial_candidates", 0, what);
    s.initial_tokens = detail::optional_field<std::int64_t>(j, "initial_tokens", 1, what);
    s.validate();
    return s;
}

nlohmann::json schedule_to_json(const SelectionSchedule& s) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : s.stages) {
        stages.push_back({{"tokens", st.tokens}, {"survivors", st.survivors}});
    }
    return {{"offspring", s.offspring},
            {"stages", std::move(stages)},
            {"initial_candidates", s.initial_candidates},
            {"initial_tokens", s.initial_tokens}};
}

MutationCountDistribution mutations_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "mutations";
    detail::expect_object(j, what);
    const auto kind = detail::require<std::string>(j, "kind", what);
    if (kind == "MIN_OF_TWO_UNIFORM") {
        detail::reject_unknown_keys(j, {"kind", "lo", "hi"}, what);
        return MutationCountDistribution::min_of_two_uniform(detail::require<int>(j, "lo", what),
                                                             detail::require<int>(j, "hi", what));
    }
    if (kind == "CONSTANT") {
        detail::reject_unknown_keys(j, {"kind", "c"}, what);
        return MutationCountDistribution::constant_count(detail::require<int>(j, "c", what));
    }
    throw ConfigError("mutations: unknown kind \"" + kind + "\"");
}

nlohmann::json mutations_to_json(const MutationCountDistribution& d) {
    if (d.kind == MutationCountDistribution::Kind::Constant) {
        return {{"kind", "CONSTANT"}, {"c", d.constant}};
    }
    return {{"kind", "MIN_OF_TWO_UNIFORM"}, {"lo", d.lo}, {"hi", d.hi}};
}

SearchConfig search_config_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "search config";
    detail::expect_object(j, what);
    detail::reject_unknown_keys(j, {"budget", "schedule", "mutations", "max_generations", "patience", "seed"}, what);
    SearchConfig c;
    if (j.contains("budget")) {
        c.budget = detail::require<std::int64_t>(j, "budget", what);
    }
    c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("mutations")) {
        c.mutations = mutations_from_json(j.at("mutations"));
    }
    c.max_generations = detail::optional_field<int>(j, "max_generations", 0, what);
    c.patience = detail::optional_field<int>(j, "patience", kDefaultPatience, what);
    c.seed = detail::optional_field<std::uint64_t>(j, "seed", 0, what);
    if (c.max_generations < 0 || c.patience < 0) {
        throw ConfigError("search config: max_generations and patience must be non-negative");
    }
    return c;
}

nlohmann::json search_config_to_json(const SearchConfig& c) {
    nlohmann::json j = {{"schedule", schedule_to_json(c.schedule)},
                        {"mutations", mutations_to_json(c.mutations)},
                        {"max_generations", c.max_generations},
                        {"patience", c.patience},
                        {"seed", c.seed}};
    if (c.budget) {
        j["budget"] = *c.budget;
    }
    return j;
}

SearchConfig load_search_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("cannot open " + path.string());
    }
    return search_config_from_json(detail::read_json_file(path));
}

}  // namespace evopress
