#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evopress/fitness.hpp"
#include "evopress/level_space.hpp"
#include "evopress/rng.hpp"

namespace evopress {

/// One selection round: every pool member is scored on a single shared
/// batch of `tokens` tokens and the best `survivors` advance.
struct SelectionStage {
    std::int64_t tokens = 0;
    int survivors = 0;

    bool operator==(const SelectionStage&) const = default;
};

struct SelectionSchedule {
    int offspring = 1;
    std::vector<SelectionStage> stages;
    int initial_candidates = 0;
    std::int64_t initial_tokens = 1;

    bool operator==(const SelectionSchedule&) const = default;

    /// Throws ConfigError: survivors must be non-increasing and end at 1,
    /// tokens strictly increasing, offspring >= final survivors.
    void validate() const;
};

/// Number of level switches applied per offspring.
struct MutationCountDistribution {
    enum class Kind { MinOfTwoUniform, Constant };

    Kind kind = Kind::Constant;
    int lo = 1;
    int hi = 1;
    int constant = 1;

    static MutationCountDistribution min_of_two_uniform(int lo, int hi);
    static MutationCountDistribution constant_count(int c);

    bool operator==(const MutationCountDistribution&) const = default;
};

int sample_num_mutations(const MutationCountDistribution& dist, Rng& rng);

/// Bound on the rejection loop for the decompressed unit, per unit in the db.
inline constexpr int kSwitchAttemptsPerUnit = 16;
/// Bound on offspring regeneration attempts, per requested offspring.
inline constexpr int kOffspringAttemptsPerChild = 16;

/// Applies `num_switches` size-preserving switches: a uniformly chosen unit
/// with compression headroom moves one level up, then a partner is
/// rejection-sampled among all units until one can move one level down
/// with an exactly matching size delta. Throws NoFeasibleSwitch when no
/// unit can be compressed or no partner turns up within
/// kSwitchAttemptsPerUnit * n draws.
LevelAssignment level_switch_mutation(const LevelDatabase& db, const LevelAssignment& parent, Rng& rng,
                                      int num_switches);

/// Emitted for every fitness evaluation the engine performs.
struct EvaluationEvent {
    int generation = 0;  // 0 during initialization
    int stage = 0;       // -1 during initialization
    const LevelAssignment* candidate = nullptr;
    double fitness = 0.0;
    bool is_parent = false;
};

struct SearchOptions {
    int jobs = 1;
    std::function<void(const EvaluationEvent&)> on_evaluation;
};

struct InitResult {
    LevelAssignment assignment;
    std::int64_t tokens_used = 0;
    int candidates_evaluated = 0;
};

/// Starting point of the search. A uniform-level assignment that hits the
/// budget exactly is returned as is. Otherwise candidates mixing the two
/// levels that bracket the budget are sampled and the fittest on one
/// shared batch of `initial_tokens` wins. Under kind-restricted policies
/// every kind gets the same number of compressed units. Throws
/// InfeasibleBudget.
InitResult initialize(const LevelDatabase& db, Budget budget, const FitnessOracle& oracle,
                      const SelectionSchedule& schedule, Rng& rng, const SearchOptions& options = {});

struct SearchState {
    LevelAssignment parent;
    int generation = 0;
    std::vector<double> best_fitness_history;
    std::uint64_t rng_seed = 0;
    int stagnation_counter = 0;
    std::int64_t evaluations_used = 0;  // cumulative tokens
};

struct GenerationRecord {
    int generation = 0;
    double survivor_fitness = 0.0;
    double parent_fitness = 0.0;  // parent's score on the same final batch
    LevelAssignment survivor;
    std::int64_t evaluations_used = 0;
    double elapsed_s = 0.0;
    int offspring_generated = 0;
    bool parent_kept = false;
};

struct SearchTrace {
    std::vector<GenerationRecord> records;

    /// CSV with header `generation,survivor_fitness,evaluations_used,elapsed_s,assignment`.
    /// Without `include_elapsed` the elapsed column is dropped, which makes
    /// the output a pure function of the seed.
    void write_csv(std::ostream& out, bool include_elapsed = true) const;
    std::string to_csv(bool include_elapsed = true) const;

    static void write_csv_header(std::ostream& out, bool include_elapsed = true);
    static void write_csv_row(std::ostream& out, const GenerationRecord& record, bool include_elapsed = true);
};

/// One generation: mutation, staged selection on fresh shared batches, the
/// parent joining the final stage. Batches derive from
/// (seed, generation, stage) and mutations from (seed, generation).
/// The input state is never modified; oracle failures propagate.
std::pair<SearchState, GenerationRecord> run_generation(const SearchState& state, const LevelDatabase& db,
                                                        const FitnessOracle& oracle,
                                                        const SelectionSchedule& schedule,
                                                        const MutationCountDistribution& dist,
                                                        const SearchOptions& options = {});

inline constexpr int kDefaultPatience = 20;

struct SearchResult {
    LevelAssignment assignment;
    SearchTrace trace;
    int generations = 0;
    bool stopped_early = false;
};

/// Generations from a given parent until `max_generations` or until the
/// parent has survived `patience` consecutive generations (0 disables).
/// `on_generation` sees each record as soon as it exists.
SearchResult evolve(const LevelDatabase& db, const LevelAssignment& initial, const FitnessOracle& oracle,
                    const SelectionSchedule& schedule, const MutationCountDistribution& dist, int max_generations,
                    int patience, std::uint64_t seed, std::int64_t tokens_already_used = 0,
                    const SearchOptions& options = {},
                    const std::function<void(const GenerationRecord&)>& on_generation = {});

/// initialize followed by evolve.
SearchResult run_search(const LevelDatabase& db, Budget budget, const FitnessOracle& oracle,
                        const SelectionSchedule& schedule, const MutationCountDistribution& dist, int max_generations,
                        int patience, std::uint64_t seed, const SearchOptions& options = {});

/// On-disk search configuration.
struct SearchConfig {
    std::optional<std::int64_t> budget;
    SelectionSchedule schedule;
    MutationCountDistribution mutations = MutationCountDistribution::min_of_two_uniform(1, 3);
    int max_generations = 0;
    int patience = kDefaultPatience;
    std::uint64_t seed = 0;
};

SelectionSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json schedule_to_json(const SelectionSchedule& s);
MutationCountDistribution mutations_from_json(const nlohmann::json& j);
nlohmann::json mutations_to_json(const MutationCountDistribution& d);
SearchConfig search_config_from_json(const nlohmann::json& j);
nlohmann::json search_config_to_json(const SearchConfig& c);
SearchConfig load_search_config(const std::filesystem::path& path);

}  // namespace evopress
