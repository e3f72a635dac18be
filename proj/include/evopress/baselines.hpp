#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evopress/fitness.hpp"
#include "evopress/level_space.hpp"

namespace evopress {

/// Precomputed per-(unit, level) errors, e.g. layer-wise NMSE, with the
/// matching integral sizes.
struct ErrorTable {
    std::vector<std::vector<double>> errors;
    std::vector<std::vector<std::int64_t>> sizes;

    /// Throws ShapeMismatch or ConfigError.
    void validate() const;

    double total_error(const LevelAssignment& a) const;
    std::int64_t total_size(const LevelAssignment& a) const;
};

ErrorTable error_table_from_json(const nlohmann::json& j);
ErrorTable load_error_table(const std::filesystem::path& path);

/// Which assignments an exhaustive scan considers.
struct FeasibilityRule {
    Budget budget;
    std::optional<std::int64_t> exact_size;
    /// Number of units away from level 0.
    std::optional<int> compressed_units;
    /// Extra structural filter checked on complete assignments.
    std::function<bool(const LevelAssignment&)> structural;

    static FeasibilityRule within(Budget budget) { return FeasibilityRule{budget, {}, {}, {}}; }
};

/// Exactly `k` units compressed, at any size.
FeasibilityRule choose_exactly(const LevelDatabase& db, int k);

/// Structural filter: every kind has the same number of compressed units.
std::function<bool(const LevelAssignment&)> balanced_kinds(const LevelDatabase& db);

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/// All feasible assignments in lexicographic order (unit 0 varies slowest).
/// Throws SearchSpaceTooLarge as soon as more than `cap` are found.
std::vector<LevelAssignment> enumerate_feasible(const LevelDatabase& db, const FeasibilityRule& rule,
                                                std::size_t cap = kDefaultEnumerationCap);

struct ExhaustiveResult {
    LevelAssignment best;
    double fitness = 0.0;
    std::size_t enumerated = 0;
    /// Filled when requested, in enumeration order.
    std::vector<LevelAssignment> assignments;
    std::vector<double> fitness_values;
};

/// Scores every feasible assignment on the same batch and returns the
/// argmin; ties go to the earliest in enumeration order.
ExhaustiveResult exhaustive_search(const LevelDatabase& db, const FeasibilityRule& rule, const FitnessOracle& oracle,
                                   const Batch& batch, std::size_t cap = kDefaultEnumerationCap, int jobs = 1,
                                   bool keep_all = false);

/// Multiple-choice knapsack over (unit, used size): minimizes the summed
/// error subject to total size <= budget. Throws InfeasibleBudget.
LevelAssignment dp_allocate(const ErrorTable& table, Budget budget);

/// Fully compresses the `k` lowest-scoring units (lower index first on
/// ties). Throws KTooLarge.
LevelAssignment greedy_score_drop(const LevelDatabase& db, std::span<const double> scores, int k);

/// Fitness change from fully compressing each unit on its own.
std::vector<double> marginal_scores(const LevelDatabase& db, const FitnessOracle& oracle, const Batch& batch);

}  // namespace evopress
