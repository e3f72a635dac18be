#include "evopress/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "evopress/errors.hpp"
#include "json_util.hpp"

namespace evopress {

void ErrorTable::validate() const {
    if (errors.size() != sizes.size() || errors.empty()) {
        throw ShapeMismatch("error table: errors and sizes need the same non-zero number of rows");
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors[i].size() != sizes[i].size() || errors[i].empty()) {
            throw ShapeMismatch("error table: row " + std::to_string(i) + " has mismatched lengths");
        }
        for (std::size_t l = 0; l < errors[i].size(); ++l) {
            if (!std::isfinite(errors[i][l])) {
                throw ConfigError("error table: non-finite error in row " + std::to_string(i));
            }
            if (sizes[i][l] < 0) {
                throw ConfigError("error table: negative size in row " + std::to_string(i));
            }
        }
    }
}

double ErrorTable::total_error(const LevelAssignment& a) const {
    if (a.levels.size() != errors.size()) {
        throw LevelOutOfRange("error table: assignment length mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        total += errors[i].at(static_cast<std::size_t>(a.levels[i]));
    }
    return total;
}

std::int64_t ErrorTable::total_size(const LevelAssignment& a) const {
    if (a.levels.size() != sizes.size()) {
        throw LevelOutOfRange("error table: assignment length mismatch");
    }
    std::int64_t total = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        total += sizes[i].at(static_cast<std::size_t>(a.levels[i]));
    }
    return total;
}

ErrorTable error_table_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "error table";
    detail::expect_object(j, what);
    detail::reject_unknown_keys(j, {"errors", "sizes"}, what);
    ErrorTable t{detail::require<std::vector<std::vector<double>>>(j, "errors", what),
                 detail::require<std::vector<std::vector<std::int64_t>>>(j, "sizes", what)};
    t.validate();
    return t;
}

ErrorTable load_error_table(const std::filesystem::path& path) {
    return error_table_from_json(detail::read_json_file(path));
}

FeasibilityRule choose_exactly(const LevelDatabase& db, int k) {
    if (k < 0 || static_cast<std::size_t>(k) > db.size()) {
        throw KTooLarge("cannot compress " + std::to_string(k) + " of " + std::to_string(db.size()) + " units");
    }
    FeasibilityRule rule;
    rule.budget = Budget{db.max_total_size()};
    rule.compressed_units = k;
    return rule;
}

std::function<bool(const LevelAssignment&)> balanced_kinds(const LevelDatabase& db) {
    std::vector<std::string> kinds;
    for (const auto& u : db.units()) {
        kinds.push_back(u.kind);
    }
    return [kinds](const LevelAssignment& a) {
        std::map<std::string, int> counts;
        for (const auto& k : kinds) {
            counts[k];
        }
        for (std::size_t i = 0; i < a.levels.size(); ++i) {
            counts[kinds[i]] += a.levels[i] > 0 ? 1 : 0;
        }
        return std::adjacent_find(counts.begin(), counts.end(), [](const auto& x, const auto& y) {
                   return x.second != y.second;
               }) == counts.end();
    };
}

std::vector<LevelAssignment> enumerate_feasible(const LevelDatabase& db, const FeasibilityRule& rule,
                                                std::size_t cap) {
    const std::size_t n = db.size();
    // Suffix bounds for pruning partial assignments.
    std::vector<std::int64_t> min_rest(n + 1, 0);
    std::vector<std::int64_t> max_rest(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) {
        min_rest[i] = min_rest[i + 1] + db.unit(i).level_sizes.back();
        max_rest[i] = max_rest[i + 1] + db.unit(i).level_sizes.front();
    }
    // Units that can still be compressed from position i on.
    std::vector<int> compressible_rest(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) {
        compressible_rest[i] = compressible_rest[i + 1] + (db.max_level(i) > 0 ? 1 : 0);
    }

    std::vector<LevelAssignment> out;
    LevelAssignment current{std::vector<int>(n, 0)};

    auto recurse = [&](auto& self, std::size_t i, std::int64_t size, int compressed) -> void {
        if (size + min_rest[i] > rule.budget.max_size) {
            return;
        }
        if (rule.exact_size && (size + min_rest[i] > *rule.exact_size || size + max_rest[i] < *rule.exact_size)) {
            return;
        }
        if (rule.compressed_units &&
            (compressed > *rule.compressed_units || compressed + compressible_rest[i] < *rule.compressed_units)) {
            return;
        }
        if (i == n) {
            if (rule.structural && !rule.structural(current)) {
                return;
            }
            if (out.size() >= cap) {
                throw SearchSpaceTooLarge("more than " + std::to_string(cap) + " feasible assignments");
            }
            out.push_back(current);
            return;
        }
        for (int l = 0; l < db.num_levels(i); ++l) {
            current.levels[i] = l;
            self(self, i + 1, size + db.level_size(i, l), compressed + (l > 0 ? 1 : 0));
        }
        current.levels[i] = 0;
    };
    recurse(recurse, 0, 0, 0);
    return out;
}

ExhaustiveResult exhaustive_search(const LevelDatabase& db, const FeasibilityRule& rule, const FitnessOracle& oracle,
                                   const Batch& batch, std::size_t cap, int jobs, bool keep_all) {
    auto candidates = enumerate_feasible(db, rule, cap);
    if (candidates.empty()) {
        throw InfeasibleBudget("no assignment satisfies the feasibility rule");
    }
    auto fitness = oracle.evaluate_many(db, candidates, batch, jobs);
    std::size_t best = 0;
    for (std::size_t i = 1; i < fitness.size(); ++i) {
        if (fitness[i] < fitness[best]) {
            best = i;
        }
    }
    ExhaustiveResult result;
    result.best = candidates[best];
    result.fitness = fitness[best];
    result.enumerated = candidates.size();
    if (keep_all) {
        result.assignments = std::move(candidates);
        result.fitness_values = std::move(fitness);
    }
    return result;
}

LevelAssignment dp_allocate(const ErrorTable& table, Budget budget) {
    table.validate();
    struct State {
        std::int64_t size;
        double error;
        std::size_t prev;
        int level;
    };
    const std::size_t n = table.errors.size();
    // frontiers[i] holds the Pareto-optimal (size, error) states after units
    // 0..i-1: sizes ascending, errors strictly descending.
    std::vector<std::vector<State>> frontiers(n + 1);
    frontiers[0].push_back({0, 0.0, 0, -1});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<State> next;
        const auto& prev = frontiers[i];
        for (std::size_t p = 0; p < prev.size(); ++p) {
            for (std::size_t l = 0; l < table.errors[i].size(); ++l) {
                const std::int64_t size = prev[p].size + table.sizes[i][l];
                if (size > budget.max_size) {
                    continue;
                }
                next.push_back({size, prev[p].error + table.errors[i][l], p, static_cast<int>(l)});
            }
        }
        std::stable_sort(next.begin(), next.end(), [](const State& a, const State& b) {
            return a.size != b.size ? a.size < b.size : a.error < b.error;
        });
        std::vector<State> pareto;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : next) {
            if (s.error < best) {
                pareto.push_back(s);
                best = s.error;
            }
        }
        if (pareto.empty()) {
            throw InfeasibleBudget("budget " + std::to_string(budget.max_size) +
                                   " is below the smallest achievable total size");
        }
        frontiers[i + 1] = std::move(pareto);
    }
    // Errors strictly decrease along the frontier, so the last state is optimal.
    LevelAssignment a{std::vector<int>(n, 0)};
    std::size_t idx = frontiers[n].size() - 1;
    for (std::size_t i = n; i-- > 0;) {
        const State& s = frontiers[i + 1][idx];
        a.levels[i] = s.level;
        idx = s.prev;
    }
    return a;
}

LevelAssignment greedy_score_drop(const LevelDatabase& db, std::span<const double> scores, int k) {
    if (scores.size() != db.size()) {
        throw ShapeMismatch("greedy_score_drop: one score per unit required");
    }
    if (k < 0 || static_cast<std::size_t>(k) > db.size()) {
        throw KTooLarge("cannot drop " + std::to_string(k) + " of " + std::to_string(db.size()) + " units");
    }
    std::vector<std::size_t> order(db.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    LevelAssignment a = db.uncompressed();
    for (int i = 0; i < k; ++i) {
        a.levels[order[static_cast<std::size_t>(i)]] = db.max_level(order[static_cast<std::size_t>(i)]);
    }
    return a;
}

std::vector<double> marginal_scores(const LevelDatabase& db, const FitnessOracle& oracle, const Batch& batch) {
    std::vector<LevelAssignment> probes;
    probes.push_back(db.uncompressed());
    for (std::size_t i = 0; i < db.size(); ++i) {
        LevelAssignment a = db.uncompressed();
        a.levels[i] = db.max_level(i);
        probes.push_back(std::move(a));
    }
    const auto fitness = oracle.evaluate_many(db, probes, batch);
    std::vector<double> scores;
    scores.reserve(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        scores.push_back(fitness[i + 1] - fitness[0]);
    }
    return scores;
}

}  // namespace evopress
