#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace evopress {

/// Which unit pairs may trade levels under mutation. Total size is always
/// preserved exactly; the kind policies additionally confine swaps to units
/// sharing the same `kind` tag.
enum class ExchangePolicy { Any, SameKind, SameStep, SameKindAndStep };

std::string_view to_string(ExchangePolicy policy);
ExchangePolicy parse_exchange_policy(std::string_view text);

/// One compressible unit. `level_sizes[0]` is the uncompressed size; higher
/// indices are progressively more compressed and never larger.
struct UnitSpec {
    std::string id;
    std::string kind;
    std::vector<std::int64_t> level_sizes;
};

/// A search point: one level index per unit, aligned with the database.
struct LevelAssignment {
    std::vector<int> levels;

    bool operator==(const LevelAssignment&) const = default;

    std::size_t size() const { return levels.size(); }

    /// Hyphen-joined level list, e.g. "0-1-1-0".
    std::string to_string() const;
    std::uint64_t hash() const;
};

struct Budget {
    std::int64_t max_size = 0;
};

class LevelDatabase {
public:
    /// Validates the units; throws DuplicateId, EmptyLevels or IncreasingSizes.
    LevelDatabase(std::vector<UnitSpec> units, ExchangePolicy policy);

    std::size_t size() const { return units_.size(); }
    std::span<const UnitSpec> units() const { return units_; }
    const UnitSpec& unit(std::size_t i) const { return units_.at(i); }
    ExchangePolicy policy() const { return policy_; }

    int num_levels(std::size_t i) const { return static_cast<int>(units_.at(i).level_sizes.size()); }
    int max_level(std::size_t i) const { return num_levels(i) - 1; }

    /// Size of unit `i` at `level`; throws LevelOutOfRange.
    std::int64_t level_size(std::size_t i, int level) const;

    /// Size released by compressing unit `i` from `level` to `level + 1`.
    /// Requires `level < max_level(i)`.
    std::int64_t step(std::size_t i, int level) const { return steps_[i][static_cast<std::size_t>(level)]; }

    /// Same step between every pair of consecutive levels of every unit.
    bool uniform_step() const { return uniform_step_; }

    bool kind_restricted() const {
        return policy_ == ExchangePolicy::SameKind || policy_ == ExchangePolicy::SameKindAndStep;
    }

    std::int64_t min_total_size() const { return min_total_; }
    std::int64_t max_total_size() const { return max_total_; }

    /// Throws LevelOutOfRange unless `a` has one in-range level per unit.
    void validate(const LevelAssignment& a) const;

    LevelAssignment uncompressed() const;

private:
    std::vector<UnitSpec> units_;
    ExchangePolicy policy_;
    std::vector<std::vector<std::int64_t>> steps_;
    bool uniform_step_ = true;
    std::int64_t min_total_ = 0;
    std::int64_t max_total_ = 0;
};

LevelDatabase build_database(std::vector<UnitSpec> unit_specs, ExchangePolicy policy);

/// Total size of an assignment; throws LevelOutOfRange.
std::int64_t assignment_size(const LevelDatabase& db, const LevelAssignment& a);

/// True iff compressing `u` by one level and decompressing `v` by one level
/// is admitted by the policy and keeps the total size unchanged. Returns
/// false (never throws) when either unit lacks headroom or indices are bad.
bool exchangeable(const LevelDatabase& db, const LevelAssignment& a, std::size_t u, std::size_t v);

// JSON: {"exchange_policy": "...", "units": [{"id", "kind", "level_sizes"}]}.
// Unknown fields are rejected with ConfigError.
LevelDatabase database_from_json(const nlohmann::json& j);
nlohmann::json database_to_json(const LevelDatabase& db);
LevelDatabase load_database(const std::filesystem::path& path);

nlohmann::json assignment_to_json(const LevelAssignment& a);

}  // namespace evopress
