#include "evopress/level_space.hpp"

#include <unordered_set>

#include <nlohmann/json.hpp>

#include "evopress/errors.hpp"
#include "evopress/rng.hpp"
#include "json_util.hpp"

namespace evopress {

std::string_view to_string(ExchangePolicy policy) {
    switch (policy) {
    case ExchangePolicy::Any:
        return "ANY";
    case ExchangePolicy::SameKind:
        return "SAME_KIND";
    case ExchangePolicy::SameStep:
        return "SAME_STEP";
    case ExchangePolicy::SameKindAndStep:
        return "SAME_KIND_AND_STEP";
    }
    return "ANY";
}

ExchangePolicy parse_exchange_policy(std::string_view text) {
    for (auto p : {ExchangePolicy::Any, ExchangePolicy::SameKind, ExchangePolicy::SameStep,
                   ExchangePolicy::SameKindAndStep}) {
        if (text == to_string(p)) {
            return p;
        }
    }
    throw ConfigError("unknown exchange_policy \"" + std::string(text) + "\"");
}

std::string LevelAssignment::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (i > 0) {
            out += '-';
        }
        out += std::to_string(levels[i]);
    }
    return out;
}

std::uint64_t LevelAssignment::hash() const {
    std::uint64_t h = mix64(levels.size());
    for (int l : levels) {
        h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)));
    }
    return h;
}

LevelDatabase::LevelDatabase(std::vector<UnitSpec> units, ExchangePolicy policy)
    : units_(std::move(units)), policy_(policy) {
    if (units_.empty()) {
        throw EmptyLevels("database has no units");
    }
    std::unordered_set<std::string> seen;
    std::int64_t common_step = -1;
    steps_.reserve(units_.size());
    for (const auto& u : units_) {
        if (!seen.insert(u.id).second) {
            throw DuplicateId("duplicate unit id \"" + u.id + "\"");
        }
        if (u.level_sizes.empty()) {
            throw EmptyLevels("unit \"" + u.id + "\" has no levels");
        }
        std::vector<std::int64_t> steps;
        for (std::size_t l = 0; l < u.level_sizes.size(); ++l) {
            if (u.level_sizes[l] < 0) {
                throw ConfigError("unit \"" + u.id + "\" has a negative level size");
            }
            if (l == 0) {
                continue;
            }
            std::int64_t delta = u.level_sizes[l - 1] - u.level_sizes[l];
            if (delta < 0) {
                throw IncreasingSizes("unit \"" + u.id + "\": level " + std::to_string(l) +
                                      " is larger than level " + std::to_string(l - 1));
            }
            if (common_step < 0) {
                common_step = delta;
            } else if (delta != common_step) {
                uniform_step_ = false;
            }
            steps.push_back(delta);
        }
        steps_.push_back(std::move(steps));
        max_total_ += u.level_sizes.front();
        min_total_ += u.level_sizes.back();
    }
}

std::int64_t LevelDatabase::level_size(std::size_t i, int level) const {
    if (i >= units_.size() || level < 0 || level >= num_levels(i)) {
        throw LevelOutOfRange("level " + std::to_string(level) + " out of range for unit " + std::to_string(i));
    }
    return units_[i].level_sizes[static_cast<std::size_t>(level)];
}

void LevelDatabase::validate(const LevelAssignment& a) const {
    if (a.levels.size() != units_.size()) {
        throw LevelOutOfRange("assignment has " + std::to_string(a.levels.size()) + " levels, database has " +
                              std::to_string(units_.size()) + " units");
    }
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (a.levels[i] < 0 || a.levels[i] >= num_levels(i)) {
            throw LevelOutOfRange("level " + std::to_string(a.levels[i]) + " out of range for unit \"" +
                                  units_[i].id + "\"");
        }
    }
}

LevelAssignment LevelDatabase::uncompressed() const {
    return LevelAssignment{std::vector<int>(units_.size(), 0)};
}

LevelDatabase build_database(std::vector<UnitSpec> unit_specs, ExchangePolicy policy) {
    return LevelDatabase(std::move(unit_specs), policy);
}

std::int64_t assignment_size(const LevelDatabase& db, const LevelAssignment& a) {
    db.validate(a);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < db.size(); ++i) {
        total += db.unit(i).level_sizes[static_cast<std::size_t>(a.levels[i])];
    }
    return total;
}

bool exchangeable(const LevelDatabase& db, const LevelAssignment& a, std::size_t u, std::size_t v) {
    if (u == v || u >= db.size() || v >= db.size() || a.levels.size() != db.size()) {
        return false;
    }
    const int lu = a.levels[u];
    const int lv = a.levels[v];
    if (lu < 0 || lu >= db.max_level(u) || lv <= 0 || lv > db.max_level(v)) {
        return false;
    }
    if (db.kind_restricted() && db.unit(u).kind != db.unit(v).kind) {
        return false;
    }
    return db.step(u, lu) == db.step(v, lv - 1);
}

LevelDatabase database_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "database";
    detail::expect_object(j, what);
    detail::reject_unknown_keys(j, {"exchange_policy", "units"}, what);
    auto policy = parse_exchange_policy(detail::require<std::string>(j, "exchange_policy", what));
    const auto& units = j.at("units");
    if (!units.is_array()) {
        throw ConfigError("database: \"units\" must be an array");
    }
    std::vector<UnitSpec> specs;
    for (const auto& u : units) {
        detail::expect_object(u, "database unit");
        detail::reject_unknown_keys(u, {"id", "kind", "level_sizes"}, "database unit");
        specs.push_back(UnitSpec{detail::require<std::string>(u, "id", "database unit"),
                                 detail::require<std::string>(u, "kind", "database unit"),
                                 detail::require<std::vector<std::int64_t>>(u, "level_sizes", "database unit")});
    }
    return LevelDatabase(std::move(specs), policy);
}

nlohmann::json database_to_json(const LevelDatabase& db) {
    nlohmann::json units = nlohmann::json::array();
    for (const auto& u : db.units()) {
        units.push_back({{"id", u.id}, {"kind", u.kind}, {"level_sizes", u.level_sizes}});
    }
    return {{"exchange_policy", std::string(to_string(db.policy()))}, {"units", std::move(units)}};
}

LevelDatabase load_database(const std::filesystem::path& path) {
    return database_from_json(detail::read_json_file(path));
}

nlohmann::json assignment_to_json(const LevelAssignment& a) {
    return nlohmann::json(a.levels);
}

}  // namespace evopress
