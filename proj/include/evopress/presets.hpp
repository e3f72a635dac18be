#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "evopress/mutation_search.hpp"

namespace evopress {

enum class GenerationRule {
    Fixed,
    /// ceil(k (n - k) / 1.5) for n units of which k end up compressed.
    DepthFormula,
};

/// Hyperparameter sets for the standard applications.
struct Preset {
    std::string name;
    SelectionSchedule schedule;
    GenerationRule rule = GenerationRule::Fixed;
    int generations = 0;  // for GenerationRule::Fixed
};

/// depth, sparsity, quantization, superfast.
std::span<const Preset> presets();

/// Throws ConfigError for unknown names.
const Preset& find_preset(std::string_view name);

int resolve_generations(const Preset& preset, std::size_t n_units, std::size_t compressed_units);

}  // namespace evopress
