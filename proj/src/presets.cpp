#include "evopress/presets.hpp"

#include <array>

#include "evopress/errors.hpp"

namespace evopress {

namespace {

// Every preset samples 32 starting candidates on 2048 tokens when no
// uniform level meets the budget.
constexpr int kInitialCandidates = 32;
constexpr std::int64_t kInitialTokens = 2048;

SelectionSchedule make_schedule(int offspring, std::vector<SelectionStage> stages) {
    return SelectionSchedule{offspring, std::move(stages), kInitialCandidates, kInitialTokens};
}

const std::array<Preset, 4>& table() {
    static const std::array<Preset, 4> presets{{
        {"depth", make_schedule(32, {{2048, 2}, {32768, 1}}), GenerationRule::DepthFormula, 0},
        {"sparsity", make_schedule(64, {{2048, 8}, {16384, 2}, {65536, 1}}), GenerationRule::Fixed, 400},
        {"quantization", make_schedule(128, {{2048, 16}, {16384, 4}, {131072, 1}}), GenerationRule::Fixed, 150},
        {"superfast", make_schedule(16, {{512, 1}, {8192, 1}}), GenerationRule::Fixed, 400},
    }};
    return presets;
}

}  // namespace

std::span<const Preset> presets() {
    return table();
}

const Preset& find_preset(std::string_view name) {
    for (const auto& p : table()) {
        if (p.name == name) {
            return p;
        }
    }
    throw ConfigError("unknown preset \"" + std::string(name) + "\"");
}

int resolve_generations(const Preset& preset, std::size_t n_units, std::size_t compressed_units) {
    if (preset.rule == GenerationRule::Fixed) {
        return preset.generations;
    }
    if (compressed_units > n_units) {
        throw ConfigError("more compressed units than units");
    }
    const auto k = static_cast<std::int64_t>(compressed_units);
    const auto n = static_cast<std::int64_t>(n_units);
    // ceil(k (n - k) / 1.5) == ceil(2 k (n - k) / 3)
    return static_cast<int>((2 * k * (n - k) + 2) / 3);
}

}  // namespace evopress
