#include "evopress/theory_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "evopress/errors.hpp"
#include "evopress/fitness.hpp"
#include "evopress/mutation_search.hpp"

namespace evopress {

BitString::BitString(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
        if (b > 1) {
            throw ConfigError("bit string entries must be 0 or 1");
        }
        zeros_ += b == 0 ? 1 : 0;
    }
}

BitString BitString::parse(std::string_view text) {
    std::vector<std::uint8_t> bits;
    for (char c : text) {
        if (c != '0' && c != '1') {
            throw ConfigError("bit string may only contain 0 and 1");
        }
        bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return BitString(std::move(bits));
}

BitString BitString::from_assignment(const LevelAssignment& a) {
    std::vector<std::uint8_t> bits;
    bits.reserve(a.levels.size());
    for (int l : a.levels) {
        bits.push_back(l == 0 ? 1 : 0);
    }
    return BitString(std::move(bits));
}

std::string BitString::to_string() const {
    std::string s;
    for (auto b : bits_) {
        s += static_cast<char>('0' + b);
    }
    return s;
}

std::int64_t count_inversions(const BitString& x) {
    std::int64_t ones_seen = 0;
    std::int64_t inversions = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 1) {
            ++ones_seen;
        } else {
            inversions += ones_seen;
        }
    }
    return inversions;
}

std::int64_t inversion_potential(const BitString& x) {
    const std::int64_t k = x.zeros();
    std::int64_t weighted = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        weighted += (1 - x[i]) * static_cast<std::int64_t>(i + 1);
    }
    return weighted - k * (k + 1) / 2;
}

namespace {

// Sum of spreads over all inversions, and their count.
std::pair<std::int64_t, std::int64_t> spread_totals(const BitString& x) {
    std::int64_t ones_seen = 0;
    std::int64_t position_sum = 0;
    std::int64_t total = 0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto pos = static_cast<std::int64_t>(i);
        if (x[i] == 1) {
            ++ones_seen;
            position_sum += pos;
        } else {
            total += ones_seen * pos - position_sum;
            count += ones_seen;
        }
    }
    return {total, count};
}

}  // namespace

Rational average_spread(const BitString& x) {
    const auto [total, count] = spread_totals(x);
    if (count == 0) {
        throw NoInversions("bit string " + x.to_string() + " has no inversions");
    }
    const std::int64_t g = std::gcd(total, count);
    return Rational{total / g, count / g};
}

bool meets_spread_bound(const BitString& x) {
    const auto [total, count] = spread_totals(x);
    if (count == 0) {
        throw NoInversions("bit string " + x.to_string() + " has no inversions");
    }
    // total / s >= sqrt(s) / 16  <=>  (16 total)^2 >= s^3
    const auto lhs = static_cast<__int128>(16 * total) * (16 * total);
    const auto rhs = static_cast<__int128>(count) * count * count;
    return lhs >= rhs;
}

SpreadLemmaCheck check_spread_lemma(int max_n) {
    if (max_n < 1 || max_n > 30) {
        throw ConfigError("spread lemma check supports 1 <= n <= 30");
    }
    SpreadLemmaCheck check;
    check.max_n = max_n;
    check.min_ratio = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= max_n; ++n) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
        for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
            for (int i = 0; i < n; ++i) {
                bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((mask >> i) & 1U);
            }
            const BitString x(bits);
            const auto [total, count] = spread_totals(x);
            if (count == 0) {
                continue;
            }
            ++check.strings_checked;
            if (!meets_spread_bound(x)) {
                ++check.violations;
            }
            const double ratio = (static_cast<double>(total) / count) / (std::sqrt(static_cast<double>(count)) / 16.0);
            check.min_ratio = std::min(check.min_ratio, ratio);
        }
    }
    return check;
}

LevelDatabase binary_database(int n) {
    std::vector<UnitSpec> units;
    for (int i = 0; i < n; ++i) {
        units.push_back({"u" + std::to_string(i), "unit", {1, 0}});
    }
    return LevelDatabase(std::move(units), ExchangePolicy::Any);
}

namespace {

void check_nk(int n, int k) {
    if (n < 1 || k < 0 || k > n) {
        throw ConfigError("need n >= 1 and 0 <= k <= n");
    }
}

int ones_in_prefix(const LevelAssignment& a, int k) {
    int ones = 0;
    for (int i = 0; i < k; ++i) {
        ones += a.levels[static_cast<std::size_t>(i)] == 0 ? 1 : 0;
    }
    return ones;
}

}  // namespace

StageAdvanceEstimate stage_advance_probability(int n, int k, int j, std::int64_t trials, Rng& rng) {
    check_nk(n, k);
    if (j < 0 || j > std::min(k, n - k)) {
        throw ConfigError("stage j must lie in [0, min(k, n-k)]");
    }
    if (trials < 1) {
        throw ConfigError("need at least one trial");
    }
    StageAdvanceEstimate est;
    est.trials = trials;
    if (k == 0 || k == n) {
        return est;
    }
    const double pairs = static_cast<double>(k) * (n - k);
    est.expected = static_cast<double>(j) * j / pairs;
    est.std_error = std::sqrt(est.expected * (1.0 - est.expected) / static_cast<double>(trials));
    if (j == 0) {
        return est;
    }

    const LevelDatabase db = binary_database(n);
    std::vector<int> head(static_cast<std::size_t>(k));
    std::vector<int> tail(static_cast<std::size_t>(n - k));
    for (std::int64_t t = 0; t < trials; ++t) {
        // Stage j: j retained units among the first k, j removed among the rest.
        std::fill(head.begin(), head.end(), 1);
        std::fill(head.begin(), head.begin() + j, 0);
        std::fill(tail.begin(), tail.end(), 0);
        std::fill(tail.begin(), tail.begin() + j, 1);
        std::shuffle(head.begin(), head.end(), rng);
        std::shuffle(tail.begin(), tail.end(), rng);
        LevelAssignment a;
        a.levels.insert(a.levels.end(), head.begin(), head.end());
        a.levels.insert(a.levels.end(), tail.begin(), tail.end());

        const LevelAssignment child = level_switch_mutation(db, a, rng, 1);
        if (ones_in_prefix(child, k) < j) {
            ++est.advances;
        }
    }
    est.estimate = static_cast<double>(est.advances) / static_cast<double>(trials);
    return est;
}

double worst_start_expectation(int n, int k) {
    check_nk(n, k);
    double sum = 0.0;
    for (int j = 1; j <= std::min(k, n - k); ++j) {
        sum += 1.0 / (static_cast<double>(j) * j);
    }
    return static_cast<double>(k) * (n - k) * sum;
}

ConvergenceStats measure_convergence(int n, int k, int lambda, int trials, std::uint64_t seed) {
    check_nk(n, k);
    if (lambda < 1 || trials < 1) {
        throw ConfigError("need lambda >= 1 and trials >= 1");
    }
    const LevelDatabase db = binary_database(n);
    SelectionSchedule schedule;
    schedule.offspring = lambda;
    schedule.stages = {{1, 1}};
    const auto one_switch = MutationCountDistribution::constant_count(1);
    const std::int64_t generation_cap = 1000 * (static_cast<std::int64_t>(k) * (n - k) + n) + 1000;

    ConvergenceStats stats;
    stats.n = n;
    stats.k = k;
    stats.lambda = lambda;
    stats.trials = trials;
    std::vector<double> generations;
    generations.reserve(static_cast<std::size_t>(trials));

    for (int t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(seed, {stream::kTrial, static_cast<std::uint64_t>(t)});
        Rng rng(trial_seed);

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<double> w(static_cast<std::size_t>(n));
        for (auto& x : w) {
            x = unit(rng);
        }
        std::sort(w.begin(), w.end());
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i] <= w[i - 1]) {
                w[i] = std::nextafter(w[i - 1], 2.0);
            }
        }
        std::vector<std::vector<double>> table;
        for (double x : w) {
            table.push_back({0.0, x});
        }
        const LinearOracle oracle(std::move(table));

        SearchState state;
        state.parent.levels.assign(static_cast<std::size_t>(n), 0);
        std::fill(state.parent.levels.begin(), state.parent.levels.begin() + k, 1);
        std::shuffle(state.parent.levels.begin(), state.parent.levels.end(), rng);
        state.rng_seed = trial_seed;

        std::int64_t inversions = count_inversions(BitString::from_assignment(state.parent));
        while (inversions > 0) {
            if (state.generation >= generation_cap) {
                throw std::logic_error("convergence trial exceeded the generation cap");
            }
            auto [next, record] = run_generation(state, db, oracle, schedule, one_switch);
            const std::int64_t after = count_inversions(BitString::from_assignment(next.parent));
            if (after > inversions) {
                ++stats.potential_increases;
            }
            inversions = after;
            state = std::move(next);
        }
        generations.push_back(state.generation);
    }

    const double mean = std::accumulate(generations.begin(), generations.end(), 0.0) / trials;
    double var = 0.0;
    for (double g : generations) {
        var += (g - mean) * (g - mean);
    }
    stats.mean_generations = mean;
    stats.std_generations = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    stats.mean_evaluations = mean * lambda;
    return stats;
}

void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceStats>& rows) {
    out << "n,k,lambda,trials,mean_generations,std_generations,mean_evaluations\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.6f,%.6f,%.6f\n", r.n, r.k, r.lambda, r.trials,
                      r.mean_generations, r.std_generations, r.mean_evaluations);
        out << buf;
    }
}

}  // namespace evopress
