#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "evopress/level_space.hpp"
#include "evopress/rng.hpp"

namespace evopress {

/// A constrained bit string. Bit 1 is a retained unit, bit 0 a removed one;
/// with increasing weights the optimum is 0^k 1^(n-k).
class BitString {
public:
    explicit BitString(std::vector<std::uint8_t> bits);
    /// From text such as "1010".
    static BitString parse(std::string_view text);
    /// Level 0 maps to bit 1, any other level to bit 0.
    static BitString from_assignment(const LevelAssignment& a);

    std::size_t size() const { return bits_.size(); }
    int zeros() const { return zeros_; }
    int ones() const { return static_cast<int>(bits_.size()) - zeros_; }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::string to_string() const;

private:
    std::vector<std::uint8_t> bits_;
    int zeros_ = 0;
};

/// Pairs i < j with x_i = 1 and x_j = 0.
std::int64_t count_inversions(const BitString& x);

/// sum_i (1 - x_i) * i - k(k+1)/2 with 1-based positions.
std::int64_t inversion_potential(const BitString& x);

/// Exact non-negative fraction in lowest terms.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Rational&) const = default;
};

/// Mean of j - i over all inversions (i, j). Throws NoInversions.
Rational average_spread(const BitString& x);

/// average_spread(x) >= sqrt(s) / 16, decided in integer arithmetic.
bool meets_spread_bound(const BitString& x);

struct SpreadLemmaCheck {
    int max_n = 0;
    std::int64_t strings_checked = 0;
    std::int64_t violations = 0;
    double min_ratio = 0.0;  // smallest average_spread / (sqrt(s) / 16) seen
};

/// Every bit string of length 1..max_n with at least one inversion.
SpreadLemmaCheck check_spread_lemma(int max_n);

struct StageAdvanceEstimate {
    std::int64_t trials = 0;
    std::int64_t advances = 0;
    double estimate = 0.0;
    double expected = 0.0;  // j^2 / (k (n - k))
    double std_error = 0.0;  // binomial, at the expected value
};

/// Monte-Carlo probability that one level switch from a random stage-j
/// configuration (j ones among the first k positions) leaves stage j.
StageAdvanceEstimate stage_advance_probability(int n, int k, int j, std::int64_t trials, Rng& rng);

/// k(n-k) * sum_{j=1..min(k,n-k)} 1/j^2: expected generations of the
/// single-offspring search from the worst start.
double worst_start_expectation(int n, int k);

struct ConvergenceStats {
    int n = 0;
    int k = 0;
    int lambda = 1;
    int trials = 0;
    double mean_generations = 0.0;
    double std_generations = 0.0;
    double mean_evaluations = 0.0;
    /// Generations in which the inversion count went up; must stay 0.
    std::int64_t potential_increases = 0;
};

/// Runs `trials` elitist (1+lambda) searches with one switch per offspring
/// and exact fitness on random increasing-weight linear functions from
/// random feasible starts; counts generations until no inversion is left.
ConvergenceStats measure_convergence(int n, int k, int lambda, int trials, std::uint64_t seed);

/// CSV header `n,k,lambda,trials,mean_generations,std_generations,mean_evaluations`.
void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceStats>& rows);

/// Binary database of n units with sizes [1, 0].
LevelDatabase binary_database(int n);

}  // namespace evopress
