#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evopress/baselines.hpp"
#include "evopress/errors.hpp"
#include "evopress/fitness.hpp"
#include "evopress/mutation_search.hpp"
#include "test_support.hpp"

namespace evopress {
namespace {

using testing::uniform_database;

// Exact pmf of min(U, V) for U, V iid uniform on {lo..hi}, by enumerating
// the joint grid.
std::map<int, double> min_of_two_pmf(int lo, int hi) {
    std::map<int, double> pmf;
    const double cells = static_cast<double>(hi - lo + 1) * (hi - lo + 1);
    for (int a = lo; a <= hi; ++a) {
        for (int b = lo; b <= hi; ++b) {
            pmf[std::min(a, b)] += 1.0 / cells;
        }
    }
    return pmf;
}

TEST(MutationCount, GridEnumerationOracle) {
    EXPECT_NEAR(min_of_two_pmf(1, 3)[1], 5.0 / 9.0, 1e-15);
    EXPECT_NEAR(min_of_two_pmf(1, 3)[2], 3.0 / 9.0, 1e-15);
    EXPECT_NEAR(min_of_two_pmf(1, 3)[3], 1.0 / 9.0, 1e-15);
    EXPECT_NEAR(min_of_two_pmf(1, 7)[1], 13.0 / 49.0, 1e-15);
}

TEST(MutationCount, ConstantIsConstant) {
    Rng rng(1);
    const auto d = MutationCountDistribution::constant_count(1);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(sample_num_mutations(d, rng), 1);
    }
}

TEST(MutationCount, EmpiricalFrequenciesMatchPmf) {
    for (auto [lo, hi] : {std::pair{1, 3}, std::pair{1, 7}, std::pair{2, 5}}) {
        const auto pmf = min_of_two_pmf(lo, hi);
        const auto d = MutationCountDistribution::min_of_two_uniform(lo, hi);
        Rng rng(static_cast<std::uint64_t>(lo * 100 + hi));
        std::map<int, int> counts;
        const int draws = 90'000;
        for (int i = 0; i < draws; ++i) {
            const int x = sample_num_mutations(d, rng);
            ASSERT_GE(x, lo);
            ASSERT_LE(x, hi);
            ++counts[x];
        }
        for (const auto& [value, p] : pmf) {
            const double sigma = std::sqrt(p * (1 - p) / draws);
            EXPECT_NEAR(static_cast<double>(counts[value]) / draws, p, 4 * sigma) << lo << ".." << hi << " @" << value;
        }
    }
}

TEST(MutationCount, RejectsBadParameters) {
    EXPECT_THROW(MutationCountDistribution::min_of_two_uniform(0, 3), ConfigError);
    EXPECT_THROW(MutationCountDistribution::min_of_two_uniform(3, 2), ConfigError);
    EXPECT_THROW(MutationCountDistribution::constant_count(0), ConfigError);
}

TEST(LevelSwitch, FourOutcomesEquallyLikely) {
    const auto db = uniform_database(4, {1, 0});
    const LevelAssignment parent{{1, 1, 0, 0}};
    std::map<std::string, int> counts;
    Rng rng(2);
    const int trials = 40'000;
    for (int t = 0; t < trials; ++t) {
        ++counts[level_switch_mutation(db, parent, rng, 1).to_string()];
    }
    ASSERT_EQ(counts.size(), 4u);
    for (const char* key : {"0-1-1-0", "0-1-0-1", "1-0-1-0", "1-0-0-1"}) {
        EXPECT_NEAR(static_cast<double>(counts[key]) / trials, 0.25, 0.02) << key;
    }
}

TEST(LevelSwitch, AllMaxCompressionHasNoSwitch) {
    const auto db = uniform_database(4, {2, 1, 0});
    Rng rng(3);
    EXPECT_THROW(level_switch_mutation(db, LevelAssignment{{2, 2, 2, 2}}, rng, 1), NoFeasibleSwitch);
}

TEST(LevelSwitch, NoMatchingPartnerTerminates) {
    // Steps 2 and 1 never match.
    const LevelDatabase db({{"a", "k", {2, 0}}, {"b", "k", {1, 0}}}, ExchangePolicy::Any);
    Rng rng(4);
    EXPECT_THROW(level_switch_mutation(db, LevelAssignment{{0, 1}}, rng, 1), NoFeasibleSwitch);
}

TEST(LevelSwitch, UniformMillionWeightStepsPreserveTotal) {
    std::vector<std::int64_t> sizes;
    for (int l = 0; l <= 10; ++l) {
        sizes.push_back(10'000'000 - 1'000'000LL * l);
    }
    const auto db = uniform_database(28, sizes);
    Rng rng(5);
    LevelAssignment a{std::vector<int>(28, 7)};
    const std::int64_t total = assignment_size(db, a);
    for (int t = 0; t < 5000; ++t) {
        a = level_switch_mutation(db, a, rng, 1 + t % 3);
        ASSERT_EQ(assignment_size(db, a), total);
    }
}

TEST(LevelSwitchProperty, LocalityAndSizeOnRandomDatabases) {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = std::uniform_int_distribution<int>(2, 10)(rng);
        const int levels = std::uniform_int_distribution<int>(2, 6)(rng);
        std::vector<std::int64_t> sizes;
        for (int l = 0; l < levels; ++l) {
            sizes.push_back(3 * (levels - l));
        }
        const auto policy = trial % 2 ? ExchangePolicy::Any : ExchangePolicy::SameKind;
        std::vector<UnitSpec> units;
        for (int i = 0; i < n; ++i) {
            units.push_back({"u" + std::to_string(i), i % 2 ? "a" : "b", sizes});
        }
        const LevelDatabase db(std::move(units), policy);
        LevelAssignment parent;
        for (int i = 0; i < n; ++i) {
            parent.levels.push_back(std::uniform_int_distribution<int>(0, levels - 1)(rng));
        }
        const int s = std::uniform_int_distribution<int>(1, 3)(rng);
        LevelAssignment child;
        try {
            child = level_switch_mutation(db, parent, rng, s);
        } catch (const NoFeasibleSwitch&) {
            continue;
        }
        EXPECT_EQ(assignment_size(db, child), assignment_size(db, parent));
        int differing = 0;
        std::map<std::string, int> kind_delta;
        for (int i = 0; i < n; ++i) {
            differing += child.levels[static_cast<std::size_t>(i)] != parent.levels[static_cast<std::size_t>(i)];
            kind_delta[db.unit(static_cast<std::size_t>(i)).kind] +=
                child.levels[static_cast<std::size_t>(i)] - parent.levels[static_cast<std::size_t>(i)];
        }
        EXPECT_LE(differing, 2 * s);
        if (policy == ExchangePolicy::SameKind) {
            for (const auto& [kind, delta] : kind_delta) {
                EXPECT_EQ(delta, 0) << kind;
            }
        }
    }
}

// Oracle that must never be called.
class ForbiddenOracle final : public FitnessOracle {
public:
    OracleKind kind() const override { return OracleKind::Linear; }
    double evaluate(const LevelDatabase&, const LevelAssignment&, const Batch&) const override {
        ADD_FAILURE() << "unexpected evaluation";
        return 0.0;
    }
};

class CountingOracle final : public FitnessOracle {
public:
    explicit CountingOracle(const FitnessOracle& inner) : inner_(inner) {}
    OracleKind kind() const override { return inner_.kind(); }
    double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& b) const override {
        ++calls;
        tokens.push_back(b.token_count);
        return inner_.evaluate(db, a, b);
    }
    mutable int calls = 0;
    mutable std::vector<std::int64_t> tokens;

private:
    const FitnessOracle& inner_;
};

SelectionSchedule simple_schedule(int offspring, int candidates = 8) {
    return SelectionSchedule{offspring, {{64, 1}}, candidates, 32};
}

TEST(Initialize, UniformLevelMeetingBudgetNeedsNoEvaluation) {
    // 10 layers, levels 0..10 with uniform steps; 70% sparsity is level 7.
    std::vector<std::int64_t> sizes;
    for (int l = 0; l <= 10; ++l) {
        sizes.push_back(100 - 10 * l);
    }
    const auto db = uniform_database(10, sizes);
    Rng rng(7);
    const auto init = initialize(db, Budget{300}, ForbiddenOracle{}, simple_schedule(4, 0), rng);
    EXPECT_EQ(init.assignment, LevelAssignment{std::vector<int>(10, 7)});
    EXPECT_EQ(init.candidates_evaluated, 0);
    EXPECT_EQ(init.tokens_used, 0);
}

TEST(Initialize, GenerousBudgetKeepsEverythingUncompressed) {
    const auto db = uniform_database(5, {3, 1});
    Rng rng(8);
    EXPECT_EQ(initialize(db, Budget{1000}, ForbiddenOracle{}, simple_schedule(2), rng).assignment,
              db.uncompressed());
}

TEST(Initialize, DepthPruningBalancesKinds) {
    std::vector<UnitSpec> units;
    for (int b = 0; b < 16; ++b) {
        units.push_back({"attn" + std::to_string(b), "attn", {1, 0}});
        units.push_back({"mlp" + std::to_string(b), "mlp", {1, 0}});
    }
    const LevelDatabase db(std::move(units), ExchangePolicy::SameKind);
    std::vector<std::vector<double>> w;
    for (int i = 0; i < 32; ++i) {
        w.push_back({0.0, 0.01 * i});
    }
    const LinearOracle lin(w);
    const CountingOracle oracle(lin);
    Rng rng(9);
    SelectionSchedule schedule{32, {{2048, 2}, {32768, 1}}, 32, 2048};
    const auto init = initialize(db, Budget{20}, oracle, schedule, rng);
    EXPECT_EQ(oracle.calls, 32);
    EXPECT_EQ(init.candidates_evaluated, 32);
    EXPECT_EQ(init.tokens_used, 32 * 2048);
    for (auto t : oracle.tokens) {
        EXPECT_EQ(t, 2048);
    }
    int attn = 0;
    int mlp = 0;
    for (std::size_t i = 0; i < 32; ++i) {
        (db.unit(i).kind == "attn" ? attn : mlp) += init.assignment.levels[i];
    }
    EXPECT_EQ(attn, 6);
    EXPECT_EQ(mlp, 6);
}

TEST(Initialize, OddTargetUnderKindBalanceIsInfeasible) {
    std::vector<UnitSpec> units;
    for (int b = 0; b < 2; ++b) {
        units.push_back({"attn" + std::to_string(b), "attn", {1, 0}});
        units.push_back({"mlp" + std::to_string(b), "mlp", {1, 0}});
    }
    const LevelDatabase db(std::move(units), ExchangePolicy::SameKind);
    const LinearOracle oracle(std::vector<std::vector<double>>(4, {0.0, 1.0}));
    Rng rng(10);
    // Budget 3 asks for one removal; balance rounds up to two, which still
    // satisfies the budget.
    const auto init = initialize(db, Budget{3}, oracle, simple_schedule(2), rng);
    EXPECT_EQ(assignment_size(db, init.assignment), 2);
}

TEST(Initialize, BudgetBelowMinimumIsInfeasible) {
    const auto db = uniform_database(4, {3, 1});
    Rng rng(11);
    EXPECT_THROW(initialize(db, Budget{3}, ForbiddenOracle{}, simple_schedule(2), rng), InfeasibleBudget);
}

TEST(Initialize, MixedCandidatesRespectBudgetAndPickFittest) {
    const auto db = uniform_database(12, {4, 3, 2, 1});
    std::vector<std::vector<double>> w;
    for (int i = 0; i < 12; ++i) {
        w.push_back({0.0, 1.0 * i, 2.0 * i, 3.0 * i});
    }
    const LinearOracle oracle(w);
    std::vector<double> seen;
    SearchOptions options;
    options.on_evaluation = [&](const EvaluationEvent& e) {
        EXPECT_EQ(e.stage, -1);
        EXPECT_EQ(e.generation, 0);
        seen.push_back(e.fitness);
    };
    Rng rng(12);
    const auto init = initialize(db, Budget{29}, oracle, simple_schedule(4, 16), rng, options);
    ASSERT_EQ(seen.size(), 16u);
    EXPECT_EQ(oracle.exact(init.assignment), *std::min_element(seen.begin(), seen.end()));
    EXPECT_EQ(assignment_size(db, init.assignment), 29);
    for (int l : init.assignment.levels) {
        EXPECT_TRUE(l == 1 || l == 2);
    }
}

TEST(RunGeneration, FitterOffspringReplacesParent) {
    const auto db = uniform_database(2, {1, 0});
    const LinearOracle oracle({{0.0, 1.0}, {0.0, 2.0}});
    SearchState state;
    state.parent = LevelAssignment{{0, 1}};
    state.rng_seed = 13;
    auto [next, record] =
        run_generation(state, db, oracle, simple_schedule(1), MutationCountDistribution::constant_count(1));
    EXPECT_EQ(next.parent, (LevelAssignment{{1, 0}}));
    EXPECT_EQ(next.stagnation_counter, 0);
    EXPECT_EQ(next.generation, 1);
    EXPECT_DOUBLE_EQ(record.survivor_fitness, 1.0);
    EXPECT_DOUBLE_EQ(record.parent_fitness, 2.0);
    EXPECT_FALSE(record.parent_kept);
    // The input state is untouched.
    EXPECT_EQ(state.parent, (LevelAssignment{{0, 1}}));
}

TEST(RunGeneration, WorseOffspringKeepParent) {
    const auto db = uniform_database(4, {1, 0});
    const LinearOracle oracle({{0.0, 1.0}, {0.0, 2.0}, {0.0, 3.0}, {0.0, 4.0}});
    SearchState state;
    state.parent = LevelAssignment{{1, 1, 0, 0}};
    state.stagnation_counter = 3;
    state.rng_seed = 14;
    auto [next, record] =
        run_generation(state, db, oracle, simple_schedule(8), MutationCountDistribution::constant_count(1));
    EXPECT_EQ(next.parent, state.parent);
    EXPECT_EQ(next.stagnation_counter, 4);
    EXPECT_TRUE(record.parent_kept);
}

TEST(RunGeneration, TiesGoToTheParent) {
    const auto db = uniform_database(4, {1, 0});
    const LinearOracle oracle(std::vector<std::vector<double>>(4, {0.0, 0.0}));
    SearchState state;
    state.parent = LevelAssignment{{1, 1, 0, 0}};
    state.rng_seed = 15;
    for (int g = 0; g < 20; ++g) {
        auto [next, record] =
            run_generation(state, db, oracle, simple_schedule(8), MutationCountDistribution::constant_count(1));
        EXPECT_EQ(next.parent, state.parent);
        state = next;
    }
    EXPECT_EQ(state.stagnation_counter, 20);
}

// Records every evaluation with its stage.
struct EvaluationLog {
    std::vector<EvaluationEvent> events;
    std::vector<LevelAssignment> candidates;

    SearchOptions options() {
        SearchOptions o;
        o.on_evaluation = [this](const EvaluationEvent& e) {
            events.push_back(e);
            candidates.push_back(*e.candidate);
        };
        return o;
    }
};

TEST(RunGeneration, SparsityScheduleStageSizes) {
    std::vector<std::int64_t> sizes;
    for (int l = 0; l <= 10; ++l) {
        sizes.push_back(10 - l);
    }
    const auto db = uniform_database(28, sizes);
    std::vector<std::vector<double>> w(28);
    for (std::size_t i = 0; i < 28; ++i) {
        for (int l = 0; l <= 10; ++l) {
            w[i].push_back(0.1 * static_cast<double>(i) * l * l);
        }
    }
    const LinearOracle lin(w, 0.5);
    const CountingOracle oracle(lin);
    const SelectionSchedule schedule{64, {{2048, 8}, {16384, 2}, {65536, 1}}, 0, 1};
    SearchState state;
    state.parent = LevelAssignment{std::vector<int>(28, 5)};
    state.rng_seed = 16;
    EvaluationLog log;
    auto [next, record] =
        run_generation(state, db, oracle, schedule, MutationCountDistribution::min_of_two_uniform(1, 3),
                       log.options());
    std::map<int, int> per_stage;
    std::map<int, int> parents_per_stage;
    for (const auto& e : log.events) {
        ++per_stage[e.stage];
        parents_per_stage[e.stage] += e.is_parent;
    }
    EXPECT_EQ(per_stage[0], 64);
    EXPECT_EQ(per_stage[1], 8);
    EXPECT_EQ(per_stage[2], 3);
    EXPECT_EQ(parents_per_stage[0], 0);
    EXPECT_EQ(parents_per_stage[1], 0);
    EXPECT_EQ(parents_per_stage[2], 1);
    EXPECT_EQ(oracle.calls, 75);
    EXPECT_EQ(record.evaluations_used, 64 * 2048 + 8 * 16384 + 3 * 65536);
    EXPECT_EQ(record.offspring_generated, 64);
}

TEST(RunGeneration, StageBatchIsSharedByThePool) {
    // With noise keyed on (batch seed, assignment) equal assignments get
    // equal fitness within a stage only if the batch is shared.
    const auto db = uniform_database(3, {1, 0});
    const LinearOracle oracle({{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}, 10.0);
    SearchState state;
    state.parent = LevelAssignment{{1, 0, 0}};
    state.rng_seed = 17;
    EvaluationLog log;
    run_generation(state, db, oracle, SelectionSchedule{30, {{8, 30}, {16, 1}}, 0, 1},
                   MutationCountDistribution::constant_count(1), log.options());
    std::map<std::pair<int, std::string>, double> fitness_of;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto key = std::pair{log.events[i].stage, log.candidates[i].to_string()};
        if (fitness_of.contains(key)) {
            EXPECT_EQ(fitness_of[key], log.events[i].fitness);
        }
        fitness_of[key] = log.events[i].fitness;
    }
}

TEST(RunGeneration, UnmutableParentSurvivesAlone) {
    const auto db = uniform_database(3, {1, 0});
    const LinearOracle oracle({{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
    SearchState state;
    state.parent = LevelAssignment{{1, 1, 1}};
    state.rng_seed = 18;
    auto [next, record] =
        run_generation(state, db, oracle, simple_schedule(4), MutationCountDistribution::constant_count(1));
    EXPECT_EQ(record.offspring_generated, 0);
    EXPECT_EQ(next.parent, state.parent);
    EXPECT_EQ(next.stagnation_counter, 1);
}

class ThrowingOracle final : public FitnessOracle {
public:
    OracleKind kind() const override { return OracleKind::External; }
    double evaluate(const LevelDatabase&, const LevelAssignment&, const Batch&) const override {
        throw OracleCrashed("gone");
    }
};

TEST(RunGeneration, OracleFailurePropagatesWithStateUnchanged) {
    const auto db = uniform_database(4, {1, 0});
    SearchState state;
    state.parent = LevelAssignment{{1, 1, 0, 0}};
    state.rng_seed = 19;
    const SearchState before = state;
    EXPECT_THROW(run_generation(state, db, ThrowingOracle{}, simple_schedule(4),
                                MutationCountDistribution::constant_count(1)),
                 OracleCrashed);
    EXPECT_EQ(state.parent, before.parent);
    EXPECT_EQ(state.generation, before.generation);
}

LinearOracle random_linear(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> w;
    for (int i = 0; i < n; ++i) {
        w.push_back({0.0, u(rng)});
    }
    return LinearOracle(w);
}

TEST(RunSearch, MaxGenerationsZeroReturnsInitialization) {
    const auto db = uniform_database(8, {1, 0});
    const auto oracle = random_linear(8, 1);
    const auto schedule = simple_schedule(4);
    Rng rng = make_rng(20, {stream::kInit});
    const auto init = initialize(db, Budget{5}, oracle, schedule, rng);
    const auto result =
        run_search(db, Budget{5}, oracle, schedule, MutationCountDistribution::constant_count(1), 0, 20, 20);
    EXPECT_EQ(result.assignment, init.assignment);
    EXPECT_TRUE(result.trace.records.empty());
    EXPECT_EQ(result.generations, 0);
}

TEST(RunSearch, LinearSixteenChooseFourFindsOptimum) {
    const int n = 16;
    const auto db = uniform_database(n, {1, 0});
    const auto rule = choose_exactly(db, 4);
    ASSERT_EQ(enumerate_feasible(db, rule).size(), 1820u);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto oracle = random_linear(n, 1000 + seed);
        const auto best = exhaustive_search(db, rule, oracle, Batch{0, 1, {}});
        const auto result = run_search(db, Budget{n - 4}, oracle, SelectionSchedule{8, {{1, 1}}, 8, 1},
                                       MutationCountDistribution::min_of_two_uniform(1, 3), 60, 0, seed);
        hits += oracle.exact(result.assignment) == best.fitness;
    }
    EXPECT_GE(hits, 95);
}

TEST(RunSearch, BruteForceEquivalenceOnSmallSpaces) {
    // Multi-level space: 6 units with 4 uniform-step levels, budget 9 of 18.
    const auto db = uniform_database(6, {3, 2, 1, 0});
    const auto rule = FeasibilityRule{Budget{9}, 9, {}, {}};
    ASSERT_LE(enumerate_feasible(db, rule).size(), 2000u);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        // Per-level error increments grow with depth. Random non-convex
        // increments plant traps that no three-switch move escapes.
        std::vector<std::vector<double>> w(6);
        for (auto& row : w) {
            std::vector<double> steps{u(rng), u(rng), u(rng)};
            std::sort(steps.begin(), steps.end());
            row.push_back(0.0);
            for (double d : steps) {
                row.push_back(row.back() + d);
            }
        }
        // Non-additive on top: a planted pair interaction.
        const PlantedNonmonotoneOracle oracle(w, {{1, 4, -1.5}});
        const auto best = exhaustive_search(db, rule, oracle, Batch{0, 1, {}});
        const auto result = run_search(db, Budget{9}, oracle, SelectionSchedule{16, {{1, 1}}, 8, 1},
                                       MutationCountDistribution::min_of_two_uniform(1, 3), 100, 0, seed);
        hits += oracle.exact(db, result.assignment) == best.fitness;
    }
    EXPECT_GE(hits, 95);
}

TEST(RunSearch, TraceIsMonotoneAndDeterministic) {
    const auto db = uniform_database(10, {2, 1, 0});
    std::vector<std::vector<double>> w;
    for (int i = 0; i < 10; ++i) {
        w.push_back({0.0, 0.1 * i, 0.3 * i});
    }
    const LinearOracle oracle(w, 0.4);
    const SelectionSchedule schedule{8, {{16, 2}, {128, 1}}, 4, 8};
    SearchOptions serial;
    SearchOptions parallel;
    parallel.jobs = 4;
    const auto a = run_search(db, Budget{10}, oracle, schedule, MutationCountDistribution::min_of_two_uniform(1, 3),
                              40, 0, 77, serial);
    const auto b = run_search(db, Budget{10}, oracle, schedule, MutationCountDistribution::min_of_two_uniform(1, 3),
                              40, 0, 77, parallel);
    EXPECT_EQ(a.trace.to_csv(false), b.trace.to_csv(false));
    ASSERT_EQ(a.trace.records.size(), 40u);
    for (std::size_t i = 1; i < a.trace.records.size(); ++i) {
        EXPECT_EQ(a.trace.records[i].generation, a.trace.records[i - 1].generation + 1);
        EXPECT_GT(a.trace.records[i].evaluations_used, a.trace.records[i - 1].evaluations_used);
    }
    const auto c = run_search(db, Budget{10}, oracle, schedule, MutationCountDistribution::min_of_two_uniform(1, 3),
                              40, 0, 78, serial);
    EXPECT_NE(a.trace.to_csv(false), c.trace.to_csv(false));
}

TEST(RunSearch, PatienceStopsEarly) {
    const auto db = uniform_database(4, {1, 0});
    const LinearOracle oracle(std::vector<std::vector<double>>(4, {0.0, 1.0}));
    const auto result = run_search(db, Budget{2}, oracle, simple_schedule(4, 0),
                                   MutationCountDistribution::constant_count(1), 1000, 20, 21);
    EXPECT_TRUE(result.stopped_early);
    EXPECT_EQ(result.generations, 20);
    EXPECT_EQ(result.trace.records.size(), 20u);
}

TEST(SearchTrace, CsvFormat) {
    SearchTrace trace;
    GenerationRecord r;
    r.generation = 1;
    r.survivor_fitness = 0.1;
    r.evaluations_used = 4096;
    r.elapsed_s = 1.5;
    r.survivor = LevelAssignment{{0, 2, 1}};
    trace.records.push_back(r);
    EXPECT_EQ(trace.to_csv(), "generation,survivor_fitness,evaluations_used,elapsed_s,assignment\n"
                              "1,0.10000000000000001,4096,1.500000,0-2-1\n");
    EXPECT_EQ(trace.to_csv(false), "generation,survivor_fitness,evaluations_used,assignment\n"
                                   "1,0.10000000000000001,4096,0-2-1\n");
}

TEST(Schedule, ValidationRules) {
    EXPECT_NO_THROW((SelectionSchedule{64, {{2048, 8}, {16384, 2}, {65536, 1}}, 0, 1}.validate()));
    EXPECT_THROW((SelectionSchedule{4, {{2048, 2}, {1024, 1}}, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((SelectionSchedule{4, {{2048, 1}, {4096, 2}}, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((SelectionSchedule{4, {{2048, 2}}, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((SelectionSchedule{0, {{2048, 1}}, 0, 1}.validate()), ConfigError);
    EXPECT_THROW((SelectionSchedule{4, {}, 0, 1}.validate()), ConfigError);
}

TEST(SearchConfigJson, RoundTripAndStrictness) {
    const auto j = nlohmann::json::parse(R"({
        "budget": 20,
        "schedule": {"offspring": 16, "stages": [{"tokens": 512, "survivors": 1}, {"tokens": 8192, "survivors": 1}],
                     "initial_candidates": 32, "initial_tokens": 2048},
        "mutations": {"kind": "MIN_OF_TWO_UNIFORM", "lo": 1, "hi": 3},
        "max_generations": 400, "patience": 0, "seed": 7})");
    const SearchConfig c = search_config_from_json(j);
    EXPECT_EQ(c.budget, 20);
    EXPECT_EQ(c.schedule.offspring, 16);
    EXPECT_EQ(c.schedule.stages[1].tokens, 8192);
    EXPECT_EQ(c.mutations, MutationCountDistribution::min_of_two_uniform(1, 3));
    EXPECT_EQ(c.max_generations, 400);
    EXPECT_EQ(c.patience, 0);
    EXPECT_EQ(c.seed, 7u);
    const SearchConfig back = search_config_from_json(search_config_to_json(c));
    EXPECT_EQ(back.schedule, c.schedule);
    EXPECT_EQ(back.mutations, c.mutations);

    auto constant = j;
    constant["mutations"] = {{"kind", "CONSTANT"}, {"c", 2}};
    EXPECT_EQ(search_config_from_json(constant).mutations, MutationCountDistribution::constant_count(2));

    auto extra = j;
    extra["population"] = 3;
    EXPECT_THROW(search_config_from_json(extra), ConfigError);
    auto bad_stage = j;
    bad_stage["schedule"]["stages"][1]["survivors"] = 2;
    EXPECT_THROW(search_config_from_json(bad_stage), ConfigError);
}

}  // namespace
}  // namespace evopress
