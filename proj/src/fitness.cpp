#include "evopress/fitness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "evopress/errors.hpp"
#include "json_util.hpp"

namespace evopress {

namespace {

double log_sum_exp(std::span<const double> row) {
    double peak = *std::max_element(row.begin(), row.end());
    double acc = 0.0;
    for (double x : row) {
        acc += std::exp(x - peak);
    }
    return peak + std::log(acc);
}

double gaussian_noise(double sigma, const LevelAssignment& a, const Batch& batch) {
    if (sigma <= 0.0) {
        return 0.0;
    }
    if (batch.token_count <= 0) {
        throw ConfigError("noisy oracle needs a positive batch token count");
    }
    Rng rng = make_rng(batch.seed, {stream::kNoise, a.hash()});
    std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(batch.token_count)));
    return normal(rng);
}

}  // namespace

std::int64_t CorpusMeta::total_tokens() const {
    return std::accumulate(sample_tokens.begin(), sample_tokens.end(), std::int64_t{0});
}

Batch sample_batch(const CorpusMeta& corpus, std::int64_t tokens, Rng& rng) {
    if (tokens <= 0) {
        throw CorpusTooSmall("batch must request at least one token");
    }
    if (corpus.total_tokens() < tokens) {
        throw CorpusTooSmall("corpus holds " + std::to_string(corpus.total_tokens()) + " tokens, " +
                             std::to_string(tokens) + " requested");
    }
    std::vector<std::size_t> pool(corpus.sample_tokens.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});

    Batch batch;
    batch.token_count = tokens;
    std::int64_t remaining = tokens;
    std::size_t drawn = 0;
    while (remaining > 0) {
        // Incremental Fisher-Yates: swap a uniform pick into position `drawn`.
        std::uniform_int_distribution<std::size_t> pick(drawn, pool.size() - 1);
        std::swap(pool[drawn], pool[pick(rng)]);
        std::size_t id = pool[drawn++];
        std::int64_t take = std::min(remaining, corpus.sample_tokens[id]);
        if (take == 0) {
            continue;
        }
        batch.samples.push_back({id, take});
        remaining -= take;
    }
    return batch;
}

LogitMatrix::LogitMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeMismatch("logit buffer has " + std::to_string(data_.size()) + " entries, expected " +
                            std::to_string(rows_ * cols_));
    }
}

double kl_divergence(const LogitMatrix& ref, const LogitMatrix& cand) {
    if (ref.rows() != cand.rows() || ref.cols() != cand.cols()) {
        throw ShapeMismatch("kl_divergence: logit shapes differ");
    }
    if (ref.rows() == 0 || ref.cols() == 0) {
        throw ShapeMismatch("kl_divergence: empty logits");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < ref.rows(); ++r) {
        auto p = ref.row(r);
        auto q = cand.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) {
            if (!std::isfinite(p[c]) || !std::isfinite(q[c])) {
                throw NonFiniteInput("kl_divergence: non-finite logit at row " + std::to_string(r));
            }
        }
        const double lse_p = log_sum_exp(p);
        const double lse_q = log_sum_exp(q);
        double row_kl = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            const double log_p = p[c] - lse_p;
            const double log_q = q[c] - lse_q;
            row_kl += std::exp(log_p) * (log_p - log_q);
        }
        total += row_kl;
    }
    return std::max(0.0, total / static_cast<double>(ref.rows()));
}

std::vector<double> FitnessOracle::evaluate_many(const LevelDatabase& db, std::span<const LevelAssignment> candidates,
                                                 const Batch& batch, int jobs) const {
    std::vector<double> out(candidates.size());
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), candidates.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            out[i] = evaluate(db, candidates[i], batch);
        }
        return out;
    }
    std::vector<std::exception_ptr> errors(candidates.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < candidates.size(); i += workers) {
                    try {
                        out[i] = evaluate(db, candidates[i], batch);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

void check_table_shape(const LevelDatabase& db, const std::vector<std::vector<double>>& table, std::string_view what) {
    if (table.size() != db.size()) {
        throw ShapeMismatch(std::string(what) + ": " + std::to_string(table.size()) + " rows for " +
                            std::to_string(db.size()) + " units");
    }
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (table[i].size() != static_cast<std::size_t>(db.num_levels(i))) {
            throw ShapeMismatch(std::string(what) + ": row " + std::to_string(i) + " has " +
                                std::to_string(table[i].size()) + " entries for " +
                                std::to_string(db.num_levels(i)) + " levels");
        }
    }
}

LinearOracle::LinearOracle(std::vector<std::vector<double>> weights, double sigma)
    : weights_(std::move(weights)), sigma_(sigma) {
    if (sigma_ < 0.0 || !std::isfinite(sigma_)) {
        throw ConfigError("linear oracle: sigma must be finite and non-negative");
    }
}

double LinearOracle::exact(const LevelAssignment& a) const {
    if (a.levels.size() != weights_.size()) {
        throw LevelOutOfRange("linear oracle: assignment length does not match weight table");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const int l = a.levels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= weights_[i].size()) {
            throw LevelOutOfRange("linear oracle: level " + std::to_string(l) + " out of range for unit " +
                                  std::to_string(i));
        }
        total += weights_[i][static_cast<std::size_t>(l)];
    }
    return total;
}

double LinearOracle::evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const {
    db.validate(a);
    return exact(a) + gaussian_noise(sigma_, a, batch);
}

PlantedNonmonotoneOracle::PlantedNonmonotoneOracle(std::vector<std::vector<double>> base,
                                                   std::vector<Interaction> interactions, double sigma)
    : base_(std::move(base)), interactions_(std::move(interactions)), sigma_(sigma) {
    if (sigma_ < 0.0 || !std::isfinite(sigma_)) {
        throw ConfigError("planted oracle: sigma must be finite and non-negative");
    }
    for (const auto& t : interactions_) {
        if (t.u >= base_.size() || t.v >= base_.size() || t.u == t.v) {
            throw ConfigError("planted oracle: interaction refers to an invalid unit pair");
        }
    }
}

double PlantedNonmonotoneOracle::exact(const LevelDatabase& db, const LevelAssignment& a) const {
    db.validate(a);
    if (base_.size() != db.size()) {
        throw LevelOutOfRange("planted oracle: base table does not match database");
    }
    auto compressed_fraction = [&](std::size_t i) {
        const int top = db.max_level(i);
        return top == 0 ? 0.0 : static_cast<double>(a.levels[i]) / top;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < base_.size(); ++i) {
        total += base_[i].at(static_cast<std::size_t>(a.levels[i]));
    }
    for (const auto& t : interactions_) {
        total += t.value * compressed_fraction(t.u) * compressed_fraction(t.v);
    }
    return total;
}

double PlantedNonmonotoneOracle::evaluate(const LevelDatabase& db, const LevelAssignment& a,
                                          const Batch& batch) const {
    return exact(db, a) + gaussian_noise(sigma_, a, batch);
}

LogitKlOracle::LogitKlOracle(std::shared_ptr<const LogitModel> model, CorpusMeta corpus)
    : model_(std::move(model)), corpus_(std::move(corpus)) {
    if (!model_) {
        throw ConfigError("logit oracle needs a model");
    }
}

Batch LogitKlOracle::resolve(const Batch& batch) const {
    if (!batch.samples.empty() || corpus_.sample_tokens.empty()) {
        return batch;
    }
    Rng rng = make_rng(batch.seed, {stream::kBatch});
    Batch resolved = sample_batch(corpus_, batch.token_count, rng);
    resolved.seed = batch.seed;
    return resolved;
}

double LogitKlOracle::evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const {
    db.validate(a);
    const Batch resolved = resolve(batch);
    return kl_divergence(model_->reference_logits(resolved), model_->candidate_logits(a, resolved));
}

std::unique_ptr<FitnessOracle> oracle_from_json(const nlohmann::json& j) {
    constexpr std::string_view what = "oracle";
    detail::expect_object(j, what);
    const auto kind = detail::require<std::string>(j, "kind", what);
    using Table = std::vector<std::vector<double>>;
    if (kind == "LINEAR") {
        detail::reject_unknown_keys(j, {"kind", "weights", "sigma"}, what);
        return std::make_unique<LinearOracle>(detail::require<Table>(j, "weights", what),
                                              detail::optional_field<double>(j, "sigma", 0.0, what));
    }
    if (kind == "PLANTED_NONMONOTONE") {
        detail::reject_unknown_keys(j, {"kind", "base", "interactions", "sigma"}, what);
        std::vector<Interaction> terms;
        if (j.contains("interactions")) {
            for (const auto& t : j.at("interactions")) {
                detail::expect_object(t, "interaction");
                detail::reject_unknown_keys(t, {"u", "v", "value"}, "interaction");
                terms.push_back({detail::require<std::size_t>(t, "u", "interaction"),
                                 detail::require<std::size_t>(t, "v", "interaction"),
                                 detail::require<double>(t, "value", "interaction")});
            }
        }
        return std::make_unique<PlantedNonmonotoneOracle>(detail::require<Table>(j, "base", what), std::move(terms),
                                                          detail::optional_field<double>(j, "sigma", 0.0, what));
    }
    throw ConfigError("oracle: unsupported kind \"" + kind + "\"");
}

std::unique_ptr<FitnessOracle> load_oracle(const std::filesystem::path& path) {
    return oracle_from_json(detail::read_json_file(path));
}

nlohmann::json oracle_to_json(const LinearOracle& oracle) {
    return {{"kind", "LINEAR"}, {"weights", oracle.weights()}, {"sigma", oracle.sigma()}};
}

nlohmann::json oracle_to_json(const PlantedNonmonotoneOracle& oracle) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : oracle.interactions()) {
        terms.push_back({{"u", t.u}, {"v", t.v}, {"value", t.value}});
    }
    return {{"kind", "PLANTED_NONMONOTONE"},
            {"base", oracle.base()},
            {"interactions", std::move(terms)},
            {"sigma", oracle.sigma()}};
}

PlantedInstance shipped_planted_instance() {
    constexpr int kUnits = 12;
    std::vector<UnitSpec> units;
    std::vector<std::vector<double>> base;
    for (int i = 0; i < kUnits; ++i) {
        units.push_back({"block" + std::to_string(i), "block", {1, 0}});
        // Removal cost grows with depth; block 0 is the cheapest to drop.
        base.push_back({0.0, 1.0 + 0.3 * i});
    }
    // Blocks 8 and 9 are individually expensive but nearly free together.
    std::vector<Interaction> terms{{8, 9, -7.0}, {2, 3, 0.4}, {5, 6, 0.2}};
    LevelDatabase db(std::move(units), ExchangePolicy::Any);
    constexpr int kRemoved = 4;
    return PlantedInstance{std::move(db), PlantedNonmonotoneOracle(std::move(base), std::move(terms)),
                           Budget{kUnits - kRemoved}, kRemoved};
}

}  // namespace evopress
