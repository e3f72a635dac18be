#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evopress/level_space.hpp"
#include "evopress/rng.hpp"

namespace evopress {

/// Prefix of one calibration sample taken into a batch.
struct BatchSample {
    std::size_t sample_id = 0;
    std::int64_t tokens = 0;

    bool operator==(const BatchSample&) const = default;
};

/// An evaluation batch. The engine identifies batches by seed and token
/// count only; oracles that own a corpus derive the concrete samples from
/// the seed (see sample_batch). `samples` may be pre-filled by callers that
/// sample explicitly.
struct Batch {
    std::uint64_t seed = 0;
    std::int64_t token_count = 0;
    std::vector<BatchSample> samples;
};

/// Token counts of the calibration samples an oracle can draw from.
struct CorpusMeta {
    std::vector<std::int64_t> sample_tokens;

    std::int64_t total_tokens() const;
};

/// Draws distinct samples uniformly without replacement until `tokens` is
/// reached, keeping only a prefix of the last one. Throws CorpusTooSmall
/// when `tokens <= 0` or exceeds the corpus.
Batch sample_batch(const CorpusMeta& corpus, std::int64_t tokens, Rng& rng);

/// Dense row-major tokens x vocab logits.
class LogitMatrix {
public:
    LogitMatrix() = default;
    LogitMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    LogitMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Mean over rows of KL(softmax(ref) || softmax(cand)), evaluated in log
/// space in double precision. Throws ShapeMismatch or NonFiniteInput.
double kl_divergence(const LogitMatrix& ref, const LogitMatrix& cand);

enum class OracleKind { Linear, PlantedNonmonotone, LogitKl, External };

/// Scores an assignment on a batch; lower is better. Implementations must
/// be deterministic in (assignment, batch) and safe to call concurrently.
class FitnessOracle {
public:
    virtual ~FitnessOracle() = default;

    virtual OracleKind kind() const = 0;

    virtual double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const = 0;

    /// Scores every candidate on the same batch. The default splits the
    /// work over up to `jobs` threads; the result order always follows
    /// `candidates`.
    virtual std::vector<double> evaluate_many(const LevelDatabase& db, std::span<const LevelAssignment> candidates,
                                              const Batch& batch, int jobs = 1) const;
};

/// Additive fitness: sum_i weights[i][levels[i]], plus optional Gaussian
/// noise with standard deviation sigma / sqrt(tokens).
class LinearOracle final : public FitnessOracle {
public:
    LinearOracle(std::vector<std::vector<double>> weights, double sigma = 0.0);

    OracleKind kind() const override { return OracleKind::Linear; }
    double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const override;

    /// Noise-free value.
    double exact(const LevelAssignment& a) const;

    const std::vector<std::vector<double>>& weights() const { return weights_; }
    double sigma() const { return sigma_; }

private:
    std::vector<std::vector<double>> weights_;
    double sigma_;
};

struct Interaction {
    std::size_t u = 0;
    std::size_t v = 0;
    double value = 0.0;
};

/// Additive base plus pairwise terms value * c_u * c_v, where c_i is the
/// compressed fraction level_i / max_level_i of unit i. Negative terms let
/// compressing more units lower the fitness.
class PlantedNonmonotoneOracle final : public FitnessOracle {
public:
    PlantedNonmonotoneOracle(std::vector<std::vector<double>> base, std::vector<Interaction> interactions,
                             double sigma = 0.0);

    OracleKind kind() const override { return OracleKind::PlantedNonmonotone; }
    double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const override;

    double exact(const LevelDatabase& db, const LevelAssignment& a) const;

    const std::vector<std::vector<double>>& base() const { return base_; }
    const std::vector<Interaction>& interactions() const { return interactions_; }
    double sigma() const { return sigma_; }

private:
    std::vector<std::vector<double>> base_;
    std::vector<Interaction> interactions_;
    double sigma_;
};

/// In-process model hook for logit-based fitness.
class LogitModel {
public:
    virtual ~LogitModel() = default;
    virtual LogitMatrix reference_logits(const Batch& batch) const = 0;
    virtual LogitMatrix candidate_logits(const LevelAssignment& a, const Batch& batch) const = 0;
};

/// KL divergence of the candidate model against the reference model on the
/// batch. Seed-only batches are expanded against `corpus` first.
class LogitKlOracle final : public FitnessOracle {
public:
    LogitKlOracle(std::shared_ptr<const LogitModel> model, CorpusMeta corpus);

    OracleKind kind() const override { return OracleKind::LogitKl; }
    double evaluate(const LevelDatabase& db, const LevelAssignment& a, const Batch& batch) const override;

    /// The batch with its samples filled in.
    Batch resolve(const Batch& batch) const;

private:
    std::shared_ptr<const LogitModel> model_;
    CorpusMeta corpus_;
};

// JSON for synthetic oracles:
//   {"kind": "LINEAR", "weights": [[...], ...], "sigma": 0.0}
//   {"kind": "PLANTED_NONMONOTONE", "base": [[...], ...],
//    "interactions": [{"u": 0, "v": 1, "value": -1.5}], "sigma": 0.0}
std::unique_ptr<FitnessOracle> oracle_from_json(const nlohmann::json& j);
std::unique_ptr<FitnessOracle> load_oracle(const std::filesystem::path& path);
nlohmann::json oracle_to_json(const LinearOracle& oracle);
nlohmann::json oracle_to_json(const PlantedNonmonotoneOracle& oracle);

/// Weight tables must have one row per unit and one entry per level.
void check_table_shape(const LevelDatabase& db, const std::vector<std::vector<double>>& table, std::string_view what);

/// The planted instance shipped with the library: 12 binary units, 4 to be
/// removed, one strongly cooperative pair.
struct PlantedInstance {
    LevelDatabase db;
    PlantedNonmonotoneOracle oracle;
    Budget budget;
    int removed = 0;
};

PlantedInstance shipped_planted_instance();

}  // namespace evopress
