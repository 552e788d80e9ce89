#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cola/bundle.hpp"
#include "cola/encoders.hpp"
#include "cola/params.hpp"
#include "cola/preference.hpp"

namespace cola {

/// Components that can be switched off for ablation runs.
struct Ablation {
    bool ig = false;  // interaction graph
    bool rt = false;  // retrieved conversations
    bool db = false;  // item KG message passing
    bool cn = false;  // word graph

    /// Comma-separated subset of {ig, rt, db, cn}; empty string is the full model.
    /// Throws ArgumentError on an unknown or repeated flag.
    static Ablation parse(std::string_view list);
    std::string str() const;
    bool any() const { return ig || rt || db || cn; }
    bool operator==(const Ablation&) const = default;
};

struct TrainConfig {
    std::size_t dim = 128;
    std::size_t layers = 2;
    std::size_t epochs = 30;
    std::size_t batch_size = 256;
    double learning_rate = 0.001;
    double clip = 0.1;
    std::size_t top_n = 1;
    std::uint64_t seed = 42;
    Ablation ablation;
    bool mask_mentioned = true;
    bool scalar_gate = false;
    ZNorm z_norm = ZNorm::constant;
    double z = 1.0;

    /// Throws ConfigError.
    void validate() const;
    std::map<std::string, std::string> to_map() const;
    /// Applies recognized keys; unknown keys are a ConfigError.
    void apply(const std::map<std::string, std::string>& kv);
    std::string to_kv() const;
    static TrainConfig from_kv(const std::string& text);
    /// 16 hex digits of FNV-1a over to_kv().
    std::string fingerprint() const;
};

/// Parses `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_kv(std::istream& in);

struct MetricsReport {
    std::string split;
    std::size_t examples = 0;
    std::size_t pairs = 0;  // (example, gold item) pairs averaged over
    std::vector<std::size_t> ks;
    std::vector<double> recall;
    std::vector<double> mrr;
    std::string fingerprint;

    double recall_at(std::size_t k) const;
    double mrr_at(std::size_t k) const;
    std::string to_kv() const;
    nlohmann::ordered_json to_json() const;
    /// Writes `<stem>.txt` (key-value) and `<stem>.json`.
    void save(const std::filesystem::path& stem) const;
    bool operator==(const MetricsReport&) const = default;
};

/// Item order by descending probability, ties to the lower index.
std::vector<std::size_t> rank(std::span<const double> prob);
/// 1-based position of `item` under the same ordering as `rank`.
std::size_t rank_position(std::span<const double> prob, std::size_t item);

/// Recall@k and MRR@k averaged over every (example, gold) pair; `gold_ranks[i]`
/// holds the 1-based ranks of example i's gold items.
MetricsReport metrics_from_ranks(const std::vector<std::vector<std::size_t>>& gold_ranks, std::vector<std::size_t> ks,
                                 const std::string& split);

/// softmax over items of item_matrix · E_u; `masked` item indices get probability 0
/// unless that would mask every item.
ad::Tensor score_all(const ad::Tensor& user, const ad::Tensor& item_matrix, std::span<const std::size_t> masked = {});

/// Mean over gold items of -log P(gold). A zero probability gets 1e-12 added inside the log and sets *guarded.
ad::Tensor rec_loss(const ad::Tensor& prob, std::span<const std::size_t> gold, bool* guarded = nullptr);

/// An example with its retrieval resolved and ids mapped to item indices.
struct PreparedExample {
    const RecExample* example = nullptr;
    RetrievalResult retrieval;
    std::vector<std::size_t> masked;  // item indices mentioned in the context
    std::vector<std::size_t> gold;    // item indices
};

struct Encoded {
    ad::Tensor entities;
    ad::Tensor items;
    ad::Tensor words;
};

/// The full recommender: both R-GCN encoders, the word GCN, attention pooling
/// and the gate, over a fixed bundle.
class ColaModel {
public:
    ColaModel(const Bundle& bundle, const TrainConfig& config);

    ad::ParamStore& params() { return store_; }
    const ad::ParamStore& params() const { return store_; }
    const TrainConfig& config() const { return config_; }
    const Bundle& bundle() const { return *bundle_; }
    std::size_t item_count() const { return bundle_->vocab.items().size(); }

    Encoded encode() const;
    PreparedExample prepare(const RecExample& example) const;
    std::vector<PreparedExample> prepare(std::span<const RecExample> examples) const;

    UserRepresentation user_representation(const Encoded& enc, std::span<const EntityId> context_entities,
                                           std::span<const WordId> context_words,
                                           std::span<const EntityId> retrieved) const;
    UserRepresentation user_representation(const Encoded& enc, const PreparedExample& ex) const;
    /// m×1 item logits for a user vector.
    ad::Tensor logits(const Encoded& enc, const ad::Tensor& user) const;
    ad::Tensor example_loss(const Encoded& enc, const PreparedExample& ex, bool* guarded = nullptr) const;
    /// Item probabilities (masking per config).
    std::vector<double> probabilities(const Encoded& enc, const PreparedExample& ex) const;

    /// Checkpoint embeds the config; loading checks the parameter layout matches.
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);
    static TrainConfig read_config(const std::filesystem::path& checkpoint);

    const RgcnParams& kg_params() const { return kg_; }
    const RgcnParams& ig_params() const { return ig_; }
    const GcnParams& gcn_params() const { return gcn_; }
    const AttentionParams& attention_params() const { return attention_; }

private:
    const Bundle* bundle_;
    TrainConfig config_;
    ad::ParamStore store_;
    RgcnParams kg_;
    RgcnParams ig_;
    GcnParams gcn_;
    AttentionParams attention_;
    RelationalOperators kg_ops_;
    RelationalOperators ig_ops_;
    std::shared_ptr<const ad::SparseOperator> word_op_;
};

/// Evaluates in parallel over examples against the current parameters.
/// Throws ArgumentError for an empty example set.
MetricsReport evaluate(const ColaModel& model, std::span<const PreparedExample> examples,
                       const std::vector<std::size_t>& ks, const std::string& split);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::size_t guarded = 0;
    bool has_valid = false;
    MetricsReport valid;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    MetricsReport best_valid;
};

/// Mini-batch Adam with global-norm clipping. Encoders run once per batch;
/// the batch loss is the mean example loss. Parameters end at the epoch with
/// the best validation R@50, ties broken by MRR@50 (the last epoch when there is no validation data).
/// Throws NumericError on a non-finite loss.
TrainResult train(ColaModel& model, std::span<const PreparedExample> train_examples,
                  std::span<const PreparedExample> valid_examples,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

inline const std::vector<std::size_t> kDefaultKs = {1, 10, 50};

struct ExperimentResult {
    TrainResult training;
    MetricsReport test;
};

/// Trains on the bundle's train split, selects on valid, and reports the test split.
ExperimentResult run_experiment(ColaModel& model, const std::function<void(const EpochLog&)>& on_epoch = {});
ExperimentResult run_experiment(const Bundle& bundle, const TrainConfig& config,
                                const std::function<void(const EpochLog&)>& on_epoch = {});

struct AblationRow {
    std::string label;
    Ablation ablation;
    MetricsReport test;
};

/// The full model followed by one row per listed flag (and optionally all listed flags at once).
std::vector<AblationRow> ablate(const Bundle& bundle, const TrainConfig& base, const Ablation& flags,
                                bool include_combined = false);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace cola
