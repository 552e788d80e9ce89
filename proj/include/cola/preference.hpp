#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cola/corpus.hpp"
#include "cola/params.hpp"
#include "cola/retrieval.hpp"
#include "cola/tensor.hpp"

namespace cola {

/// Row matrices a user representation is pooled from. Any of them may have zero rows.
struct UserContext {
    ad::Tensor mentioned;  // entities mentioned so far
    ad::Tensor retrieved;  // entities of retrieved conversations
    ad::Tensor words;      // context words present in the word graph
    std::size_t skipped_words = 0;
};

struct AttentionParams {
    ad::Tensor entity_transform;  // d×d
    ad::Tensor entity_score;      // d×1
    ad::Tensor word_transform;    // d×d
    ad::Tensor word_score;        // d×1
    ad::Tensor gate;              // 2d×d, or 2d×1 for a scalar gate

    /// Registers `<prefix>.entity.W`, `<prefix>.entity.b`, `<prefix>.word.W`, `<prefix>.word.b`, `<prefix>.gate.W`.
    static AttentionParams create(ad::ParamStore& store, const std::string& prefix, std::size_t dim, bool scalar_gate,
                                  std::mt19937_64& rng);
    std::size_t dim() const { return entity_transform.rows(); }
};

UserContext gather_context(std::span<const EntityId> context_entities, std::span<const WordId> context_words,
                           std::span<const EntityId> retrieved_entities, const ad::Tensor& entity_matrix,
                           const ad::Tensor& word_matrix, std::span<const char> word_in_graph);
UserContext gather_context(const RecExample& example, const ad::Tensor& entity_matrix, const ad::Tensor& word_matrix,
                           std::span<const char> word_in_graph, const RetrievalResult& retrieval);

/// softmax(tanh(rows · W) · b) weighted sum of rows; nullopt for zero rows.
std::optional<ad::Tensor> attention_pool(const ad::Tensor& rows, const ad::Tensor& transform, const ad::Tensor& score);

/// γ = σ([v_e; v_w] · W3), output γ ⊙ v_e + (1 − γ) ⊙ v_w. A 2d×1 W3 gives one γ for all coordinates.
ad::Tensor gate_fuse(const ad::Tensor& entity_vector, const ad::Tensor& word_vector, const ad::Tensor& gate);

struct PreferenceSwitches {
    bool use_retrieval = true;  // false drops the retrieved rows
    bool use_words = true;      // false forces the word vector to zero
};

struct UserRepresentation {
    ad::Tensor vector;  // 1×d
    bool cold_start = false;
};

UserRepresentation build_user_representation(const UserContext& context, const AttentionParams& params,
                                             PreferenceSwitches switches = {});

}  // namespace cola
