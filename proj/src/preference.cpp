#include "cola/preference.hpp"

#include <cmath>

#include "cola/errors.hpp"

namespace cola {

AttentionParams AttentionParams::create(ad::ParamStore& store, const std::string& prefix, std::size_t dim,
                                        bool scalar_gate, std::mt19937_64& rng) {
    const double square = std::sqrt(3.0 / static_cast<double>(dim));
    const double column = std::sqrt(6.0 / static_cast<double>(dim + 1));
    AttentionParams p;
    p.entity_transform = store.add_uniform(prefix + ".entity.W", {dim, dim}, square, rng);
    p.entity_score = store.add_uniform(prefix + ".entity.b", {dim, 1}, column, rng);
    p.word_transform = store.add_uniform(prefix + ".word.W", {dim, dim}, square, rng);
    p.word_score = store.add_uniform(prefix + ".word.b", {dim, 1}, column, rng);
    const std::size_t out = scalar_gate ? 1 : dim;
    p.gate = store.add_uniform(prefix + ".gate.W", {2 * dim, out}, std::sqrt(6.0 / static_cast<double>(2 * dim + out)), rng);
    return p;
}

UserContext gather_context(std::span<const EntityId> context_entities, std::span<const WordId> context_words,
                           std::span<const EntityId> retrieved_entities, const ad::Tensor& entity_matrix,
                           const ad::Tensor& word_matrix, std::span<const char> word_in_graph) {
    UserContext ctx;
    const std::vector<std::size_t> mentioned(context_entities.begin(), context_entities.end());
    const std::vector<std::size_t> retrieved(retrieved_entities.begin(), retrieved_entities.end());
    std::vector<std::size_t> words;
    for (auto w : context_words) {
        if (w < word_in_graph.size() && word_in_graph[w])
            words.push_back(w);
        else
            ++ctx.skipped_words;
    }
    ctx.mentioned = ad::row_lookup(entity_matrix, mentioned);
    ctx.retrieved = ad::row_lookup(entity_matrix, retrieved);
    ctx.words = ad::row_lookup(word_matrix, words);
    return ctx;
}

UserContext gather_context(const RecExample& example, const ad::Tensor& entity_matrix, const ad::Tensor& word_matrix,
                           std::span<const char> word_in_graph, const RetrievalResult& retrieval) {
    return gather_context(example.context_entities, example.context_words, retrieval.entities, entity_matrix,
                          word_matrix, word_in_graph);
}

std::optional<ad::Tensor> attention_pool(const ad::Tensor& rows, const ad::Tensor& transform, const ad::Tensor& score) {
    if (rows.rows() == 0) return std::nullopt;
    ad::Tensor scores = ad::matmul(ad::tanh(ad::matmul(rows, transform)), score);
    ad::Tensor alpha = ad::softmax(scores, ad::Axis::col_wise);
    return ad::weighted_sum(alpha, rows);
}

ad::Tensor gate_fuse(const ad::Tensor& entity_vector, const ad::Tensor& word_vector, const ad::Tensor& gate) {
    if (entity_vector.shape() != word_vector.shape() || entity_vector.rows() != 1)
        throw ShapeError("gate_fuse: vectors must both be 1×d, got " + entity_vector.shape().str() + " and " +
                         word_vector.shape().str());
    const std::size_t d = entity_vector.cols();
    ad::Tensor gamma = ad::sigmoid(ad::matmul(ad::concat_cols(entity_vector, word_vector), gate));
    if (gamma.cols() == 1 && d != 1) gamma = ad::matmul(gamma, ad::Tensor::from({1, d}, std::vector<double>(d, 1.0)));
    return ad::add(word_vector, ad::mul(gamma, ad::sub(entity_vector, word_vector)));
}

UserRepresentation build_user_representation(const UserContext& context, const AttentionParams& params,
                                             PreferenceSwitches switches) {
    const std::size_t d = params.dim();
    std::optional<ad::Tensor> entity_vec;
    if (switches.use_retrieval) {
        const ad::Tensor parts[] = {context.mentioned, context.retrieved};
        entity_vec = attention_pool(ad::concat_rows(parts), params.entity_transform, params.entity_score);
    } else {
        entity_vec = attention_pool(context.mentioned, params.entity_transform, params.entity_score);
    }
    std::optional<ad::Tensor> word_vec;
    if (switches.use_words) word_vec = attention_pool(context.words, params.word_transform, params.word_score);

    UserRepresentation out;
    if (!entity_vec && !word_vec) {
        out.vector = ad::Tensor::zeros({1, d});
        out.cold_start = true;
        return out;
    }
    const ad::Tensor zero = ad::Tensor::zeros({1, d});
    out.vector = gate_fuse(entity_vec.value_or(zero), word_vec.value_or(zero), params.gate);
    return out;
}

}  // namespace cola
