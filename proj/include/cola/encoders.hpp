#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cola/graph.hpp"
#include "cola/params.hpp"
#include "cola/tensor.hpp"

namespace cola {

enum class ZNorm {
    constant,   // 1 / z for every (node, relation)
    in_degree,  // 1 / |neighbors of node under relation|
};

/// Relational GCN weights: an embedding table feeding layer 0, then per layer
/// one d×d matrix per relation plus a self transform. Representations are rows;
/// a message is h · W.
struct RgcnParams {
    struct Layer {
        std::vector<ad::Tensor> relation;
        ad::Tensor self;
    };
    ad::Tensor embedding;
    std::vector<Layer> layers;
    ZNorm norm = ZNorm::constant;
    double z = 1.0;

    /// Registers `<prefix>.embed`, `<prefix>.l<k>.rel<r>`, `<prefix>.l<k>.self`.
    static RgcnParams create(ad::ParamStore& store, const std::string& prefix, std::size_t nodes,
                             std::size_t relations, std::size_t dim, std::size_t layers, std::mt19937_64& rng);
    std::size_t dim() const { return embedding.cols(); }
};

/// Per-relation propagation operators of a graph under a normalization rule.
struct RelationalOperators {
    std::size_t node_count = 0;
    std::vector<std::shared_ptr<const ad::SparseOperator>> relation;
};

RelationalOperators relational_operators(const TypedGraph& graph, ZNorm norm, double z);

/// Layer update: H' = ReLU(Σ_r (1/Z) A_r H W_r + H W_self), applied once per layer.
/// Both node sides of a bipartite graph update synchronously from the previous layer.
ad::Tensor rgcn_forward(const RelationalOperators& ops, const RgcnParams& params);
ad::Tensor rgcn_forward(const TypedGraph& graph, const RgcnParams& params);

struct GcnParams {
    ad::Tensor embedding;
    std::vector<ad::Tensor> weights;

    /// Registers `<prefix>.embed` and `<prefix>.l<k>.W`.
    static GcnParams create(ad::ParamStore& store, const std::string& prefix, std::size_t nodes, std::size_t dim,
                            std::size_t layers, std::mt19937_64& rng);
};

/// V' = ReLU(Â V W) per layer with the precomputed normalized adjacency Â.
ad::Tensor gcn_forward(const std::shared_ptr<const ad::SparseOperator>& adjacency, const GcnParams& params);
ad::Tensor gcn_forward(const NormalizedAdjacency& adjacency, const GcnParams& params);

struct ItemEncoding {
    ad::Tensor entities;  // every entity; item rows carry the popularity term
    ad::Tensor items;     // vocab item order, m × d
};

struct ItemEncoderSwitches {
    bool use_interaction_graph = true;  // false: popularity term forced to zero
    bool use_kg_message_passing = true; // false: KG term is the raw layer-0 embedding
};

/// E_e[j] = k_j + v_j: KG encoding plus interaction-graph encoding for items
/// present in the interaction graph (zero otherwise).
ItemEncoding encode_items(const Vocab& vocab, const RelationalOperators& kg_ops, const RgcnParams& kg_params,
                          const InteractionGraph& interactions, const RelationalOperators& ig_ops,
                          const RgcnParams& ig_params, ItemEncoderSwitches switches = {});

/// Entity row for each interaction-graph item node mapped back to entity space.
std::vector<std::size_t> interaction_rows_for_entities(const Vocab& vocab, const InteractionGraph& interactions);

}  // namespace cola
