#include "cola/encoders.hpp"

#include <cmath>

#include "cola/errors.hpp"

namespace cola {

namespace {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double embedding_bound(std::size_t dim) { return 1.0 / std::sqrt(static_cast<double>(dim)); }

}  // namespace

RgcnParams RgcnParams::create(ad::ParamStore& store, const std::string& prefix, std::size_t nodes,
                              std::size_t relations, std::size_t dim, std::size_t layers, std::mt19937_64& rng) {
    RgcnParams p;
    p.embedding = store.add_uniform(prefix + ".embed", {nodes, dim}, embedding_bound(dim), rng);
    for (std::size_t l = 0; l < layers; ++l) {
        Layer layer;
        const std::string lp = prefix + ".l" + std::to_string(l);
        for (std::size_t r = 0; r < relations; ++r)
            layer.relation.push_back(store.add_uniform(lp + ".rel" + std::to_string(r), {dim, dim}, xavier_bound(dim, dim), rng));
        layer.self = store.add_uniform(lp + ".self", {dim, dim}, xavier_bound(dim, dim), rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

RelationalOperators relational_operators(const TypedGraph& graph, ZNorm norm, double z) {
    if (norm == ZNorm::constant && !(z > 0.0)) throw ConfigError("R-GCN normalization constant must be > 0");
    RelationalOperators ops;
    ops.node_count = graph.node_count();
    for (std::size_t r = 0; r < graph.relation_count(); ++r) {
        auto rows = graph.adjacency(r);
        for (std::size_t i = 0; i < rows.rows; ++i) {
            const auto deg = rows.offsets[i + 1] - rows.offsets[i];
            for (std::size_t p = rows.offsets[i]; p < rows.offsets[i + 1]; ++p)
                rows.weight[p] = norm == ZNorm::constant ? 1.0 / z : 1.0 / static_cast<double>(deg);
        }
        ops.relation.push_back(std::make_shared<ad::SparseOperator>(std::move(rows)));
    }
    return ops;
}

ad::Tensor rgcn_forward(const RelationalOperators& ops, const RgcnParams& params) {
    if (params.embedding.rows() != ops.node_count)
        throw ConfigError("R-GCN embedding has " + std::to_string(params.embedding.rows()) + " rows, graph has " +
                          std::to_string(ops.node_count) + " nodes");
    ad::Tensor h = params.embedding;
    for (const auto& layer : params.layers) {
        if (layer.relation.size() < ops.relation.size())
            throw ConfigError("R-GCN layer has " + std::to_string(layer.relation.size()) + " relation weights, graph has " +
                              std::to_string(ops.relation.size()) + " relations");
        ad::Tensor acc = ad::matmul(h, layer.self);
        for (std::size_t r = 0; r < ops.relation.size(); ++r) {
            if (ops.relation[r]->forward.nnz() == 0) continue;
            acc = ad::add(acc, ad::matmul(ad::propagate(ops.relation[r], h), layer.relation[r]));
        }
        h = ad::relu(acc);
    }
    return h;
}

ad::Tensor rgcn_forward(const TypedGraph& graph, const RgcnParams& params) {
    return rgcn_forward(relational_operators(graph, params.norm, params.z), params);
}

GcnParams GcnParams::create(ad::ParamStore& store, const std::string& prefix, std::size_t nodes, std::size_t dim,
                            std::size_t layers, std::mt19937_64& rng) {
    GcnParams p;
    p.embedding = store.add_uniform(prefix + ".embed", {nodes, dim}, embedding_bound(dim), rng);
    for (std::size_t l = 0; l < layers; ++l)
        p.weights.push_back(store.add_uniform(prefix + ".l" + std::to_string(l) + ".W", {dim, dim}, xavier_bound(dim, dim), rng));
    return p;
}

ad::Tensor gcn_forward(const std::shared_ptr<const ad::SparseOperator>& adjacency, const GcnParams& params) {
    ad::Tensor h = params.embedding;
    for (const auto& w : params.weights) h = ad::relu(ad::matmul(ad::propagate(adjacency, h), w));
    return h;
}

ad::Tensor gcn_forward(const NormalizedAdjacency& adjacency, const GcnParams& params) {
    return gcn_forward(std::make_shared<ad::SparseOperator>(adjacency.matrix), params);
}

std::vector<std::size_t> interaction_rows_for_entities(const Vocab& vocab, const InteractionGraph& interactions) {
    std::vector<std::size_t> rows(vocab.entity_count(), ad::kNoRow);
    for (std::size_t i = 0; i < interactions.items.size(); ++i) rows.at(interactions.items[i]) = i;
    return rows;
}

ItemEncoding encode_items(const Vocab& vocab, const RelationalOperators& kg_ops, const RgcnParams& kg_params,
                          const InteractionGraph& interactions, const RelationalOperators& ig_ops,
                          const RgcnParams& ig_params, ItemEncoderSwitches switches) {
    if (kg_params.dim() != ig_params.dim())
        throw ConfigError("item KG encoder dim " + std::to_string(kg_params.dim()) +
                          " differs from interaction encoder dim " + std::to_string(ig_params.dim()));
    ItemEncoding out;
    ad::Tensor k = switches.use_kg_message_passing ? rgcn_forward(kg_ops, kg_params) : kg_params.embedding;
    if (switches.use_interaction_graph && !interactions.items.empty()) {
        ad::Tensor v = rgcn_forward(ig_ops, ig_params);
        const auto rows = interaction_rows_for_entities(vocab, interactions);
        out.entities = ad::add(k, ad::row_lookup(v, rows));
    } else {
        out.entities = k;
    }
    std::vector<std::size_t> item_rows(vocab.items().begin(), vocab.items().end());
    out.items = ad::row_lookup(out.entities, item_rows);
    return out;
}

}  // namespace cola
