#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cola/corpus.hpp"
#include "cola/kernels.hpp"

namespace cola {

struct TypedEdge {
    std::uint32_t head = 0;
    std::uint32_t relation = 0;
    std::uint32_t tail = 0;
    auto operator<=>(const TypedEdge&) const = default;
};

/// Multi-relational graph with per-(node, relation) neighbor lists. Edges are
/// undirected for message passing: a triple (h, r, t) makes h a neighbor of t
/// and t a neighbor of h under r.
class TypedGraph {
public:
    TypedGraph() = default;
    TypedGraph(std::size_t node_count, std::vector<std::string> relations, std::vector<TypedEdge> edges);

    std::size_t node_count() const { return node_count_; }
    std::size_t relation_count() const { return relations_.size(); }
    const std::vector<std::string>& relations() const { return relations_; }
    const std::vector<TypedEdge>& edges() const { return edges_; }

    /// Sorted neighbor ids of `node` under `relation`.
    std::span<const std::uint32_t> neighbors(std::size_t node, std::size_t relation) const;
    /// Neighbor incidence under one relation as unit-weight sparse rows.
    const kernels::SparseRows& adjacency(std::size_t relation) const { return adjacency_.at(relation); }

private:
    std::size_t node_count_ = 0;
    std::vector<std::string> relations_;
    std::vector<TypedEdge> edges_;
    std::vector<kernels::SparseRows> adjacency_;
};

/// Triples `head<TAB>relation<TAB>tail`; heads and tails resolve through the vocabulary.
TypedGraph load_item_kg(const std::filesystem::path& path, const Vocab& vocab);
TypedGraph parse_item_kg(std::istream& in, const Vocab& vocab);

enum class Preference : std::uint32_t { like = 0, dislike = 1 };

/// Bipartite user–item graph with like/dislike edges, built from training
/// conversations only.
struct InteractionGraph {
    struct Edge {
        std::uint32_t user = 0;  // index into users
        Preference relation = Preference::like;
        std::uint32_t item = 0;  // index into items
        auto operator<=>(const Edge&) const = default;
    };

    std::vector<std::string> users;  // sorted
    std::vector<EntityId> items;     // sorted; items with at least one edge
    std::vector<Edge> edges;         // sorted, unique

    static constexpr std::size_t relation_count = 2;

    std::optional<std::size_t> item_node(EntityId entity) const;
    std::size_t like_degree(EntityId entity) const;
    std::size_t node_count() const { return items.size() + users.size(); }
    /// Node ids: items occupy [0, items.size()), users follow.
    TypedGraph to_typed() const;

    bool operator==(const InteractionGraph&) const = default;
};

InteractionGraph build_interaction_graph(const std::vector<Conversation>& train_conversations, const Vocab& vocab);
void save_interaction_graph(const std::filesystem::path& path, const InteractionGraph& graph, const Vocab& vocab);

/// Symmetric-normalized adjacency D^{-1/2} (A + I) D^{-1/2}.
struct NormalizedAdjacency {
    kernels::SparseRows matrix;
    std::vector<double> degree;  // row sums of A + I
};

NormalizedAdjacency normalize_adjacency(std::size_t node_count, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges);

struct WordGraph {
    TypedGraph graph;
    NormalizedAdjacency adjacency;
    std::vector<char> in_graph;  // word appears in at least one edge line
};

/// Edges `word1<TAB>word2`, undirected. Node space is every word in the
/// vocabulary. Unknown words are registered when `register_words` is set,
/// otherwise they are a validation error.
WordGraph load_word_graph(const std::filesystem::path& path, Vocab& vocab, bool register_words);
WordGraph parse_word_graph(std::istream& in, Vocab& vocab, bool register_words);

}  // namespace cola
