#include "cola/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "cola/errors.hpp"
#include "cola/text_io.hpp"

namespace cola {

TypedGraph::TypedGraph(std::size_t node_count, std::vector<std::string> relations, std::vector<TypedEdge> edges)
    : node_count_(node_count), relations_(std::move(relations)), edges_(std::move(edges)) {
    std::vector<std::vector<std::set<std::uint32_t>>> nbrs(relations_.size(),
                                                           std::vector<std::set<std::uint32_t>>(node_count_));
    for (const auto& e : edges_) {
        if (e.head >= node_count_ || e.tail >= node_count_ || e.relation >= relations_.size())
            throw ValidationError("edge index out of range");
        nbrs[e.relation][e.tail].insert(e.head);
        nbrs[e.relation][e.head].insert(e.tail);
    }
    adjacency_.resize(relations_.size());
    for (std::size_t r = 0; r < relations_.size(); ++r) {
        auto& a = adjacency_[r];
        a.rows = a.cols = node_count_;
        a.offsets.assign(1, 0);
        for (std::size_t n = 0; n < node_count_; ++n) {
            for (auto m : nbrs[r][n]) {
                a.index.push_back(m);
                a.weight.push_back(1.0);
            }
            a.offsets.push_back(a.index.size());
        }
    }
}

std::span<const std::uint32_t> TypedGraph::neighbors(std::size_t node, std::size_t relation) const {
    const auto& a = adjacency_.at(relation);
    if (node >= node_count_) throw ArgumentError("neighbors: node out of range");
    return std::span<const std::uint32_t>(a.index).subspan(a.offsets[node], a.offsets[node + 1] - a.offsets[node]);
}

TypedGraph parse_item_kg(std::istream& in, const Vocab& vocab) {
    std::vector<std::string> relations;
    std::map<std::string, std::uint32_t> rel_ids;
    std::set<TypedEdge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        auto f = split_tabs(line);
        if (f.size() != 3 || f[1].empty()) throw ParseError("item KG: expected head<TAB>relation<TAB>tail", lineno);
        auto head = vocab.find_entity(f[0]);
        if (!head) throw ValidationError("item KG: unknown entity '" + f[0] + "'", lineno);
        auto tail = vocab.find_entity(f[2]);
        if (!tail) throw ValidationError("item KG: unknown entity '" + f[2] + "'", lineno);
        auto [it, fresh] = rel_ids.emplace(f[1], static_cast<std::uint32_t>(relations.size()));
        if (fresh) relations.push_back(f[1]);
        edges.insert({*head, it->second, *tail});
    }
    return TypedGraph(vocab.entity_count(), std::move(relations), {edges.begin(), edges.end()});
}

TypedGraph load_item_kg(const std::filesystem::path& path, const Vocab& vocab) {
    auto in = open_input(path);
    return parse_item_kg(in, vocab);
}

std::optional<std::size_t> InteractionGraph::item_node(EntityId entity) const {
    auto it = std::lower_bound(items.begin(), items.end(), entity);
    if (it == items.end() || *it != entity) return std::nullopt;
    return static_cast<std::size_t>(it - items.begin());
}

std::size_t InteractionGraph::like_degree(EntityId entity) const {
    auto node = item_node(entity);
    if (!node) return 0;
    return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [&](const Edge& e) {
        return e.item == *node && e.relation == Preference::like;
    }));
}

TypedGraph InteractionGraph::to_typed() const {
    std::vector<TypedEdge> typed;
    typed.reserve(edges.size());
    const auto m = static_cast<std::uint32_t>(items.size());
    for (const auto& e : edges) typed.push_back({m + e.user, static_cast<std::uint32_t>(e.relation), e.item});
    return TypedGraph(node_count(), {"like", "dislike"}, std::move(typed));
}

InteractionGraph build_interaction_graph(const std::vector<Conversation>& train_conversations, const Vocab& vocab) {
    std::set<std::string> users;
    std::set<EntityId> items;
    std::set<std::tuple<std::string, Preference, EntityId>> raw;
    for (const auto& conv : train_conversations) {
        if (conv.split != Split::train)
            throw LeakageError("interaction graph: conversation " + conv.conversation_id + " is not in the training split");
        users.insert(conv.user_id);
        for (const auto& u : conv.utterances)
            for (const auto& m : u.mentions) {
                if (!vocab.is_item(m.entity) || m.sentiment == Sentiment::neutral) continue;
                raw.insert({conv.user_id, m.sentiment == Sentiment::like ? Preference::like : Preference::dislike, m.entity});
                items.insert(m.entity);
            }
    }
    InteractionGraph g;
    g.users.assign(users.begin(), users.end());
    g.items.assign(items.begin(), items.end());
    for (const auto& [user, rel, item] : raw) {
        auto u = std::lower_bound(g.users.begin(), g.users.end(), user) - g.users.begin();
        g.edges.push_back({static_cast<std::uint32_t>(u), rel, static_cast<std::uint32_t>(*g.item_node(item))});
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

void save_interaction_graph(const std::filesystem::path& path, const InteractionGraph& graph, const Vocab& vocab) {
    auto out = open_output(path);
    for (const auto& e : graph.edges)
        out << graph.users[e.user] << '\t' << (e.relation == Preference::like ? "like" : "dislike") << '\t'
            << vocab.entity_key(graph.items[e.item]) << '\n';
}

NormalizedAdjacency normalize_adjacency(std::size_t node_count,
                                        std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
    std::vector<std::set<std::uint32_t>> nbrs(node_count);
    for (std::size_t i = 0; i < node_count; ++i) nbrs[i].insert(static_cast<std::uint32_t>(i));
    for (const auto& [a, b] : edges) {
        if (a >= node_count || b >= node_count) throw ValidationError("word graph edge out of range");
        nbrs[a].insert(b);
        nbrs[b].insert(a);
    }
    NormalizedAdjacency out;
    out.degree.resize(node_count);
    for (std::size_t i = 0; i < node_count; ++i) out.degree[i] = static_cast<double>(nbrs[i].size());
    auto& m = out.matrix;
    m.rows = m.cols = node_count;
    m.offsets.assign(1, 0);
    for (std::size_t i = 0; i < node_count; ++i) {
        for (auto j : nbrs[i]) {
            m.index.push_back(j);
            m.weight.push_back(1.0 / std::sqrt(out.degree[i] * out.degree[j]));
        }
        m.offsets.push_back(m.index.size());
    }
    return out;
}

WordGraph parse_word_graph(std::istream& in, Vocab& vocab, bool register_words) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::vector<WordId> touched;
    std::string line;
    std::size_t lineno = 0;
    auto resolve = [&](const std::string& w) -> WordId {
        if (auto id = vocab.find_word(w)) return *id;
        if (!register_words) throw ValidationError("word graph: unknown word '" + w + "'", lineno);
        return vocab.add_word(w);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        auto f = split_tabs(line);
        if (f.size() != 2 || f[0].empty() || f[1].empty()) throw ParseError("word graph: expected word1<TAB>word2", lineno);
        const auto a = resolve(f[0]);
        const auto b = resolve(f[1]);
        touched.push_back(a);
        touched.push_back(b);
        pairs.insert({std::min(a, b), std::max(a, b)});
    }
    WordGraph wg;
    const auto n = vocab.word_count();
    std::vector<TypedEdge> typed;
    for (const auto& [a, b] : pairs) typed.push_back({a, 0, b});
    wg.graph = TypedGraph(n, {"related"}, std::move(typed));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_list(pairs.begin(), pairs.end());
    wg.adjacency = normalize_adjacency(n, edge_list);
    wg.in_graph.assign(n, 0);
    for (auto w : touched) wg.in_graph[w] = 1;
    return wg;
}

WordGraph load_word_graph(const std::filesystem::path& path, Vocab& vocab, bool register_words) {
    auto in = open_input(path);
    return parse_word_graph(in, vocab, register_words);
}

}  // namespace cola
