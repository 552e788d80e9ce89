#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "cola/errors.hpp"
#include "cola/graph.hpp"
#include "cola/synthetic.hpp"

using namespace cola;

namespace {

Vocab kg_vocab() {
    Vocab v;
    v.add_entity("m1", "Alien", true);
    v.add_entity("m2", "Heat", true);
    v.add_entity("d1", "Ridley Scott", false);
    v.add_entity("g1", "scifi", false);
    return v;
}

Conversation conv(const std::string& id, const std::string& user, Split split, std::vector<Mention> mentions) {
    Conversation c;
    c.conversation_id = id;
    c.user_id = user;
    c.split = split;
    Utterance u;
    u.mentions = std::move(mentions);
    c.utterances.push_back(u);
    return c;
}

}  // namespace

TEST_CASE("item KG parsing builds relation vocabulary and undirected neighbors") {
    auto v = kg_vocab();
    std::istringstream in("m1\tdirected_by\td1\nm1\tgenre\tg1\nm2\tgenre\tg1\nm1\tgenre\tg1\n\n");
    auto g = parse_item_kg(in, v);
    CHECK(g.node_count() == 4);
    CHECK(g.relations() == std::vector<std::string>{"directed_by", "genre"});
    CHECK(g.edges().size() == 3);
    auto n = g.neighbors(3, 1);
    CHECK(std::vector<std::uint32_t>(n.begin(), n.end()) == std::vector<std::uint32_t>{0, 1});
    auto d = g.neighbors(0, 0);
    CHECK(std::vector<std::uint32_t>(d.begin(), d.end()) == std::vector<std::uint32_t>{2});
    CHECK(g.neighbors(1, 0).empty());
    CHECK_THROWS_AS(g.neighbors(9, 0), ArgumentError);
}

TEST_CASE("item KG errors") {
    auto v = kg_vocab();
    std::istringstream unknown("m1\tgenre\tnobody\n");
    CHECK_THROWS_AS(parse_item_kg(unknown, v), ValidationError);
    std::istringstream bad("m1\tgenre\n");
    CHECK_THROWS_AS(parse_item_kg(bad, v), ParseError);
    CHECK_THROWS_AS(load_item_kg("/nonexistent/kg.tsv", v), MissingArtifact);
}

TEST_CASE("interaction graph keeps sentiment edges of items only") {
    auto v = kg_vocab();
    std::vector<Conversation> train = {
        conv("a", "u1", Split::train, {{0, Sentiment::like}, {1, Sentiment::dislike}, {2, Sentiment::like}}),
        conv("b", "u2", Split::train, {{0, Sentiment::like}, {1, Sentiment::neutral}}),
        conv("c", "u1", Split::train, {{0, Sentiment::like}}),
        conv("d", "u3", Split::train, {}),
    };
    auto g = build_interaction_graph(train, v);
    CHECK(g.users == std::vector<std::string>{"u1", "u2", "u3"});
    CHECK(g.items == std::vector<EntityId>{0, 1});
    CHECK(g.edges.size() == 3);
    CHECK(g.like_degree(0) == 2);
    CHECK(g.like_degree(1) == 0);
    CHECK(g.like_degree(2) == 0);
    auto t = g.to_typed();
    CHECK(t.node_count() == 5);
    CHECK(t.relation_count() == 2);
    // item node 0 liked by users u1 (node 2) and u2 (node 3)
    auto likes = t.neighbors(0, 0);
    CHECK(std::vector<std::uint32_t>(likes.begin(), likes.end()) == std::vector<std::uint32_t>{2, 3});
}

TEST_CASE("interaction graph rejects non-training conversations") {
    auto v = kg_vocab();
    std::vector<Conversation> mixed = {conv("a", "u1", Split::train, {}), conv("b", "u2", Split::test, {})};
    CHECK_THROWS_AS(build_interaction_graph(mixed, v), LeakageError);
}

TEST_CASE("like degree equals distinct liking users on the popularity corpus") {
    synthetic::PopularityOptions o;
    o.conversations = 200;
    auto b = synthetic::popularity(o).bundle();
    for (auto item : b.interactions.items) {
        std::set<std::string> users;
        for (const auto& c : b.conversations) {
            if (c.split != Split::train) continue;
            for (const auto& u : c.utterances)
                for (const auto& m : u.mentions)
                    if (m.entity == item && m.sentiment == Sentiment::like) users.insert(c.user_id);
        }
        CHECK(b.interactions.like_degree(item) == users.size());
    }
}

TEST_CASE("normalized adjacency matches the dense formula") {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges = {{0, 1}, {1, 2}, {1, 1}};
    auto a = normalize_adjacency(4, edges);
    auto dense = a.matrix.to_dense();
    // degrees of A + I: 2, 3, 2, 1
    CHECK(a.degree == std::vector<double>{2, 3, 2, 1});
    CHECK(dense[0 * 4 + 1] == doctest::Approx(1.0 / std::sqrt(6.0)));
    CHECK(dense[1 * 4 + 1] == doctest::Approx(1.0 / 3.0));
    CHECK(dense[3 * 4 + 3] == doctest::Approx(1.0));
    CHECK(dense[0 * 4 + 2] == 0.0);
    CHECK_THROWS_AS(normalize_adjacency(2, edges), ValidationError);
}

TEST_CASE("word graph registers or rejects unknown words") {
    Vocab v;
    v.add_word("film");
    v.add_word("lonely");
    std::istringstream in("film\tmovie\nmovie\tfilm\n");
    auto wg = parse_word_graph(in, v, true);
    CHECK(v.word_count() == 3);
    CHECK(wg.graph.node_count() == 3);
    CHECK(wg.graph.edges().size() == 1);
    CHECK(wg.in_graph == std::vector<char>{1, 0, 1});
    std::istringstream strict("film\tcinema\n");
    CHECK_THROWS_AS(parse_word_graph(strict, v, false), ValidationError);
}
