#include "cola/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cola/errors.hpp"
#include "cola/text_io.hpp"

namespace cola::synthetic {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kGenreWords = {"action", "comedy", "drama", "horror", "romance",
                                              "thriller", "scifi", "western", "musical", "mystery"};

const std::vector<std::pair<std::string, std::string>> kWordEdges = {
    {"action", "thriller"}, {"horror", "thriller"}, {"comedy", "romance"}, {"drama", "romance"},
    {"scifi", "action"},    {"western", "action"},  {"musical", "comedy"}, {"mystery", "thriller"},
    {"movie", "film"},      {"funny", "comedy"},    {"scary", "horror"},   {"great", "good"},
    {"love", "like"},       {"film", "good"},
};

std::string word_graph_text() {
    std::string out;
    for (const auto& [a, b] : kWordEdges) out += a + "\t" + b + "\n";
    return out;
}

json mention(const Vocab& vocab, EntityId e, Sentiment s) {
    return {{"entity", vocab.entity_key(e)}, {"sentiment", std::string(to_string(s))}};
}

json utterance(Speaker speaker, const std::string& text, json mentions) {
    return {{"speaker", std::string(to_string(speaker))}, {"text", text}, {"mentions", std::move(mentions)}};
}

std::string conversation_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%05zu", i);
    return buf;
}

std::string user_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "u%04zu", i);
    return buf;
}

std::string item_key(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "i%03zu", i);
    return buf;
}

// draws without replacement proportional to `weight`, skipping `exclude`
std::size_t draw(const std::vector<double>& weight, const std::vector<std::size_t>& exclude, std::mt19937_64& rng) {
    std::vector<double> w = weight;
    for (auto e : exclude) w[e] = 0.0;
    if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; }))
        throw ArgumentError("synthetic: every candidate excluded");
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    return pick(rng);
}

Split assign_split(double u) {
    if (u < 0.7) return Split::train;
    if (u < 0.8) return Split::valid;
    return Split::test;
}

struct Items {
    std::vector<EntityId> ids;
    std::vector<EntityId> genres;
};

Items add_items(Vocab& vocab, std::size_t items, std::size_t genres, std::string& kg, std::mt19937_64& rng) {
    if (genres == 0 || genres > kGenreWords.size()) throw ArgumentError("synthetic: genres must be in [1, 10]");
    Items out;
    for (std::size_t g = 0; g < genres; ++g) out.genres.push_back(vocab.add_entity("g" + std::to_string(g), kGenreWords[g], false));
    std::uniform_int_distribution<std::size_t> genre(0, genres - 1);
    for (std::size_t i = 0; i < items; ++i) {
        const auto id = vocab.add_entity(item_key(i), "item " + std::to_string(i), true);
        out.ids.push_back(id);
        kg += item_key(i) + "\tgenre\tg" + std::to_string(genre(rng)) + "\n";
    }
    return out;
}

const std::string& genre_word(std::size_t item, std::size_t genres) { return kGenreWords[item % genres]; }

}  // namespace

Bundle Corpus::bundle(Bm25Params bm25) const {
    const auto stops = StopWords::builtin();
    std::istringstream c(corpus), k(item_kg), w(word_graph);
    return Bundle::from_streams(vocab, c, k, w, CorpusOptions{&stops, nullptr, true}, bm25);
}

void Corpus::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    vocab.save_entities(dir / "entities.tsv");
    open_output(dir / "corpus.jsonl") << corpus;
    open_output(dir / "item_kg.tsv") << item_kg;
    open_output(dir / "word_graph.tsv") << word_graph;
}

Corpus toy() {
    Corpus t;
    auto& v = t.vocab;
    std::vector<EntityId> item;
    for (std::size_t i = 0; i < 6; ++i) item.push_back(v.add_entity(item_key(i), "item " + std::to_string(i), true));
    v.add_entity("a0", "director one", false);
    v.add_entity("a1", "comedy", false);
    t.item_kg = "i000\tdirected_by\ta0\ni001\tdirected_by\ta0\ni002\tgenre\ta1\ni003\tgenre\ta1\n"
                "i004\tgenre\ta1\ni005\tdirected_by\ta0\ni000\tsequel\ti001\n";
    t.word_graph = "funny\tcomedy\nscary\thorror\nmovie\tfilm\ncomedy\tfilm\n";
    const auto L = Sentiment::like, D = Sentiment::dislike, N = Sentiment::neutral;
    auto m = [&](std::size_t i, Sentiment s) { return mention(v, item[i], s); };
    std::vector<json> convs;
    convs.push_back({{"conversation_id", "c1"}, {"user_id", "u1"}, {"split", "train"},
                     {"utterances", json::array({
                         utterance(Speaker::seeker, "I want a funny comedy movie like item 0", json::array({m(0, L)})),
                         utterance(Speaker::recommender, "Try item 1, a great film", json::array({m(1, N)})),
                         utterance(Speaker::seeker, "I hated item 2, anything else?", json::array({m(2, D)})),
                         utterance(Speaker::recommender, "Then item 3 or item 4", json::array({m(3, N), m(4, N)})),
                     })}});
    convs.push_back({{"conversation_id", "c2"}, {"user_id", "u2"}, {"split", "train"},
                     {"utterances", json::array({
                         utterance(Speaker::seeker, "Scary horror film please, loved item 3", json::array({m(3, L)})),
                         utterance(Speaker::recommender, "item 5 is scary", json::array({m(5, N)})),
                     })}});
    convs.push_back({{"conversation_id", "c3"}, {"user_id", "u3"}, {"split", "train"},
                     {"utterances", json::array({
                         utterance(Speaker::seeker, "hello", json::array()),
                         utterance(Speaker::recommender, "Do you like item 0?", json::array({m(0, N)})),
                         utterance(Speaker::seeker, "yes item 0 and item 4 are funny", json::array({m(0, L), m(4, L)})),
                         utterance(Speaker::recommender, "Watch item 2", json::array({m(2, N)})),
                     })}});
    convs.push_back({{"conversation_id", "c4"}, {"user_id", "u1"}, {"split", "test"},
                     {"utterances", json::array({
                         utterance(Speaker::seeker, "another comedy film like item 4", json::array({m(4, L)})),
                         utterance(Speaker::recommender, "item 0 or item 5", json::array({m(0, N), m(5, N)})),
                     })}});
    for (const auto& c : convs) t.corpus += c.dump() + "\n";
    return t;
}

Corpus popularity(const PopularityOptions& o) {
    if (o.users == 0 || o.conversations == 0 || o.popular == 0 || o.items < o.popular + 4)
        throw ArgumentError("synthetic popularity: need users, conversations, popular > 0 and items >= popular + 4");
    std::mt19937_64 rng(o.seed);
    Corpus out;
    auto items = add_items(out.vocab, o.items, o.genres, out.item_kg, rng);
    out.word_graph = word_graph_text();

    std::vector<std::size_t> order(o.items);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> like_weight(o.items, 1.0);
    for (std::size_t i = 0; i < o.popular; ++i) like_weight[order[i]] = o.boost;
    const std::vector<double> uniform(o.items, 1.0);
    std::vector<double> train_weight(o.items);
    for (std::size_t i = 0; i < o.items; ++i) train_weight[i] = 1.0 + o.train_gold_popular * (like_weight[i] - 1.0);

    std::vector<Split> user_split(o.users);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& s : user_split) s = assign_split(unit(rng));
    std::uniform_int_distribution<std::size_t> pick_user(0, o.users - 1);

    const auto& v = out.vocab;
    auto name = [&](std::size_t i) { return v.entity_name(items.ids[i]); };
    for (std::size_t c = 0; c < o.conversations; ++c) {
        const auto user = pick_user(rng);
        const Split split = user_split[user];
        const auto& gold_weight = split == Split::train ? train_weight : like_weight;
        std::vector<std::size_t> used;
        json utts = json::array();

        const auto l1 = draw(like_weight, used, rng);
        used.push_back(l1);
        const auto l2 = draw(like_weight, used, rng);
        used.push_back(l2);
        json ms = json::array({mention(v, items.ids[l1], Sentiment::like), mention(v, items.ids[l2], Sentiment::like)});
        std::string text = "i love " + genre_word(l1, o.genres) + " movies like " + name(l1) + " and " + name(l2);
        if (unit(rng) < 0.3) {
            const auto d = draw(uniform, used, rng);
            used.push_back(d);
            ms.push_back(mention(v, items.ids[d], Sentiment::dislike));
            text += " but not " + name(d);
        }
        utts.push_back(utterance(Speaker::seeker, text, std::move(ms)));

        const auto g1 = draw(gold_weight, used, rng);
        used.push_back(g1);
        utts.push_back(utterance(Speaker::recommender, "you might enjoy " + name(g1),
                                 json::array({mention(v, items.ids[g1], Sentiment::neutral)})));
        const auto l3 = draw(like_weight, used, rng);
        used.push_back(l3);
        utts.push_back(utterance(Speaker::seeker, "good film, i also like " + name(l3),
                                 json::array({mention(v, items.ids[g1], Sentiment::like),
                                              mention(v, items.ids[l3], Sentiment::like)})));
        const auto g2 = draw(gold_weight, used, rng);
        utts.push_back(utterance(Speaker::recommender, "then watch " + name(g2),
                                 json::array({mention(v, items.ids[g2], Sentiment::neutral)})));

        json rec = {{"conversation_id", conversation_id(c)}, {"user_id", user_id(user)},
                    {"split", std::string(to_string(split))}, {"utterances", std::move(utts)}};
        out.corpus += rec.dump() + "\n";
    }
    return out;
}

Corpus clusters(const ClusterOptions& o) {
    if (o.users == 0 || o.conversations == 0 || o.clusters == 0 || o.items < o.clusters * 4)
        throw ArgumentError("synthetic clusters: need at least 4 items per cluster");
    std::mt19937_64 rng(o.seed);
    Corpus out;
    auto items = add_items(out.vocab, o.items, o.genres, out.item_kg, rng);
    out.word_graph = word_graph_text();

    std::vector<std::size_t> order(o.items);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<double>> taste(o.clusters, std::vector<double>(o.items, 0.0));
    for (std::size_t i = 0; i < o.items; ++i) taste[i % o.clusters][order[i]] = 1.0;
    const std::vector<double> uniform(o.items, 1.0);

    std::uniform_int_distribution<std::size_t> pick_cluster(0, o.clusters - 1);
    std::vector<std::size_t> user_cluster(o.users);
    for (auto& c : user_cluster) c = pick_cluster(rng);
    std::uniform_int_distribution<std::size_t> pick_user(0, o.users - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto& v = out.vocab;
    auto name = [&](std::size_t i) { return v.entity_name(items.ids[i]); };
    for (std::size_t c = 0; c < o.conversations; ++c) {
        const auto user = pick_user(rng);
        const auto& w = taste[user_cluster[user]];
        std::vector<std::size_t> used;
        auto seeker_pick = [&]() {
            const auto i = draw(unit(rng) < o.noise ? uniform : w, used, rng);
            used.push_back(i);
            return i;
        };
        auto gold_pick = [&]() {
            const auto i = draw(w, used, rng);
            used.push_back(i);
            return i;
        };
        json utts = json::array();
        const auto l1 = seeker_pick();
        utts.push_back(utterance(Speaker::seeker,
                                 "i want a " + genre_word(l1, o.genres) + " movie like " + name(l1),
                                 json::array({mention(v, items.ids[l1], Sentiment::like)})));
        const auto g1 = gold_pick();
        utts.push_back(utterance(Speaker::recommender, "have you seen " + name(g1),
                                 json::array({mention(v, items.ids[g1], Sentiment::neutral)})));
        const auto l2 = seeker_pick();
        utts.push_back(utterance(Speaker::seeker, "yes great, and " + name(l2) + " too",
                                 json::array({mention(v, items.ids[g1], Sentiment::like),
                                              mention(v, items.ids[l2], Sentiment::like)})));
        const auto g2 = gold_pick();
        utts.push_back(utterance(Speaker::recommender, "then try " + name(g2),
                                 json::array({mention(v, items.ids[g2], Sentiment::neutral)})));

        json rec = {{"conversation_id", conversation_id(c)}, {"user_id", user_id(user)},
                    {"split", std::string(to_string(assign_split(unit(rng))))}, {"utterances", std::move(utts)}};
        out.corpus += rec.dump() + "\n";
    }
    return out;
}

}  // namespace cola::synthetic
