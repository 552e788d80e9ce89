#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "cola/corpus.hpp"
#include "cola/errors.hpp"
#include "cola/synthetic.hpp"

using namespace cola;

namespace {

Vocab small_vocab() {
    Vocab v;
    v.add_entity("m1", "Alien", true);
    v.add_entity("m2", "Heat", true);
    v.add_entity("d1", "Ridley Scott", false);
    v.add_entity("m3", "Up", true);
    return v;
}

// REDIAL-style records: seeker/recommender roles under user/system labels
const char* kSample =
    R"({"conversation_id":"b","user_id":"u2","split":"train","utterances":[{"speaker":"user","text":"I loved Alien","mentions":[{"entity":"m1","sentiment":"like"}]},{"speaker":"system","text":"Try Heat","mentions":[{"entity":"m2"}]}]})"
    "\n"
    R"({"conversation_id":"a","user_id":"u1","split":"test","utterances":[{"speaker":"seeker","text":"Anything by Ridley Scott?","mentions":[{"entity":"Ridley Scott"}]},{"speaker":"recommender","text":"Alien, or Up","mentions":[{"entity":"m1"},{"entity":"m3"}]},{"speaker":"seeker","text":"hated Up","mentions":[{"entity":"m3","sentiment":"dislike"}]}]})"
    "\n"
    R"({"conversation_id":"c","user_id":"u1","split":"valid","utterances":[{"speaker":"seeker","text":"hi","mentions":[]}]})"
    "\n";

}  // namespace

TEST_CASE("tokenize lowercases and splits on punctuation") {
    CHECK(tokenize("Hello, World! it's  2 FUN") == std::vector<std::string>{"hello", "world", "it", "s", "2", "fun"});
    CHECK(tokenize("").empty());
}

TEST_CASE("split labels") {
    CHECK(parse_split("train") == Split::train);
    CHECK(parse_split("valid") == Split::valid);
    CHECK(parse_split("test") == Split::test);
    CHECK_THROWS_AS(parse_split("dev"), ArgumentError);
}

TEST_CASE("vocabulary ids and lookups") {
    auto v = small_vocab();
    CHECK(v.find_entity("m2") == EntityId{1});
    CHECK(v.find_entity("Ridley Scott") == EntityId{2});
    CHECK_FALSE(v.find_entity("zzz"));
    CHECK(v.items() == std::vector<EntityId>{0, 1, 3});
    CHECK(v.item_index(3) == std::size_t{2});
    CHECK_FALSE(v.item_index(2));
    CHECK(v.add_word("film") == 0);
    CHECK(v.add_word("film") == 0);
    CHECK(v.add_word("movie") == 1);
}

TEST_CASE("corpus parsing, sorting and sentiments") {
    auto v = small_vocab();
    const auto stops = StopWords::builtin();
    std::istringstream in(kSample);
    auto convs = parse_corpus(in, v, {&stops, nullptr, true});
    REQUIRE(convs.size() == 3);
    CHECK(convs[0].conversation_id == "a");
    CHECK(convs[0].split == Split::test);
    CHECK(convs[0].utterances[0].mentions[0].entity == 2);
    CHECK(convs[0].utterances[2].mentions[0].sentiment == Sentiment::dislike);
    CHECK(convs[1].utterances[0].speaker == Speaker::seeker);
    CHECK(convs[1].utterances[1].speaker == Speaker::recommender);
    CHECK(convs[1].utterances[1].mentions[0].sentiment == Sentiment::neutral);
    // "i" is a stop word; "loved" and "alien" are content words
    REQUIRE(convs[1].utterances[0].content_words.size() == 2);
    CHECK(v.word(convs[1].utterances[0].content_words[0]) == "loved");
}

TEST_CASE("keyword lexicon labels mentions without explicit sentiment") {
    auto v = small_vocab();
    KeywordLexicon lex;
    lex.add("loved", Sentiment::like);
    lex.add("hated", Sentiment::dislike);
    std::istringstream in(
        R"({"conversation_id":"x","user_id":"u","split":"train","utterances":[{"speaker":"seeker","text":"I loved Alien","mentions":[{"entity":"m1"}]},{"speaker":"seeker","text":"hated it","mentions":[{"entity":"m2","sentiment":"like"}]}]})");
    auto convs = parse_corpus(in, v, {nullptr, &lex, true});
    CHECK(convs[0].utterances[0].mentions[0].sentiment == Sentiment::like);
    CHECK(convs[0].utterances[1].mentions[0].sentiment == Sentiment::like);
}

TEST_CASE("unknown entity is a validation error naming it and the line") {
    auto v = small_vocab();
    std::istringstream in(std::string(kSample) +
                          R"({"conversation_id":"d","user_id":"u","split":"train","utterances":[{"speaker":"seeker","text":"x","mentions":[{"entity":"nope"}]}]})");
    try {
        parse_corpus(in, v);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }
}

TEST_CASE("malformed records are parse errors with the line number") {
    auto v = small_vocab();
    std::istringstream bad_json("\n{\"conversation_id\": ");
    try {
        parse_corpus(bad_json, v);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream missing(R"({"conversation_id":"a","user_id":"u","utterances":[]})");
    CHECK_THROWS_AS(parse_corpus(missing, v), ParseError);
    std::istringstream speaker(
        R"({"conversation_id":"a","user_id":"u","split":"train","utterances":[{"speaker":"bot","text":"x"}]})");
    CHECK_THROWS_AS(parse_corpus(speaker, v), ParseError);
    std::istringstream dup(std::string(kSample) + std::string(kSample));
    CHECK_THROWS_AS(parse_corpus(dup, v), ValidationError);
}

TEST_CASE("write then parse reproduces the corpus") {
    auto v = small_vocab();
    std::istringstream in(kSample);
    auto convs = parse_corpus(in, v);
    std::stringstream out;
    write_corpus(out, convs, v);
    auto again = parse_corpus(out, v);
    CHECK(again == convs);
}

TEST_CASE("examples: one per recommender turn with new items") {
    auto v = small_vocab();
    std::istringstream in(kSample);
    auto convs = parse_corpus(in, v);
    auto ex = derive_examples(convs, v);
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].conversation_id == "a");
    CHECK(ex[0].context_entities == std::vector<EntityId>{2});
    CHECK(ex[0].gold_items == std::vector<EntityId>{0, 3});
    CHECK(ex[0].turn_index == 1);
    CHECK(ex[1].conversation_id == "b");
    CHECK(ex[1].context_entities == std::vector<EntityId>{0});
    CHECK(ex[1].gold_items == std::vector<EntityId>{1});
    CHECK(split_view(ex, Split::train).size() == 1);
}

TEST_CASE("context words keep the most recent when truncated") {
    auto v = small_vocab();
    std::istringstream in(
        R"({"conversation_id":"x","user_id":"u","split":"train","utterances":[{"speaker":"seeker","text":"one two three four"},{"speaker":"recommender","text":"five","mentions":[{"entity":"m1"}]}]})");
    auto convs = parse_corpus(in, v);
    auto ex = derive_examples(convs, v, 2);
    REQUIRE(ex.size() == 1);
    REQUIRE(ex[0].context_words.size() == 2);
    CHECK(v.word(ex[0].context_words[0]) == "three");
    CHECK(v.word(ex[0].context_words[1]) == "four");
}

TEST_CASE("statistics match a manual count") {
    auto v = small_vocab();
    std::istringstream in(kSample);
    auto convs = parse_corpus(in, v);
    auto s = corpus_stats(convs, v);
    CHECK(s.users == 2);
    CHECK(s.conversations == 3);
    CHECK(s.utterances == 6);
    CHECK(s.items == 3);
}

TEST_CASE("entity and word files round trip") {
    auto v = small_vocab();
    v.add_word("alpha");
    v.add_word("beta");
    const auto dir = std::filesystem::temp_directory_path() / "cola_test_vocab";
    std::filesystem::create_directories(dir);
    v.save_entities(dir / "e.tsv");
    v.save_words(dir / "w.tsv");
    auto back = Vocab::load_entities(dir / "e.tsv");
    back.load_words(dir / "w.tsv");
    CHECK(back.entity_count() == 4);
    CHECK(back.entity_name(2) == "Ridley Scott");
    CHECK(back.items() == v.items());
    CHECK(back.word(1) == "beta");
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(Vocab::load_entities(dir / "e.tsv"), MissingArtifact);
}

TEST_CASE("builtin stop words") {
    auto s = StopWords::builtin();
    CHECK(s.contains("the"));
    CHECK(s.contains("i"));
    CHECK_FALSE(s.contains("movie"));
}

TEST_CASE("toy corpus parses into the expected shape") {
    auto b = synthetic::toy().bundle();
    CHECK(b.conversations.size() == 4);
    CHECK(b.vocab.items().size() == 6);
    CHECK(corpus_stats(b.conversations, b.vocab).users == 3);
    CHECK(split_view(b.examples, Split::train).size() >= 4);
    CHECK(split_view(b.examples, Split::test).size() == 1);
}
