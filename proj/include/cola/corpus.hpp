#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cola {

using EntityId = std::uint32_t;
using WordId = std::uint32_t;

enum class Speaker { seeker, recommender };
enum class Sentiment { like, dislike, neutral };
enum class Split { train, valid, test };

std::string_view to_string(Speaker s);
std::string_view to_string(Sentiment s);
std::string_view to_string(Split s);
/// Throws ArgumentError on anything but train/valid/test.
Split parse_split(std::string_view label);

/// Entity and word vocabularies. Entity ids follow insertion order; each
/// entity has a key (the id column of the entity file), a display name and
/// an item flag. Words map to dense ids in first-seen order.
class Vocab {
public:
    EntityId add_entity(const std::string& key, const std::string& name, bool is_item);
    /// Looks up by key first, then by name.
    std::optional<EntityId> find_entity(std::string_view key_or_name) const;
    const std::string& entity_key(EntityId id) const { return entities_.at(id).key; }
    const std::string& entity_name(EntityId id) const { return entities_.at(id).name; }
    bool is_item(EntityId id) const { return entities_.at(id).is_item; }
    std::size_t entity_count() const { return entities_.size(); }
    /// Item entity ids in ascending order; position in this list is the item index.
    const std::vector<EntityId>& items() const { return items_; }
    /// Item index of an entity, or nullopt for attributes.
    std::optional<std::size_t> item_index(EntityId id) const;

    WordId add_word(const std::string& word);
    std::optional<WordId> find_word(std::string_view word) const;
    const std::string& word(WordId id) const { return words_.at(id); }
    std::size_t word_count() const { return words_.size(); }

    /// `id<TAB>name<TAB>is_item(0|1)` per line.
    static Vocab load_entities(const std::filesystem::path& path);
    void save_entities(const std::filesystem::path& path) const;
    /// `word_id<TAB>word` per line, ids dense from 0.
    void load_words(const std::filesystem::path& path);
    void save_words(const std::filesystem::path& path) const;

private:
    struct Entity {
        std::string key;
        std::string name;
        bool is_item = false;
    };
    std::vector<Entity> entities_;
    std::vector<EntityId> items_;
    std::vector<std::size_t> item_index_;
    std::unordered_map<std::string, EntityId> by_key_;
    std::unordered_map<std::string, EntityId> by_name_;
    std::vector<std::string> words_;
    std::unordered_map<std::string, WordId> word_ids_;
};

class StopWords {
public:
    StopWords() = default;
    explicit StopWords(std::unordered_set<std::string> words) : words_(std::move(words)) {}
    static StopWords builtin();
    static StopWords load(const std::filesystem::path& path);
    bool contains(std::string_view w) const { return words_.count(std::string(w)) != 0; }
    std::size_t size() const { return words_.size(); }
    std::vector<std::string> sorted() const;

private:
    std::unordered_set<std::string> words_;
};

/// keyword -> sentiment, used for corpora whose mentions carry no explicit label.
class KeywordLexicon {
public:
    static KeywordLexicon load(const std::filesystem::path& path);
    void add(const std::string& keyword, Sentiment s) { keywords_[keyword] = s; }
    /// Sentiment of the first token that is a keyword.
    std::optional<Sentiment> detect(const std::vector<std::string>& tokens) const;
    bool empty() const { return keywords_.empty(); }

private:
    std::unordered_map<std::string, Sentiment> keywords_;
};

/// Lowercases ASCII and splits on whitespace and ASCII punctuation.
std::vector<std::string> tokenize(std::string_view text);

struct Mention {
    EntityId entity = 0;
    Sentiment sentiment = Sentiment::neutral;
    bool operator==(const Mention&) const = default;
};

struct Utterance {
    Speaker speaker = Speaker::seeker;
    std::string text;
    std::vector<Mention> mentions;
    std::vector<WordId> content_words;
    bool operator==(const Utterance&) const = default;
};

struct Conversation {
    std::string conversation_id;
    std::string user_id;
    std::vector<Utterance> utterances;
    Split split = Split::train;
    bool operator==(const Conversation&) const = default;
};

struct RecExample {
    std::string conversation_id;
    std::string user_id;
    Split split = Split::train;
    std::vector<EntityId> context_entities;  // distinct, first-mention order
    std::vector<WordId> context_words;       // in order, most recent kept when truncated
    std::vector<EntityId> gold_items;        // items new at this turn, mention order
    std::size_t turn_index = 0;
};

struct CorpusOptions {
    const StopWords* stop_words = nullptr;
    const KeywordLexicon* lexicon = nullptr;
    /// When false, words missing from the vocabulary are dropped instead of registered.
    bool register_words = true;
};

/// Reads newline-delimited JSON conversations. Result is sorted by conversation_id.
std::vector<Conversation> load_corpus(const std::filesystem::path& path, Vocab& vocab,
                                      const CorpusOptions& options = {});
std::vector<Conversation> parse_corpus(std::istream& in, Vocab& vocab, const CorpusOptions& options = {});
void save_corpus(const std::filesystem::path& path, const std::vector<Conversation>& conversations,
                 const Vocab& vocab);
void write_corpus(std::ostream& out, const std::vector<Conversation>& conversations, const Vocab& vocab);

/// One example per recommender utterance that mentions at least one item not
/// mentioned earlier in the conversation.
std::vector<RecExample> derive_examples(const std::vector<Conversation>& conversations, const Vocab& vocab,
                                        std::size_t max_context_words = 256);

std::vector<RecExample> split_view(const std::vector<RecExample>& examples, Split split);
std::vector<Conversation> split_view(const std::vector<Conversation>& conversations, Split split);

struct CorpusStats {
    std::size_t users = 0;
    std::size_t conversations = 0;
    std::size_t utterances = 0;
    std::size_t items = 0;  // distinct items mentioned
};

CorpusStats corpus_stats(const std::vector<Conversation>& conversations, const Vocab& vocab);

}  // namespace cola
