#include "cola/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cola/errors.hpp"
#include "cola/text_io.hpp"
#include "stopwords_builtin.hpp"

namespace cola {

using nlohmann::json;

std::string_view to_string(Speaker s) { return s == Speaker::seeker ? "seeker" : "recommender"; }

std::string_view to_string(Sentiment s) {
    switch (s) {
        case Sentiment::like: return "like";
        case Sentiment::dislike: return "dislike";
        case Sentiment::neutral: return "neutral";
    }
    return "neutral";
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view label) {
    if (label == "train") return Split::train;
    if (label == "valid" || label == "validation") return Split::valid;
    if (label == "test") return Split::test;
    throw ArgumentError("unknown split label: " + std::string(label));
}

namespace {

std::optional<Sentiment> parse_sentiment(std::string_view s) {
    if (s == "like") return Sentiment::like;
    if (s == "dislike") return Sentiment::dislike;
    if (s == "neutral") return Sentiment::neutral;
    return std::nullopt;
}

std::optional<Speaker> parse_speaker(std::string_view s) {
    if (s == "seeker" || s == "user") return Speaker::seeker;
    if (s == "recommender" || s == "system") return Speaker::recommender;
    return std::nullopt;
}

}  // namespace

// ---- Vocab -----------------------------------------------------------------

EntityId Vocab::add_entity(const std::string& key, const std::string& name, bool is_item) {
    if (by_key_.count(key)) throw ValidationError("duplicate entity id: " + key);
    const auto id = static_cast<EntityId>(entities_.size());
    entities_.push_back({key, name, is_item});
    by_key_.emplace(key, id);
    by_name_.emplace(name, id);
    item_index_.push_back(is_item ? items_.size() : static_cast<std::size_t>(-1));
    if (is_item) items_.push_back(id);
    return id;
}

std::optional<EntityId> Vocab::find_entity(std::string_view key_or_name) const {
    const std::string k(key_or_name);
    if (auto it = by_key_.find(k); it != by_key_.end()) return it->second;
    if (auto it = by_name_.find(k); it != by_name_.end()) return it->second;
    return std::nullopt;
}

std::optional<std::size_t> Vocab::item_index(EntityId id) const {
    const auto idx = item_index_.at(id);
    if (idx == static_cast<std::size_t>(-1)) return std::nullopt;
    return idx;
}

WordId Vocab::add_word(const std::string& word) {
    if (auto it = word_ids_.find(word); it != word_ids_.end()) return it->second;
    const auto id = static_cast<WordId>(words_.size());
    words_.push_back(word);
    word_ids_.emplace(word, id);
    return id;
}

std::optional<WordId> Vocab::find_word(std::string_view word) const {
    if (auto it = word_ids_.find(std::string(word)); it != word_ids_.end()) return it->second;
    return std::nullopt;
}

Vocab Vocab::load_entities(const std::filesystem::path& path) {
    auto in = open_input(path);
    Vocab vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) throw ParseError("entity file: expected id<TAB>name<TAB>is_item", lineno);
        if (fields[2] != "0" && fields[2] != "1") throw ParseError("entity file: is_item must be 0 or 1", lineno);
        if (vocab.by_key_.count(fields[0])) throw ValidationError("duplicate entity id: " + fields[0], lineno);
        vocab.add_entity(fields[0], fields[1], fields[2] == "1");
    }
    return vocab;
}

void Vocab::save_entities(const std::filesystem::path& path) const {
    auto out = open_output(path);
    for (const auto& e : entities_) out << e.key << '\t' << e.name << '\t' << (e.is_item ? 1 : 0) << '\n';
}

void Vocab::load_words(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2) throw ParseError("word file: expected id<TAB>word", lineno);
        const auto id = add_word(fields[1]);
        if (std::to_string(id) != fields[0]) throw ValidationError("word file: ids must be dense and ordered", lineno);
    }
}

void Vocab::save_words(const std::filesystem::path& path) const {
    auto out = open_output(path);
    for (std::size_t i = 0; i < words_.size(); ++i) out << i << '\t' << words_[i] << '\n';
}

// ---- stop words / lexicon ----------------------------------------------------

StopWords StopWords::builtin() {
    std::unordered_set<std::string> words;
    std::istringstream in{std::string(kBuiltinStopWords)};
    std::string w;
    while (std::getline(in, w))
        if (!is_blank(w)) words.insert(trim(w));
    return StopWords(std::move(words));
}

StopWords StopWords::load(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::unordered_set<std::string> words;
    std::string w;
    while (std::getline(in, w))
        if (!is_blank(w)) words.insert(trim(w));
    return StopWords(std::move(words));
}

std::vector<std::string> StopWords::sorted() const {
    std::vector<std::string> out(words_.begin(), words_.end());
    std::sort(out.begin(), out.end());
    return out;
}

KeywordLexicon KeywordLexicon::load(const std::filesystem::path& path) {
    auto in = open_input(path);
    KeywordLexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2) throw ParseError("lexicon: expected keyword<TAB>like|dislike", lineno);
        auto s = parse_sentiment(fields[1]);
        if (!s || *s == Sentiment::neutral) throw ParseError("lexicon: sentiment must be like or dislike", lineno);
        lex.add(fields[0], *s);
    }
    return lex;
}

std::optional<Sentiment> KeywordLexicon::detect(const std::vector<std::string>& tokens) const {
    for (const auto& t : tokens)
        if (auto it = keywords_.find(t); it != keywords_.end()) return it->second;
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// ---- corpus ------------------------------------------------------------------

namespace {

Conversation parse_record(const json& rec, std::size_t lineno, Vocab& vocab, const CorpusOptions& options) {
    auto field = [&](const json& obj, const char* name) -> const json& {
        if (!obj.is_object() || !obj.contains(name)) throw ParseError(std::string("missing field '") + name + "'", lineno);
        return obj.at(name);
    };
    auto str = [&](const json& obj, const char* name) {
        const json& v = field(obj, name);
        if (!v.is_string()) throw ParseError(std::string("field '") + name + "' must be a string", lineno);
        return v.get<std::string>();
    };

    Conversation conv;
    conv.conversation_id = str(rec, "conversation_id");
    conv.user_id = str(rec, "user_id");
    try {
        conv.split = parse_split(str(rec, "split"));
    } catch (const ArgumentError& e) {
        throw ParseError(e.what(), lineno);
    }
    const json& utts = field(rec, "utterances");
    if (!utts.is_array()) throw ParseError("field 'utterances' must be an array", lineno);
    if (utts.empty()) throw ValidationError("conversation " + conv.conversation_id + " has no utterances", lineno);

    const StopWords fallback;
    const StopWords& stops = options.stop_words ? *options.stop_words : fallback;
    for (const auto& u : utts) {
        Utterance utt;
        auto speaker = parse_speaker(str(u, "speaker"));
        if (!speaker) throw ParseError("unknown speaker '" + str(u, "speaker") + "'", lineno);
        utt.speaker = *speaker;
        utt.text = str(u, "text");
        const auto tokens = tokenize(utt.text);
        const auto keyword_sentiment =
            options.lexicon ? options.lexicon->detect(tokens) : std::optional<Sentiment>{};

        const json& mentions = u.contains("mentions") ? u.at("mentions") : json::array();
        if (!mentions.is_array()) throw ParseError("field 'mentions' must be an array", lineno);
        for (const auto& m : mentions) {
            const auto key = str(m, "entity");
            auto id = vocab.find_entity(key);
            if (!id) throw ValidationError("unknown entity '" + key + "' in conversation " + conv.conversation_id, lineno);
            Mention mention{*id, Sentiment::neutral};
            if (m.contains("sentiment")) {
                auto s = m.at("sentiment").is_string() ? parse_sentiment(m.at("sentiment").get<std::string>())
                                                       : std::optional<Sentiment>{};
                if (!s) throw ParseError("bad sentiment on mention of '" + key + "'", lineno);
                mention.sentiment = *s;
            } else if (keyword_sentiment) {
                mention.sentiment = *keyword_sentiment;
            }
            utt.mentions.push_back(mention);
        }
        for (const auto& t : tokens) {
            if (stops.contains(t)) continue;
            if (options.register_words) {
                utt.content_words.push_back(vocab.add_word(t));
            } else if (auto w = vocab.find_word(t)) {
                utt.content_words.push_back(*w);
            }
        }
        conv.utterances.push_back(std::move(utt));
    }
    return conv;
}

}  // namespace

std::vector<Conversation> parse_corpus(std::istream& in, Vocab& vocab, const CorpusOptions& options) {
    std::vector<Conversation> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON record: ") + e.what(), lineno);
        }
        auto conv = parse_record(rec, lineno, vocab, options);
        if (!ids.insert(conv.conversation_id).second)
            throw ValidationError("duplicate conversation_id " + conv.conversation_id, lineno);
        out.push_back(std::move(conv));
    }
    std::sort(out.begin(), out.end(),
              [](const Conversation& a, const Conversation& b) { return a.conversation_id < b.conversation_id; });
    return out;
}

std::vector<Conversation> load_corpus(const std::filesystem::path& path, Vocab& vocab, const CorpusOptions& options) {
    auto in = open_input(path);
    return parse_corpus(in, vocab, options);
}

void write_corpus(std::ostream& out, const std::vector<Conversation>& conversations, const Vocab& vocab) {
    for (const auto& conv : conversations) {
        json rec;
        rec["conversation_id"] = conv.conversation_id;
        rec["user_id"] = conv.user_id;
        rec["split"] = std::string(to_string(conv.split));
        json utts = json::array();
        for (const auto& u : conv.utterances) {
            json ju;
            ju["speaker"] = std::string(to_string(u.speaker));
            ju["text"] = u.text;
            json ms = json::array();
            for (const auto& m : u.mentions)
                ms.push_back({{"entity", vocab.entity_key(m.entity)}, {"sentiment", std::string(to_string(m.sentiment))}});
            ju["mentions"] = std::move(ms);
            utts.push_back(std::move(ju));
        }
        rec["utterances"] = std::move(utts);
        out << rec.dump() << '\n';
    }
}

void save_corpus(const std::filesystem::path& path, const std::vector<Conversation>& conversations,
                 const Vocab& vocab) {
    auto out = open_output(path);
    write_corpus(out, conversations, vocab);
}

std::vector<RecExample> derive_examples(const std::vector<Conversation>& conversations, const Vocab& vocab,
                                        std::size_t max_context_words) {
    std::vector<RecExample> out;
    for (const auto& conv : conversations) {
        std::vector<EntityId> context;
        std::unordered_set<EntityId> seen;
        std::vector<WordId> words;
        for (std::size_t t = 0; t < conv.utterances.size(); ++t) {
            const auto& utt = conv.utterances[t];
            if (utt.speaker == Speaker::recommender) {
                std::vector<EntityId> gold;
                for (const auto& m : utt.mentions)
                    if (vocab.is_item(m.entity) && !seen.count(m.entity) &&
                        std::find(gold.begin(), gold.end(), m.entity) == gold.end())
                        gold.push_back(m.entity);
                if (!gold.empty()) {
                    RecExample ex;
                    ex.conversation_id = conv.conversation_id;
                    ex.user_id = conv.user_id;
                    ex.split = conv.split;
                    ex.context_entities = context;
                    const std::size_t skip = words.size() > max_context_words ? words.size() - max_context_words : 0;
                    ex.context_words.assign(words.begin() + static_cast<std::ptrdiff_t>(skip), words.end());
                    ex.gold_items = std::move(gold);
                    ex.turn_index = t;
                    out.push_back(std::move(ex));
                }
            }
            for (const auto& m : utt.mentions)
                if (seen.insert(m.entity).second) context.push_back(m.entity);
            words.insert(words.end(), utt.content_words.begin(), utt.content_words.end());
        }
    }
    return out;
}

std::vector<RecExample> split_view(const std::vector<RecExample>& examples, Split split) {
    std::vector<RecExample> out;
    std::copy_if(examples.begin(), examples.end(), std::back_inserter(out),
                 [split](const RecExample& e) { return e.split == split; });
    return out;
}

std::vector<Conversation> split_view(const std::vector<Conversation>& conversations, Split split) {
    std::vector<Conversation> out;
    std::copy_if(conversations.begin(), conversations.end(), std::back_inserter(out),
                 [split](const Conversation& c) { return c.split == split; });
    return out;
}

CorpusStats corpus_stats(const std::vector<Conversation>& conversations, const Vocab& vocab) {
    std::set<std::string> users;
    std::set<EntityId> items;
    CorpusStats s;
    s.conversations = conversations.size();
    for (const auto& c : conversations) {
        users.insert(c.user_id);
        s.utterances += c.utterances.size();
        for (const auto& u : c.utterances)
            for (const auto& m : u.mentions)
                if (vocab.is_item(m.entity)) items.insert(m.entity);
    }
    s.users = users.size();
    s.items = items.size();
    return s;
}

}  // namespace cola
