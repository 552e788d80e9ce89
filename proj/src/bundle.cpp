#include "cola/bundle.hpp"

#include <fstream>
#include <ostream>

#include "cola/errors.hpp"
#include "cola/text_io.hpp"

namespace cola {

namespace {

void finish(Bundle& b, Bm25Params bm25, std::size_t max_context_words, bool build_index) {
    b.examples = derive_examples(b.conversations, b.vocab, max_context_words);
    const auto train = split_view(b.conversations, Split::train);
    if (train.empty()) throw ValidationError("corpus has no training conversations");
    b.interactions = build_interaction_graph(train, b.vocab);
    if (build_index) b.index = Bm25Index::build(train, bm25);
}

}  // namespace

Bundle Bundle::from_streams(Vocab vocab, std::istream& corpus, std::istream& item_kg, std::istream& word_graph,
                            const CorpusOptions& options, Bm25Params bm25, std::size_t max_context_words) {
    Bundle b;
    if (options.stop_words) b.stop_words = *options.stop_words;
    b.vocab = std::move(vocab);
    b.conversations = parse_corpus(corpus, b.vocab, options);
    b.item_kg = parse_item_kg(item_kg, b.vocab);
    b.word_graph = parse_word_graph(word_graph, b.vocab, true);
    finish(b, bm25, max_context_words, true);
    return b;
}

Bundle Bundle::from_sources(const BundleSources& sources, Bm25Params bm25, std::size_t max_context_words) {
    for (const auto* p : {&sources.entities, &sources.corpus, &sources.item_kg, &sources.word_graph})
        if (!std::filesystem::exists(*p)) throw MissingArtifact("input file not found: " + p->string());
    const StopWords stops = sources.stop_words ? StopWords::load(*sources.stop_words) : StopWords::builtin();
    std::optional<KeywordLexicon> lexicon;
    if (sources.lexicon) lexicon = KeywordLexicon::load(*sources.lexicon);
    CorpusOptions options{&stops, lexicon ? &*lexicon : nullptr, true};
    auto corpus = open_input(sources.corpus);
    auto kg = open_input(sources.item_kg);
    auto words = open_input(sources.word_graph);
    return from_streams(Vocab::load_entities(sources.entities), corpus, kg, words, options, bm25, max_context_words);
}

void Bundle::write(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& index_path) const {
    std::filesystem::create_directories(dir);
    vocab.save_entities(dir / "entities.tsv");
    vocab.save_words(dir / "words.tsv");
    save_corpus(dir / "corpus.jsonl", conversations, vocab);
    {
        auto out = open_output(dir / "item_kg.tsv");
        for (const auto& e : item_kg.edges())
            out << vocab.entity_key(e.head) << '\t' << item_kg.relations()[e.relation] << '\t'
                << vocab.entity_key(e.tail) << '\n';
    }
    {
        auto out = open_output(dir / "word_graph.tsv");
        for (const auto& e : word_graph.graph.edges()) out << vocab.word(e.head) << '\t' << vocab.word(e.tail) << '\n';
    }
    save_interaction_graph(dir / "interaction_graph.tsv", interactions, vocab);
    {
        auto out = open_output(dir / "stopwords.txt");
        for (const auto& w : stop_words.sorted()) out << w << '\n';
    }
    index.save(index_path.value_or(dir / "bm25.idx"));
    auto out = open_output(dir / "stats.txt");
    print_stats(out, corpus_stats(conversations, vocab));
}

Bundle Bundle::read(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& index_path,
                    std::size_t max_context_words) {
    for (const char* name : {"entities.tsv", "words.tsv", "corpus.jsonl", "item_kg.tsv", "word_graph.tsv", "stopwords.txt"})
        if (!std::filesystem::exists(dir / name)) throw MissingArtifact("bundle file missing: " + (dir / name).string());
    Bundle b;
    b.vocab = Vocab::load_entities(dir / "entities.tsv");
    b.vocab.load_words(dir / "words.tsv");
    b.stop_words = StopWords::load(dir / "stopwords.txt");
    CorpusOptions options{&b.stop_words, nullptr, false};
    b.conversations = load_corpus(dir / "corpus.jsonl", b.vocab, options);
    b.item_kg = load_item_kg(dir / "item_kg.tsv", b.vocab);
    b.word_graph = load_word_graph(dir / "word_graph.tsv", b.vocab, false);
    finish(b, {}, max_context_words, false);
    b.index = Bm25Index::load(index_path.value_or(dir / "bm25.idx"));
    return b;
}

void print_stats(std::ostream& out, const CorpusStats& stats) {
    out << "users\t" << stats.users << '\n'
        << "conversations\t" << stats.conversations << '\n'
        << "utterances\t" << stats.utterances << '\n'
        << "items\t" << stats.items << '\n';
}

}  // namespace cola
