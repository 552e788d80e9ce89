#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cola/corpus.hpp"
#include "cola/graph.hpp"
#include "cola/retrieval.hpp"

namespace cola {

struct BundleSources {
    std::filesystem::path entities;
    std::filesystem::path corpus;
    std::filesystem::path item_kg;
    std::filesystem::path word_graph;
    std::optional<std::filesystem::path> stop_words;  // builtin list when absent
    std::optional<std::filesystem::path> lexicon;
};

/// Everything derived from the input files that training and evaluation read:
/// vocabularies, validated corpus, per-turn examples, the three graphs and the
/// retrieval index. Graph and index construction see the training split only.
struct Bundle {
    Vocab vocab;
    StopWords stop_words;
    std::vector<Conversation> conversations;
    std::vector<RecExample> examples;
    TypedGraph item_kg;
    InteractionGraph interactions;
    WordGraph word_graph;
    Bm25Index index;

    static Bundle from_sources(const BundleSources& sources, Bm25Params bm25 = {}, std::size_t max_context_words = 256);
    static Bundle from_streams(Vocab vocab, std::istream& corpus, std::istream& item_kg, std::istream& word_graph,
                               const CorpusOptions& options, Bm25Params bm25 = {}, std::size_t max_context_words = 256);

    /// Writes entities.tsv, words.tsv, corpus.jsonl, item_kg.tsv, word_graph.tsv,
    /// interaction_graph.tsv, stats.txt and the index (bm25.idx unless `index_path` is given).
    void write(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& index_path = {}) const;
    static Bundle read(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& index_path = {},
                       std::size_t max_context_words = 256);
};

void print_stats(std::ostream& out, const CorpusStats& stats);

}  // namespace cola
