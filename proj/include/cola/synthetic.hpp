#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cola/bundle.hpp"

namespace cola::synthetic {

/// Generated input files held in memory.
struct Corpus {
    Vocab vocab;             // entities only
    std::string corpus;      // JSONL conversations
    std::string item_kg;     // head<TAB>relation<TAB>tail
    std::string word_graph;  // word1<TAB>word2

    Bundle bundle(Bm25Params bm25 = {}) const;
    /// Writes entities.tsv, corpus.jsonl, item_kg.tsv and word_graph.tsv.
    void write(const std::filesystem::path& dir) const;
};

/// 6 items, 2 attributes, 3 users, 4 conversations (3 train, 1 test).
Corpus toy();

struct PopularityOptions {
    std::size_t users = 200;
    std::size_t items = 50;
    std::size_t conversations = 1000;
    std::size_t popular = 5;
    double boost = 10.0;      // like-rate multiplier of popular items
    double train_gold_popular = 0.0;  // popularity weighting of training recommendations (0 = uniform)
    std::size_t genres = 5;
    std::uint64_t seed = 1;
};

/// Seekers like items at a rate `boost` times higher for the popular set;
/// users are split so valid/test users never appear in training, and test
/// recommendations favor popular items.
Corpus popularity(const PopularityOptions& options);

struct ClusterOptions {
    std::size_t users = 200;
    std::size_t items = 300;
    std::size_t clusters = 50;
    std::size_t conversations = 1000;
    double noise = 0.1;  // chance a seeker mention is outside the user's cluster
    std::size_t genres = 5;
    std::uint64_t seed = 1;
};

/// Users belong to taste clusters over disjoint item sets; every mention and
/// recommendation comes from the user's cluster except for noise.
Corpus clusters(const ClusterOptions& options);

}  // namespace cola::synthetic
