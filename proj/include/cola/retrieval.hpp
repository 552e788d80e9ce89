#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cola/corpus.hpp"

namespace cola {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 over training conversations. Each conversation is one document
/// whose tokens are the entity ids it mentions, with repetition. Documents are
/// held in ascending conversation_id order.
class Bm25Index {
public:
    static Bm25Index build(const std::vector<Conversation>& train_conversations, Bm25Params params = {});

    std::size_t document_count() const { return doc_ids_.size(); }
    double average_length() const { return avgdl_; }
    const Bm25Params& params() const { return params_; }
    std::size_t document_frequency(EntityId term) const;
    std::size_t document_length(std::size_t doc) const { return doc_len_.at(doc); }
    std::size_t term_frequency(EntityId term, std::size_t doc) const;
    const std::string& conversation_id(std::size_t doc) const { return doc_ids_.at(doc); }
    std::optional<std::size_t> find_document(const std::string& conversation_id) const;
    /// Distinct entities of a document in first-mention order.
    const std::vector<EntityId>& document_entities(std::size_t doc) const { return doc_entities_.at(doc); }
    std::size_t term_count() const { return terms_.size(); }

    /// ln(1 + (N - df + 0.5) / (df + 0.5))
    double idf(EntityId term) const;
    /// Throws ArgumentError for an unknown document.
    double score(std::span<const EntityId> query, std::size_t doc) const;
    /// Scores of every document, one OpenMP task per document.
    std::vector<double> score_all(std::span<const EntityId> query) const;
    std::vector<double> score_all_serial(std::span<const EntityId> query) const;

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

private:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
    };
    struct Term {
        EntityId entity = 0;
        std::vector<Posting> postings;  // ascending doc
    };

    void finalize();
    const Term* find_term(EntityId entity) const;

    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_len_;
    std::vector<std::vector<EntityId>> doc_entities_;
    std::vector<std::vector<std::pair<EntityId, std::uint32_t>>> doc_tf_;  // per doc, sorted by entity
    std::vector<Term> terms_;                                              // sorted by entity
    double avgdl_ = 0.0;
};

struct RetrievalResult {
    std::vector<std::pair<std::string, double>> ranked;  // (conversation_id, score), best first
    std::vector<std::size_t> documents;                  // index positions of `ranked`
    std::vector<EntityId> entities;                      // E_(r): union over returned documents
    bool empty_query = false;
};

/// Top-n documents with positive score for the query multiset, never
/// returning `exclude`. Ties go to the smaller conversation_id.
RetrievalResult retrieve(const Bm25Index& index, std::span<const EntityId> query, std::size_t n,
                         const std::optional<std::string>& exclude = std::nullopt);

}  // namespace cola
