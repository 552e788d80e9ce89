#include "cola/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_set>

#include "cola/binary_io.hpp"
#include "cola/errors.hpp"

namespace cola {

namespace {
constexpr char kMagic[8] = {'C', 'O', 'L', 'A', 'B', 'M', '2', '5'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Bm25Index Bm25Index::build(const std::vector<Conversation>& train_conversations, Bm25Params params) {
    if (train_conversations.empty()) throw ArgumentError("bm25: cannot build an index over zero documents");
    std::vector<const Conversation*> sorted;
    for (const auto& c : train_conversations) {
        if (c.split != Split::train)
            throw LeakageError("bm25: conversation " + c.conversation_id + " is not in the training split");
        sorted.push_back(&c);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->conversation_id < b->conversation_id; });

    Bm25Index idx;
    idx.params_ = params;
    std::map<EntityId, std::vector<Posting>> postings;
    for (std::size_t d = 0; d < sorted.size(); ++d) {
        const auto& conv = *sorted[d];
        std::map<EntityId, std::uint32_t> tf;
        std::vector<EntityId> order;
        std::uint32_t len = 0;
        for (const auto& u : conv.utterances)
            for (const auto& m : u.mentions) {
                if (tf[m.entity]++ == 0) order.push_back(m.entity);
                ++len;
            }
        idx.doc_ids_.push_back(conv.conversation_id);
        idx.doc_len_.push_back(len);
        idx.doc_entities_.push_back(std::move(order));
        for (const auto& [e, n] : tf) postings[e].push_back({static_cast<std::uint32_t>(d), n});
    }
    for (auto& [e, p] : postings) idx.terms_.push_back({e, std::move(p)});
    idx.finalize();
    return idx;
}

void Bm25Index::finalize() {
    const auto n = doc_ids_.size();
    double total = 0.0;
    for (auto l : doc_len_) total += l;
    avgdl_ = n ? total / static_cast<double>(n) : 0.0;
    doc_tf_.assign(n, {});
    for (const auto& t : terms_)
        for (const auto& p : t.postings) doc_tf_[p.doc].push_back({t.entity, p.tf});
}

const Bm25Index::Term* Bm25Index::find_term(EntityId entity) const {
    auto it = std::lower_bound(terms_.begin(), terms_.end(), entity,
                               [](const Term& t, EntityId e) { return t.entity < e; });
    return it != terms_.end() && it->entity == entity ? &*it : nullptr;
}

std::size_t Bm25Index::document_frequency(EntityId term) const {
    const Term* t = find_term(term);
    return t ? t->postings.size() : 0;
}

std::size_t Bm25Index::term_frequency(EntityId term, std::size_t doc) const {
    const auto& tfs = doc_tf_.at(doc);
    auto it = std::lower_bound(tfs.begin(), tfs.end(), term, [](const auto& p, EntityId e) { return p.first < e; });
    return it != tfs.end() && it->first == term ? it->second : 0;
}

std::optional<std::size_t> Bm25Index::find_document(const std::string& conversation_id) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), conversation_id);
    if (it == doc_ids_.end() || *it != conversation_id) return std::nullopt;
    return static_cast<std::size_t>(it - doc_ids_.begin());
}

double Bm25Index::idf(EntityId term) const {
    const double n = static_cast<double>(document_count());
    const double df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::span<const EntityId> query, std::size_t doc) const {
    if (document_count() == 0) throw StateError("bm25: empty index");
    if (doc >= document_count()) throw ArgumentError("bm25: unknown document " + std::to_string(doc));
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc_len_[doc]) / avgdl_);
    double s = 0.0;
    for (auto t : query) {
        const auto tf = static_cast<double>(term_frequency(t, doc));
        if (tf == 0.0) continue;
        s += idf(t) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return s;
}

std::vector<double> Bm25Index::score_all_serial(std::span<const EntityId> query) const {
    std::vector<double> out(document_count());
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = score(query, d);
    return out;
}

std::vector<double> Bm25Index::score_all(std::span<const EntityId> query) const {
    std::vector<double> out(document_count());
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::ptrdiff_t d = 0; d < n; ++d) out[d] = score(query, static_cast<std::size_t>(d));
    return out;
}

void Bm25Index::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write index: " + path.string());
    out.write(kMagic, 8);
    binary::put<std::uint32_t>(out, kVersion);
    binary::put<double>(out, params_.k1);
    binary::put<double>(out, params_.b);
    binary::put<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        binary::put_string(out, doc_ids_[d]);
        binary::put<std::uint32_t>(out, doc_len_[d]);
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(doc_entities_[d].size()));
        for (auto e : doc_entities_[d]) binary::put<std::uint32_t>(out, e);
    }
    binary::put<std::uint64_t>(out, terms_.size());
    for (const auto& t : terms_) {
        binary::put<std::uint32_t>(out, t.entity);
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.postings.size()));
        for (const auto& p : t.postings) {
            binary::put<std::uint32_t>(out, p.doc);
            binary::put<std::uint32_t>(out, p.tf);
        }
    }
    if (!out) throw Error("failed writing index: " + path.string());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact("index not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) throw ParseError("index: bad magic header");
    if (auto v = binary::get<std::uint32_t>(in); v != kVersion)
        throw ParseError("index: unsupported version " + std::to_string(v));
    Bm25Index idx;
    idx.params_.k1 = binary::get<double>(in);
    idx.params_.b = binary::get<double>(in);
    const auto docs = binary::get<std::uint64_t>(in);
    for (std::uint64_t d = 0; d < docs; ++d) {
        idx.doc_ids_.push_back(binary::get_string(in));
        idx.doc_len_.push_back(binary::get<std::uint32_t>(in));
        std::vector<EntityId> ents(binary::get<std::uint32_t>(in));
        for (auto& e : ents) e = binary::get<std::uint32_t>(in);
        idx.doc_entities_.push_back(std::move(ents));
    }
    const auto terms = binary::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < terms; ++i) {
        Term t;
        t.entity = binary::get<std::uint32_t>(in);
        t.postings.resize(binary::get<std::uint32_t>(in));
        for (auto& p : t.postings) {
            p.doc = binary::get<std::uint32_t>(in);
            p.tf = binary::get<std::uint32_t>(in);
            if (p.doc >= docs) throw ParseError("index: posting references unknown document");
        }
        idx.terms_.push_back(std::move(t));
    }
    idx.finalize();
    return idx;
}

RetrievalResult retrieve(const Bm25Index& index, std::span<const EntityId> query, std::size_t n,
                         const std::optional<std::string>& exclude) {
    if (n == 0) throw ArgumentError("retrieve: n must be >= 1");
    RetrievalResult result;
    if (query.empty()) {
        result.empty_query = true;
        return result;
    }
    const auto scores = index.score_all(query);
    std::vector<std::size_t> candidates;
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (scores[d] <= 0.0) continue;
        if (exclude && index.conversation_id(d) == *exclude) continue;
        candidates.push_back(d);
    }
    // Document order is conversation_id order, so index order breaks ties.
    const auto keep = std::min(n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
    candidates.resize(keep);
    std::unordered_set<EntityId> seen;
    for (auto d : candidates) {
        result.ranked.push_back({index.conversation_id(d), scores[d]});
        result.documents.push_back(d);
        for (auto e : index.document_entities(d))
            if (seen.insert(e).second) result.entities.push_back(e);
    }
    return result;
}

}  // namespace cola
