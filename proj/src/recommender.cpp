#include "cola/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cola/errors.hpp"
#include "cola/text_io.hpp"

namespace cola {

// ---- Ablation / TrainConfig ----------------------------------------------------

Ablation Ablation::parse(std::string_view list) {
    Ablation a;
    std::set<std::string> seen;
    std::string cur;
    auto flush = [&]() {
        const std::string flag = trim(cur);
        cur.clear();
        if (flag.empty()) return;
        if (!seen.insert(flag).second) throw ArgumentError("repeated ablation flag: " + flag);
        if (flag == "ig") a.ig = true;
        else if (flag == "rt") a.rt = true;
        else if (flag == "db") a.db = true;
        else if (flag == "cn") a.cn = true;
        else throw ArgumentError("unknown ablation flag: " + flag + " (expected ig, rt, db, cn)");
    };
    for (char c : list) {
        if (c == ',') flush();
        else cur.push_back(c);
    }
    flush();
    return a;
}

std::string Ablation::str() const {
    std::vector<std::string> parts;
    if (ig) parts.push_back("ig");
    if (rt) parts.push_back("rt");
    if (db) parts.push_back("db");
    if (cn) parts.push_back("cn");
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
    return out;
}

void TrainConfig::validate() const {
    if (dim == 0) throw ConfigError("dim must be positive");
    if (layers == 0) throw ConfigError("layers must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(clip > 0.0)) throw ConfigError("clip must be positive");
    if (top_n == 0) throw ConfigError("top_n must be positive");
    if (z_norm == ZNorm::constant && !(z > 0.0)) throw ConfigError("z must be positive");
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_map() const {
    return {
        {"dim", std::to_string(dim)},
        {"layers", std::to_string(layers)},
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"learning_rate", fmt_double(learning_rate)},
        {"clip", fmt_double(clip)},
        {"top_n", std::to_string(top_n)},
        {"seed", std::to_string(seed)},
        {"without", ablation.str()},
        {"mask_mentioned", mask_mentioned ? "true" : "false"},
        {"scalar_gate", scalar_gate ? "true" : "false"},
        {"z_norm", z_norm == ZNorm::constant ? "constant" : "in_degree"},
        {"z", fmt_double(z)},
    };
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "dim") dim = to_size(key, value);
        else if (key == "layers") layers = to_size(key, value);
        else if (key == "epochs") epochs = to_size(key, value);
        else if (key == "batch_size") batch_size = to_size(key, value);
        else if (key == "learning_rate") learning_rate = to_double(key, value);
        else if (key == "clip") clip = to_double(key, value);
        else if (key == "top_n") top_n = to_size(key, value);
        else if (key == "seed") seed = to_size(key, value);
        else if (key == "without") {
            try {
                ablation = Ablation::parse(value);
            } catch (const ArgumentError& e) {
                throw ConfigError(e.what());
            }
        } else if (key == "mask_mentioned") mask_mentioned = to_bool(key, value);
        else if (key == "scalar_gate") scalar_gate = to_bool(key, value);
        else if (key == "z_norm") {
            if (value == "constant") z_norm = ZNorm::constant;
            else if (value == "in_degree") z_norm = ZNorm::in_degree;
            else throw ConfigError("z_norm must be constant or in_degree");
        } else if (key == "z") z = to_double(key, value);
        else throw ConfigError("unknown config key: " + key);
    }
}

std::string TrainConfig::to_kv() const {
    std::string out;
    for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
    return out;
}

TrainConfig TrainConfig::from_kv(const std::string& text) {
    std::istringstream in(text);
    TrainConfig c;
    c.apply(parse_kv(in));
    return c;
}

std::string TrainConfig::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_kv()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::map<std::string, std::string> parse_kv(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (is_blank(line)) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value", lineno);
        const auto key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ParseError("config: empty key", lineno);
        kv[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return kv;
}

// ---- metrics ----------------------------------------------------------------------

double MetricsReport::recall_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return recall[i];
    throw ArgumentError("metrics report has no k = " + std::to_string(k));
}

double MetricsReport::mrr_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return mrr[i];
    throw ArgumentError("metrics report has no k = " + std::to_string(k));
}

std::string MetricsReport::to_kv() const {
    std::ostringstream os;
    os << "split=" << split << '\n' << "examples=" << examples << '\n' << "pairs=" << pairs << '\n';
    os << "fingerprint=" << fingerprint << '\n';
    os << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < ks.size(); ++i) os << "recall@" << ks[i] << '=' << recall[i] << '\n';
    for (std::size_t i = 0; i < ks.size(); ++i) os << "mrr@" << ks[i] << '=' << mrr[i] << '\n';
    return os.str();
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["split"] = split;
    j["examples"] = examples;
    j["pairs"] = pairs;
    j["fingerprint"] = fingerprint;
    for (std::size_t i = 0; i < ks.size(); ++i) j["recall@" + std::to_string(ks[i])] = recall[i];
    for (std::size_t i = 0; i < ks.size(); ++i) j["mrr@" + std::to_string(ks[i])] = mrr[i];
    return j;
}

void MetricsReport::save(const std::filesystem::path& stem) const {
    {
        auto out = open_output(stem.string() + ".txt");
        out << to_kv();
    }
    auto out = open_output(stem.string() + ".json");
    out << to_json().dump(2) << '\n';
}

std::vector<std::size_t> rank(std::span<const double> prob) {
    std::vector<std::size_t> order(prob.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prob[a] > prob[b]; });
    return order;
}

std::size_t rank_position(std::span<const double> prob, std::size_t item) {
    if (item >= prob.size()) throw ArgumentError("rank_position: item out of range");
    const double p = prob[item];
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < prob.size(); ++j)
        if (prob[j] > p || (prob[j] == p && j < item)) ++ahead;
    return ahead + 1;
}

MetricsReport metrics_from_ranks(const std::vector<std::vector<std::size_t>>& gold_ranks, std::vector<std::size_t> ks,
                                 const std::string& split) {
    if (gold_ranks.empty()) throw ArgumentError("evaluate: empty example set");
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    if (ks.empty() || ks.front() == 0) throw ArgumentError("evaluate: k values must be positive");
    MetricsReport r;
    r.split = split;
    r.examples = gold_ranks.size();
    r.ks = ks;
    r.recall.assign(ks.size(), 0.0);
    r.mrr.assign(ks.size(), 0.0);
    std::vector<std::size_t> hits(ks.size(), 0);
    for (const auto& ranks : gold_ranks) {
        for (auto rk : ranks) {
            ++r.pairs;
            for (std::size_t i = 0; i < ks.size(); ++i)
                if (rk <= ks[i]) {
                    ++hits[i];
                    r.mrr[i] += 1.0 / static_cast<double>(rk);
                }
        }
    }
    if (r.pairs == 0) throw ArgumentError("evaluate: examples carry no gold items");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        r.recall[i] = static_cast<double>(hits[i]) / static_cast<double>(r.pairs);
        r.mrr[i] /= static_cast<double>(r.pairs);
    }
    return r;
}

// ---- scoring ----------------------------------------------------------------------

ad::Tensor score_all(const ad::Tensor& user, const ad::Tensor& item_matrix, std::span<const std::size_t> masked) {
    if (user.rows() != 1 || user.cols() != item_matrix.cols())
        throw ShapeError("score_all: user " + user.shape().str() + " vs items " + item_matrix.shape().str());
    ad::Tensor logits = ad::matmul(item_matrix, ad::transpose(user));
    std::set<std::size_t> distinct(masked.begin(), masked.end());
    if (!distinct.empty() && distinct.size() < item_matrix.rows()) {
        const std::vector<std::size_t> pos(distinct.begin(), distinct.end());
        logits = ad::masked_fill(logits, pos, -std::numeric_limits<double>::infinity());
    }
    return ad::softmax(logits, ad::Axis::col_wise);
}

ad::Tensor rec_loss(const ad::Tensor& prob, std::span<const std::size_t> gold, bool* guarded) {
    if (gold.empty()) throw ArgumentError("rec_loss: no gold items");
    const std::vector<std::size_t> rows(gold.begin(), gold.end());
    ad::Tensor picked = ad::row_lookup(prob.cols() == 1 ? prob : ad::transpose(prob), rows);
    const bool zero = std::any_of(picked.values().begin(), picked.values().end(), [](double p) { return p == 0.0; });
    if (zero) {
        if (guarded) *guarded = true;
        picked = ad::add_scalar(picked, 1e-12);
    }
    return ad::scale(ad::mean(ad::log(picked)), -1.0);
}

// ---- model ------------------------------------------------------------------------

ColaModel::ColaModel(const Bundle& bundle, const TrainConfig& config) : bundle_(&bundle), config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const auto d = config_.dim;
    kg_ = RgcnParams::create(store_, "kg", bundle.vocab.entity_count(), bundle.item_kg.relation_count(), d,
                             config_.layers, rng);
    ig_ = RgcnParams::create(store_, "ig", bundle.interactions.node_count(), InteractionGraph::relation_count, d,
                             config_.layers, rng);
    gcn_ = GcnParams::create(store_, "gcn", bundle.word_graph.graph.node_count(), d, config_.layers, rng);
    attention_ = AttentionParams::create(store_, "pref", d, config_.scalar_gate, rng);
    for (auto* p : {&kg_, &ig_}) {
        p->norm = config_.z_norm;
        p->z = config_.z;
    }
    kg_ops_ = relational_operators(bundle.item_kg, config_.z_norm, config_.z);
    ig_ops_ = relational_operators(bundle.interactions.to_typed(), config_.z_norm, config_.z);
    word_op_ = std::make_shared<ad::SparseOperator>(bundle.word_graph.adjacency.matrix);
}

Encoded ColaModel::encode() const {
    Encoded enc;
    auto items = encode_items(bundle_->vocab, kg_ops_, kg_, bundle_->interactions, ig_ops_, ig_,
                              {!config_.ablation.ig, !config_.ablation.db});
    enc.entities = items.entities;
    enc.items = items.items;
    if (!config_.ablation.cn) enc.words = gcn_forward(word_op_, gcn_);
    else enc.words = ad::Tensor::zeros({bundle_->word_graph.graph.node_count(), config_.dim});
    return enc;
}

PreparedExample ColaModel::prepare(const RecExample& example) const {
    PreparedExample p;
    p.example = &example;
    p.retrieval = retrieve(bundle_->index, example.context_entities, config_.top_n, example.conversation_id);
    const auto& vocab = bundle_->vocab;
    for (auto e : example.context_entities)
        if (auto idx = vocab.item_index(e)) p.masked.push_back(*idx);
    for (auto e : example.gold_items) {
        auto idx = vocab.item_index(e);
        if (!idx) throw ValidationError("gold entity " + vocab.entity_key(e) + " is not an item");
        p.gold.push_back(*idx);
    }
    return p;
}

std::vector<PreparedExample> ColaModel::prepare(std::span<const RecExample> examples) const {
    std::vector<PreparedExample> out(examples.size());
    const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = prepare(examples[i]);
    return out;
}

UserRepresentation ColaModel::user_representation(const Encoded& enc, std::span<const EntityId> context_entities,
                                                  std::span<const WordId> context_words,
                                                  std::span<const EntityId> retrieved) const {
    auto ctx = gather_context(context_entities, context_words, retrieved, enc.entities, enc.words,
                              bundle_->word_graph.in_graph);
    return build_user_representation(ctx, attention_, {!config_.ablation.rt, !config_.ablation.cn});
}

UserRepresentation ColaModel::user_representation(const Encoded& enc, const PreparedExample& ex) const {
    return user_representation(enc, ex.example->context_entities, ex.example->context_words, ex.retrieval.entities);
}

ad::Tensor ColaModel::logits(const Encoded& enc, const ad::Tensor& user) const {
    return ad::matmul(enc.items, ad::transpose(user));
}

ad::Tensor ColaModel::example_loss(const Encoded& enc, const PreparedExample& ex, bool* guarded) const {
    auto user = user_representation(enc, ex);
    const std::span<const std::size_t> mask =
        config_.mask_mentioned && ex.masked.size() < item_count() ? std::span<const std::size_t>(ex.masked)
                                                                   : std::span<const std::size_t>();
    return ad::cross_entropy(logits(enc, user.vector), ex.gold, mask, guarded);
}

std::vector<double> ColaModel::probabilities(const Encoded& enc, const PreparedExample& ex) const {
    auto user = user_representation(enc, ex);
    const std::span<const std::size_t> mask =
        config_.mask_mentioned ? std::span<const std::size_t>(ex.masked) : std::span<const std::size_t>();
    auto prob = score_all(user.vector, enc.items, mask);
    return {prob.values().begin(), prob.values().end()};
}

void ColaModel::save(const std::filesystem::path& path) const { store_.save(path, config_.to_kv()); }

void ColaModel::load(const std::filesystem::path& path) { store_.load(path); }

TrainConfig ColaModel::read_config(const std::filesystem::path& checkpoint) {
    return TrainConfig::from_kv(ad::ParamStore::read_metadata(checkpoint));
}

// ---- evaluation / training ------------------------------------------------------------

MetricsReport evaluate(const ColaModel& model, std::span<const PreparedExample> examples,
                       const std::vector<std::size_t>& ks, const std::string& split) {
    if (examples.empty()) throw ArgumentError("evaluate: empty example set");
    Encoded enc;
    {
        ad::NoGradGuard no_grad;
        enc = model.encode();
    }
    std::vector<std::vector<std::size_t>> ranks(examples.size());
    const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        ad::NoGradGuard no_grad;
        const auto& ex = examples[i];
        const auto prob = model.probabilities(enc, ex);
        for (auto g : ex.gold) ranks[i].push_back(rank_position(prob, g));
    }
    auto report = metrics_from_ranks(ranks, ks, split);
    report.fingerprint = model.config().fingerprint();
    return report;
}

TrainResult train(ColaModel& model, std::span<const PreparedExample> train_examples,
                  std::span<const PreparedExample> valid_examples, const std::function<void(const EpochLog&)>& on_epoch) {
    const auto& cfg = model.config();
    if (train_examples.empty()) throw ArgumentError("train: no training examples");
    ad::AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    adam.clip = cfg.clip;
    adam.validate();

    auto& store = model.params();
    store.zero_grad();
    std::vector<std::size_t> order(train_examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    TrainResult result;
    std::pair<double, double> best{-1.0, -1.0};
    std::map<std::string, std::vector<double>> best_values;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochLog log;
        log.epoch = epoch;
        double loss_sum = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const auto end = std::min(order.size(), start + cfg.batch_size);
            const Encoded enc = model.encode();
            std::vector<ad::Tensor> losses;
            losses.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                bool guarded = false;
                losses.push_back(model.example_loss(enc, train_examples[order[i]], &guarded));
                log.guarded += guarded ? 1 : 0;
            }
            ad::Tensor batch_loss = ad::mean(ad::concat_rows(losses));
            const double value = batch_loss.item();
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "non-finite training loss at epoch " << epoch << ", batch " << batch
                   << " (parameter norm " << store.value_norm() << ", previous gradient norm " << store.grad_norm() << ")";
                throw NumericError(os.str());
            }
            loss_sum += value * static_cast<double>(end - start);
            ad::backward(batch_loss);
            ad::clip_gradients(store, cfg.clip);
            ad::adam_step(store, adam);
        }
        log.train_loss = loss_sum / static_cast<double>(order.size());
        if (!valid_examples.empty()) {
            log.has_valid = true;
            log.valid = evaluate(model, valid_examples, kDefaultKs, "valid");
            const std::pair<double, double> key{log.valid.recall_at(50), log.valid.mrr_at(50)};
            if (key > best) {
                best = key;
                result.best_epoch = epoch;
                result.best_valid = log.valid;
                best_values = store.snapshot();
            }
        } else {
            result.best_epoch = epoch;
        }
        if (on_epoch) on_epoch(log);
        result.epochs.push_back(std::move(log));
    }
    if (!best_values.empty()) store.restore(best_values);
    return result;
}

ExperimentResult run_experiment(ColaModel& model, const std::function<void(const EpochLog&)>& on_epoch) {
    const auto& b = model.bundle();
    const auto train_ex = split_view(b.examples, Split::train);
    const auto valid_ex = split_view(b.examples, Split::valid);
    const auto test_ex = split_view(b.examples, Split::test);
    const auto train_p = model.prepare(train_ex);
    const auto valid_p = model.prepare(valid_ex);
    const auto test_p = model.prepare(test_ex);
    ExperimentResult r;
    r.training = train(model, train_p, valid_p, on_epoch);
    r.test = evaluate(model, test_p, kDefaultKs, "test");
    return r;
}

ExperimentResult run_experiment(const Bundle& bundle, const TrainConfig& config,
                                const std::function<void(const EpochLog&)>& on_epoch) {
    ColaModel model(bundle, config);
    return run_experiment(model, on_epoch);
}

std::vector<AblationRow> ablate(const Bundle& bundle, const TrainConfig& base, const Ablation& flags,
                                bool include_combined) {
    std::vector<std::pair<std::string, Ablation>> variants{{"COLA", base.ablation}};
    auto with = [&](auto set) {
        Ablation a = base.ablation;
        set(a);
        return a;
    };
    if (flags.ig) variants.push_back({"w/o IG", with([](Ablation& a) { a.ig = true; })});
    if (flags.rt) variants.push_back({"w/o RT", with([](Ablation& a) { a.rt = true; })});
    if (flags.db) variants.push_back({"w/o DB", with([](Ablation& a) { a.db = true; })});
    if (flags.cn) variants.push_back({"w/o CN", with([](Ablation& a) { a.cn = true; })});
    if (include_combined && flags.any()) {
        Ablation all = base.ablation;
        all.ig |= flags.ig;
        all.rt |= flags.rt;
        all.db |= flags.db;
        all.cn |= flags.cn;
        variants.push_back({"w/o " + flags.str(), all});
    }
    std::vector<AblationRow> rows;
    for (const auto& [label, ablation] : variants) {
        TrainConfig cfg = base;
        cfg.ablation = ablation;
        rows.push_back({label, ablation, run_experiment(bundle, cfg).test});
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "model";
    if (!rows.empty())
        for (auto k : rows.front().test.ks) os << std::setw(10) << ("R@" + std::to_string(k));
    if (!rows.empty())
        for (auto k : rows.front().test.ks) os << std::setw(10) << ("MRR@" + std::to_string(k));
    os << '\n';
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        os << std::setw(16) << r.label;
        for (double v : r.test.recall) os << std::setw(10) << v;
        for (double v : r.test.mrr) os << std::setw(10) << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace cola
