#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cola/errors.hpp"
#include "cola/recommender.hpp"
#include "cola/synthetic.hpp"
#include "cola/text_io.hpp"

namespace {

using namespace cola;

struct BundleArgs {
    std::string dir;
    std::string index_path;

    Bundle load() const {
        std::optional<std::filesystem::path> idx;
        if (!index_path.empty()) idx = index_path;
        return Bundle::read(dir, idx);
    }
};

// training flags; only the ones given on the command line override the config file
struct ConfigArgs {
    std::string config_file;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key = value training config file");
        for (const char* key : {"dim", "layers", "epochs", "batch_size", "learning_rate", "clip", "top_n", "seed",
                                "mask_mentioned", "scalar_gate", "z_norm", "z"}) {
            std::string flag = std::string("--") + key;
            for (auto& c : flag)
                if (c == '_') c = '-';
            cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; },
                                                  std::string("override config key ") + key);
        }
    }

    TrainConfig resolve() const {
        TrainConfig cfg;
        if (!config_file.empty()) {
            auto in = open_input(config_file);
            cfg.apply(parse_kv(in));
        }
        cfg.apply(overrides);
        cfg.validate();
        return cfg;
    }
};

std::vector<std::size_t> parse_ks(const std::string& list) {
    std::vector<std::size_t> ks;
    std::stringstream ss(list);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(part, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (part.empty() || pos != part.size() || v == 0) throw ArgumentError("--k expects positive integers, got '" + part + "'");
        ks.push_back(v);
    }
    if (ks.empty()) throw ArgumentError("--k is empty");
    return ks;
}

void print_report(const MetricsReport& r) { std::cout << r.to_kv(); }

int run_ingest(const BundleSources& src, const std::string& out_dir, const std::string& index_path) {
    Bundle b;
    try {
        b = Bundle::from_sources(src);
    } catch (const MissingArtifact& e) {
        throw ValidationError(e.what());
    }
    std::optional<std::filesystem::path> idx;
    if (!index_path.empty()) idx = index_path;
    b.write(out_dir, idx);
    print_stats(std::cout, corpus_stats(b.conversations, b.vocab));
    return 0;
}

int run_train(const BundleArgs& ba, const ConfigArgs& ca, const std::string& checkpoint, const std::string& report_dir) {
    const TrainConfig cfg = ca.resolve();
    const Bundle bundle = ba.load();
    ColaModel model(bundle, cfg);
    std::filesystem::create_directories(report_dir);
    {
        auto out = open_output(std::filesystem::path(report_dir) / "config.txt");
        out << cfg.to_kv();
    }
    auto epochs = open_output(std::filesystem::path(report_dir) / "epochs.jsonl");
    auto result = run_experiment(model, [&](const EpochLog& log) {
        nlohmann::ordered_json j;
        j["epoch"] = log.epoch;
        j["train_loss"] = log.train_loss;
        j["guarded"] = log.guarded;
        if (log.has_valid) j["valid"] = log.valid.to_json();
        j["fingerprint"] = cfg.fingerprint();
        epochs << j.dump() << '\n';
        std::cout << "epoch " << log.epoch << " loss " << log.train_loss;
        if (log.has_valid) std::cout << " valid R@50 " << log.valid.recall_at(50);
        std::cout << '\n';
    });
    model.save(checkpoint);
    result.test.save(std::filesystem::path(report_dir) / "test");
    std::cout << "best epoch " << result.training.best_epoch << '\n';
    print_report(result.test);
    return 0;
}

int run_eval(const BundleArgs& ba, const std::string& checkpoint, const std::string& split_name, const std::string& klist,
             const std::string& out) {
    const auto ks = parse_ks(klist);
    const Split split = parse_split(split_name);
    if (!std::filesystem::exists(checkpoint)) throw MissingArtifact("checkpoint not found: " + checkpoint);
    const Bundle bundle = ba.load();
    ColaModel model(bundle, ColaModel::read_config(checkpoint));
    model.load(checkpoint);
    const auto examples = split_view(bundle.examples, split);
    const auto prepared = model.prepare(examples);
    auto report = evaluate(model, prepared, ks, std::string(to_string(split)));
    if (!out.empty()) report.save(out);
    print_report(report);
    return 0;
}

int run_ablate(const BundleArgs& ba, const ConfigArgs& ca, const std::string& without, bool combined,
               const std::string& out) {
    const Ablation flags = Ablation::parse(without);
    const TrainConfig cfg = ca.resolve();
    const Bundle bundle = ba.load();
    const auto rows = ablate(bundle, cfg, flags, combined);
    if (!out.empty()) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : rows) j.push_back({{"label", r.label}, {"without", r.ablation.str()}, {"test", r.test.to_json()}});
        open_output(out) << j.dump(2) << '\n';
    }
    if (!flags.any()) print_report(rows.front().test);
    else std::cout << format_ablation_table(rows);
    return 0;
}

int run_retrieve(const BundleArgs& ba, const std::string& conversation, std::size_t top_n) {
    const Bundle bundle = ba.load();
    const auto it = std::find_if(bundle.conversations.begin(), bundle.conversations.end(),
                                 [&](const Conversation& c) { return c.conversation_id == conversation; });
    if (it == bundle.conversations.end()) throw ArgumentError("unknown conversation: " + conversation);
    std::vector<EntityId> query;
    for (const auto& u : it->utterances)
        for (const auto& m : u.mentions) query.push_back(m.entity);
    const auto r = retrieve(bundle.index, query, top_n, conversation);
    if (r.empty_query) std::cout << "# empty query\n";
    std::cout << std::setprecision(12);
    for (const auto& [id, score] : r.ranked) std::cout << "conversation\t" << id << '\t' << score << '\n';
    for (auto e : r.entities) std::cout << "entity\t" << bundle.vocab.entity_key(e) << '\t' << bundle.vocab.entity_name(e) << '\n';
    return 0;
}

int run_recommend(const BundleArgs& ba, const std::string& checkpoint, std::size_t k) {
    if (!std::filesystem::exists(checkpoint)) throw MissingArtifact("checkpoint not found: " + checkpoint);
    const Bundle bundle = ba.load();
    ColaModel model(bundle, ColaModel::read_config(checkpoint));
    model.load(checkpoint);
    ad::NoGradGuard no_grad;
    const Encoded enc = model.encode();
    const auto& vocab = bundle.vocab;

    RecExample context;
    std::string line;
    std::cout << std::fixed << std::setprecision(6);
    while (std::getline(std::cin, line)) {
        if (is_blank(line)) {
            context = RecExample{};
            std::cout << "# context cleared\n";
            continue;
        }
        std::stringstream ss(line);
        std::string part;
        while (std::getline(ss, part, ',')) {
            part = trim(part);
            if (part.empty()) continue;
            auto id = vocab.find_entity(part);
            if (!id) {
                std::cerr << "unknown entity: " << part << '\n';
                continue;
            }
            if (std::find(context.context_entities.begin(), context.context_entities.end(), *id) ==
                context.context_entities.end())
                context.context_entities.push_back(*id);
        }
        PreparedExample ex;
        ex.example = &context;
        ex.retrieval = retrieve(bundle.index, context.context_entities, model.config().top_n);
        for (auto e : context.context_entities)
            if (auto idx = vocab.item_index(e)) ex.masked.push_back(*idx);
        const auto prob = model.probabilities(enc, ex);
        const auto order = rank(prob);
        for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
            const auto e = vocab.items()[order[i]];
            std::cout << i + 1 << '\t' << vocab.entity_key(e) << '\t' << vocab.entity_name(e) << '\t' << prob[order[i]] << '\n';
        }
        std::cout << '\n' << std::flush;
    }
    return 0;
}

int run_synth(const std::string& kind, std::uint64_t seed, const std::string& out) {
    synthetic::Corpus c;
    if (kind == "toy") {
        c = synthetic::toy();
    } else if (kind == "popularity") {
        synthetic::PopularityOptions o;
        o.seed = seed;
        c = synthetic::popularity(o);
    } else if (kind == "clusters") {
        synthetic::ClusterOptions o;
        o.seed = seed;
        c = synthetic::clusters(o);
    } else {
        throw ArgumentError("unknown synthetic corpus kind: " + kind);
    }
    c.write(out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"COLA conversational recommender"};
    app.require_subcommand(1);

    BundleArgs ba;
    ConfigArgs ca;
    auto add_bundle = [&](CLI::App* cmd) {
        cmd->add_option("--bundle", ba.dir, "artifact directory written by ingest")->required();
        cmd->add_option("--index-path", ba.index_path, "BM25 index file (default <bundle>/bm25.idx)");
    };

    BundleSources src;
    std::string stop_words, lexicon, out_dir;
    auto* ingest = app.add_subcommand("ingest", "validate inputs and write the artifact bundle");
    ingest->add_option("--entities", src.entities, "entity file")->required();
    ingest->add_option("--corpus", src.corpus, "JSONL conversations")->required();
    ingest->add_option("--item-kg", src.item_kg, "item knowledge graph triples")->required();
    ingest->add_option("--word-graph", src.word_graph, "word co-occurrence edges")->required();
    ingest->add_option("--stop-words", stop_words, "stop-word list (default builtin)");
    ingest->add_option("--lexicon", lexicon, "sentiment keyword lexicon");
    ingest->add_option("--out", out_dir, "output directory")->required();
    ingest->add_option("--index-path", ba.index_path, "BM25 index file (default <out>/bm25.idx)");

    std::string checkpoint, report_dir = "reports";
    auto* train = app.add_subcommand("train", "train, select on valid, report test");
    add_bundle(train);
    ca.attach(train);
    train->add_option("--checkpoint", checkpoint, "checkpoint to write")->required();
    train->add_option("--report-dir", report_dir, "per-epoch reports");

    std::string split = "test", klist = "1,10,50", out;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_bundle(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint to read")->required();
    eval->add_option("--split", split, "train, valid or test");
    eval->add_option("--k", klist, "comma-separated cutoffs");
    eval->add_option("--out", out, "write <out>.txt and <out>.json");

    std::string without;
    bool combined = false;
    auto* abl = app.add_subcommand("ablate", "train the full model and each ablation");
    add_bundle(abl);
    ca.attach(abl);
    abl->add_option("--without", without, "comma-separated subset of ig,rt,db,cn")->required();
    abl->add_flag("--combined", combined, "also drop all listed components at once");
    abl->add_option("--out", out, "write rows as JSON");

    std::string conversation;
    std::size_t top_n = 1;
    auto* ret = app.add_subcommand("retrieve", "show conversations similar to one in the bundle");
    add_bundle(ret);
    ret->add_option("--conversation", conversation, "conversation id")->required();
    ret->add_option("--top-n", top_n, "number of conversations")->check(CLI::PositiveNumber);

    std::size_t k = 10;
    auto* rec = app.add_subcommand("recommend", "read entity mentions from stdin, print top items per line");
    add_bundle(rec);
    rec->add_option("--checkpoint", checkpoint, "checkpoint to read")->required();
    rec->add_option("--k", k, "items per line")->check(CLI::PositiveNumber);

    std::string kind = "toy";
    std::uint64_t seed = 1;
    auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
    synth->add_option("--kind", kind, "toy, popularity or clusters");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            if (!stop_words.empty()) src.stop_words = stop_words;
            if (!lexicon.empty()) src.lexicon = lexicon;
            return run_ingest(src, out_dir, ba.index_path);
        }
        if (*train) return run_train(ba, ca, checkpoint, report_dir);
        if (*eval) return run_eval(ba, checkpoint, split, klist, out);
        if (*abl) return run_ablate(ba, ca, without, combined, out);
        if (*ret) return run_retrieve(ba, conversation, top_n);
        if (*rec) return run_recommend(ba, checkpoint, k);
        if (*synth) return run_synth(kind, seed, out_dir);
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
