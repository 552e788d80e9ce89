#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cola/bundle.hpp"
#include "cola/retrieval.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "cola_cli_test";

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// runs the CLI with stdout/stderr captured to files under kWork
int run_cli(const std::string& args, const std::string& tag = "out", const std::string& stdin_text = "") {
    std::string cmd = std::string(COLA_CLI_PATH) + " " + args + " > " + (kWork / (tag + ".stdout")).string() + " 2> " +
                      (kWork / (tag + ".stderr")).string();
    if (!stdin_text.empty()) {
        std::ofstream(kWork / (tag + ".stdin")) << stdin_text;
        cmd += " < " + (kWork / (tag + ".stdin")).string();
    }
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string out(const std::string& tag = "out") { return slurp(kWork / (tag + ".stdout")); }
std::string err(const std::string& tag = "out") { return slurp(kWork / (tag + ".stderr")); }

std::string ingest_args(const fs::path& raw, const fs::path& dest, const std::string& kg = "item_kg.tsv") {
    return "ingest --entities " + (raw / "entities.tsv").string() + " --corpus " + (raw / "corpus.jsonl").string() +
           " --item-kg " + (raw / kg).string() + " --word-graph " + (raw / "word_graph.tsv").string() + " --out " +
           dest.string();
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
        REQUIRE(run_cli("synth --kind toy --out " + (kWork / "raw").string()) == 0);
        REQUIRE(run_cli(ingest_args(kWork / "raw", kWork / "bundle")) == 0);
    }
    std::string bundle() const { return " --bundle " + (kWork / "bundle").string(); }
};

}  // namespace

TEST_CASE("ingest prints statistics and writes the bundle") {
    Workspace w;
    CHECK(run_cli(ingest_args(kWork / "raw", kWork / "again")) == 0);
    CHECK(out() == "users\t3\nconversations\t4\nutterances\t12\nitems\t6\n");
    for (const char* f : {"entities.tsv", "words.tsv", "corpus.jsonl", "interaction_graph.tsv", "bm25.idx", "stats.txt"})
        CHECK(fs::exists(kWork / "again" / f));
}

TEST_CASE("ingest with a missing KG file exits 2 and names the path") {
    Workspace w;
    CHECK(run_cli(ingest_args(kWork / "raw", kWork / "bad", "missing_kg.tsv")) == 2);
    CHECK(err().find("missing_kg.tsv") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    Workspace w;
    CHECK(run_cli("") == 2);
    CHECK(run_cli("train" + w.bundle()) == 2);
    CHECK(run_cli("ablate" + w.bundle() + " --without ig,bogus") == 2);
    CHECK(run_cli("ablate" + w.bundle() + " --without rt,rt") == 2);
    CHECK(run_cli("eval" + w.bundle() + " --checkpoint x --k 1,zero") == 2);
    CHECK(run_cli("train" + w.bundle() + " --checkpoint " + (kWork / "c").string() + " --dim 0") == 2);
}

TEST_CASE("missing checkpoint exits 3") {
    Workspace w;
    CHECK(run_cli("eval" + w.bundle() + " --checkpoint " + (kWork / "none.ckpt").string()) == 3);
    CHECK(run_cli("recommend" + w.bundle() + " --checkpoint " + (kWork / "none.ckpt").string()) == 3);
    CHECK(run_cli("eval --bundle " + (kWork / "nobundle").string() + " --checkpoint x") == 3);
}

TEST_CASE("diverging training exits 4") {
    Workspace w;
    CHECK(run_cli("train" + w.bundle() + " --checkpoint " + (kWork / "d.ckpt").string() +
               " --dim 4 --epochs 3 --batch-size 2 --learning-rate 1e200 --report-dir " + (kWork / "drep").string()) == 4);
}

TEST_CASE("train then eval, with config file and flag overrides") {
    Workspace w;
    std::ofstream(kWork / "cfg.txt") << "dim = 6\nepochs = 4\nbatch_size = 2\n";
    const auto ck = (kWork / "model.ckpt").string();
    const auto rep = (kWork / "rep").string();
    REQUIRE(run_cli("train" + w.bundle() + " --config " + (kWork / "cfg.txt").string() + " --epochs 2 --checkpoint " + ck +
                 " --report-dir " + rep) == 0);
    const auto cfg = slurp(fs::path(rep) / "config.txt");
    CHECK(cfg.find("dim = 6") != std::string::npos);
    CHECK(cfg.find("epochs = 2") != std::string::npos);
    std::ifstream epochs(fs::path(rep) / "epochs.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(epochs, line)) ++n;
    CHECK(n == 2);
    CHECK(fs::exists(fs::path(rep) / "test.json"));

    REQUIRE(run_cli("eval" + w.bundle() + " --checkpoint " + ck + " --split test --k 1,10,50") == 0);
    const auto eval_out = out();
    CHECK(eval_out.find("recall@10=") != std::string::npos);
    CHECK(eval_out == slurp(fs::path(rep) / "test.txt"));

    // an empty ablation list reproduces eval on the same config
    REQUIRE(run_cli("ablate" + w.bundle() + " --config " + (kWork / "cfg.txt").string() + " --epochs 2 --without \"\"",
                 "abl") == 0);
    CHECK(out("abl") == eval_out);
}

TEST_CASE("identical runs give byte-identical outputs") {
    Workspace w;
    for (const char* tag : {"r1", "r2"})
        REQUIRE(run_cli("train" + w.bundle() + " --dim 4 --epochs 2 --batch-size 2 --checkpoint " +
                     (kWork / (std::string(tag) + ".ckpt")).string() + " --report-dir " + (kWork / tag).string(),
                     tag) == 0);
    CHECK(out("r1") == out("r2"));
    CHECK(slurp(kWork / "r1" / "epochs.jsonl") == slurp(kWork / "r2" / "epochs.jsonl"));
    CHECK(slurp(kWork / "r1" / "test.json") == slurp(kWork / "r2" / "test.json"));
    CHECK(slurp(kWork / "r1.ckpt") == slurp(kWork / "r2.ckpt"));
}

TEST_CASE("untrained eval is near uniform") {
    Workspace w;
    const auto ck = (kWork / "frozen.ckpt").string();
    REQUIRE(run_cli("train" + w.bundle() + " --dim 4 --epochs 1 --learning-rate 0 --checkpoint " + ck + " --report-dir " +
                 (kWork / "frozen").string()) == 0);
    REQUIRE(run_cli("eval" + w.bundle() + " --checkpoint " + ck + " --split train --k 1,6") == 0);
    // every item is ranked somewhere in the top 6 of 6
    CHECK(out().find("recall@6=1.000000") != std::string::npos);
}

TEST_CASE("retrieve matches the library ranking") {
    Workspace w;
    REQUIRE(run_cli("retrieve" + w.bundle() + " --conversation c4 --top-n 2") == 0);
    const auto bundle = cola::Bundle::read(kWork / "bundle");
    std::vector<cola::EntityId> query;
    for (const auto& c : bundle.conversations)
        if (c.conversation_id == "c4")
            for (const auto& u : c.utterances)
                for (const auto& m : u.mentions) query.push_back(m.entity);
    const auto r = cola::retrieve(bundle.index, query, 2, std::string("c4"));
    std::istringstream lines(out());
    std::string line;
    std::size_t i = 0;
    while (std::getline(lines, line))
        if (line.rfind("conversation\t", 0) == 0) {
            REQUIRE(i < r.ranked.size());
            CHECK(line.find("\t" + r.ranked[i].first + "\t") != std::string::npos);
            ++i;
        }
    CHECK(i == r.ranked.size());
    CHECK(run_cli("retrieve" + w.bundle() + " --conversation nope") == 2);
}

TEST_CASE("recommend answers each input line") {
    Workspace w;
    const auto ck = (kWork / "rec.ckpt").string();
    REQUIRE(run_cli("train" + w.bundle() + " --dim 4 --epochs 1 --checkpoint " + ck + " --report-dir " +
                 (kWork / "rec").string()) == 0);
    REQUIRE(run_cli("recommend" + w.bundle() + " --checkpoint " + ck + " --k 3", "rec", "i004\nitem 2, unknown\n") == 0);
    std::istringstream lines(out("rec"));
    std::string line;
    int rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) {
            ++rows;
            CHECK(line.find("i004") == std::string::npos);
        }
    CHECK(rows == 6);
    CHECK(err("rec").find("unknown") != std::string::npos);
}
