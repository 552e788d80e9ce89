#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cola/errors.hpp"
#include "cola/recommender.hpp"
#include "cola/synthetic.hpp"
#include "oracles.hpp"

using namespace cola;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.dim = 8;
    c.epochs = 3;
    c.batch_size = 4;
    c.seed = 5;
    return c;
}

const Bundle& toy_bundle() {
    static const Bundle b = synthetic::toy().bundle();
    return b;
}

const Bundle& cluster_bundle() {
    static const Bundle b = [] {
        synthetic::ClusterOptions o;
        o.users = 40;
        o.items = 40;
        o.clusters = 8;
        o.conversations = 200;
        return synthetic::clusters(o).bundle();
    }();
    return b;
}

}  // namespace

TEST_CASE("metrics match the brute-force oracle and grow with k") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        std::vector<std::vector<std::size_t>> ranked(n), gold(n), ranks(n);
        for (std::size_t i = 0; i < n; ++i) {
            ranked[i].resize(m);
            std::iota(ranked[i].begin(), ranked[i].end(), 0);
            std::shuffle(ranked[i].begin(), ranked[i].end(), rng);
            const auto g = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(3, m))(rng);
            std::vector<std::size_t> pool(m);
            std::iota(pool.begin(), pool.end(), 0);
            std::shuffle(pool.begin(), pool.end(), rng);
            gold[i].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(g));
            for (auto x : gold[i])
                ranks[i].push_back(static_cast<std::size_t>(std::find(ranked[i].begin(), ranked[i].end(), x) - ranked[i].begin()) + 1);
        }
        const std::vector<std::size_t> ks{1, 3, 10, 50};
        auto r = metrics_from_ranks(ranks, ks, "test");
        for (std::size_t i = 0; i < ks.size(); ++i) {
            auto o = oracle::brute_metrics(ranked, gold, ks[i]);
            CHECK(r.recall[i] == o.recall);
            CHECK(r.mrr[i] == o.mrr);
            if (i) {
                CHECK(r.recall[i] >= r.recall[i - 1]);
                CHECK(r.mrr[i] >= r.mrr[i - 1]);
            }
        }
    }
    CHECK_THROWS_AS(metrics_from_ranks({}, {1}, "x"), ArgumentError);
    CHECK_THROWS_AS(metrics_from_ranks({{1}}, {0}, "x"), ArgumentError);
}

TEST_CASE("ranking breaks ties toward the lower index") {
    const std::vector<double> p{0.2, 0.3, 0.2, 0.3};
    CHECK(rank(p) == std::vector<std::size_t>{1, 3, 0, 2});
    CHECK(rank_position(p, 3) == 2);
    CHECK(rank_position(p, 0) == 3);
    CHECK(rank_position(p, 2) == 4);
    CHECK_THROWS_AS(rank_position(p, 4), ArgumentError);
}

TEST_CASE("scoring is a softmax over item dot products") {
    auto items = ad::Tensor::from({6, 2}, {1, 0, 0, 1, 1, 1, -1, 0, 0.5, 0.5, 2, -1});
    auto user = ad::Tensor::row({0.3, -0.7});
    auto p = score_all(user, items);
    double z = 0.0, s[6];
    for (int i = 0; i < 6; ++i) {
        s[i] = items.at(i, 0) * 0.3 + items.at(i, 1) * -0.7;
        z += std::exp(s[i]);
    }
    double total = 0.0;
    for (int i = 0; i < 6; ++i) {
        CHECK(std::abs(p.values()[i] - std::exp(s[i]) / z) <= 1e-12);
        total += p.values()[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<std::size_t> masked{0, 2};
    auto pm = score_all(user, items, masked);
    CHECK(pm.values()[0] == 0.0);
    CHECK(pm.values()[2] == 0.0);
    CHECK(std::accumulate(pm.values().begin(), pm.values().end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
    auto pa = score_all(user, items, all);
    CHECK(pa.values()[0] == doctest::Approx(p.values()[0]));
    CHECK_THROWS_AS(score_all(ad::Tensor::row({1.0}), items), ShapeError);

    auto zero_user = score_all(ad::Tensor::row({0.0, 0.0}), items);
    for (double x : zero_user.values()) CHECK(x == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("recommendation loss is the mean negative log probability") {
    auto prob = ad::Tensor::from({4, 1}, {0.1, 0.2, 0.3, 0.4});
    const std::vector<std::size_t> gold{1, 3};
    CHECK(rec_loss(prob, gold).item() == doctest::Approx(-(std::log(0.2) + std::log(0.4)) / 2));
    auto zero = ad::Tensor::from({2, 1}, {0.0, 1.0});
    bool guarded = false;
    const std::vector<std::size_t> g0{0};
    CHECK(std::isfinite(rec_loss(zero, g0, &guarded).item()));
    CHECK(guarded);
    CHECK_THROWS_AS(rec_loss(prob, std::vector<std::size_t>{}), ArgumentError);
}

TEST_CASE("ablation flags") {
    auto a = Ablation::parse("ig, cn");
    CHECK(a.ig);
    CHECK(a.cn);
    CHECK_FALSE(a.rt);
    CHECK(a.str() == "ig,cn");
    CHECK_FALSE(Ablation::parse("").any());
    CHECK_THROWS_AS(Ablation::parse("ig,xx"), ArgumentError);
    CHECK_THROWS_AS(Ablation::parse("rt,rt"), ArgumentError);
}

TEST_CASE("training config serialization") {
    TrainConfig c;
    c.dim = 16;
    c.learning_rate = 0.0125;
    c.ablation = Ablation::parse("rt");
    c.z_norm = ZNorm::in_degree;
    auto back = TrainConfig::from_kv(c.to_kv());
    CHECK(back.to_kv() == c.to_kv());
    CHECK(back.fingerprint() == c.fingerprint());
    CHECK(back.fingerprint().size() == 16);
    CHECK(TrainConfig{}.fingerprint() != c.fingerprint());

    std::istringstream in("# comment\ndim = 4\n\nepochs=2 # trailing\n");
    auto kv = parse_kv(in);
    CHECK(kv.at("dim") == "4");
    CHECK(kv.at("epochs") == "2");
    TrainConfig d;
    CHECK_THROWS_AS(d.apply({{"bogus", "1"}}), ConfigError);
    CHECK_THROWS_AS(d.apply({{"dim", "abc"}}), ConfigError);
    d.apply({{"dim", "0"}});
    CHECK_THROWS_AS(d.validate(), ConfigError);
    std::istringstream bad("dim 4\n");
    CHECK_THROWS_AS(parse_kv(bad), ParseError);
}

TEST_CASE("metrics report serialization") {
    auto r = metrics_from_ranks({{1, 4}, {12}}, {1, 10}, "valid");
    r.fingerprint = "abc";
    CHECK(r.recall_at(10) == doctest::Approx(2.0 / 3.0));
    CHECK(r.mrr_at(10) == doctest::Approx((1.0 + 0.25) / 3.0));
    CHECK_THROWS_AS(r.recall_at(5), ArgumentError);
    auto j = r.to_json();
    CHECK(j["split"] == "valid");
    CHECK(j["pairs"] == 3);
    CHECK(r.to_kv().find("recall@10=0.666667") != std::string::npos);
}

TEST_CASE("end-to-end gradients match finite differences on the toy instance") {
    const auto& b = toy_bundle();
    auto cfg = small_config();
    cfg.dim = 4;
    ColaModel model(b, cfg);
    const auto train = split_view(b.examples, Split::train);
    const auto prepared = model.prepare(train);
    auto loss = [&](ad::ParamStore&) {
        const auto enc = model.encode();
        std::vector<ad::Tensor> parts;
        for (const auto& ex : prepared) parts.push_back(model.example_loss(enc, ex));
        return ad::mean(ad::concat_rows(parts));
    };
    std::mt19937_64 rng(1);
    auto coords = ad::sample_coordinates(model.params(), 50, rng);
    auto result = ad::finite_diff_check(model.params(), loss, coords);
    CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("masked items get zero probability and the rest sum to one") {
    const auto& b = cluster_bundle();
    ColaModel model(b, small_config());
    ad::NoGradGuard guard;
    const auto enc = model.encode();
    const auto test = split_view(b.examples, Split::test);
    for (const auto& ex : model.prepare(test)) {
        const auto p = model.probabilities(enc, ex);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        for (auto m : ex.masked) CHECK(p[m] == 0.0);
        // retrieval never returns the example's own conversation
        for (const auto& [id, _] : ex.retrieval.ranked) CHECK(id != ex.example->conversation_id);
    }
}

TEST_CASE("untrained model is close to the uniform baseline") {
    const auto& b = cluster_bundle();
    ColaModel model(b, small_config());
    const auto test = split_view(b.examples, Split::test);
    auto r = evaluate(model, model.prepare(test), {1, 10}, "test");
    const double m = static_cast<double>(model.item_count());
    CHECK(r.recall_at(1) < 5.0 / m);
    CHECK(r.recall_at(10) < 0.6);
}

TEST_CASE("training lowers the loss and is deterministic") {
    const auto& b = cluster_bundle();
    auto cfg = small_config();
    cfg.epochs = 6;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    auto first = run_experiment(b, cfg);
    auto second = run_experiment(b, cfg);
    CHECK(first.test == second.test);
    CHECK(first.training.epochs.back().train_loss < first.training.epochs.front().train_loss);
    CHECK(first.training.best_epoch >= 1);
    CHECK(first.test.fingerprint == cfg.fingerprint());
}

TEST_CASE("zero learning rate leaves the model untouched") {
    const auto& b = toy_bundle();
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    ColaModel model(b, cfg);
    const auto before = model.params().snapshot();
    run_experiment(model);
    CHECK(model.params().snapshot() == before);
}

TEST_CASE("checkpoint round trip reproduces predictions") {
    const auto& b = toy_bundle();
    auto cfg = small_config();
    cfg.learning_rate = 0.05;
    ColaModel model(b, cfg);
    run_experiment(model);
    const auto path = std::filesystem::temp_directory_path() / "cola_test_model";
    model.save(path);
    auto read = ColaModel::read_config(path);
    CHECK(read.to_kv() == cfg.to_kv());
    ColaModel copy(b, read);
    copy.load(path);
    ad::NoGradGuard guard;
    const auto e1 = model.encode(), e2 = copy.encode();
    const auto test = split_view(b.examples, Split::test);
    const auto ex = model.prepare(test.front());
    CHECK(model.probabilities(e1, ex) == copy.probabilities(e2, ex));
    auto other = cfg;
    other.dim = 6;
    ColaModel wrong(b, other);
    CHECK_THROWS(wrong.load(path));
    std::filesystem::remove(path);
}

TEST_CASE("diverging training raises a numeric error") {
    const auto& b = toy_bundle();
    auto cfg = small_config();
    cfg.learning_rate = 1e200;
    cfg.epochs = 5;
    CHECK_THROWS_AS(run_experiment(b, cfg), NumericError);
}

TEST_CASE("every ablation runs and produces a row") {
    const auto& b = toy_bundle();
    auto cfg = small_config();
    cfg.epochs = 1;
    auto rows = ablate(b, cfg, Ablation::parse("ig,rt,db,cn"), true);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].label == "COLA");
    CHECK(rows[1].label == "w/o IG");
    CHECK(rows[5].ablation.any());
    auto table = format_ablation_table(rows);
    CHECK(table.find("w/o RT") != std::string::npos);
    CHECK(ablate(b, cfg, Ablation{}, false).size() == 1);
}
