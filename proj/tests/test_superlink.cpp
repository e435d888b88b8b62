#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "numcore/gradcheck.hpp"
#include "numcore/tape.hpp"
#include "superlink/superlink.hpp"

using namespace sl;
namespace nc = numcore;
using namespace numcore::ops;

static SuperLink make_sl(uint64_t seed, SuperLinkConfig cfg = {}) {
    tv::Vocabulary v = tv::Vocabulary::standard();
    std::mt19937_64 rng(seed);
    return SuperLink(v, 64, cfg, rng);
}

TEST_CASE("bank shapes and sharing") {
    SuperLink s = make_sl(1);
    CHECK(s.banks.at("det").q.shape() == nc::Shape{4, 64});
    CHECK(s.banks.at("gen").q.shape() == nc::Shape{64, 64});
    CHECK(s.banks.at("det").q.node() != s.banks.at("pose").q.node());

    SuperLinkConfig shared;
    shared.shared_banks = true;
    SuperLink sh = make_sl(2, shared);
    CHECK(sh.banks.at("det").q.node() == sh.banks.at("pose").q.node());
    CHECK(sh.banks.at("det").q.node() == sh.banks.at("seg").q.node());
    CHECK(sh.banks.at("gen").q.node() == sh.banks.at("edit").q.node());
    CHECK(sh.banks.at("det").q.node() != sh.banks.at("gen").q.node());

    nn::Params p;
    sh.collect_banks("bank", p);
    CHECK(p.size() == 2);  // one per distinct N
}

TEST_CASE("projection identity-equivalent configuration") {
    bool saved = nc::modes().f32_compute;
    nc::modes().f32_compute = false;
    SuperLink s = make_sl(3);
    auto & mlp = s.banks.at("det").proj;
    const int C = 64;
    // fc1: y_j = x_j + 30 for j < C (gelu saturates to identity there);
    // fc2 maps it back and subtracts the bias
    std::fill(mlp.fc1.w.data().begin(), mlp.fc1.w.data().end(), 0.0);
    std::fill(mlp.fc2.w.data().begin(), mlp.fc2.w.data().end(), 0.0);
    for (int j = 0; j < C; j++) {
        mlp.fc1.w.data()[(size_t) j * 4 * C + j] = 1.0;
        mlp.fc1.b.data()[j] = 30.0;
        mlp.fc2.w.data()[(size_t) j * C + j] = 1.0;
        mlp.fc2.b.data()[j] = -30.0;
    }
    std::mt19937_64 rng(4);
    nc::Tensor h = nc::randn({4, C}, rng);
    nc::Tensor y = s.project("det", h);
    for (size_t i = 0; i < h.numel(); i++)
        CHECK(y.data()[i] == doctest::Approx(h.data()[i]).epsilon(1e-12));
    nc::modes().f32_compute = saved;
}

TEST_CASE("gradcheck through project") {
    SuperLink s = make_sl(5);
    std::mt19937_64 rng(6);
    nc::Tensor h = nc::randn({4, 64}, rng);
    nc::GradCheckOptions opt;
    opt.max_coords_per_input = 20;
    auto rep = nc::gradcheck(
        [&] { return sum_all(mul(s.project("det", h), s.project("det", h))); },
        {h, s.banks.at("det").proj.fc1.w}, opt);
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("two events accumulate into one projection MLP") {
    SuperLink s = make_sl(7);
    std::mt19937_64 rng(8);
    nc::Tensor h1 = nc::randn({4, 64}, rng), h2 = nc::randn({4, 64}, rng);

    nc::Tensor w = s.banks.at("det").proj.fc1.w;
    nc::Tape t1;
    {
        nc::TapeScope scope(t1);
        t1.backward(sum_all(s.project("det", h1)));
    }
    std::vector<double> g1 = w.grad();
    w.zero_grad();
    nc::Tape t2;
    {
        nc::TapeScope scope(t2);
        t2.backward(sum_all(s.project("det", h2)));
    }
    std::vector<double> g2 = w.grad();
    w.zero_grad();
    nc::Tape t3;
    {
        nc::TapeScope scope(t3);
        t3.backward(add(sum_all(s.project("det", h1)), sum_all(s.project("det", h2))));
    }
    double norm = 0.0;
    for (double g : w.grad()) norm += std::fabs(g);
    CHECK(norm > 0.0);
    for (size_t i = 0; i < w.numel(); i += 97)
        CHECK(w.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-6));
}

TEST_CASE("pool_group") {
    SuperLink s = make_sl(9);
    std::mt19937_64 rng(10);

    nc::Tensor one = nc::randn({1, 64}, rng);
    CHECK(SuperLink::pool_group(one).data() == one.data());

    nc::Tensor v = nc::randn({1, 64}, rng);
    nc::Tensor pm = SuperLink::pool_group(concat_rows({v, scale(v, -1.0)}));
    for (double x : pm.data()) CHECK(x == doctest::Approx(0.0));

    nc::Tensor r = nc::randn({4, 64}, rng);
    nc::Tensor m = SuperLink::pool_group(r);
    for (int c = 0; c < 64; c++) {
        double want = 0.0;
        for (int n = 0; n < 4; n++) want += r.data()[(size_t) n * 64 + c];
        CHECK(m.data()[c] == doctest::Approx(want / 4.0));
    }
}

TEST_CASE("build_conditions shapes") {
    SuperLink s = make_sl(11);
    std::mt19937_64 rng(12);
    auto h4 = [&] { return nc::randn({4, 64}, rng); };

    std::vector<Event> det_events = {{"det", 0, "cat", h4()}, {"det", 1, "dog", h4()}};
    auto conds = s.build_conditions(det_events);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].embed.shape() == nc::Shape{2, 64});
    CHECK(conds[0].labels == std::vector<std::string>{"cat", "dog"});

    std::vector<Event> seg3 = {{"seg", 2, "region3", h4()},
                               {"seg", 0, "region1", h4()},
                               {"seg", 1, "region2", h4()}};
    auto cs = s.build_conditions(seg3);
    CHECK(cs[0].embed.shape() == nc::Shape{3, 64});
    CHECK(cs[0].labels[0] == "region1");  // ordered by group id

    std::vector<Event> gen = {{"gen", 0, "a red square", nc::randn({64, 64}, rng)}};
    auto cg = s.build_conditions(gen);
    CHECK(cg[0].embed.shape() == nc::Shape{64, 64});  // unpooled

    std::vector<Event> dup = {{"det", 0, "cat", h4()}, {"det", 0, "dog", h4()}};
    CHECK_THROWS(s.build_conditions(dup));

    // determinism: identical inputs give bitwise-identical conditions
    auto again = s.build_conditions(det_events);
    CHECK(again[0].embed.data() == conds[0].embed.data());
}

TEST_CASE("dispatch invokes each referenced decoder exactly once") {
    SuperLink s = make_sl(13);
    std::mt19937_64 rng(14);
    std::vector<Event> events = {{"det", 0, "cat", nc::randn({4, 64}, rng)},
                                 {"seg", 0, "region1", nc::randn({4, 64}, rng)}};
    auto conds = s.build_conditions(events);

    std::map<std::string, int> calls;
    std::map<std::string, std::function<nc::Tensor(const Condition &)>> reg;
    for (const char * d : {"det", "seg", "pose", "gen", "edit"})
        reg[d] = [&calls, d](const Condition &) {
            calls[d]++;
            return nc::scalar(1.0);
        };

    auto out = dispatch(conds, reg);
    CHECK(out.size() == 2);
    CHECK(calls["det"] == 1);
    CHECK(calls["seg"] == 1);
    CHECK(calls.count("pose") == 0);

    CHECK(dispatch({}, reg).empty());
    Condition bad;
    bad.decoder = "unknown";
    CHECK_THROWS(dispatch({bad}, reg));
}

TEST_CASE("token embedding extract") {
    SuperLinkConfig cfg;
    cfg.token_embedding_k = 4;
    SuperLink s = make_sl(15, cfg);
    std::mt19937_64 rng(16);

    std::vector<Event> events = {{"det", 0, "cat", nc::randn({4, 64}, rng)},
                                 {"det", 1, "dog", nc::randn({4, 64}, rng)}};
    auto conds = s.token_embedding_extract(events);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].embed.shape() == nc::Shape{2, 64});
    // per-group mean of the hidden rows, no MLP
    for (int c = 0; c < 64; c++) {
        double want = 0.0;
        for (int n = 0; n < 4; n++) want += events[0].hidden.data()[(size_t) n * 64 + c];
        CHECK(conds[0].embed.data()[c] == doctest::Approx(want / 4.0));
    }

    // k=1: single row, no pooling effect
    std::vector<Event> e1 = {{"seg", 0, "region1", nc::randn({1, 64}, rng)}};
    auto c1 = s.token_embedding_extract(e1);
    for (int c = 0; c < 64; c++)
        CHECK(c1[0].embed.data()[c] == doctest::Approx(e1[0].hidden.data()[c]));

    SuperLink ql = make_sl(17);
    CHECK_THROWS(ql.token_embedding_extract(events));
    CHECK_THROWS(s.build_conditions(events));
}

TEST_CASE("det-only backward leaves other decoders untouched") {
    SuperLink s = make_sl(18);
    std::mt19937_64 rng(19);
    nc::Tensor h = nc::randn({4, 64}, rng);
    h.set_requires_grad(true);

    nc::Tape tape;
    {
        nc::TapeScope scope(tape);
        auto conds = s.build_conditions({{"det", 0, "cat", h}});
        tape.backward(sum_all(conds[0].embed));
    }
    double det_norm = 0.0;
    for (double g : s.banks.at("det").proj.fc1.w.grad()) det_norm += std::fabs(g);
    CHECK(det_norm > 0.0);
    CHECK(!s.banks.at("gen").proj.fc1.w.has_grad());
    CHECK(!s.banks.at("pose").q.has_grad());
}
