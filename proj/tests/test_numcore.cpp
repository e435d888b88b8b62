#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "numcore/gradcheck.hpp"
#include "numcore/ops.hpp"
#include "numcore/tape.hpp"
#include "numcore/tensor.hpp"

namespace nc = numcore;
using namespace numcore::ops;

struct F64Mode {
    bool saved;
    F64Mode() : saved(nc::modes().f32_compute) { nc::modes().f32_compute = false; }
    ~F64Mode() { nc::modes().f32_compute = saved; }
};

TEST_CASE("matmul basics") {
    F64Mode f64;
    // identity(3) * X == X
    nc::Tensor id = nc::zeros({3, 3});
    for (int i = 0; i < 3; i++) id.data()[i * 3 + i] = 1.0;
    std::mt19937_64 rng(1);
    nc::Tensor x = nc::randn({3, 4}, rng);
    nc::Tensor y = matmul(id, x);
    CHECK(y.data() == x.data());

    nc::Tensor a = nc::from_vec({1, 2}, {1, 2});
    nc::Tensor b = nc::from_vec({2, 1}, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);

    CHECK_THROWS(matmul(nc::zeros({2, 3}), nc::zeros({4, 2})));
}

TEST_CASE("matmul gradcheck 4x5*5x3") {
    std::mt19937_64 rng(2);
    nc::Tensor a = nc::randn({4, 5}, rng);
    nc::Tensor b = nc::randn({5, 3}, rng);
    auto rep = nc::gradcheck([&] { return sum_all(matmul(a, b)); }, {a, b});
    CHECK(rep.ok());
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("pointwise basics") {
    F64Mode f64;
    CHECK(sigmoid(nc::scalar(0.0)).item() == 0.5);
    CHECK(gelu(nc::scalar(0.0)).item() == 0.0);
    CHECK(relu(nc::scalar(-2.0)).item() == 0.0);

    // gelu gradient at x=1 vs finite difference
    nc::Tensor x = nc::scalar(1.0);
    auto rep = nc::gradcheck([&] { return gelu(x); }, {x});
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("broadcast add") {
    F64Mode f64;
    nc::Tensor a = nc::from_vec({2, 3}, {1, 2, 3, 4, 5, 6});
    nc::Tensor b = nc::from_vec({3}, {10, 20, 30});
    nc::Tensor c = add(a, b);
    CHECK(c.data() == std::vector<double>{11, 22, 33, 14, 25, 36});
    CHECK_THROWS(add(nc::zeros({2, 3}), nc::zeros({2})));

    std::mt19937_64 rng(5);
    nc::Tensor r = nc::randn({4, 3}, rng);
    nc::Tensor s = nc::randn({3}, rng);
    auto rep = nc::gradcheck([&] { return sum_all(mul(r, s)); }, {r, s});
    CHECK(rep.ok());
}

TEST_CASE("softmax") {
    F64Mode f64;
    nc::Tensor u = nc::full({4}, 1.7);
    nc::Tensor p = softmax(u, 0);
    for (int i = 0; i < 4; i++) CHECK(p.data()[i] == doctest::Approx(0.25));

    nc::Tensor big = nc::from_vec({2}, {1000.0, 0.0});
    nc::Tensor q = softmax(big, 0);
    CHECK(q.data()[0] == doctest::Approx(1.0));
    CHECK(q.data()[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(q.data()[0]));

    std::mt19937_64 rng(3);
    nc::Tensor x = nc::randn({3, 5}, rng);
    nc::Tensor w = nc::randn({3, 5}, rng);  // weighting makes the check nontrivial
    auto rep = nc::gradcheck([&] { return sum_all(mul(softmax(x, 1), w)); }, {x});
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("softmax rows sum to one on random inputs") {
    F64Mode f64;
    std::mt19937_64 rng(4);
    for (int it = 0; it < 20; it++) {
        nc::Tensor x = nc::randn({5, 7}, rng, 3.0);
        nc::Tensor p = softmax(x, 1);
        for (int r = 0; r < 5; r++) {
            double s = 0.0;
            for (int c = 0; c < 7; c++) {
                double v = p.data()[r * 7 + c];
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("layernorm") {
    F64Mode f64;
    nc::Tensor gamma = nc::full({4}, 1.0), beta = nc::zeros({4});
    nc::Tensor c = nc::full({1, 4}, 3.3);
    nc::Tensor y = layernorm(c, gamma, beta, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.0));

    nc::Tensor g2 = nc::full({2}, 1.0), b2 = nc::zeros({2});
    nc::Tensor row = nc::from_vec({1, 2}, {1, 3});
    nc::Tensor z = layernorm(row, g2, b2, 1e-12);
    CHECK(z.data()[0] == doctest::Approx(-1.0));
    CHECK(z.data()[1] == doctest::Approx(1.0));

    std::mt19937_64 rng(6);
    nc::Tensor x = nc::randn({2, 8}, rng);
    nc::Tensor g = nc::randn({8}, rng);
    nc::Tensor b = nc::randn({8}, rng);
    nc::Tensor w = nc::randn({2, 8}, rng);
    auto rep = nc::gradcheck([&] { return sum_all(mul(layernorm(x, g, b, 1e-5), w)); }, {x, g, b});
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("conv2d") {
    F64Mode f64;
    // 1x1 kernel identity-channel map leaves input unchanged
    std::mt19937_64 rng(7);
    nc::Tensor x = nc::randn({1, 2, 5, 5}, rng);
    nc::Tensor w = nc::zeros({2, 2, 1, 1});
    w.data()[0 * 2 + 0] = 1.0;
    w.data()[1 * 2 + 1] = 1.0;
    nc::Tensor y = conv2d(x, w, {}, 1, 0);
    CHECK(y.data() == x.data());

    // region-encoder stack shape: 28x28 -> k7s7 -> k2s2 -> k1s1 = 2x2
    nc::Tensor img = nc::randn({1, 4, 28, 28}, rng);
    nc::Tensor w1 = nc::randn({8, 4, 7, 7}, rng, 0.1);
    nc::Tensor w2 = nc::randn({8, 8, 2, 2}, rng, 0.1);
    nc::Tensor w3 = nc::randn({8, 8, 1, 1}, rng, 0.1);
    nc::Tensor h = conv2d(conv2d(conv2d(img, w1, {}, 7, 0), w2, {}, 2, 0), w3, {}, 1, 0);
    CHECK(h.shape() == nc::Shape{1, 8, 2, 2});

    CHECK_THROWS(conv2d(nc::zeros({1, 1, 3, 3}), nc::zeros({1, 1, 5, 5}), {}, 1, 0));
}

TEST_CASE("conv2d weight gradcheck") {
    std::mt19937_64 rng(8);
    nc::Tensor x = nc::randn({1, 2, 8, 8}, rng);
    nc::Tensor w = nc::randn({3, 2, 3, 3}, rng, 0.3);
    nc::Tensor b = nc::randn({3}, rng, 0.3);
    auto rep = nc::gradcheck([&] { return sum_all(conv2d(x, w, b, 1, 1)); }, {w, b, x});
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("grid_sample_mask") {
    F64Mode f64;
    nc::Tensor fmap = nc::full({3, 2, 2}, 4.2);
    nc::BinaryMask m{8, 8, std::vector<uint8_t>(64, 0)};
    m.m[3 * 8 + 5] = 1;
    nc::Tensor v = grid_sample_mask(fmap, m);
    for (double x : v.data()) CHECK(x == doctest::Approx(4.2));

    // full-image mask -> spatial mean
    std::mt19937_64 rng(9);
    nc::Tensor f2 = nc::randn({2, 2, 2}, rng);
    nc::BinaryMask full{8, 8, std::vector<uint8_t>(64, 1)};
    nc::Tensor mean = grid_sample_mask(f2, full);
    for (int c = 0; c < 2; c++) {
        double want = 0.0;
        for (int i = 0; i < 4; i++) want += f2.data()[c * 4 + i];
        CHECK(mean.data()[c] == doctest::Approx(want / 4.0));
    }

    // single pixel at an exact cell center picks that cell's column
    nc::Tensor f3 = nc::randn({2, 2, 2}, rng);
    nc::BinaryMask one{14, 14, std::vector<uint8_t>(196, 0)};
    one.m[3 * 14 + 3] = 1;  // center of fmap cell (0,0)
    nc::Tensor pick = grid_sample_mask(f3, one);
    CHECK(pick.data()[0] == doctest::Approx(f3.data()[0]));
    CHECK(pick.data()[1] == doctest::Approx(f3.data()[4]));

    nc::BinaryMask empty{8, 8, std::vector<uint8_t>(64, 0)};
    CHECK_THROWS(grid_sample_mask(fmap, empty));
}

TEST_CASE("cross_entropy") {
    F64Mode f64;
    // saturated correct logits -> loss -> 0
    nc::Tensor l = nc::zeros({2, 3});
    l.data()[0] = 50.0;
    l.data()[3 + 1] = 50.0;
    CHECK(cross_entropy(l, {0, 1}).item() == doctest::Approx(0.0).epsilon(1e-9));

    // uniform logits, V=4 -> ln 4
    nc::Tensor u = nc::full({1, 4}, 0.7);
    CHECK(cross_entropy(u, {2}).item() == doctest::Approx(std::log(4.0)));

    // ignored rows get bitwise-zero gradient
    std::mt19937_64 rng(10);
    nc::Tensor logits = nc::randn({4, 5}, rng);
    logits.set_requires_grad(true);
    nc::Tape tape;
    {
        nc::TapeScope scope(tape);
        nc::Tensor loss = cross_entropy(logits, {1, nc::ops::k_ignore_index, 3, nc::ops::k_ignore_index});
        tape.backward(loss);
    }
    for (int v = 0; v < 5; v++) {
        CHECK(logits.grad()[1 * 5 + v] == 0.0);
        CHECK(logits.grad()[3 * 5 + v] == 0.0);
    }
    double gnorm = 0.0;
    for (int v = 0; v < 5; v++) gnorm += std::fabs(logits.grad()[v]);
    CHECK(gnorm > 0.0);

    CHECK_THROWS(cross_entropy(u, {nc::ops::k_ignore_index}));
    CHECK_THROWS(cross_entropy(u, {7}));
}

TEST_CASE("backward accumulation") {
    F64Mode f64;
    nc::Tensor x = nc::full({3}, 2.0);
    x.set_requires_grad(true);
    nc::Tape tape;
    {
        nc::TapeScope scope(tape);
        nc::Tensor loss = sum_all(x);
        tape.backward(loss);
    }
    for (double g : x.grad()) CHECK(g == 1.0);

    nc::Tensor y = nc::full({3}, 2.0);
    y.set_requires_grad(true);
    nc::Tape tape2;
    {
        nc::TapeScope scope(tape2);
        nc::Tensor loss = add(sum_all(y), sum_all(y));
        tape2.backward(loss);
    }
    for (double g : y.grad()) CHECK(g == 2.0);

    CHECK_THROWS(tape2.backward(nc::zeros({2})));
}

TEST_CASE("shared subexpression DAG equals duplicated-subgraph oracle") {
    F64Mode f64;
    std::mt19937_64 rng(11);
    nc::Tensor x = nc::randn({6}, rng);
    nc::Tensor x2 = nc::from_vec({6}, x.data());
    x.set_requires_grad(true);
    x2.set_requires_grad(true);

    nc::Tape t1;
    {
        nc::TapeScope scope(t1);
        nc::Tensor s = mul(x, x);           // shared node used twice
        t1.backward(sum_all(add(s, gelu(s))));
    }
    nc::Tape t2;
    {
        nc::TapeScope scope(t2);
        nc::Tensor s1 = mul(x2, x2);        // duplicated subgraphs
        nc::Tensor s2 = mul(x2, x2);
        t2.backward(sum_all(add(s1, gelu(s2))));
    }
    for (int i = 0; i < 6; i++) CHECK(x.grad()[i] == doctest::Approx(x2.grad()[i]).epsilon(1e-12));
}

TEST_CASE("gradcheck behaviors") {
    // linear function: near machine-eps agreement
    std::mt19937_64 rng(12);
    nc::Tensor x = nc::randn({4}, rng);
    auto rep = nc::gradcheck([&] { return scale(sum_all(x), 3.0); }, {x});
    CHECK(rep.worst() < 1e-8);

    // softmax-cross-entropy composite
    nc::Tensor logits = nc::randn({3, 5}, rng);
    auto rep2 = nc::gradcheck([&] { return cross_entropy(logits, {0, 4, 2}); }, {logits});
    CHECK(rep2.worst() < 1e-3);
}

// deliberately corrupted gradient rule must be reported as a failure
static nc::Tensor bad_square(nc::Tensor x) {
    nc::Tensor out = nc::zeros(x.shape());
    for (size_t i = 0; i < x.numel(); i++) out.data()[i] = x.data()[i] * x.data()[i];
    if (nc::active_tape() && x.requires_grad()) {
        out.set_requires_grad(true);
        nc::active_tape()->record([x, out]() mutable {
            for (size_t i = 0; i < x.numel(); i++)
                x.grad()[i] += out.grad()[i] * 3.0 * x.data()[i];  // wrong factor
        });
    }
    return out;
}

TEST_CASE("gradcheck negative control") {
    std::mt19937_64 rng(13);
    nc::Tensor x = nc::randn({4}, rng);
    auto rep = nc::gradcheck([&] { return sum_all(bad_square(x)); }, {x});
    CHECK(!rep.ok());
}

TEST_CASE("primitive gradchecks on 20 random instances") {
    std::mt19937_64 rng(14);
    for (int it = 0; it < 20; it++) {
        nc::Tensor a = nc::randn({3, 4}, rng);
        nc::Tensor b = nc::randn({4, 2}, rng);
        nc::Tensor g = nc::randn({4}, rng);
        nc::Tensor bb = nc::randn({4}, rng);
        nc::GradCheckOptions opt;
        opt.seed = 100 + it;
        auto rep = nc::gradcheck(
            [&] {
                nc::Tensor h = layernorm(gelu(a), g, bb, 1e-5);
                return sum_all(sigmoid(matmul(h, b)));
            },
            {a, b, g, bb}, opt);
        CHECK(rep.worst() < 1e-3);
    }
}

TEST_CASE("reshape slice gather concat") {
    F64Mode f64;
    std::mt19937_64 rng(15);
    nc::Tensor t = nc::randn({4, 3}, rng);
    nc::Tensor r = reshape(t, {3, 4});
    CHECK(r.data() == t.data());

    nc::Tensor s = slice_rows(t, 1, 2);
    CHECK(s.dim(0) == 2);
    CHECK(s.data()[0] == t.data()[3]);

    nc::Tensor gth = gather_rows(t, {2, 0, 2});
    CHECK(gth.data()[0] == t.data()[6]);

    auto rep = nc::gradcheck(
        [&] {
            nc::Tensor parts = concat_rows({slice_rows(t, 0, 2), gather_rows(t, {3, 3})});
            return mse_loss(mean_rows(parts), nc::zeros({1, 3}));
        },
        {t});
    CHECK(rep.worst() < 1e-3);
}

TEST_CASE("bilinear resize and bce") {
    std::mt19937_64 rng(16);
    nc::Tensor x = nc::randn({2, 4, 4}, rng);
    auto rep = nc::gradcheck([&] { return sum_all(gelu(bilinear_resize(x, 8, 8))); }, {x});
    CHECK(rep.worst() < 1e-3);

    nc::Tensor logits = nc::randn({3, 3}, rng);
    nc::Tensor targets = nc::from_vec({3, 3}, {0, 1, 0, 1, 1, 0, 0, 0, 1});
    auto rep2 = nc::gradcheck([&] { return bce_with_logits(logits, targets); }, {logits});
    CHECK(rep2.worst() < 1e-3);
}

TEST_CASE("f32 compute mode rounds op outputs") {
    nc::modes().f32_compute = true;
    nc::Tensor a = nc::from_vec({1}, {0.1});
    nc::Tensor b = nc::from_vec({1}, {0.2});
    nc::Tensor c = add(a, b);
    CHECK(c.item() == (double) ((float) ((double) (float) 0.1 + (double) (float) 0.2)));
    nc::modes().f32_compute = false;
    nc::Tensor d = add(a, b);
    CHECK(d.item() != c.item());
    nc::modes().f32_compute = true;
}

TEST_CASE("finite check debug mode") {
    nc::modes().check_finite = true;
    nc::Tensor a = nc::from_vec({1}, {1e308});
    CHECK_THROWS(mul(a, a));
    nc::modes().check_finite = false;
}
