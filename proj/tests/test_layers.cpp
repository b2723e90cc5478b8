#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "grad_check.hpp"

using namespace emscat::nn;
using testutil::grad_check;
using testutil::leaf;

namespace {

Tensor filled(std::size_t r, std::size_t c, std::initializer_list<double> values) {
    Tensor t = Tensor::matrix(r, c);
    std::size_t i = 0;
    for (double v : values) t[i++] = v;
    return t;
}

void set_identity(ParameterStore& store, const std::string& name, std::size_t n) {
    Var w = store.get(name, {n, n}, Init::Zeros);
    for (std::size_t i = 0; i < n; ++i) w->value.at(i, i) = 1.0;
}

/// Fully connected directed graph over n nodes with unit edge weights and the
/// matching symmetric normalization.
GraphOps complete_graph(int n) {
    GraphOps g;
    g.nodeCount = n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            g.edgeDst.push_back(i);
            g.edgeSrc.push_back(j);
            g.edgeWeight.push_back(1.0);
        }
    g.gcnNorm.rows = g.gcnNorm.cols = static_cast<std::size_t>(n);
    double d = static_cast<double>(n);  // degree 1 + (n-1)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g.gcnNorm.entries.push_back({i, j, 1.0 / d});
    return g;
}

}  // namespace

TEST_CASE("parameter store creation and reuse") {
    ParameterStore store(7);
    Var a = store.get("w", {2, 3}, Init::Glorot);
    Var b = store.get("w", {2, 3}, Init::Glorot);
    CHECK(a.get() == b.get());
    CHECK(store.parameterCount() == 1);
    CHECK_THROWS_AS(store.get("w", {3, 2}, Init::Glorot), NnError);
    Var ones = store.get("ones", {2, 2}, Init::Ones);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ones->value[i] == 1.0);
    Var zeros = store.get("zeros", {2, 2}, Init::Zeros);
    for (std::size_t i = 0; i < 4; ++i) CHECK(zeros->value[i] == 0.0);
}

TEST_CASE("identical seeds give identical initializations") {
    ParameterStore s1(99), s2(99), s3(100);
    Var a = s1.get("w", {4, 4}, Init::Glorot);
    Var b = s2.get("w", {4, 4}, Init::Glorot);
    Var c = s3.get("w", {4, 4}, Init::Glorot);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a->value.size(); ++i) {
        same &= a->value[i] == b->value[i];
        differs |= a->value[i] != c->value[i];
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("two-layer map reduces to identity with identity weights") {
    ParameterStore store(1);
    Ffn2Spec spec{3, 3, 3, Between::Identity};
    set_identity(store, "f.w1", 3);
    set_identity(store, "f.w2", 3);
    store.get("f.b1", {1, 3}, Init::Zeros);
    store.get("f.b2", {1, 3}, Init::Zeros);
    Var x = leaf({4, 3}, 2);
    Var y = ffn2(x, store, "f", spec);
    for (std::size_t i = 0; i < x->value.size(); ++i)
        CHECK(y->value[i] == doctest::Approx(x->value[i]).epsilon(1e-14));

    // with a rectifier in between, negative inputs are clipped
    Ffn2Spec reluSpec{3, 3, 3, Between::Relu};
    set_identity(store, "g.w1", 3);
    set_identity(store, "g.w2", 3);
    store.get("g.b1", {1, 3}, Init::Zeros);
    store.get("g.b2", {1, 3}, Init::Zeros);
    Var yr = ffn2(x, store, "g", reluSpec);
    for (std::size_t i = 0; i < x->value.size(); ++i)
        CHECK(yr->value[i] == doctest::Approx(std::max(0.0, x->value[i])).epsilon(1e-14));

    CHECK_THROWS_AS(ffn2(leaf({4, 2}, 0), store, "f", spec), NnError);
}

TEST_CASE("two-layer map gradients match finite differences") {
    ParameterStore store(3);
    Ffn2Spec spec{3, 5, 2, Between::Elu};
    Var x = leaf({4, 3}, 4);
    ffn2(x, store, "f", spec);  // create parameters
    std::vector<Var> leaves{x, store.get("f.w1", {3, 5}, Init::Zeros),
                            store.get("f.b1", {1, 5}, Init::Zeros),
                            store.get("f.w2", {5, 2}, Init::Zeros),
                            store.get("f.b2", {1, 2}, Init::Zeros)};
    store.zeroGrad();
    CHECK(grad_check(leaves, [&] { return sumAll(mul(ffn2(x, store, "f", spec),
                                                     ffn2(x, store, "f", spec))); }) < 1e-5);
}

TEST_CASE("graph attention with identical node features averages uniformly") {
    GraphOps g = complete_graph(4);
    ParameterStore store(5);
    Tensor x = Tensor::matrix(4, 3);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) x.at(r, c) = 0.3 * (c + 1.0);
    Var out = gat_layer(constant(x), g, store, "gat", 3, 4);
    // identical features make every logit equal, so attention is uniform and
    // the aggregate equals h for every node; all output rows must agree
    REQUIRE(out->value.rows() == 4);
    for (std::size_t r = 1; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(out->value.at(r, c) == doctest::Approx(out->value.at(0, c)).epsilon(1e-12));
}

TEST_CASE("graph attention with one neighbor copies that neighbor's projection") {
    GraphOps g;
    g.nodeCount = 2;
    g.edgeDst = {0, 1};
    g.edgeSrc = {1, 0};
    g.edgeWeight = {0.7, 0.7};
    ParameterStore store(6);
    Var x = leaf({2, 3}, 7);
    Var out = gat_layer(x, g, store, "gat", 3, 3);
    Var h = matmul(x, store.get("gat.w", {3, 3}, Init::Zeros));
    // softmax over a single edge is exactly 1 regardless of the edge weight
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(out->value.at(0, c) == doctest::Approx(h->value.at(1, c)).epsilon(1e-13));
        CHECK(out->value.at(1, c) == doctest::Approx(h->value.at(0, c)).epsilon(1e-13));
    }
}

TEST_CASE("graph attention passes isolated nodes through their projection") {
    GraphOps g;
    g.nodeCount = 2;
    g.hasIsolated = true;
    g.isolatedSelect.rows = g.isolatedSelect.cols = 2;
    g.isolatedSelect.entries = {{0, 0, 1.0}, {1, 1, 1.0}};
    ParameterStore store(8);
    Var x = leaf({2, 3}, 9);
    Var out = gat_layer(x, g, store, "gat", 3, 3);
    Var h = matmul(x, store.get("gat.w", {3, 3}, Init::Zeros));
    for (std::size_t i = 0; i < h->value.size(); ++i)
        CHECK(out->value[i] == doctest::Approx(h->value[i]).epsilon(1e-14));
}

TEST_CASE("graph attention and convolution are permutation equivariant") {
    // 3-node path graph 0-1-2 with distinct weights
    GraphOps g;
    g.nodeCount = 3;
    g.edgeDst = {0, 1, 1, 2};
    g.edgeSrc = {1, 0, 2, 1};
    g.edgeWeight = {0.9, 0.9, 0.4, 0.4};
    g.gcnNorm.rows = g.gcnNorm.cols = 3;
    double d0 = 1.9, d1 = 2.3, d2 = 1.4;  // 1 + sum of incident weights
    g.gcnNorm.entries = {{0, 0, 1 / d0},
                         {1, 1, 1 / d1},
                         {2, 2, 1 / d2},
                         {0, 1, 0.9 / std::sqrt(d0 * d1)},
                         {1, 0, 0.9 / std::sqrt(d0 * d1)},
                         {1, 2, 0.4 / std::sqrt(d1 * d2)},
                         {2, 1, 0.4 / std::sqrt(d1 * d2)}};

    // permuted graph under perm = {2, 0, 1} (new index of old node i)
    std::vector<int> perm{2, 0, 1};
    GraphOps gp;
    gp.nodeCount = 3;
    for (std::size_t e = 0; e < g.edgeDst.size(); ++e) {
        gp.edgeDst.push_back(perm[g.edgeDst[e]]);
        gp.edgeSrc.push_back(perm[g.edgeSrc[e]]);
        gp.edgeWeight.push_back(g.edgeWeight[e]);
    }
    gp.gcnNorm.rows = gp.gcnNorm.cols = 3;
    for (const auto& e : g.gcnNorm.entries)
        gp.gcnNorm.entries.push_back({perm[e.r], perm[e.c], e.v});

    ParameterStore store(10);
    Var x = leaf({3, 4}, 11);
    Tensor xp = Tensor::matrix(3, 4);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) xp.at(perm[r], c) = x->value.at(r, c);

    Var a = gat_layer(x, g, store, "gat", 4, 4);
    Var ap = gat_layer(constant(xp), gp, store, "gat", 4, 4);
    Var b = gcn_layer(x, g, store, "gcn", 4, 4);
    Var bp = gcn_layer(constant(xp), gp, store, "gcn", 4, 4);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(ap->value.at(perm[r], c) == doctest::Approx(a->value.at(r, c)).epsilon(1e-12));
            CHECK(bp->value.at(perm[r], c) == doctest::Approx(b->value.at(r, c)).epsilon(1e-12));
        }
}

TEST_CASE("graph convolution identities") {
    SUBCASE("single self-normalized node is a plain linear map") {
        GraphOps g;
        g.nodeCount = 1;
        g.gcnNorm.rows = g.gcnNorm.cols = 1;
        g.gcnNorm.entries = {{0, 0, 1.0}};
        ParameterStore store(12);
        Var x = leaf({1, 3}, 13);
        Var out = gcn_layer(x, g, store, "gcn", 3, 2);
        Var h = matmul(x, store.get("gcn.w", {3, 2}, Init::Zeros));
        for (std::size_t i = 0; i < h->value.size(); ++i)
            CHECK(out->value[i] == doctest::Approx(h->value[i]).epsilon(1e-14));
    }
    SUBCASE("constant features on a regular graph stay constant") {
        GraphOps g = complete_graph(5);
        ParameterStore store(14);
        Tensor x = Tensor::matrix(5, 2);
        for (std::size_t r = 0; r < 5; ++r) {
            x.at(r, 0) = 1.0;
            x.at(r, 1) = -0.5;
        }
        Var out = gcn_layer(constant(x), g, store, "gcn", 2, 3);
        for (std::size_t r = 1; r < 5; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(out->value.at(r, c) ==
                      doctest::Approx(out->value.at(0, c)).epsilon(1e-13));
    }
}

TEST_CASE("graph layer gradients match finite differences") {
    GraphOps g = complete_graph(3);
    ParameterStore store(15);
    Var x = leaf({3, 3}, 16);
    gat_layer(x, g, store, "gat", 3, 3);
    gcn_layer(x, g, store, "gcn", 3, 2);
    std::vector<Var> leaves{x, store.get("gat.w", {3, 3}, Init::Zeros),
                            store.get("gat.a_dst", {3, 1}, Init::Zeros),
                            store.get("gat.a_src", {3, 1}, Init::Zeros),
                            store.get("gcn.w", {3, 2}, Init::Zeros)};
    store.zeroGrad();
    CHECK(grad_check(leaves, [&] {
              Var h = gat_layer(x, g, store, "gat", 3, 3);
              Var y = gcn_layer(h, g, store, "gcn", 3, 2);
              return sumAll(mul(y, y));
          }) < 1e-5);
}

TEST_CASE("batch normalization") {
    SUBCASE("zero input maps to zero output") {
        ParameterStore store(17);
        Var x = constant(Tensor::matrix(4, 3));
        Var out = batchnorm_elu(x, store, "bn", true);
        for (std::size_t i = 0; i < out->value.size(); ++i) CHECK(out->value[i] == 0.0);
    }
    SUBCASE("standardized batch passes through up to the epsilon floor") {
        ParameterStore store(18);
        // column with mean 0 and variance 1: {-1, 1, -1, 1}
        Tensor x = filled(4, 1, {-1.0, 1.0, -1.0, 1.0});
        Var out = batchnorm_elu(constant(x), store, "bn", true);
        CHECK(out->value[1] == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(out->value[0] == doctest::Approx(std::expm1(-1.0)).epsilon(1e-4));
    }
    SUBCASE("training mode requires at least two rows") {
        ParameterStore store(19);
        CHECK_THROWS_AS(batchnorm_elu(leaf({1, 3}, 0), store, "bn", true), NnError);
        // inference mode works on a single row via running statistics
        Var out = batchnorm_elu(leaf({1, 3}, 0), store, "bn", false);
        CHECK(out->value.rows() == 1);
    }
    SUBCASE("fresh running statistics make inference a near-identity before ELU") {
        ParameterStore store(20);
        Tensor x = filled(2, 2, {0.5, 1.5, 2.0, 0.25});
        Var out = batchnorm_elu(constant(x), store, "bn", false);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(out->value[i] == doctest::Approx(x[i]).epsilon(1e-4));
    }
    SUBCASE("gradients in training mode") {
        ParameterStore store(21);
        Var x = leaf({4, 2}, 22);
        batchnorm_elu(x, store, "bn", true);
        std::vector<Var> leaves{x, store.get("bn.gamma", {1, 2}, Init::Zeros),
                                store.get("bn.beta", {1, 2}, Init::Zeros)};
        store.zeroGrad();
        CHECK(grad_check(leaves, [&] {
                  Var y = batchnorm_elu(x, store, "bn", true);
                  return sumAll(mul(y, y));
              }) < 1e-5);
    }
}

TEST_CASE("multi-head attention") {
    SUBCASE("identical keys make the output independent of the query") {
        ParameterStore store(23);
        Tensor k = Tensor::matrix(3, 4);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t r = 0; r < 3; ++r) k.at(r, c) = 0.1 * (c + 1.0);
        Var v = leaf({3, 4}, 24);
        Var q1 = leaf({2, 4}, 25);
        Var q2 = leaf({2, 4}, 26);
        Var o1 = multihead_attention(q1, constant(k), v, store, "mha", 4, 2);
        Var o2 = multihead_attention(q2, constant(k), v, store, "mha", 4, 2);
        for (std::size_t i = 0; i < o1->value.size(); ++i)
            CHECK(o1->value[i] == doctest::Approx(o2->value[i]).epsilon(1e-12));
    }
    SUBCASE("a single key-value pair is copied to every query") {
        ParameterStore store(27);
        Var kv = leaf({1, 4}, 28);
        Var q = leaf({3, 4}, 29);
        Var out = multihead_attention(q, kv, kv, store, "mha", 4, 2);
        for (std::size_t r = 1; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(out->value.at(r, c) ==
                      doctest::Approx(out->value.at(0, c)).epsilon(1e-12));
    }
    SUBCASE("shape validation") {
        ParameterStore store(30);
        CHECK_THROWS_AS(
            multihead_attention(leaf({2, 4}, 0), leaf({2, 4}, 0), leaf({2, 4}, 0), store,
                                "mha", 4, 3),
            NnError);
        CHECK_THROWS_AS(
            multihead_attention(leaf({2, 3}, 0), leaf({2, 4}, 0), leaf({2, 4}, 0), store,
                                "mha", 4, 2),
            NnError);
        CHECK_THROWS_AS(
            multihead_attention(leaf({2, 4}, 0), leaf({2, 4}, 0), leaf({3, 4}, 0), store,
                                "mha", 4, 2),
            NnError);
    }
    SUBCASE("gradients") {
        ParameterStore store(31);
        Var q = leaf({2, 4}, 32);
        Var k = leaf({3, 4}, 33);
        Var v = leaf({3, 4}, 34);
        multihead_attention(q, k, v, store, "mha", 4, 2);
        std::vector<Var> leaves{q, k, v, store.get("mha.wq", {4, 4}, Init::Zeros),
                                store.get("mha.wk", {4, 4}, Init::Zeros),
                                store.get("mha.wv", {4, 4}, Init::Zeros),
                                store.get("mha.wo", {4, 4}, Init::Zeros)};
        store.zeroGrad();
        CHECK(grad_check(leaves, [&] {
                  Var y = multihead_attention(q, k, v, store, "mha", 4, 2);
                  return sumAll(mul(y, y));
              }) < 1e-5);
    }
}

TEST_CASE("kernel-point expansion") {
    SUBCASE("coincident coarse and fine points with identity weights pass through") {
        ParameterStore store(35);
        std::vector<std::array<double, 3>> pts{{0, 0, 0}, {1, 0, 0}};
        KpconvPlan plan = make_kpconv_plan(pts, pts, 0.5, 1);
        CHECK(plan.fallbackCount == 0);
        set_identity(store, "kp.w0", 3);
        Var x = leaf({2, 3}, 36);
        Var out = kpconv_expand(x, plan, store, "kp", 3);
        for (std::size_t i = 0; i < x->value.size(); ++i)
            CHECK(out->value[i] == doctest::Approx(x->value[i]).epsilon(1e-14));
    }
    SUBCASE("fine points beyond every kernel's reach snap to the nearest coarse point") {
        std::vector<std::array<double, 3>> coarse{{0, 0, 0}, {10, 0, 0}};
        std::vector<std::array<double, 3>> fine{{4, 0, 0}};
        KpconvPlan plan = make_kpconv_plan(coarse, fine, 0.5, 3);
        CHECK(plan.fallbackCount == 1);
        ParameterStore store(37);
        for (int k = 0; k < 3; ++k) set_identity(store, "kp.w" + std::to_string(k), 2);
        Var x = leaf({2, 2}, 38);
        Var out = kpconv_expand(x, plan, store, "kp", 2);
        // nearest coarse point is index 0, copied with unit weight
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(out->value.at(0, c) == doctest::Approx(x->value.at(0, c)).epsilon(1e-14));
    }
    SUBCASE("zero coarse features expand to zero") {
        std::vector<std::array<double, 3>> coarse{{0, 0, 0}};
        std::vector<std::array<double, 3>> fine{{0.1, 0, 0}, {0, 0.1, 0}};
        KpconvPlan plan = make_kpconv_plan(coarse, fine, 0.4, 7);
        ParameterStore store(39);
        Var out = kpconv_expand(constant(Tensor::matrix(1, 3)), plan, store, "kp", 3);
        for (std::size_t i = 0; i < out->value.size(); ++i) CHECK(out->value[i] == 0.0);
    }
    SUBCASE("parameter validation") {
        std::vector<std::array<double, 3>> pts{{0, 0, 0}};
        CHECK_THROWS_AS(make_kpconv_plan(pts, pts, 0.0, 3), NnError);
        CHECK_THROWS_AS(make_kpconv_plan(pts, pts, 0.5, 0), NnError);
    }
    SUBCASE("gradients") {
        std::vector<std::array<double, 3>> coarse{{0, 0, 0}, {0.3, 0, 0}};
        std::vector<std::array<double, 3>> fine{{0.05, 0, 0}, {0.25, 0.05, 0}, {0.15, 0, 0.05}};
        KpconvPlan plan = make_kpconv_plan(coarse, fine, 0.4, 7);
        ParameterStore store(40);
        Var x = leaf({2, 3}, 41);
        kpconv_expand(x, plan, store, "kp", 3);
        std::vector<Var> leaves{x};
        for (int k = 0; k < 7; ++k)
            leaves.push_back(store.get("kp.w" + std::to_string(k), {3, 3}, Init::Zeros));
        store.zeroGrad();
        CHECK(grad_check(leaves, [&] {
                  Var y = kpconv_expand(x, plan, store, "kp", 3);
                  return sumAll(mul(y, y));
              }) < 1e-5);
    }
}

TEST_CASE("checkpoint round trip preserves parameters and buffers") {
    const std::string path = "/tmp/emscat_layers_ckpt.bin";
    ParameterStore store(42);
    Var w = store.get("a.w", {3, 2}, Init::Glorot);
    Var b = store.get("a.b", {1, 2}, Init::Glorot);
    Tensor& buf = store.buffer("a.running_mean", {1, 2}, 0.0);
    buf[0] = 0.25;
    buf[1] = -1.5;
    store.save(path);

    ParameterStore other(999);
    other.load(path);
    Var w2 = other.get("a.w", {3, 2}, Init::Zeros);
    Var b2 = other.get("a.b", {1, 2}, Init::Zeros);
    for (std::size_t i = 0; i < w->value.size(); ++i) CHECK(w2->value[i] == w->value[i]);
    for (std::size_t i = 0; i < b->value.size(); ++i) CHECK(b2->value[i] == b->value[i]);
    Tensor& buf2 = other.buffer("a.running_mean", {1, 2}, 0.0);
    CHECK(buf2[0] == 0.25);
    CHECK(buf2[1] == -1.5);

    // loading into a store that already holds the parameter overwrites values
    ParameterStore third(1);
    Var w3 = third.get("a.w", {3, 2}, Init::Zeros);
    third.load(path);
    for (std::size_t i = 0; i < w->value.size(); ++i) CHECK(w3->value[i] == w->value[i]);

    SUBCASE("corrupt magic is rejected") {
        const std::string bad = "/tmp/emscat_layers_bad.bin";
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("NOPE", f);
        std::fclose(f);
        ParameterStore victim(0);
        CHECK_THROWS_AS(victim.load(bad), NnError);
    }
    SUBCASE("missing file is rejected") {
        ParameterStore victim(0);
        CHECK_THROWS_AS(victim.load("/tmp/emscat_layers_nonexistent.bin"), NnError);
    }
}
