// Deterministic RNG streams, content hashing, parameter tables, and the
// masked AdamW optimizer.

#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "motionlab/hash.hpp"
#include "motionlab/params.hpp"
#include "motionlab/rng.hpp"

namespace ml = motionlab;

namespace {

bool bytes_equal(const ml::MatD& a, const ml::MatD& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("fnv1a64 matches published vectors and chains") {
    // Reference vectors for 64-bit FNV-1a.
    CHECK(ml::fnv1a64(std::string("")) == 0xcbf29ce484222325ull);
    CHECK(ml::fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cull);
    CHECK(ml::fnv1a64(std::string("foobar")) == 0x85944171f73967e8ull);

    // Hashing a concatenation equals hashing the pieces with chaining.
    uint64_t whole = ml::fnv1a64(std::string("alphabeta"));
    uint64_t chained = ml::fnv1a64(std::string("beta"), ml::fnv1a64(std::string("alpha")));
    CHECK(whole == chained);

    // Prefix sensitivity: a one-byte change anywhere flips the hash.
    CHECK(ml::fnv1a64(std::string("alphabeta")) != ml::fnv1a64(std::string("alphabetA")));
    CHECK(ml::fnv1a64(std::string("alphabeta")) != ml::fnv1a64(std::string("Alphabeta")));

    CHECK(ml::hash_hex(0xcbf29ce484222325ull) == "cbf29ce484222325");
    CHECK(ml::hash_hex(0x1ull) == "0000000000000001");
}

TEST_CASE("derive_seed separates streams by tag, index, and base") {
    uint64_t base = 12345;
    CHECK(ml::derive_seed(base, "noise") == ml::derive_seed(base, "noise"));
    CHECK(ml::derive_seed(base, "noise") != ml::derive_seed(base, "timestep"));
    CHECK(ml::derive_seed(base, "noise", 0) != ml::derive_seed(base, "noise", 1));
    CHECK(ml::derive_seed(base, "noise") != ml::derive_seed(base + 1, "noise"));

    // No collisions across a realistic consumer grid.
    std::set<uint64_t> seen;
    for (uint64_t b : {0ull, 1ull, 42ull, 0xffffffffffffffffull})
        for (const char* tag : {"a", "b", "clip_style", "background", "noise"})
            for (uint64_t idx = 0; idx < 16; ++idx) seen.insert(ml::derive_seed(b, tag, idx));
    CHECK(seen.size() == 4u * 5u * 16u);
}

TEST_CASE("rng is reproducible and distributions have the right moments") {
    ml::Rng a(7), b(7), c(8);
    bool same = true, differ = false;
    for (int i = 0; i < 64; ++i) {
        uint64_t x = a.next_u64();
        same = same && (x == b.next_u64());
        differ = differ || (x != c.next_u64());
    }
    CHECK(same);
    CHECK(differ);

    const int n = 200000;
    ml::Rng u(11);
    double sum = 0, sq = 0, lo = 1, hi = 0;
    for (int i = 0; i < n; ++i) {
        double x = u.uniform();
        sum += x;
        sq += x * x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.03));

    ml::Rng r(13);
    for (int i = 0; i < 1000; ++i) {
        double x = r.uniform(-2.5, 4.0);
        CHECK(x >= -2.5);
        CHECK(x < 4.0);
    }

    ml::Rng g(17);
    sum = 0;
    sq = 0;
    double quart = 0;
    for (int i = 0; i < n; ++i) {
        double x = g.normal();
        sum += x;
        sq += x * x;
        quart += x * x * x * x;
    }
    mean = sum / n;
    var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(0.0).epsilon(1).scale(0.02));
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
    // Kurtosis near 3 distinguishes a Gaussian from e.g. uniform (1.8).
    CHECK(quart / n == doctest::Approx(3.0).epsilon(0.1));

    ml::Rng s(19);
    sum = 0;
    for (int i = 0; i < n; ++i) sum += s.normal(5.0, 0.5);
    CHECK(sum / n == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("uniform_int covers closed range with near-uniform frequency") {
    ml::Rng r(23);
    const int n = 60000;
    int counts[6] = {0, 0, 0, 0, 0, 0};
    for (int i = 0; i < n; ++i) {
        int64_t k = r.uniform_int(2, 7);
        REQUIRE(k >= 2);
        REQUIRE(k <= 7);
        ++counts[k - 2];
    }
    for (int c : counts) CHECK(std::abs(c - n / 6) < 400);

    ml::Rng one(29);
    for (int i = 0; i < 8; ++i) CHECK(one.uniform_int(-3, -3) == -3);
}

TEST_CASE("param store hashes names, shapes, and contents in order") {
    ml::ParamStore<double> ps;
    int w = ps.add("w", 2, 3);
    int b = ps.add("b", 1, 3);
    CHECK(ps.size() == 2);
    CHECK(ps.scalar_count() == 9);
    CHECK(ps.has("w"));
    CHECK(!ps.has("q"));
    CHECK(ps.id("b") == b);
    CHECK(ps.name(w) == "w");
    for (size_t k = 0; k < 6; ++k) ps.value(w).at(k) = 0.5 * static_cast<double>(k);

    uint64_t h0 = ps.content_hash();
    CHECK(h0 == ps.content_hash());

    // Content sensitivity.
    ps.value(b).at(1) = 1e-9;
    uint64_t h1 = ps.content_hash();
    CHECK(h1 != h0);
    ps.value(b).at(1) = 0.0;
    CHECK(ps.content_hash() == h0);

    // Shape sensitivity: same bytes, transposed dims.
    ml::ParamStore<double> pa, pb;
    pa.add("w", 2, 3);
    pb.add("w", 3, 2);
    CHECK(pa.content_hash() != pb.content_hash());

    // Name sensitivity.
    ml::ParamStore<double> pc;
    pc.add("W", 2, 3);
    CHECK(pa.content_hash() != pc.content_hash());

    // subset_hash ignores parameters outside the subset.
    uint64_t sw = ps.subset_hash({w});
    ps.value(b).at(0) = 42.0;
    CHECK(ps.subset_hash({w}) == sw);
    CHECK(ps.subset_hash({b}) != ps.subset_hash({w}));
    ps.value(w).at(0) += 1.0;
    CHECK(ps.subset_hash({w}) != sw);

    // Round trip through a float cast preserves float-representable values.
    ml::ParamStore<float> pf = ps.cast<float>();
    CHECK(pf.size() == ps.size());
    CHECK(pf.value("w").rows == 2);
    CHECK(static_cast<double>(pf.value(w).at(1)) == ps.value(w).at(1));
}

TEST_CASE("grad store aligns shapes and computes subset norms") {
    ml::ParamStore<double> ps;
    int a = ps.add("a", 1, 2);
    int b = ps.add("b", 2, 2);
    ml::GradStore<double> gs(ps);
    CHECK(gs.size() == 2);
    CHECK(gs.grad(b).rows == 2);

    gs.grad(a).at(0) = 3.0;
    gs.grad(a).at(1) = 4.0;
    gs.grad(b).at(0) = 12.0;
    CHECK(gs.norm({a}) == doctest::Approx(5.0));
    CHECK(gs.norm({a, b}) == doctest::Approx(13.0));
    CHECK(gs.norm({}) == 0.0);

    gs.scale(0.5);
    CHECK(gs.norm({a, b}) == doctest::Approx(6.5));
    gs.zero();
    CHECK(gs.norm({a, b}) == 0.0);
}

TEST_CASE("adamw first and second steps match the closed form") {
    ml::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.eps = 1e-8;
    cfg.weight_decay = 0.01;

    ml::ParamStore<double> ps;
    int p = ps.add("p", 1, 3);
    double init[3] = {1.0, -2.0, 0.5};
    double g1[3] = {0.3, -0.7, 0.0};
    double g2[3] = {-0.1, 0.2, 0.4};
    for (size_t k = 0; k < 3; ++k) ps.value(p).at(k) = init[k];

    ml::GradStore<double> gs(ps);
    for (size_t k = 0; k < 3; ++k) gs.grad(p).at(k) = g1[k];

    ml::AdamW<double> opt(ps, cfg);
    double gnorm = opt.step(ps, gs, {p});
    CHECK(gnorm == doctest::Approx(std::sqrt(0.3 * 0.3 + 0.7 * 0.7)));
    CHECK(opt.step_count(p) == 1);

    // t=1: bias correction makes mhat = g and vhat = g^2 exactly, so the
    // update reduces to lr * (g / (|g| + eps) + wd * p).
    double x1[3];
    for (int k = 0; k < 3; ++k) {
        x1[k] = init[k] - cfg.lr * (g1[k] / (std::abs(g1[k]) + cfg.eps) + cfg.weight_decay * init[k]);
        CHECK(ps.value(p).at(k) == doctest::Approx(x1[k]).epsilon(1e-12));
    }
    CHECK(opt.moment1(p).at(0) == doctest::Approx((1 - cfg.beta1) * g1[0]));
    CHECK(opt.moment2(p).at(1) == doctest::Approx((1 - cfg.beta2) * g1[1] * g1[1]));

    for (size_t k = 0; k < 3; ++k) gs.grad(p).at(k) = g2[k];
    opt.step(ps, gs, {p});
    CHECK(opt.step_count(p) == 2);
    for (int k = 0; k < 3; ++k) {
        double m = cfg.beta1 * (1 - cfg.beta1) * g1[k] + (1 - cfg.beta1) * g2[k];
        double v = cfg.beta2 * (1 - cfg.beta2) * g1[k] * g1[k] + (1 - cfg.beta2) * g2[k] * g2[k];
        double mhat = m / (1 - cfg.beta1 * cfg.beta1);
        double vhat = v / (1 - cfg.beta2 * cfg.beta2);
        double want = x1[k] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * x1[k]);
        CHECK(ps.value(p).at(k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adamw leaves parameters outside the update set bit-identical") {
    ml::ParamStore<double> ps;
    int hot = ps.add("hot", 2, 2);
    int cold = ps.add("cold", 3, 1);
    ml::Rng r(31);
    for (size_t k = 0; k < 4; ++k) ps.value(hot).at(k) = r.normal();
    for (size_t k = 0; k < 3; ++k) ps.value(cold).at(k) = r.normal();
    uint64_t cold_hash = ps.subset_hash({cold});

    ml::AdamWConfig cfg;
    cfg.lr = 1e-2;
    ml::AdamW<double> opt(ps, cfg);
    ml::MatD cold_m1 = opt.moment1(cold);
    ml::MatD cold_m2 = opt.moment2(cold);

    ml::GradStore<double> gs(ps);
    for (int step = 0; step < 10; ++step) {
        // Nonzero gradient on the frozen parameter must still be ignored.
        for (size_t k = 0; k < 4; ++k) gs.grad(hot).at(k) = 0.1 * static_cast<double>(step + 1);
        for (size_t k = 0; k < 3; ++k) gs.grad(cold).at(k) = 5.0;
        opt.step(ps, gs, {hot});
    }

    CHECK(opt.step_count(hot) == 10);
    CHECK(opt.step_count(cold) == 0);
    CHECK(ps.subset_hash({cold}) == cold_hash);
    CHECK(bytes_equal(opt.moment1(cold), cold_m1));
    CHECK(bytes_equal(opt.moment2(cold), cold_m2));
    // Weight decay alone must not leak onto frozen parameters either.
    CHECK(ps.value(cold).at(0) == ps.value(cold).at(0));  // no NaN crept in
    CHECK(ps.subset_hash({hot}) != ps.content_hash());    // hot actually moved
}

TEST_CASE("adamw clip scales updates but reports the pre-clip norm") {
    ml::ParamStore<double> ps;
    int p = ps.add("p", 1, 2);
    ps.value(p).at(0) = 1.0;
    ps.value(p).at(1) = -1.0;
    ml::ParamStore<double> ps2 = ps;

    ml::AdamWConfig clipped;
    clipped.lr = 0.05;
    clipped.clip_norm = 1.0;
    ml::AdamWConfig plain = clipped;
    plain.clip_norm = 0.0;

    ml::AdamW<double> oa(ps, clipped);
    ml::AdamW<double> ob(ps2, plain);

    ml::GradStore<double> ga(ps), gb(ps2);
    ga.grad(p).at(0) = 3.0;
    ga.grad(p).at(1) = 4.0;
    double gnorm = oa.step(ps, ga, {p});
    CHECK(gnorm == doctest::Approx(5.0));

    // Feeding the pre-scaled gradient to an unclipped optimizer reproduces
    // the clipped update bit for bit.
    gb.grad(p).at(0) = 3.0 * (1.0 / 5.0);
    gb.grad(p).at(1) = 4.0 * (1.0 / 5.0);
    ob.step(ps2, gb, {p});
    CHECK(ps.value(p).at(0) == ps2.value(p).at(0));
    CHECK(ps.value(p).at(1) == ps2.value(p).at(1));

    // Below the threshold clipping is a no-op and the norm is unchanged.
    ga.grad(p).at(0) = 0.3;
    ga.grad(p).at(1) = 0.4;
    CHECK(oa.step(ps, ga, {p}) == doctest::Approx(0.5));
}

TEST_CASE("adamw step counts are serializable optimizer state") {
    ml::AdamWConfig cfg;
    cfg.lr = 0.01;

    ml::ParamStore<double> ps;
    int p = ps.add("p", 1, 1);
    ps.value(p).at(0) = 2.0;
    ml::ParamStore<double> qs = ps;

    // Optimizer A takes 5 steps; optimizer B restores A's state and must
    // continue identically from step 6.
    ml::AdamW<double> oa(ps, cfg);
    ml::GradStore<double> g(ps);
    for (int i = 0; i < 5; ++i) {
        g.grad(p).at(0) = 0.2 + 0.1 * i;
        oa.step(ps, g, {p});
    }

    ml::AdamW<double> ob(qs, cfg);
    qs.value(p).at(0) = ps.value(p).at(0);
    ob.moment1(p) = oa.moment1(p);
    ob.moment2(p) = oa.moment2(p);
    ob.set_step_count(p, oa.step_count(p));
    CHECK(ob.step_count(p) == 5);

    g.grad(p).at(0) = -0.35;
    oa.step(ps, g, {p});
    ob.step(qs, g, {p});
    CHECK(ps.value(p).at(0) == qs.value(p).at(0));
    CHECK(bytes_equal(oa.moment1(p), ob.moment1(p)));
    CHECK(bytes_equal(oa.moment2(p), ob.moment2(p)));
}

TEST_CASE("adamw with zero lr moves moments but not parameters") {
    ml::AdamWConfig cfg;
    cfg.lr = 0.0;
    ml::ParamStore<double> ps;
    int p = ps.add("p", 1, 2);
    ps.value(p).at(0) = 0.25;
    ps.value(p).at(1) = -4.0;
    uint64_t before = ps.content_hash();

    ml::AdamW<double> opt(ps, cfg);
    ml::GradStore<double> gs(ps);
    gs.grad(p).at(0) = 1.0;
    gs.grad(p).at(1) = -2.0;
    opt.step(ps, gs, {p});

    CHECK(ps.content_hash() == before);
    CHECK(opt.step_count(p) == 1);
    CHECK(opt.moment1(p).at(0) != 0.0);
}
