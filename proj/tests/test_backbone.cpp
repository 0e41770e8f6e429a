// Noise schedule, latent mapping, the denoising transformer, and DDIM
// sampling, with gradients checked against finite differences.

#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "motionlab/backbone.hpp"
#include "motionlab/rng.hpp"
#include "motionlab/trainer.hpp"

namespace ml = motionlab;

namespace {

ml::MatF random_mat(int r, int c, ml::Rng& rng, double scale = 1.0) {
    ml::MatF m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m.at(i) = static_cast<float>(scale * rng.normal());
    return m;
}

ml::VideoClip random_clip(uint64_t seed) {
    ml::VideoClip clip;
    ml::Rng rng(seed);
    for (size_t i = 0; i < clip.pixels.size(); ++i)
        clip.pixels[i] = static_cast<float>(rng.uniform());
    return clip;
}

bool same_bytes(const ml::MatF& a, const ml::MatF& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("noise schedule is monotone with pinned endpoints") {
    const ml::NoiseSchedule& s = ml::NoiseSchedule::linear();
    CHECK(s.ab(0) == 1.0);
    for (int t = 1; t <= ml::NoiseSchedule::kT; ++t) {
        CHECK(s.ab(t) < s.ab(t - 1));
        CHECK(s.ab(t) > 0.0);
    }
    CHECK(s.ab(ml::NoiseSchedule::kT) < 1e-3);

    // The per-step ratio recovers the linear beta ramp.
    CHECK(1.0 - s.ab(1) / s.ab(0) == doctest::Approx(1e-4).epsilon(1e-9));
    CHECK(1.0 - s.ab(ml::NoiseSchedule::kT) / s.ab(ml::NoiseSchedule::kT - 1) ==
          doctest::Approx(2e-2).epsilon(1e-9));

    CHECK_THROWS_AS(s.ab(-1), ml::ParameterError);
    CHECK_THROWS_AS(s.ab(ml::NoiseSchedule::kT + 1), ml::ParameterError);
}

TEST_CASE("add_noise is identity at t=0 and pure noise at t=T") {
    const ml::NoiseSchedule& s = ml::NoiseSchedule::linear();
    ml::Rng rng(41);
    ml::MatF z = random_mat(64, 64, rng);
    ml::MatF eps = random_mat(64, 64, rng);

    ml::MatF z0 = ml::add_noise(z, eps, 0, s);
    CHECK(same_bytes(z0, z));

    // At t=T the signal weight is sqrt(ab_T) ~ 6e-3: correlation with the
    // clean input stays below 0.1.
    ml::MatF zT = ml::add_noise(z, eps, ml::NoiseSchedule::kT, s);
    double szz = 0, stt = 0, szt = 0;
    for (size_t i = 0; i < z.size(); ++i) {
        szz += double(z.at(i)) * z.at(i);
        stt += double(zT.at(i)) * zT.at(i);
        szt += double(z.at(i)) * zT.at(i);
    }
    CHECK(std::abs(szt / std::sqrt(szz * stt)) < 0.1);

    ml::MatF bad(63, 64);
    CHECK_THROWS_AS(ml::add_noise(z, bad, 10, s), ml::ParameterError);
    CHECK_THROWS_AS(ml::add_noise(z, eps, ml::NoiseSchedule::kT + 1, s), ml::ParameterError);
}

TEST_CASE("noised variance follows the schedule mixing law") {
    const ml::NoiseSchedule& s = ml::NoiseSchedule::linear();
    const int n = 10000;
    for (int t : {1, 250, 500, 1000}) {
        ml::Rng rng(100 + t);
        // Signal with variance 4 so the mixture varies along the schedule.
        ml::MatF z(1, n), eps(1, n);
        for (int i = 0; i < n; ++i) {
            z.at(i) = static_cast<float>(2.0 * rng.normal());
            eps.at(i) = static_cast<float>(rng.normal());
        }
        ml::MatF zt = ml::add_noise(z, eps, t, s);
        double mean = 0, sq = 0;
        for (int i = 0; i < n; ++i) mean += zt.at(i);
        mean /= n;
        for (int i = 0; i < n; ++i) sq += (zt.at(i) - mean) * (zt.at(i) - mean);
        double var = sq / n;
        double want = s.ab(t) * 4.0 + (1.0 - s.ab(t));
        CHECK(var == doctest::Approx(want).epsilon(0.05));
    }

    // Unit-variance inputs keep unit variance at every t; a non-orthogonal
    // mixing rule would dip below 1 mid-schedule.
    ml::Rng rng(77);
    ml::MatF z(1, n), eps(1, n);
    for (int i = 0; i < n; ++i) {
        z.at(i) = static_cast<float>(rng.normal());
        eps.at(i) = static_cast<float>(rng.normal());
    }
    ml::MatF zt = ml::add_noise(z, eps, 500, s);
    double mean = 0, sq = 0;
    for (int i = 0; i < n; ++i) mean += zt.at(i);
    mean /= n;
    for (int i = 0; i < n; ++i) sq += (zt.at(i) - mean) * (zt.at(i) - mean);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("latent mapping round-trips pixels and clamps out-of-range values") {
    ml::ModelConfig geo;
    ml::VideoClip clip = random_clip(5);
    ml::MatF z = ml::to_latent(clip);
    CHECK(z.rows == geo.video_tokens());
    CHECK(z.cols == geo.patch_dim());

    float lo = 1e9f, hi = -1e9f;
    for (size_t i = 0; i < z.size(); ++i) {
        lo = std::min(lo, z.at(i));
        hi = std::max(hi, z.at(i));
    }
    CHECK(lo >= -1.0f);
    CHECK(hi <= 1.0f);

    ml::VideoClip back = ml::from_latent(z);
    float worst = 0;
    for (size_t i = 0; i < clip.pixels.size(); ++i)
        worst = std::max(worst, std::abs(back.pixels[i] - clip.pixels[i]));
    CHECK(worst <= 1e-6f);

    ml::MatF wild(geo.video_tokens(), geo.patch_dim());
    for (size_t i = 0; i < wild.size(); ++i) wild.at(i) = (i % 2 == 0) ? 3.0f : -3.0f;
    ml::VideoClip clipped = ml::from_latent(wild);
    for (size_t i = 0; i < clipped.pixels.size(); ++i)
        CHECK((clipped.pixels[i] == 0.0f || clipped.pixels[i] == 1.0f));

    ml::MatF bad(geo.video_tokens() - 1, geo.patch_dim());
    CHECK_THROWS_AS(ml::from_latent(bad), ml::ParameterError);
}

TEST_CASE("timestep embedding is sinusoidal over a geometric frequency ladder") {
    ml::MatF e = ml::timestep_embedding<float>(137.0, 16);
    CHECK(e.rows == 1);
    CHECK(e.cols == 16);
    // Index 0 carries frequency 1: plain sin/cos of t.
    CHECK(e(0, 0) == doctest::Approx(std::sin(137.0)));
    CHECK(e(0, 8) == doctest::Approx(std::cos(137.0)));
    for (size_t i = 0; i < e.size(); ++i) {
        CHECK(e.at(i) <= 1.0f);
        CHECK(e.at(i) >= -1.0f);
    }
    // sin^2 + cos^2 = 1 pairwise.
    for (int i = 0; i < 8; ++i)
        CHECK(e(0, i) * e(0, i) + e(0, 8 + i) * e(0, 8 + i) == doctest::Approx(1.0f));

    ml::MatF e2 = ml::timestep_embedding<float>(138.0, 16);
    bool differs = false;
    for (size_t i = 0; i < e.size(); ++i) differs = differs || e.at(i) != e2.at(i);
    CHECK(differs);

    CHECK_THROWS_AS(ml::timestep_embedding<float>(1.0, 15), ml::ParameterError);
}

TEST_CASE("forward is deterministic and shape-preserving") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(3);
    bb.init_params(ps, rng, /*zero_head=*/false);

    ml::Rng drng(4);
    ml::MatF z = random_mat(cfg.video_tokens(), cfg.patch_dim(), drng);
    ml::MatF ctx = random_mat(ml::kPromptLen, cfg.d, drng);

    ml::MatF out1 = bb.forward_value(z, ctx, 321.0, ps);
    ml::MatF out2 = bb.forward_value(z, ctx, 321.0, ps);
    CHECK(out1.rows == z.rows);
    CHECK(out1.cols == z.cols);
    CHECK(same_bytes(out1, out2));

    // Timestep and context both steer the prediction.
    ml::MatF out3 = bb.forward_value(z, ctx, 700.0, ps);
    CHECK(!same_bytes(out1, out3));
    ml::MatF ctx2 = ctx;
    ctx2(0, 0) += 0.5f;
    ml::MatF out4 = bb.forward_value(z, ctx2, 321.0, ps);
    CHECK(!same_bytes(out1, out4));
}

TEST_CASE("zero-head initialization is an exact zero predictor") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(9);
    bb.init_params(ps, rng, /*zero_head=*/true);

    ml::Rng drng(10);
    ml::MatF z = random_mat(cfg.video_tokens(), cfg.patch_dim(), drng);
    ml::MatF ctx = random_mat(ml::kPromptLen, cfg.d, drng);
    ml::MatF out = bb.forward_value(z, ctx, 55.0, ps);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0f);
}

TEST_CASE("diffusion loss of the zero predictor is the noise power") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(21);
    bb.init_params(ps, rng, /*zero_head=*/true);

    std::vector<ml::MatF> latents, contexts;
    ml::Rng drng(22);
    for (int i = 0; i < 8; ++i) {
        latents.push_back(random_mat(cfg.video_tokens(), cfg.patch_dim(), drng, 0.5));
        contexts.push_back(random_mat(ml::kPromptLen, cfg.d, drng));
    }
    double loss = ml::diffusion_loss(bb, ps, latents, contexts, 77);
    CHECK(loss == doctest::Approx(1.0).epsilon(0.05));
    CHECK(loss >= 0.0);

    CHECK_THROWS_AS(ml::diffusion_loss(bb, ps, {}, {}, 1), ml::ParameterError);
    CHECK_THROWS_AS(ml::diffusion_loss(bb, ps, latents, {contexts[0]}, 1), ml::ParameterError);
}

TEST_CASE("diffusion loss equals the recomputed batch-mean mse") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(31);
    bb.init_params(ps, rng, /*zero_head=*/false);

    std::vector<ml::MatF> latents, contexts;
    ml::Rng drng(32);
    for (int i = 0; i < 2; ++i) {
        latents.push_back(random_mat(cfg.video_tokens(), cfg.patch_dim(), drng, 0.3));
        contexts.push_back(random_mat(ml::kPromptLen, cfg.d, drng));
    }
    uint64_t seed = 91;
    double got = ml::diffusion_loss(bb, ps, latents, contexts, seed);

    const ml::NoiseSchedule& sched = ml::NoiseSchedule::linear();
    double want = 0.0;
    for (int i = 0; i < 2; ++i) {
        ml::NoiseDraw<float> nd =
            ml::draw_noise<float>(seed, i, latents[i].rows, latents[i].cols);
        ml::MatF zt = ml::add_noise(latents[i], nd.eps, nd.t, sched);
        ml::MatF pred = bb.forward_value(zt, contexts[i], double(nd.t), ps);
        double mse = 0.0;
        for (size_t k = 0; k < pred.size(); ++k) {
            double d = double(pred.at(k)) - double(nd.eps.at(k));
            mse += d * d;
        }
        want += mse / double(pred.size());
    }
    want /= 2.0;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("draw_noise is deterministic per index and spans the schedule") {
    ml::NoiseDraw<float> a = ml::draw_noise<float>(5, 3, 4, 8);
    ml::NoiseDraw<float> b = ml::draw_noise<float>(5, 3, 4, 8);
    CHECK(a.t == b.t);
    CHECK(same_bytes(a.eps, b.eps));

    ml::NoiseDraw<float> c = ml::draw_noise<float>(5, 4, 4, 8);
    CHECK((c.t != a.t || !same_bytes(c.eps, a.eps)));

    int tmin = ml::NoiseSchedule::kT, tmax = 1;
    double sum = 0, sq = 0;
    size_t n = 0;
    for (int i = 0; i < 2000; ++i) {
        ml::NoiseDraw<float> d = ml::draw_noise<float>(17, i, 1, 16);
        REQUIRE(d.t >= 1);
        REQUIRE(d.t <= ml::NoiseSchedule::kT);
        tmin = std::min(tmin, d.t);
        tmax = std::max(tmax, d.t);
        for (size_t k = 0; k < d.eps.size(); ++k) {
            sum += d.eps.at(k);
            sq += double(d.eps.at(k)) * d.eps.at(k);
            ++n;
        }
    }
    CHECK(tmin <= 50);
    CHECK(tmax >= 950);
    CHECK(sum / double(n) == doctest::Approx(0.0).epsilon(1).scale(0.05));
    CHECK(sq / double(n) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("ddim sampling is seed-deterministic and honors step counts") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(51);
    bb.init_params(ps, rng, /*zero_head=*/false);
    ml::Rng crng(52);
    ml::MatF ctx = random_mat(ml::kPromptLen, cfg.d, crng);

    ml::SampleOptions opt;
    opt.steps = 8;
    opt.seed = 1234;
    ml::VideoClip c1 = ml::ddim_sample(bb, ps, ctx, opt);
    ml::VideoClip c2 = ml::ddim_sample(bb, ps, ctx, opt);
    CHECK(std::memcmp(c1.pixels.data(), c2.pixels.data(),
                      c1.pixels.size() * sizeof(float)) == 0);

    opt.seed = 1235;
    ml::VideoClip c3 = ml::ddim_sample(bb, ps, ctx, opt);
    CHECK(std::memcmp(c1.pixels.data(), c3.pixels.data(),
                      c1.pixels.size() * sizeof(float)) != 0);

    opt.steps = 1;
    ml::VideoClip c4 = ml::ddim_sample(bb, ps, ctx, opt);
    for (float p : c4.pixels) {
        REQUIRE(std::isfinite(p));
        REQUIRE(p >= 0.0f);
        REQUIRE(p <= 1.0f);
    }

    opt.steps = 0;
    CHECK_THROWS_AS(ml::ddim_sample(bb, ps, ctx, opt), ml::ParameterError);
}

TEST_CASE("i2v sampling reproduces the reference first frame") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<float> bb(cfg);
    ml::ParamStore<float> ps;
    bb.register_params(ps);
    ml::Rng rng(61);
    bb.init_params(ps, rng, /*zero_head=*/false);
    ml::Rng crng(62);
    ml::MatF ctx = random_mat(ml::kPromptLen, cfg.d, crng);

    ml::VideoClip ref = random_clip(63);
    ml::SampleOptions opt;
    opt.steps = 6;
    opt.seed = 99;
    opt.i2v_reference = ref;
    ml::VideoClip out = ml::ddim_sample(bb, ps, ctx, opt);

    float worst = 0;
    for (int y = 0; y < ml::VideoClip::H; ++y)
        for (int x = 0; x < ml::VideoClip::W; ++x)
            for (int c = 0; c < ml::VideoClip::C; ++c)
                worst = std::max(worst, std::abs(out.at(0, y, x, c) - ref.at(0, y, x, c)));
    CHECK(worst <= 1.0f / 255.0f);

    ml::VideoClip ref2 = random_clip(64);
    opt.i2v_reference = ref2;
    ml::VideoClip out2 = ml::ddim_sample(bb, ps, ctx, opt);
    CHECK(std::memcmp(out.pixels.data(), out2.pixels.data(),
                      out.pixels.size() * sizeof(float)) != 0);
}

TEST_CASE("backbone gradients match finite differences on the probe config") {
    ml::ModelConfig cfg = ml::probe_config();
    ml::Backbone<double> bb(cfg);
    ml::ParamStore<double> ps;
    bb.register_params(ps);
    ml::Rng rng(71);
    bb.init_params(ps, rng, /*zero_head=*/false);

    // Default 0.02-scale init leaves some paths (notably the text blocks)
    // with gradients near the finite-difference noise floor; fatter weights
    // make every tensor's gradient measurable. Norm gains stay near 1.
    for (int id = 0; id < ps.size(); ++id) {
        ml::MatD& v = ps.value(id);
        bool is_gain = ps.name(id).size() >= 5 &&
                       ps.name(id).compare(ps.name(id).size() - 5, 5, ".ln.g") == 0;
        for (size_t k = 0; k < v.size(); ++k)
            v.at(k) = is_gain ? 1.0 + 0.1 * rng.normal() : 0.2 * rng.normal();
    }

    ml::Rng drng(72);
    ml::MatD z(cfg.video_tokens(), cfg.patch_dim());
    for (size_t i = 0; i < z.size(); ++i) z.at(i) = drng.normal();
    ml::MatD ctx(ml::kPromptLen, cfg.d);
    for (size_t i = 0; i < ctx.size(); ++i) ctx.at(i) = drng.normal();
    ml::MatD target(cfg.video_tokens(), cfg.patch_dim());
    for (size_t i = 0; i < target.size(); ++i) target.at(i) = drng.normal();
    const double t = 412.0;

    ml::GradStore<double> gs(ps);
    {
        ml::ad::Graph<double> g(true);
        ml::ad::Var pred = bb.forward(g, g.input(z), g.input(ctx), t, ps, &gs);
        g.backward(g.mse_to(pred, target));
    }

    auto loss_at = [&](const ml::ParamStore<double>& p) {
        ml::MatD pred = bb.forward_value(z, ctx, t, p);
        double acc = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            double d = pred.at(i) - target.at(i);
            acc += d * d;
        }
        return acc / double(pred.size());
    };

    // A spread of coordinates from every tensor, including each tensor's
    // first element so no parameter family escapes the audit.
    const double h = 1e-5;
    ml::Rng pick(73);
    int checked = 0;
    for (int id = 0; id < ps.size(); ++id) {
        size_t n = ps.value(id).size();
        for (int probe = 0; probe < 2; ++probe) {
            size_t k = probe == 0 ? 0 : static_cast<size_t>(pick.uniform_int(0, int64_t(n) - 1));
            double keep = ps.value(id).at(k);
            ps.value(id).at(k) = keep + h;
            double up = loss_at(ps);
            ps.value(id).at(k) = keep - h;
            double dn = loss_at(ps);
            ps.value(id).at(k) = keep;
            double fd = (up - dn) / (2 * h);
            double an = gs.grad(id).at(k);
            CAPTURE(ps.name(id));
            CAPTURE(k);
            CAPTURE(an);
            CAPTURE(fd);
            // Absolute floor covers coordinates whose true gradient sits
            // below what central differences can resolve on an O(1) loss.
            CHECK(std::abs(an - fd) <= 1e-8 + 1e-4 * std::max(std::abs(an), std::abs(fd)));
            ++checked;
            if (n == 1) break;
        }
    }
    CHECK(checked > 50);
}
