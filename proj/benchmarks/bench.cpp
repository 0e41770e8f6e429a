// Hot-path timings: rendering, oracle classification, model forward,
// one masked training step, sampling, and the distribution distance.

#include <benchmark/benchmark.h>

#include "motionlab/backbone.hpp"
#include "motionlab/evaluator.hpp"
#include "motionlab/manifest.hpp"
#include "motionlab/oracle.hpp"
#include "motionlab/pipeline.hpp"
#include "motionlab/trainer.hpp"
#include "motionlab/vocab.hpp"
#include "motionlab/world.hpp"

namespace ml = motionlab;

namespace {

ml::ManifestEntry probe_entry(uint64_t seed) {
    ml::ManifestEntry e;
    e.subject = {ml::Shape::circle, ml::Color::red, 0.22};
    e.motion = ml::canonical_motion(ml::MotionFamily::slide_right);
    e.prompt_text = ml::prompt_text(e.subject, e.motion.family);
    e.seed = seed;
    return e;
}

ml::TrainSample probe_sample(const ml::ModelState& m, uint64_t seed) {
    ml::ManifestEntry e = probe_entry(seed);
    ml::TrainSample s;
    s.clip = ml::render_entry(e);
    s.prompt = ml::tokenize(e.prompt_text, m.vocab);
    s.source = ml::SampleSource::EXEMPLAR;
    return s;
}

void BM_RenderClip(benchmark::State& state) {
    ml::ManifestEntry e = probe_entry(7);
    for (auto _ : state) {
        ml::VideoClip c = ml::render_entry(e);
        benchmark::DoNotOptimize(c.pixels.data());
    }
}
BENCHMARK(BM_RenderClip);

void BM_OracleMotion(benchmark::State& state) {
    ml::VideoClip clip = ml::render_entry(probe_entry(7));
    for (auto _ : state) {
        ml::MotionVerdict v = ml::oracle_classify_motion(clip);
        benchmark::DoNotOptimize(v.confidence);
    }
}
BENCHMARK(BM_OracleMotion);

void BM_BackboneForward(benchmark::State& state) {
    ml::ModelState m(ml::probe_config());
    m.init_base(11, false);
    ml::PromptSpec prompt = ml::tokenize("a red circle sliding right", m.vocab);
    ml::MatF ctx = m.prompt_context(prompt);
    ml::VideoClip clip = ml::render_entry(probe_entry(7));
    ml::MatF z = ml::to_latent(clip);
    for (auto _ : state) {
        ml::MatF eps = m.backbone.forward_value(z, ctx, 500.0, m.base);
        benchmark::DoNotOptimize(eps.data.data());
    }
}
BENCHMARK(BM_BackboneForward);

void BM_TrainingStep(benchmark::State& state) {
    ml::ModelState m(ml::probe_config());
    m.init_base(11, false);
    m.enable_custom({true, true, true, true}, 2, ml::MotionFamily::figure_eight, 13);
    ml::AdamWConfig oc;
    oc.lr = 1e-3;
    ml::AdamW<float> opt(m.custom, oc);
    std::vector<ml::TrainSample> batch = {probe_sample(m, 3), probe_sample(m, 4)};
    std::vector<std::string> mask = ml::select_trainables(m, ml::SampleSource::EXEMPLAR);
    uint64_t step_seed = 29;
    for (auto _ : state) {
        ml::StepResult r = ml::training_step(m, opt, batch, mask, step_seed++);
        benchmark::DoNotOptimize(r.loss);
    }
}
BENCHMARK(BM_TrainingStep);

void BM_DdimSample(benchmark::State& state) {
    ml::ModelState m(ml::probe_config());
    m.init_base(11, false);
    ml::PromptSpec prompt = ml::tokenize("a red circle sliding right", m.vocab);
    ml::MatF ctx = m.prompt_context(prompt);
    ml::SampleOptions opt;
    opt.steps = 10;
    opt.seed = 5;
    for (auto _ : state) {
        ml::VideoClip c = ml::ddim_sample(m.backbone, m.base, ctx, opt);
        benchmark::DoNotOptimize(c.pixels.data());
    }
}
BENCHMARK(BM_DdimSample);

void BM_FrechetDistance(benchmark::State& state) {
    std::vector<ml::VideoClip> a, b;
    for (int i = 0; i < 8; ++i) {
        a.push_back(ml::render_entry(probe_entry(100 + i)));
        b.push_back(ml::render_entry(probe_entry(200 + i)));
    }
    for (auto _ : state) {
        double d = ml::frechet_feature_distance(a, b);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_FrechetDistance);

}  // namespace

BENCHMARK_MAIN();
