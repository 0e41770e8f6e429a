// Command-line front end for the full pipeline: data generation, pretraining,
// motion customization, sampling, evaluation, and the component ablation.
// Exit codes: 0 success, 1 numeric failure (training/evaluation), 2 bad
// configuration or unusable input files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "motionlab/checkpoint.hpp"
#include "motionlab/evaluator.hpp"
#include "motionlab/manifest.hpp"
#include "motionlab/pipeline.hpp"
#include "motionlab/run_config.hpp"
#include "motionlab/trainer.hpp"
#include "motionlab/vocab.hpp"
#include "motionlab/world.hpp"

namespace ml = motionlab;

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config_path, "JSON config file; defaults apply when omitted");
    sub->add_option("--seed", f.seed, "override the run seed");
    sub->add_option("--out", f.out, "run directory (default $MOTIONLAB_OUT_ROOT/run or runs/run)");
}

ml::RunConfig resolve_config(const CommonFlags& f) {
    ml::RunConfig cfg =
        f.config_path.empty() ? ml::default_run_config() : ml::load_run_config(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.out.empty()) cfg.out = f.out;
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!s.empty()) out.push_back(cur);
    return out;
}

int manifest_count(const std::filesystem::path& p) {
    return static_cast<int>(ml::load_manifest(p).entries.size());
}

void cmd_gen_data(const ml::RunConfig& cfg) {
    ml::run_gen_data(cfg);
    ml::RunPaths paths(cfg);
    std::cout << "data written under " << paths.data_dir().string() << "\n"
              << "  pretrain " << manifest_count(paths.manifest_path(ml::Split::PRETRAIN))
              << ", exemplar " << manifest_count(paths.manifest_path(ml::Split::EXEMPLAR))
              << ", spv " << manifest_count(paths.manifest_path(ml::Split::SPV)) << ", eval "
              << manifest_count(paths.manifest_path(ml::Split::EVAL)) << "\n"
              << "  target motion: " << ml::to_string(cfg.data.target_motion) << "\n";
}

void cmd_pretrain(const ml::RunConfig& cfg) {
    ml::PretrainResult r = ml::run_pretrain(cfg);
    ml::RunPaths paths(cfg);
    std::cout << "pretrained " << r.steps_run << " steps\n"
              << "  loss: initial " << r.initial_loss << ", first window " << r.first_window_loss
              << ", last window " << r.last_window_loss << "\n"
              << "  base hash " << hex64(r.base_hash) << "\n"
              << "  checkpoint " << paths.base_checkpoint().string() << "\n";
}

void cmd_customize(const ml::RunConfig& cfg, bool resume) {
    ml::CustomizeResult r = ml::run_customize(cfg, resume);
    ml::RunPaths paths(cfg);
    std::cout << "customized for " << ml::to_string(r.target) << " over " << r.steps_run
              << " steps (exemplar fraction " << r.exemplar_fraction << ")\n"
              << "  exemplar loss: first window " << r.first_window_loss << ", last window "
              << r.last_window_loss << "\n"
              << "  base hash " << hex64(r.base_hash) << "\n"
              << "  checkpoint " << paths.custom_checkpoint().string() << "\n";
}

void cmd_sample(const ml::RunConfig& cfg, const std::optional<std::string>& i2v) {
    ml::SampleOutcome r = ml::run_sample(cfg, i2v);
    std::cout << "sampled " << r.clip_paths.size() << " clip(s) for \"" << r.prompt << "\"\n";
    for (const std::string& p : r.clip_paths) std::cout << "  " << p << "\n";
}

void cmd_evaluate(const ml::RunConfig& cfg) {
    ml::MetricsReport r = ml::run_evaluate(cfg);
    ml::RunPaths paths(cfg);
    std::cout << ml::report_table(r) << "report " << (paths.reports_dir() / "evaluation.json").string()
              << "\n";
}

void cmd_ablate(const ml::RunConfig& cfg, const std::string& order_csv) {
    std::vector<std::string> order = split_csv(order_csv);
    ml::AblationReport r = ml::run_ablate(cfg, order);
    ml::RunPaths paths(cfg);
    std::cout << ml::ablation_table(r) << "report "
              << (paths.reports_dir() / "ablation.json").string() << "\n";
}

template <typename Fn>
int run_guarded(Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const ml::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ml::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ml::ParameterError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ml::RenderError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ml::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ml::TrainError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 1;
    } catch (const ml::EvalError& e) {
        std::cerr << "evaluation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motionlab: desk-scale motion-customized video generation"};
    app.require_subcommand(1);

    CommonFlags gen_f;
    CLI::App* gen = app.add_subcommand("gen-data", "render the dataset manifests and clips");
    add_common(gen, gen_f);

    CommonFlags pre_f;
    CLI::App* pre = app.add_subcommand("pretrain", "train the base model on the rendered corpus");
    add_common(pre, pre_f);

    CommonFlags cus_f;
    bool resume = false;
    std::optional<double> alpha;
    CLI::App* cus = app.add_subcommand("customize", "train the custom head for the target motion");
    add_common(cus, cus_f);
    cus->add_flag("--resume", resume, "continue from the existing custom checkpoint");
    cus->add_option("--alpha", alpha, "override the exemplar sampling probability");

    CommonFlags sam_f;
    std::string i2v_path;
    CLI::App* sam = app.add_subcommand("sample", "sample clips from the current model");
    add_common(sam, sam_f);
    sam->add_option("--i2v", i2v_path, "clip file whose first frame conditions the samples");

    CommonFlags eva_f;
    CLI::App* eva = app.add_subcommand("evaluate", "score sampled clips against the oracles");
    add_common(eva, eva_f);

    CommonFlags abl_f;
    std::string order_csv;
    CLI::App* abl = app.add_subcommand("ablate", "run the cumulative component ladder");
    add_common(abl, abl_f);
    abl->add_option("--order", order_csv, "comma-separated component order for the ladder");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    return run_guarded([&] {
        if (*gen) {
            cmd_gen_data(resolve_config(gen_f));
        } else if (*pre) {
            cmd_pretrain(resolve_config(pre_f));
        } else if (*cus) {
            ml::RunConfig cfg = resolve_config(cus_f);
            if (alpha) {
                cfg.customize.alpha = *alpha;
                try {
                    cfg.customize.validate();
                } catch (const ml::TrainError& e) {
                    throw ml::ConfigError(e.what());
                }
            }
            cmd_customize(cfg, resume);
        } else if (*sam) {
            std::optional<std::string> i2v;
            if (!i2v_path.empty()) i2v = i2v_path;
            cmd_sample(resolve_config(sam_f), i2v);
        } else if (*eva) {
            cmd_evaluate(resolve_config(eva_f));
        } else if (*abl) {
            cmd_ablate(resolve_config(abl_f), order_csv);
        }
    });
}
