#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "cmda/config.hpp"
#include "cmda/runner.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "work";
    std::string seed;
};

void add_common(CLI::App* sub, CommonOpts* o) {
    sub->add_option("--config", o->config_path, "key=value configuration file");
    sub->add_option("--out", o->out_dir, "workspace directory (default: work)");
    sub->add_option("--seed", o->seed, "master seed (overrides the config file)")
        ->check(CLI::Number);
}

cmda::RunConfig make_config(const CommonOpts& o) {
    cmda::RunConfig cfg =
        o.config_path.empty() ? cmda::RunConfig() : cmda::RunConfig::parse_file(o.config_path);
    if (!o.seed.empty()) cfg.set("seed", o.seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial domain adaptation for pixel-wise segmentation"};
    app.require_subcommand(1);

    CommonOpts gen_o, run_o, abl_o;
    std::string mode, depth = "mid";

    CLI::App* gen = app.add_subcommand("gen-data", "generate the two-modality phantom datasets");
    add_common(gen, &gen_o);

    CLI::App* run = app.add_subcommand("run", "train / evaluate one experiment mode");
    add_common(run, &run_o);
    run->add_option("--mode", mode,
                    "seg-source | seg-target-scratch | seg-target-stl | eval-nodap | adapt-uda")
        ->required();
    run->add_option("--depth", depth, "adaptation depth: shallow | mid | deep | layer index");

    CLI::App* abl =
        app.add_subcommand("ablate-depth", "adapt-uda at the shallow, mid and deep presets");
    add_common(abl, &abl_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            cmda::run_gen_data(make_config(gen_o), gen_o.out_dir);
        } else if (run->parsed()) {
            cmda::run_mode(mode, depth, make_config(run_o), run_o.out_dir);
        } else if (abl->parsed()) {
            cmda::run_ablate_depth(make_config(abl_o), abl_o.out_dir);
        }
        return 0;
    } catch (const cmda::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const cmda::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
