#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "emscat/capi.h"

namespace {

int report(emscat_status status) {
    if (status != EMSCAT_OK) std::fprintf(stderr, "error: %s\n", emscat_last_error());
    return static_cast<int>(status);
}

struct ConfigGuard {
    emscat_config* handle = nullptr;
    ~ConfigGuard() { emscat_config_free(handle); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"electromagnetic scattering pipeline: reference solver, "
                 "physics-informed surrogate, RCS post-processing"};
    app.require_subcommand(1);

    std::string configPath;
    bool usePo = false;
    bool withMie = false;
    double fraction = 0.0;

    auto addConfig = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", configPath, "run configuration JSON")
            ->required()
            ->check(CLI::ExistingFile);
    };

    CLI::App* gen = app.add_subcommand("gen", "generate mesh, labels, hierarchy and graph files");
    addConfig(gen);
    CLI::App* solve = app.add_subcommand("solve", "run the reference solver on one incidence");
    addConfig(solve);
    solve->add_flag("--po", usePo, "use physical-optics currents instead of the full solver");
    solve->add_flag("--mie", withMie, "also write the analytic sphere reference curve");
    CLI::App* train = app.add_subcommand("train", "train the surrogate model");
    addConfig(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
    addConfig(eval);
    CLI::App* ablate = app.add_subcommand("ablate", "run the four-arm ablation suite");
    addConfig(ablate);
    CLI::App* finetune = app.add_subcommand("finetune", "fine-tune a checkpoint on partial data");
    addConfig(finetune);
    finetune->add_option("--fraction", fraction, "fraction of samples used for fine-tuning");

    CLI11_PARSE(app, argc, argv);

    ConfigGuard cfg;
    emscat_status status = emscat_config_load(configPath.c_str(), &cfg.handle);
    if (status != EMSCAT_OK) return report(status);

    if (gen->parsed()) return report(emscat_run_gen(cfg.handle));
    if (solve->parsed()) return report(emscat_run_solve(cfg.handle, usePo ? 1 : 0, withMie ? 1 : 0));
    if (train->parsed()) return report(emscat_run_train(cfg.handle));
    if (eval->parsed()) return report(emscat_run_eval(cfg.handle));
    if (ablate->parsed()) return report(emscat_run_ablate(cfg.handle));
    if (finetune->parsed()) return report(emscat_run_finetune(cfg.handle, fraction));
    return 1;
}
