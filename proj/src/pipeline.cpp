#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "emscat/runconfig.hpp"

namespace emscat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string compat_record(const RunConfig& cfg) {
    json j;
    j["shape"] = {{"mesh_path", cfg.shape.meshPath},
                  {"kind", static_cast<int>(cfg.shape.kind)},
                  {"params", cfg.shape.params.values},
                  {"edge_length", cfg.shape.edgeLength}};
    j["wave"] = {{"frequency_hz", cfg.wave.frequencyHz}, {"amplitude_vm", cfg.wave.amplitudeVm}};
    j["hierarchy_levels"] = cfg.hierarchyLevels;
    j["model"] = {{"levels", cfg.model.levels},
                  {"width", cfg.model.featureWidth},
                  {"heads", cfg.model.attentionHeads},
                  {"kpconv_kernels", cfg.model.kpconvKernelCount},
                  {"skip_connections", cfg.model.skipConnections},
                  {"edge_constraint", cfg.model.edgeConstraint},
                  {"kv_source", cfg.model.kvSource == KvSource::Sum ? "sum" : "expanded"},
                  {"include_coordinates", cfg.model.includeCoordinates}};
    return j.dump();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<ScatteringSample> build_dataset(const RunConfig& cfg, const ShapeConfig& shape) {
    auto mesh = std::make_shared<TriangleMesh>(make_configured_mesh(shape));
    return generate_dataset(mesh, cfg.wave.frequencyHz, cfg.wave.amplitudeVm,
                            cfg.wave.angles(), cfg.hierarchyLevels);
}

json metrics_json(const EvalMetrics& m) {
    return json{{"rmse", m.rmse},
                {"mae", m.mae},
                {"mse", m.mse},
                {"r2", m.r2},
                {"mean_physics_loss", m.meanPhysicsLoss},
                {"inference_seconds", m.inferenceSeconds},
                {"solver_seconds", m.solverSeconds},
                {"sample_count", m.sampleCount}};
}

void check_compat(const RunConfig& cfg, const fs::path& sidecar) {
    if (!fs::exists(sidecar))
        throw CompatibilityError("checkpoint record missing: " + sidecar.string());
    json rec = json::parse(read_text(sidecar));
    std::string expected = fnv1a64_hex(compat_record(cfg));
    if (rec.value("compat_hash", std::string()) != expected)
        throw CompatibilityError("checkpoint was trained under a different configuration");
}

}  // namespace

void run_gen(const RunConfig& cfg) {
    fs::create_directories(cfg.outputDir);
    fs::path dir(cfg.outputDir);

    TriangleMesh mesh = make_configured_mesh(cfg.shape);
    write_off(mesh, (dir / "mesh.off").string());

    auto meshPtr = std::make_shared<TriangleMesh>(mesh);
    std::vector<ScatteringSample> samples =
        generate_dataset(meshPtr, cfg.wave.frequencyHz, cfg.wave.amplitudeVm, cfg.wave.angles(),
                         cfg.hierarchyLevels);

    std::vector<std::string> files{"mesh.off"};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "currents_%03zu.csv", i);
        write_currents_csv(samples[i].label, (dir / name).string(), cfg.configHash);
        files.push_back(name);
    }

    const MeshContext& ctx = *samples.front().context;
    write_text(dir / "hierarchy.txt",
               "# config_hash=" + cfg.configHash + "\n" + serialize_hierarchy(ctx.hierarchy));
    files.push_back("hierarchy.txt");
    for (std::size_t l = 0; l < ctx.graphs.size(); ++l) {
        char nodesName[64], edgesName[64];
        std::snprintf(nodesName, sizeof nodesName, "graph_nodes_l%zu.csv", l);
        std::snprintf(edgesName, sizeof edgesName, "graph_edges_l%zu.csv", l);
        write_text(dir / nodesName,
                   "# config_hash=" + cfg.configHash + "\n" + serialize_graph_nodes(ctx.graphs[l]));
        write_text(dir / edgesName,
                   "# config_hash=" + cfg.configHash + "\n" + serialize_graph_edges(ctx.graphs[l]));
        files.push_back(nodesName);
        files.push_back(edgesName);
    }

    json manifest;
    manifest["config_hash"] = cfg.configHash;
    manifest["mesh"] = "mesh.off";
    manifest["sample_count"] = samples.size();
    manifest["files"] = json::array();
    for (const auto& f : files)
        manifest["files"].push_back({{"path", f}, {"fnv1a", fnv1a64_hex(read_text(dir / f))}});
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

void run_solve(const RunConfig& cfg, bool physicalOptics, bool withMie) {
    fs::create_directories(cfg.outputDir);
    fs::path dir(cfg.outputDir);

    TriangleMesh mesh = make_configured_mesh(cfg.shape);
    IncidentWave wave(cfg.wave.frequencyHz, cfg.wave.amplitudeVm, cfg.wave.thetaStartDeg,
                      cfg.wave.phiDeg);

    SurfaceCurrentField currents;
    if (physicalOptics) {
        currents = physical_optics_currents(mesh, wave);
        std::printf("physical-optics currents on %d faces\n", mesh.faceCount());
    } else {
        ImpedanceSystem sys = assemble_system(mesh, wave);
        SolveReport report;
        currents = solve_currents(sys, mesh, &report);
        std::printf("solved %d faces, relative residual %.3e\n", mesh.faceCount(),
                    report.relativeResidual);
    }
    write_currents_csv(currents, (dir / "currents.csv").string(), cfg.configHash);
    RCSProfile rcs = bistatic_rcs(currents, mesh, wave, cfg.eval.cut);
    write_rcs_csv(rcs, (dir / "rcs.csv").string(), cfg.configHash);

    if (withMie) {
        if (!cfg.shape.meshPath.empty() || cfg.shape.kind != ShapeKind::Sphere)
            throw ConfigError("--mie requires a generated sphere shape");
        RCSProfile mie = mie_reference(cfg.shape.params.values.at(0), wave, cfg.eval.cut);
        write_rcs_csv(mie, (dir / "mie_rcs.csv").string(), cfg.configHash);
    }
}

void run_train(const RunConfig& cfg) {
    fs::create_directories(cfg.outputDir);
    fs::path dir(cfg.outputDir);

    std::vector<ScatteringSample> all = build_dataset(cfg, cfg.shape);
    std::vector<ScatteringSample> trainSet, testSet;
    split_dataset(all, trainSet, testSet);
    if (trainSet.empty()) trainSet = all;

    Network net(cfg.model, cfg.seed);
    TrainOptions opts = cfg.train;
    opts.lossHistoryPath = (dir / "loss_history.csv").string();
    TrainResult result = train_network(net, trainSet, opts);

    net.store().save((dir / "checkpoint.bin").string());
    json rec;
    rec["config_hash"] = cfg.configHash;
    rec["compat_hash"] = fnv1a64_hex(compat_record(cfg));
    rec["final_loss"] = result.finalLoss;
    rec["epochs"] = opts.epochs;
    write_text(dir / "checkpoint.json", rec.dump(2) + "\n");
    std::printf("trained %d epochs, final loss %.6g\n", opts.epochs, result.finalLoss);
}

void run_eval(const RunConfig& cfg) {
    fs::path dir(cfg.outputDir);
    check_compat(cfg, dir / "checkpoint.json");

    std::vector<ScatteringSample> all = build_dataset(cfg, cfg.shape);
    std::vector<ScatteringSample> trainSet, testSet;
    split_dataset(all, trainSet, testSet);
    if (testSet.empty()) testSet = all;

    Network net(cfg.model, cfg.seed);
    net.store().load((dir / "checkpoint.bin").string());

    EvalMetrics m = evaluate_network(net, testSet, true);
    json out = metrics_json(m);
    out["config_hash"] = cfg.configHash;
    write_text(dir / "metrics.json", out.dump(2) + "\n");
    write_error_cdf_csv(net, testSet, (dir / "error_cdf.csv").string());
    write_rcs_overlay_csv(net, testSet.front(), cfg.eval.cut,
                          (dir / "rcs_overlay.csv").string());
    std::printf("evaluated %d samples: rmse %.6g r2 %.6g\n", m.sampleCount, m.rmse, m.r2);
}

void run_ablate(const RunConfig& cfg) {
    fs::create_directories(cfg.outputDir);
    fs::path dir(cfg.outputDir);

    std::vector<ScatteringSample> all = build_dataset(cfg, cfg.shape);
    std::vector<ScatteringSample> trainSet, testSet;
    split_dataset(all, trainSet, testSet);
    if (testSet.empty()) testSet = all;

    TrainOptions opts = cfg.train;
    std::vector<AblationArm> arms = ablation_suite(cfg.model, trainSet, testSet, opts);

    std::ostringstream summary;
    summary << "arm,final_train_loss,rmse,mae,mse,r2,mean_physics_loss\n";
    for (const auto& arm : arms) {
        fs::path armDir = dir / ("ablation_" + arm.name);
        fs::create_directories(armDir);
        json out = metrics_json(arm.metrics);
        out["config_hash"] = cfg.configHash;
        out["arm"] = arm.name;
        out["final_train_loss"] = arm.finalTrainLoss;
        write_text(armDir / "metrics.json", out.dump(2) + "\n");
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      arm.name.c_str(), arm.finalTrainLoss, arm.metrics.rmse, arm.metrics.mae,
                      arm.metrics.mse, arm.metrics.r2, arm.metrics.meanPhysicsLoss);
        summary << buf;
    }
    write_text(dir / "ablation_summary.csv",
               "# config_hash=" + cfg.configHash + "\n" + summary.str());
}

void run_finetune(const RunConfig& cfg, double fractionOverride) {
    fs::path dir(cfg.outputDir);
    check_compat(cfg, dir / "checkpoint.json");

    double fraction = fractionOverride > 0 ? fractionOverride : cfg.finetune.fraction;
    const ShapeConfig& shape = cfg.finetune.hasShape ? cfg.finetune.shape : cfg.shape;
    std::vector<ScatteringSample> all = build_dataset(cfg, shape);

    Network net(cfg.model, cfg.seed);
    net.store().load((dir / "checkpoint.bin").string());

    auto [kept, rest] = finetune_split(all.size(), fraction, cfg.seed);
    std::vector<ScatteringSample> subset, holdout;
    for (std::size_t i : kept) subset.push_back(all[i]);
    for (std::size_t i : rest) holdout.push_back(all[i]);
    if (holdout.empty()) holdout = subset;

    TrainOptions opts = cfg.train;
    opts.epochs = cfg.finetune.epochs;
    opts.lossHistoryPath = (dir / "finetune_loss_history.csv").string();
    TrainResult result = train_network(net, subset, opts);

    EvalMetrics m = evaluate_network(net, holdout, false);
    json out = metrics_json(m);
    out["config_hash"] = cfg.configHash;
    out["fraction"] = fraction;
    out["final_finetune_loss"] = result.finalLoss;
    write_text(dir / "finetune_metrics.json", out.dump(2) + "\n");
    write_error_cdf_csv(net, holdout, (dir / "finetune_cdf.csv").string());
    std::printf("fine-tuned on %zu of %zu samples, rmse %.6g\n", subset.size(), all.size(),
                m.rmse);
}

}  // namespace emscat
