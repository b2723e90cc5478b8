#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "emscat/runconfig.hpp"

using namespace emscat;
namespace fs = std::filesystem;

namespace {

std::string config_error_message(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path("config_test_out") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 12-face cube, three incidences, one hierarchy level: small enough that the
// train/eval round trips below finish in well under a second
const char* kTinyConfig = R"({
    "seed": 7,
    "shape": {"kind": "cube", "params": [0.08], "edge_length": 0.08},
    "wave": {"frequency_hz": 2e9, "theta_stop_deg": 90.0, "theta_count": 3},
    "hierarchy": {"levels": 1},
    "model": {"width": 4, "heads": 2, "kpconv_kernels": 2},
    "train": {"epochs": 1, "batch_size": 4, "learning_rate": 1e-3},
    "eval": {"samples": 4}
})";

}  // namespace

TEST_CASE("empty document keeps every default") {
    RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.seed == 0);
    CHECK(cfg.outputDir == "out");
    CHECK(cfg.shape.kind == ShapeKind::Cube);
    CHECK(cfg.shape.params.values == std::vector<double>{0.15});
    CHECK(cfg.shape.edgeLength == 0.03);
    CHECK(cfg.shape.meshPath.empty());
    CHECK(cfg.wave.frequencyHz == 1e9);
    CHECK(cfg.wave.amplitudeVm == 1.0);
    CHECK(cfg.wave.thetaCount == 19);
    CHECK(cfg.hierarchyLevels == 3);
    CHECK(cfg.model.levels == 3);
    CHECK(cfg.model.featureWidth == 32);
    CHECK(cfg.model.skipConnections);
    CHECK(cfg.model.edgeConstraint);
    CHECK(cfg.train.epochs == 300);
    CHECK(cfg.train.batchSize == 64);
    CHECK(cfg.train.learningRate == 5e-4);
    CHECK_FALSE(cfg.train.useLabelLoss);
    CHECK(cfg.eval.cut.samples == 181);
    CHECK(cfg.finetune.fraction == 0.2);
    CHECK_FALSE(cfg.finetune.hasShape);
    CHECK(cfg.configHash.size() == 16);
}

TEST_CASE("explicit values land in the right fields") {
    RunConfig cfg = parse_run_config(R"({
        "seed": 42,
        "output_dir": "runs/a",
        "shape": {"kind": "Sphere", "params": [0.25], "edge_length": 0.02},
        "wave": {"frequency_hz": 3e9, "amplitude_vm": 2.0, "phi_deg": 15.0,
                 "theta_start_deg": 10.0, "theta_stop_deg": 170.0, "theta_count": 5},
        "hierarchy": {"levels": 2},
        "model": {"width": 8, "heads": 4, "kpconv_kernels": 3,
                  "skip_connections": false, "edge_constraint": false,
                  "kv_source": "expanded", "include_coordinates": true},
        "train": {"epochs": 12, "batch_size": 3, "learning_rate": 0.01, "loss": "mse"},
        "eval": {"theta_start_deg": 5.0, "theta_stop_deg": 175.0, "samples": 11, "phi_deg": 30.0},
        "finetune": {"fraction": 0.5, "epochs": 4,
                     "shape": {"kind": "cone", "params": [0.1, 0.2], "edge_length": 0.05}}
    })");
    CHECK(cfg.seed == 42);
    CHECK(cfg.outputDir == "runs/a");
    CHECK(cfg.shape.kind == ShapeKind::Sphere);  // kind matching is case-insensitive
    CHECK(cfg.shape.edgeLength == 0.02);
    CHECK(cfg.wave.frequencyHz == 3e9);
    CHECK(cfg.wave.amplitudeVm == 2.0);
    CHECK(cfg.wave.thetaCount == 5);
    CHECK(cfg.hierarchyLevels == 2);
    CHECK(cfg.model.levels == 2);  // hierarchy depth feeds the model config
    CHECK(cfg.model.featureWidth == 8);
    CHECK(cfg.model.attentionHeads == 4);
    CHECK(cfg.model.kpconvKernelCount == 3);
    CHECK_FALSE(cfg.model.skipConnections);
    CHECK_FALSE(cfg.model.edgeConstraint);
    CHECK(cfg.model.kvSource == KvSource::Expanded);
    CHECK(cfg.model.includeCoordinates);
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.train.batchSize == 3);
    CHECK(cfg.train.learningRate == 0.01);
    CHECK(cfg.train.useLabelLoss);
    CHECK(cfg.train.seed == 42);  // training inherits the run seed
    CHECK(cfg.eval.cut.thetaStartDeg == 5.0);
    CHECK(cfg.eval.cut.samples == 11);
    CHECK(cfg.eval.cut.phiDeg == 30.0);
    CHECK(cfg.finetune.fraction == 0.5);
    CHECK(cfg.finetune.epochs == 4);
    CHECK(cfg.finetune.hasShape);
    CHECK(cfg.finetune.shape.kind == ShapeKind::Cone);
    CHECK(cfg.finetune.shape.params.values == std::vector<double>{0.1, 0.2});
}

TEST_CASE("unknown keys are rejected and named at every nesting level") {
    struct Case {
        const char* text;
        const char* key;
    };
    const Case cases[] = {
        {R"({"bogus": 1})", "bogus"},
        {R"({"shape": {"radius": 1}})", "radius"},
        {R"({"wave": {"freq": 1}})", "freq"},
        {R"({"hierarchy": {"depth": 2}})", "depth"},
        {R"({"model": {"layers": 2}})", "layers"},
        {R"({"train": {"lr": 0.1}})", "lr"},
        {R"({"eval": {"cut": 0}})", "cut"},
        {R"({"finetune": {"frac": 0.5}})", "frac"},
        {R"({"finetune": {"shape": {"size": 1}}})", "size"},
    };
    for (const Case& c : cases) {
        CAPTURE(c.text);
        std::string msg = config_error_message(c.text);
        CHECK(msg.find(c.key) != std::string::npos);
    }
}

TEST_CASE("invalid documents and out-of-range values raise config errors") {
    CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"shape": {"edge_length": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"wave": {"frequency_hz": -1e9}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"wave": {"amplitude_vm": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"wave": {"theta_count": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"hierarchy": {"levels": 0}})"), ConfigError);
    // width must split across heads; the model's own validation surfaces as ConfigError
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"width": 6, "heads": 4}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"kv_source": "both"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"kpconv_kernels": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"learning_rate": -0.1}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"loss": "huber"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"eval": {"samples": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"finetune": {"fraction": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"finetune": {"fraction": 1.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"finetune": {"epochs": 0}})"), ConfigError);
    // shape names are validated by the mesh generator
    CHECK_THROWS_AS(parse_run_config(R"({"shape": {"kind": "torus"}})"), MeshError);
}

TEST_CASE("config hash is stable under formatting and key order") {
    std::string compact = R"({"seed":3,"wave":{"theta_count":5,"phi_deg":10.0}})";
    std::string spaced = R"({
        "wave" : { "phi_deg" : 10.0 , "theta_count" : 5 } ,
        "seed" : 3
    })";
    RunConfig a = parse_run_config(compact);
    RunConfig b = parse_run_config(spaced);
    CHECK(a.configHash == b.configHash);
    RunConfig c = parse_run_config(R"({"seed":4,"wave":{"theta_count":5,"phi_deg":10.0}})");
    CHECK(c.configHash != a.configHash);
}

TEST_CASE("fnv1a hash reference vectors") {
    // standard 64-bit FNV-1a offset basis and single-byte results
    CHECK(fnv1a64_hex("") == "cbf29ce484222325");
    CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a64("abc", 3) == 0xe71fa2190541574bull);
}

TEST_CASE("wave grid angle enumeration") {
    WaveGridConfig w;
    w.phiDeg = 45.0;
    SUBCASE("single sample sits at the start angle") {
        w.thetaCount = 1;
        w.thetaStartDeg = 30.0;
        auto a = w.angles();
        REQUIRE(a.size() == 1);
        CHECK(a[0].first == 30.0);
        CHECK(a[0].second == 45.0);
    }
    SUBCASE("linear spacing includes both endpoints") {
        w.thetaStartDeg = 0.0;
        w.thetaStopDeg = 180.0;
        w.thetaCount = 19;
        auto a = w.angles();
        REQUIRE(a.size() == 19);
        CHECK(a.front().first == 0.0);
        CHECK(a.back().first == 180.0);
        CHECK(a[1].first == doctest::Approx(10.0));
        for (const auto& [theta, phi] : a) CHECK(phi == 45.0);
    }
}

TEST_CASE("loading from disk matches in-memory parsing") {
    fs::path dir = fresh_dir("load");
    fs::path file = dir / "run.json";
    std::ofstream(file) << kTinyConfig;
    RunConfig fromFile = load_run_config(file.string());
    RunConfig fromText = parse_run_config(kTinyConfig);
    CHECK(fromFile.configHash == fromText.configHash);
    CHECK(fromFile.seed == fromText.seed);
    CHECK_THROWS_AS(load_run_config((dir / "missing.json").string()), ConfigError);
}

TEST_CASE("configured mesh comes from the generator or a mesh file") {
    ShapeConfig generated;
    generated.kind = ShapeKind::Cube;
    generated.params = ShapeParams{{0.08}};
    generated.edgeLength = 0.08;
    TriangleMesh cube = make_configured_mesh(generated);
    CHECK(cube.faceCount() == 12);

    fs::path dir = fresh_dir("mesh");
    fs::path off = dir / "cube.off";
    write_off(cube, off.string());
    ShapeConfig fromFile = generated;
    fromFile.meshPath = off.string();
    fromFile.edgeLength = 0.001;  // ignored once a mesh path is set
    TriangleMesh loaded = make_configured_mesh(fromFile);
    CHECK(loaded.faceCount() == cube.faceCount());
}

TEST_CASE("dataset generation is deterministic across output directories") {
    RunConfig a = parse_run_config(kTinyConfig);
    RunConfig b = parse_run_config(kTinyConfig);
    a.outputDir = fresh_dir("gen_a").string();
    b.outputDir = fresh_dir("gen_b").string();
    run_gen(a);
    run_gen(b);
    // the manifest embeds a content hash per artifact, so equal manifests
    // mean every generated file matched byte for byte
    std::string ma = slurp(fs::path(a.outputDir) / "manifest.json");
    CHECK(ma == slurp(fs::path(b.outputDir) / "manifest.json"));
    CHECK(ma.find(a.configHash) != std::string::npos);
    for (const char* name : {"mesh.off", "currents_000.csv", "currents_002.csv",
                             "hierarchy.txt", "graph_nodes_l0.csv", "graph_edges_l0.csv"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(a.outputDir) / name));
        CHECK(ma.find(name) != std::string::npos);
    }
}

TEST_CASE("checkpoint compatibility guard") {
    RunConfig cfg = parse_run_config(kTinyConfig);
    cfg.outputDir = fresh_dir("compat").string();

    SUBCASE("evaluating without a checkpoint record fails") {
        CHECK_THROWS_AS(run_eval(cfg), CompatibilityError);
    }

    SUBCASE("training writes a record that a changed model rejects") {
        run_train(cfg);
        CHECK(fs::exists(fs::path(cfg.outputDir) / "checkpoint.bin"));
        CHECK(fs::exists(fs::path(cfg.outputDir) / "checkpoint.json"));
        CHECK(fs::exists(fs::path(cfg.outputDir) / "loss_history.csv"));

        // same configuration evaluates cleanly
        run_eval(cfg);
        CHECK(fs::exists(fs::path(cfg.outputDir) / "metrics.json"));

        RunConfig changed = cfg;
        changed.model.featureWidth = 8;
        CHECK_THROWS_AS(run_eval(changed), CompatibilityError);

        RunConfig retuned = cfg;
        retuned.wave.frequencyHz = 3e9;
        CHECK_THROWS_AS(run_eval(retuned), CompatibilityError);
    }
}
