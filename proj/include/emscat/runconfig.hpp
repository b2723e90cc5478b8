#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emscat/em.hpp"
#include "emscat/geometry.hpp"
#include "emscat/model.hpp"
#include "emscat/train.hpp"

namespace emscat {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Checkpoint was produced under a different model/data configuration.
struct CompatibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeConfig {
    std::string meshPath;  // when set, overrides the generator
    ShapeKind kind = ShapeKind::Cube;
    ShapeParams params{{0.15}};
    double edgeLength = 0.03;  // m, target mesh edge
};

struct WaveGridConfig {
    double frequencyHz = 1e9;
    double amplitudeVm = 1.0;
    double phiDeg = 0.0;
    double thetaStartDeg = 0.0;
    double thetaStopDeg = 180.0;
    int thetaCount = 19;

    std::vector<std::pair<double, double>> angles() const;
};

struct EvalConfig {
    AngleCut cut;
};

struct FinetuneConfig {
    double fraction = 0.2;
    int epochs = 50;
    bool hasShape = false;
    ShapeConfig shape;  // optional override for the fine-tune target shape
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string outputDir = "out";
    ShapeConfig shape;
    WaveGridConfig wave;
    int hierarchyLevels = 3;
    ModelConfig model;
    TrainOptions train;
    EvalConfig eval;
    FinetuneConfig finetune;

    std::string configHash;  // FNV-1a of the canonical document, hex
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& jsonText);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_hex(const std::string& s);

TriangleMesh make_configured_mesh(const ShapeConfig& shape);

// Pipeline entry points backing the command-line verbs. Each writes its
// outputs under config.outputDir and throws on failure:
//   ConfigError        -> bad configuration (exit 2)
//   EmError            -> solver failure (exit 3)
//   DivergenceError    -> training divergence (exit 4)
//   CompatibilityError -> checkpoint/config mismatch (exit 5)
void run_gen(const RunConfig& config);
void run_solve(const RunConfig& config, bool physicalOptics, bool withMie);
void run_train(const RunConfig& config);
void run_eval(const RunConfig& config);
void run_ablate(const RunConfig& config);
void run_finetune(const RunConfig& config, double fractionOverride);

}  // namespace emscat
