#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "emscat/em.hpp"
#include "emscat/model.hpp"
#include "emscat/nn.hpp"

namespace emscat {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the training loss exceeds the divergence threshold.
struct DivergenceError : TrainError {
    using TrainError::TrainError;
};

/// Real/imaginary blocks of the dense interaction system, shared by every
/// sample on the same mesh at the same frequency.
struct SystemMatrices {
    nn::Tensor Zr;  // [3K, 3K]
    nn::Tensor Zi;
};

struct ScatteringSample {
    std::shared_ptr<MeshContext> context;
    std::shared_ptr<SystemMatrices> system;
    IncidentWave wave;
    nn::Tensor Vr;  // [3K, 1]
    nn::Tensor Vi;
    SurfaceCurrentField label;  // direct solver currents
    nn::Tensor labelTensor;     // [K, 6] mirror of label
};

std::shared_ptr<SystemMatrices> split_system(const ImpedanceSystem& system);

ScatteringSample make_sample(std::shared_ptr<MeshContext> context,
                             std::shared_ptr<SystemMatrices> system,
                             const ImpedanceSystem& impedance, const IncidentWave& wave,
                             const SurfaceCurrentField& solved);

/// One sample per incidence angle over a fixed mesh at a fixed frequency.
std::vector<ScatteringSample> generate_dataset(std::shared_ptr<const TriangleMesh> mesh,
                                               double frequency, double amplitude,
                                               const std::vector<std::pair<double, double>>& anglesDeg,
                                               int maxLevels);

/// Deterministic 80:20 split along the sample order (every fifth sample is
/// held out), so neighboring angles land on both sides.
void split_dataset(const std::vector<ScatteringSample>& all,
                   std::vector<ScatteringSample>& train, std::vector<ScatteringSample>& test);

/// Residual of the interaction equation for a predicted current layout,
/// normalized by the number of scalar unknowns. Output shape [1,1].
nn::Var physics_residual_loss(const nn::Var& predicted6, const ScatteringSample& sample);

nn::Var mse_loss(const nn::Var& predicted6, const nn::Tensor& label6);

class AdamOptimizer {
  public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(nn::ParameterStore& store);
    double learningRate() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, nn::Tensor> m_, v_;
};

struct TrainOptions {
    int epochs = 300;
    int batchSize = 64;
    double learningRate = 5e-4;
    std::uint64_t seed = 0;
    double divergenceThreshold = 1e12;
    bool useLabelLoss = false;  // physics residual by default
    std::string lossHistoryPath;
    bool verbose = false;
};

struct TrainResult {
    std::vector<double> epochLoss;
    double finalLoss = 0.0;
};

TrainResult train_network(Network& net, const std::vector<ScatteringSample>& samples,
                          const TrainOptions& options);

struct EvalMetrics {
    double rmse = 0.0;  // over per-face current magnitude, A/m
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    double meanPhysicsLoss = 0.0;
    double inferenceSeconds = 0.0;  // summed model forward time
    double solverSeconds = 0.0;     // summed direct solve time, if measured
    int sampleCount = 0;
};

EvalMetrics evaluate_network(Network& net, const std::vector<ScatteringSample>& samples,
                             bool timeSolver);

/// Empirical CDF of absolute per-face magnitude errors, written as
/// "abs_error,cdf" rows.
void write_error_cdf_csv(Network& net, const std::vector<ScatteringSample>& samples,
                         const std::string& path);

/// Predicted-vs-reference RCS cut for one sample, written as
/// "theta_deg,phi_deg,sigma_pred_dbsm,sigma_ref_dbsm" rows.
void write_rcs_overlay_csv(Network& net, const ScatteringSample& sample, const AngleCut& cut,
                           const std::string& path);

/// Seeded random split into a fine-tune subset and the held-out remainder.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> finetune_split(
    std::size_t sampleCount, double fraction, std::uint64_t seed);

/// Fine-tunes on a seeded random fraction of the new samples.
TrainResult finetune_network(Network& net, const std::vector<ScatteringSample>& samples,
                             double fraction, const TrainOptions& options);

struct AblationArm {
    std::string name;
    ModelConfig config;
    bool useLabelLoss = false;
    double finalTrainLoss = 0.0;
    EvalMetrics metrics;
};

/// Four one-flag variations around a base configuration, trained and
/// evaluated under identical seeds and data.
std::vector<AblationArm> ablation_suite(const ModelConfig& base,
                                        const std::vector<ScatteringSample>& trainSet,
                                        const std::vector<ScatteringSample>& testSet,
                                        const TrainOptions& options);

}  // namespace emscat
