#pragma once

#include <memory>
#include <string>
#include <vector>

#include "emscat/em.hpp"
#include "emscat/geometry.hpp"
#include "emscat/graph.hpp"
#include "emscat/hierarchy.hpp"
#include "emscat/nn.hpp"

namespace emscat {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class KvSource { Sum, Expanded };

struct ModelConfig {
    int levels = 3;
    std::size_t featureWidth = 32;
    std::size_t attentionHeads = 4;
    int kpconvKernelCount = 7;
    bool skipConnections = true;
    bool edgeConstraint = true;
    KvSource kvSource = KvSource::Sum;
    bool includeCoordinates = false;

    void validate() const;
    std::size_t inputWidth() const { return includeCoordinates ? 14 : 11; }
};

nn::GraphOps graph_ops_from(const PhysicsGraph& graph, bool edgeConstraint);

/// Wave-independent per-mesh structures shared by every sample on that mesh.
struct MeshContext {
    std::shared_ptr<const TriangleMesh> mesh;
    PointCloud cloud;
    LevelHierarchy hierarchy;
    std::vector<PhysicsGraph> graphs;  // one per hierarchy level

    static MeshContext build(std::shared_ptr<const TriangleMesh> mesh, double wavelength,
                             int maxLevels);
};

/// Everything the forward pass needs for one (mesh, wave) instance.
struct ModelInputs {
    const MeshContext* context = nullptr;
    IncidentWave wave;
    std::vector<nn::Tensor> rawFeatures;  // per level [n_l, inputWidth]
    std::vector<std::vector<std::array<double, 3>>> levelNormals;
    std::vector<nn::GraphOps> graphOps;          // per level
    std::vector<nn::SparseMatrix> poolMatrices;  // index l maps level l-1 -> l (index 0 unused)
    std::vector<nn::KpconvPlan> kpconvPlans;     // index l expands level l+1 -> l

    static ModelInputs build(const MeshContext& context, const IncidentWave& wave,
                             const ModelConfig& config);
};

class Network {
  public:
    Network(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    nn::ParameterStore& store() { return store_; }
    const nn::ParameterStore& store() const { return store_; }

    /// Finest-level output as [K,6] real channels (Re xyz, Im xyz),
    /// tangentially projected and physically scaled. Keeps the tape alive
    /// for training.
    nn::Var forward(const ModelInputs& inputs, bool training);

    SurfaceCurrentField predict(const ModelInputs& inputs);

    static SurfaceCurrentField toCurrents(const nn::Tensor& out6);

  private:
    nn::Var pointAttentionBlock(const nn::Var& x, const PhysicsGraph& graph,
                                const nn::GraphOps& ops, int level);
    nn::Var localPropagationBlock(const nn::Var& x, const nn::GraphOps& ops, int level,
                                  bool training);
    nn::Var translate(const nn::Var& nearFeatures, const nn::Var& expandedFar, int level);

    ModelConfig config_;
    nn::ParameterStore store_;
};

}  // namespace emscat
