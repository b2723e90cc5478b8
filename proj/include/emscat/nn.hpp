#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace emscat::nn {

struct NnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense real 64-bit tensor, row-major.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor scalar(double v);
    static Tensor matrix(std::size_t r, std::size_t c) { return Tensor({r, c}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool sameShape(const Tensor& other) const { return shape_ == other.shape_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void checkFinite(const char* what) const;

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Reverse-mode tape

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand (eagerly for parameters)
    bool requiresGrad = false;
    bool lossConsumed = false;  // set once backward() ran from this node
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents

    Tensor& ensureGrad();
};

Var constant(Tensor value);
Var parameter_leaf(Tensor value);

/// Reverse-mode sweep from a scalar loss. Errors on non-scalar losses and on
/// a second backward from the same node.
void backward(const Var& loss);

// elementwise / broadcast
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var addScalar(const Var& a, double c);
Var powScalar(const Var& a, double p);
Var addRowBroadcast(const Var& mat, const Var& row);   // [n,f] + [1,f]
Var repeatRows(const Var& row, std::size_t n);         // [1,f] -> [n,f]
Var colMean(const Var& mat);                           // [n,f] -> [1,f]
Var mulColBroadcast(const Var& mat, const Var& col);   // [n,f] * [n,1]

// structure
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var concatCols(const std::vector<Var>& parts);
Var sliceCols(const Var& a, std::size_t c0, std::size_t c1);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var gatherRows(const Var& a, std::vector<int> indices);
Var segmentSum(const Var& a, std::vector<int> segments, std::size_t nSegments);

// nonlinearities / normalization
Var relu(const Var& a);
Var leakyRelu(const Var& a, double slope);
Var elu(const Var& a, double alpha = 1.0);
Var rowSoftmax(const Var& a);
Var segmentSoftmax(const Var& logits, std::vector<int> segments, std::size_t nSegments);

// reductions
Var sumAll(const Var& a);

/// Projects per-row 6-channel (Re xyz, Im xyz) vectors onto the tangent plane
/// of the matching unit normal.
Var tangentialProject(const Var& a, const std::vector<std::array<double, 3>>& normals);

// ---------------------------------------------------------------------------
// Fixed (non-learnable) sparse matrix, used for graph aggregation operators.

struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    struct Entry {
        int r;
        int c;
        double v;
    };
    std::vector<Entry> entries;

    Tensor apply(const Tensor& x) const;           // [cols,f] -> [rows,f]
    Tensor applyTranspose(const Tensor& x) const;  // [rows,f] -> [cols,f]
};

Var spmm(const SparseMatrix& m, const Var& x);

// ---------------------------------------------------------------------------
// Parameters

enum class Init { Glorot, Zeros, Ones };

class ParameterStore {
  public:
    explicit ParameterStore(std::uint64_t seed);

    /// Fetches a named parameter, creating and initializing it on first use.
    Var get(const std::string& name, const std::vector<std::size_t>& shape, Init init);
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    /// Non-learnable named state (e.g. batchnorm running statistics).
    Tensor& buffer(const std::string& name, const std::vector<std::size_t>& shape,
                   double initValue);

    void zeroGrad();
    void forEach(const std::function<void(const std::string&, Node&)>& fn);
    std::size_t parameterCount() const { return params_.size(); }

    void save(const std::string& path) const;
    void load(const std::string& path);

  private:
    std::map<std::string, Var> params_;
    std::map<std::string, Tensor> buffers_;
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Layer primitives

enum class Between { Identity, Relu, Elu };

struct Ffn2Spec {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    Between between = Between::Identity;  // identity matches the two-layer maps as written
};

Var ffn2(const Var& x, ParameterStore& store, const std::string& prefix, const Ffn2Spec& spec);

/// Directed message-passing structure derived from a PhysicsGraph level.
struct GraphOps {
    int nodeCount = 0;
    std::vector<int> edgeDst;  // message receiver i
    std::vector<int> edgeSrc;  // neighbor j in near(i)
    std::vector<double> edgeWeight;
    SparseMatrix gcnNorm;          // D^-1/2 (A_w + I) D^-1/2
    SparseMatrix isolatedSelect;   // identity rows for isolated nodes
    bool hasIsolated = false;
};

Var gat_layer(const Var& x, const GraphOps& graph, ParameterStore& store,
              const std::string& prefix, std::size_t in, std::size_t out);

Var gcn_layer(const Var& x, const GraphOps& graph, ParameterStore& store,
              const std::string& prefix, std::size_t in, std::size_t out);

Var batchnorm_elu(const Var& x, ParameterStore& store, const std::string& prefix, bool training,
                  double momentum = 0.1, double eps = 1e-5);

Var multihead_attention(const Var& q, const Var& k, const Var& v, ParameterStore& store,
                        const std::string& prefix, std::size_t modelDim, std::size_t heads);

/// Precomputed per-kernel-point influence matrices for KPConv disaggregation.
struct KpconvPlan {
    std::vector<SparseMatrix> kernelInfluence;  // one [fine x coarse] matrix per kernel point
    int fallbackCount = 0;                      // fine points snapped to nearest coarse point
};

KpconvPlan make_kpconv_plan(const std::vector<std::array<double, 3>>& coarsePositions,
                            const std::vector<std::array<double, 3>>& finePositions,
                            double influenceRadius, int kernelPointCount);

Var kpconv_expand(const Var& coarseFeatures, const KpconvPlan& plan, ParameterStore& store,
                  const std::string& prefix, std::size_t dim);

}  // namespace emscat::nn
