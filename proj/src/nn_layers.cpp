#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "emscat/nn.hpp"

namespace emscat::nn {

// ---------------------------------------------------------------------------
// ParameterStore

ParameterStore::ParameterStore(std::uint64_t seed) : rng_(seed) {}

Var ParameterStore::get(const std::string& name, const std::vector<std::size_t>& shape,
                        Init init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second->value.shape() != shape)
            throw NnError("parameter shape mismatch for " + name);
        return it->second;
    }
    Tensor t(shape);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            t.fill(1.0);
            break;
        case Init::Glorot: {
            std::size_t fanIn = shape.size() == 2 ? shape[0] : t.size();
            std::size_t fanOut = shape.size() == 2 ? shape[1] : t.size();
            double limit = std::sqrt(6.0 / static_cast<double>(fanIn + fanOut));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : t.data()) v = dist(rng_);
            break;
        }
    }
    Var p = parameter_leaf(std::move(t));
    params_.emplace(name, p);
    return p;
}

Tensor& ParameterStore::buffer(const std::string& name, const std::vector<std::size_t>& shape,
                               double initValue) {
    auto it = buffers_.find(name);
    if (it != buffers_.end()) return it->second;
    Tensor t(shape);
    t.fill(initValue);
    return buffers_.emplace(name, std::move(t)).first->second;
}

void ParameterStore::zeroGrad() {
    for (auto& [name, p] : params_) p->ensureGrad().fill(0.0);
}

void ParameterStore::forEach(const std::function<void(const std::string&, Node&)>& fn) {
    for (auto& [name, p] : params_) fn(name, *p);
}

namespace {

constexpr char kMagic[4] = {'E', 'S', 'C', 'P'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
    // host is little-endian on all supported targets
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void write_tensor(std::ostream& out, const std::string& name, std::uint32_t kind,
                  const Tensor& t) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, kind);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) write_le<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void ParameterStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NnError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_le<std::uint8_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size() + buffers_.size()));
    for (const auto& [name, p] : params_) write_tensor(out, name, 0, p->value);
    for (const auto& [name, b] : buffers_) write_tensor(out, name, 1, b);
    if (!out) throw NnError("checkpoint write failed: " + path);
}

void ParameterStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NnError("cannot read checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw NnError("bad checkpoint magic: " + path);
    std::uint8_t version = read_le<std::uint8_t>(in);
    if (version != kVersion)
        throw NnError("unsupported checkpoint version " + std::to_string(version));
    std::uint32_t count = read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t nameLen = read_le<std::uint32_t>(in);
        std::string name(nameLen, '\0');
        in.read(name.data(), nameLen);
        std::uint32_t kind = read_le<std::uint32_t>(in);
        std::uint32_t ndim = read_le<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw NnError("truncated checkpoint: " + path);
        if (kind == 0) {
            auto it = params_.find(name);
            if (it != params_.end()) {
                if (it->second->value.shape() != t.shape())
                    throw NnError("checkpoint shape mismatch for " + name);
                it->second->value = std::move(t);
            } else {
                params_.emplace(name, parameter_leaf(std::move(t)));
            }
        } else {
            buffers_[name] = std::move(t);
        }
    }
}

// ---------------------------------------------------------------------------
// Layers

Var ffn2(const Var& x, ParameterStore& store, const std::string& prefix, const Ffn2Spec& spec) {
    if (x->value.cols() != spec.in) throw NnError("ffn2: input width mismatch at " + prefix);
    Var w1 = store.get(prefix + ".w1", {spec.in, spec.hidden}, Init::Glorot);
    Var b1 = store.get(prefix + ".b1", {1, spec.hidden}, Init::Zeros);
    Var w2 = store.get(prefix + ".w2", {spec.hidden, spec.out}, Init::Glorot);
    Var b2 = store.get(prefix + ".b2", {1, spec.out}, Init::Zeros);
    Var h = addRowBroadcast(matmul(x, w1), b1);
    switch (spec.between) {
        case Between::Identity:
            break;
        case Between::Relu:
            h = relu(h);
            break;
        case Between::Elu:
            h = elu(h);
            break;
    }
    return addRowBroadcast(matmul(h, w2), b2);
}

Var gat_layer(const Var& x, const GraphOps& graph, ParameterStore& store,
              const std::string& prefix, std::size_t in, std::size_t out) {
    if (x->value.rows() != static_cast<std::size_t>(graph.nodeCount))
        throw NnError("gat_layer: node count mismatch");
    Var w = store.get(prefix + ".w", {in, out}, Init::Glorot);
    Var aDst = store.get(prefix + ".a_dst", {out, 1}, Init::Glorot);
    Var aSrc = store.get(prefix + ".a_src", {out, 1}, Init::Glorot);
    Var h = matmul(x, w);

    Var result;
    if (!graph.edgeDst.empty()) {
        Var hDst = gatherRows(h, graph.edgeDst);
        Var hSrc = gatherRows(h, graph.edgeSrc);
        Var logits = leakyRelu(add(matmul(hDst, aDst), matmul(hSrc, aSrc)), 0.2);
        // physics edge weights gate the attention logits pre-softmax
        Tensor wcol = Tensor::matrix(graph.edgeWeight.size(), 1);
        for (std::size_t e = 0; e < graph.edgeWeight.size(); ++e) wcol[e] = graph.edgeWeight[e];
        logits = mul(logits, constant(std::move(wcol)));
        Var alpha = segmentSoftmax(logits, graph.edgeDst, graph.nodeCount);
        Var messages = mulColBroadcast(hSrc, alpha);
        result = segmentSum(messages, graph.edgeDst, graph.nodeCount);
    } else {
        result = constant(Tensor::matrix(graph.nodeCount, out));
    }
    if (graph.hasIsolated) result = add(result, spmm(graph.isolatedSelect, h));
    return result;
}

Var gcn_layer(const Var& x, const GraphOps& graph, ParameterStore& store,
              const std::string& prefix, std::size_t in, std::size_t out) {
    if (x->value.rows() != static_cast<std::size_t>(graph.nodeCount))
        throw NnError("gcn_layer: node count mismatch");
    Var w = store.get(prefix + ".w", {in, out}, Init::Glorot);
    return spmm(graph.gcnNorm, matmul(x, w));
}

Var batchnorm_elu(const Var& x, ParameterStore& store, const std::string& prefix, bool training,
                  double momentum, double eps) {
    std::size_t n = x->value.rows(), f = x->value.cols();
    Var gamma = store.get(prefix + ".gamma", {1, f}, Init::Ones);
    Var beta = store.get(prefix + ".beta", {1, f}, Init::Zeros);
    Tensor& runMean = store.buffer(prefix + ".running_mean", {1, f}, 0.0);
    Tensor& runVar = store.buffer(prefix + ".running_var", {1, f}, 1.0);

    Var xhat;
    if (training) {
        if (n < 2) throw NnError("batchnorm: training mode needs batch dimension >= 2");
        Var mu = colMean(x);
        Var xc = sub(x, repeatRows(mu, n));
        Var var = colMean(mul(xc, xc));
        Var istd = powScalar(addScalar(var, eps), -0.5);
        xhat = mul(xc, repeatRows(istd, n));
        for (std::size_t c = 0; c < f; ++c) {
            runMean[c] = (1.0 - momentum) * runMean[c] + momentum * mu->value[c];
            runVar[c] = (1.0 - momentum) * runVar[c] + momentum * var->value[c];
        }
    } else {
        Tensor mean = runMean;
        Tensor istd = runVar;
        for (std::size_t c = 0; c < f; ++c) istd[c] = 1.0 / std::sqrt(runVar[c] + eps);
        xhat = mul(sub(x, repeatRows(constant(mean), n)), repeatRows(constant(istd), n));
    }
    Var scaled = mul(xhat, repeatRows(gamma, n));
    return elu(addRowBroadcast(scaled, beta));
}

Var multihead_attention(const Var& q, const Var& k, const Var& v, ParameterStore& store,
                        const std::string& prefix, std::size_t modelDim, std::size_t heads) {
    if (modelDim % heads != 0) throw NnError("multihead_attention: dim not divisible by heads");
    if (q->value.cols() != modelDim || k->value.cols() != modelDim || v->value.cols() != modelDim)
        throw NnError("multihead_attention: width mismatch");
    if (k->value.rows() != v->value.rows()) throw NnError("multihead_attention: K/V row mismatch");
    std::size_t dk = modelDim / heads;
    Var wq = store.get(prefix + ".wq", {modelDim, modelDim}, Init::Glorot);
    Var wk = store.get(prefix + ".wk", {modelDim, modelDim}, Init::Glorot);
    Var wv = store.get(prefix + ".wv", {modelDim, modelDim}, Init::Glorot);
    Var wo = store.get(prefix + ".wo", {modelDim, modelDim}, Init::Glorot);
    Var qp = matmul(q, wq);
    Var kp = matmul(k, wk);
    Var vp = matmul(v, wv);
    std::vector<Var> headsOut;
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = sliceCols(qp, h * dk, (h + 1) * dk);
        Var kh = sliceCols(kp, h * dk, (h + 1) * dk);
        Var vh = sliceCols(vp, h * dk, (h + 1) * dk);
        Var scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
        Var attn = rowSoftmax(scores);
        headsOut.push_back(matmul(attn, vh));
    }
    return matmul(concatCols(headsOut), wo);
}

// ---------------------------------------------------------------------------
// KPConv

KpconvPlan make_kpconv_plan(const std::vector<std::array<double, 3>>& coarsePositions,
                            const std::vector<std::array<double, 3>>& finePositions,
                            double influenceRadius, int kernelPointCount) {
    if (kernelPointCount < 1) throw NnError("kpconv: kernel point count must be >= 1");
    if (influenceRadius <= 0) throw NnError("kpconv: influence radius must be positive");
    // center + octahedron vertices at half the influence radius
    std::vector<std::array<double, 3>> offsets = {{0, 0, 0}};
    double r = influenceRadius / 2.0;
    const std::array<std::array<double, 3>, 6> octa = {
        {{r, 0, 0}, {-r, 0, 0}, {0, r, 0}, {0, -r, 0}, {0, 0, r}, {0, 0, -r}}};
    for (const auto& o : octa) {
        if (static_cast<int>(offsets.size()) >= kernelPointCount) break;
        offsets.push_back(o);
    }
    while (static_cast<int>(offsets.size()) < kernelPointCount) offsets.push_back({0, 0, 0});

    KpconvPlan plan;
    plan.kernelInfluence.resize(offsets.size());
    for (auto& m : plan.kernelInfluence) {
        m.rows = finePositions.size();
        m.cols = coarsePositions.size();
    }
    for (std::size_t fp = 0; fp < finePositions.size(); ++fp) {
        bool any = false;
        for (std::size_t ki = 0; ki < offsets.size(); ++ki) {
            double kx = finePositions[fp][0] + offsets[ki][0];
            double ky = finePositions[fp][1] + offsets[ki][1];
            double kz = finePositions[fp][2] + offsets[ki][2];
            for (std::size_t cp = 0; cp < coarsePositions.size(); ++cp) {
                double dx = coarsePositions[cp][0] - kx;
                double dy = coarsePositions[cp][1] - ky;
                double dz = coarsePositions[cp][2] - kz;
                double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                double w = 1.0 - dist / influenceRadius;
                if (w > 0) {
                    plan.kernelInfluence[ki].entries.push_back(
                        {static_cast<int>(fp), static_cast<int>(cp), w});
                    any = true;
                }
            }
        }
        if (!any) {
            // no coarse point in any kernel's reach: snap to the nearest one
            std::size_t best = 0;
            double bestDist = std::numeric_limits<double>::max();
            for (std::size_t cp = 0; cp < coarsePositions.size(); ++cp) {
                double dx = coarsePositions[cp][0] - finePositions[fp][0];
                double dy = coarsePositions[cp][1] - finePositions[fp][1];
                double dz = coarsePositions[cp][2] - finePositions[fp][2];
                double d = dx * dx + dy * dy + dz * dz;
                if (d < bestDist) {
                    bestDist = d;
                    best = cp;
                }
            }
            plan.kernelInfluence[0].entries.push_back(
                {static_cast<int>(fp), static_cast<int>(best), 1.0});
            ++plan.fallbackCount;
        }
    }
    return plan;
}

Var kpconv_expand(const Var& coarseFeatures, const KpconvPlan& plan, ParameterStore& store,
                  const std::string& prefix, std::size_t dim) {
    if (coarseFeatures->value.cols() != dim) throw NnError("kpconv_expand: width mismatch");
    Var out;
    for (std::size_t ki = 0; ki < plan.kernelInfluence.size(); ++ki) {
        Var wk = store.get(prefix + ".w" + std::to_string(ki), {dim, dim}, Init::Glorot);
        Var term = matmul(spmm(plan.kernelInfluence[ki], coarseFeatures), wk);
        out = out ? add(out, term) : term;
    }
    return out;
}

}  // namespace emscat::nn
