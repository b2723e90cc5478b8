#include "emscat/model.hpp"

#include <cmath>

namespace emscat {

namespace {

std::array<double, 3> to_array(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void ModelConfig::validate() const {
    if (levels < 1) throw ModelError("model: levels must be >= 1");
    if (featureWidth == 0) throw ModelError("model: feature width must be positive");
    if (attentionHeads == 0 || featureWidth % attentionHeads != 0)
        throw ModelError("model: feature width must divide evenly across attention heads");
    if (kpconvKernelCount < 1) throw ModelError("model: kpconv kernel count must be >= 1");
}

nn::GraphOps graph_ops_from(const PhysicsGraph& graph, bool edgeConstraint) {
    nn::GraphOps ops;
    ops.nodeCount = graph.nodeCount();
    for (const auto& e : graph.edges) {
        double w = edgeConstraint ? e.weight : 1.0;
        // messages flow both ways across each undirected edge
        ops.edgeDst.push_back(e.i);
        ops.edgeSrc.push_back(e.j);
        ops.edgeWeight.push_back(w);
        ops.edgeDst.push_back(e.j);
        ops.edgeSrc.push_back(e.i);
        ops.edgeWeight.push_back(w);
    }

    const int n = ops.nodeCount;
    std::vector<double> degree(n, 1.0);  // self loop
    for (std::size_t e = 0; e < ops.edgeDst.size(); ++e)
        degree[ops.edgeDst[e]] += ops.edgeWeight[e];
    ops.gcnNorm.rows = static_cast<std::size_t>(n);
    ops.gcnNorm.cols = static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i)
        ops.gcnNorm.entries.push_back({i, i, 1.0 / degree[i]});
    for (std::size_t e = 0; e < ops.edgeDst.size(); ++e) {
        int i = ops.edgeDst[e], j = ops.edgeSrc[e];
        ops.gcnNorm.entries.push_back({i, j, ops.edgeWeight[e] / std::sqrt(degree[i] * degree[j])});
    }

    ops.isolatedSelect.rows = static_cast<std::size_t>(n);
    ops.isolatedSelect.cols = static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
        if (graph.neighbors[i].empty()) {
            ops.isolatedSelect.entries.push_back({i, i, 1.0});
            ops.hasIsolated = true;
        }
    }
    return ops;
}

MeshContext MeshContext::build(std::shared_ptr<const TriangleMesh> mesh, double wavelength,
                               int maxLevels) {
    MeshContext ctx;
    ctx.mesh = std::move(mesh);
    ctx.cloud = to_point_cloud(*ctx.mesh);
    ctx.hierarchy = build_octree(ctx.cloud, wavelength, maxLevels);
    for (int l = 0; l < ctx.hierarchy.levelCount(); ++l) {
        const auto& level = ctx.hierarchy.levels[l];
        std::vector<Vec3> pts, nrm;
        pts.reserve(level.pointIndices.size());
        nrm.reserve(level.pointIndices.size());
        for (int idx : level.pointIndices) {
            pts.push_back(ctx.cloud.points[idx]);
            nrm.push_back(ctx.cloud.normals[idx]);
        }
        GraphOptions opts;
        opts.allowIsolated = true;  // coarse levels may have singleton cubes
        ctx.graphs.push_back(build_physics_graph(pts, nrm, level.nearLists, opts));
    }
    return ctx;
}

ModelInputs ModelInputs::build(const MeshContext& context, const IncidentWave& wave,
                               const ModelConfig& config) {
    config.validate();
    wave.validate();
    ModelInputs in;
    in.context = &context;
    in.wave = wave;
    const int L = context.hierarchy.levelCount();
    const std::size_t width = config.inputWidth();
    for (int l = 0; l < L; ++l) {
        const auto& graph = context.graphs[l];
        const int n = graph.nodeCount();
        nn::Tensor feat = nn::Tensor::matrix(static_cast<std::size_t>(n), width);
        std::vector<std::array<double, 3>> normals(n);
        for (int i = 0; i < n; ++i) {
            const Vec3& p = graph.positions[i];
            CVec3 e = incident_field(wave, p);
            std::size_t c = 0;
            for (int a = 0; a < 3; ++a) feat.at(i, c++) = e[a].real();
            for (int a = 0; a < 3; ++a) feat.at(i, c++) = e[a].imag();
            for (int a = 0; a < 3; ++a) feat.at(i, c++) = graph.normals[i][a];
            feat.at(i, c++) = graph.normalizedInverseDensity[i];
            feat.at(i, c++) = graph.curvature[i];
            if (config.includeCoordinates)
                for (int a = 0; a < 3; ++a) feat.at(i, c++) = p[a];
            normals[i] = to_array(graph.normals[i]);
        }
        in.rawFeatures.push_back(std::move(feat));
        in.levelNormals.push_back(std::move(normals));
        in.graphOps.push_back(graph_ops_from(graph, config.edgeConstraint));
    }

    // mean pooling along the parent map, one matrix per coarse level
    in.poolMatrices.resize(L);
    for (int l = 1; l < L; ++l) {
        const auto& fine = context.hierarchy.levels[l - 1];
        nn::SparseMatrix& pool = in.poolMatrices[l];
        pool.rows = context.hierarchy.levels[l].pointIndices.size();
        pool.cols = fine.pointIndices.size();
        std::vector<int> childCount(pool.rows, 0);
        for (int parent : fine.parentMap) ++childCount[parent];
        for (std::size_t j = 0; j < fine.parentMap.size(); ++j) {
            int parent = fine.parentMap[j];
            pool.entries.push_back({parent, static_cast<int>(j), 1.0 / childCount[parent]});
        }
    }

    in.kpconvPlans.resize(L > 0 ? L - 1 : 0);
    for (int l = 0; l + 1 < L; ++l) {
        std::vector<std::array<double, 3>> coarse, fine;
        for (const auto& p : context.graphs[l + 1].positions) coarse.push_back(to_array(p));
        for (const auto& p : context.graphs[l].positions) fine.push_back(to_array(p));
        in.kpconvPlans[l] = nn::make_kpconv_plan(coarse, fine,
                                                 context.hierarchy.levels[l + 1].cubeEdge,
                                                 config.kpconvKernelCount);
    }
    return in;
}

Network::Network(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), store_(seed) {
    config_.validate();
}

nn::Var Network::pointAttentionBlock(const nn::Var& x, const PhysicsGraph& graph,
                                     const nn::GraphOps& ops, int level) {
    using namespace nn;
    const std::string prefix = "lvl" + std::to_string(level) + ".pab";
    const std::size_t inW = x->value.cols();
    const int n = graph.nodeCount();

    // density modulation: per-node scalar gate learned from the inverse density
    Tensor dcol = Tensor::matrix(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) dcol[i] = graph.normalizedInverseDensity[i];
    Var gate = ffn2(constant(std::move(dcol)), store_, prefix + ".density",
                    {1, 8, 1, Between::Relu});
    Var modulated = mulColBroadcast(x, gate);

    // normal-similarity attention over the near neighborhoods
    Var aggregated;
    if (!ops.edgeDst.empty()) {
        Tensor ndiff = Tensor::matrix(ops.edgeDst.size(), 3);
        for (std::size_t e = 0; e < ops.edgeDst.size(); ++e) {
            Vec3 d = graph.normals[ops.edgeDst[e]] - graph.normals[ops.edgeSrc[e]];
            for (int a = 0; a < 3; ++a) ndiff.at(e, a) = d[a];
        }
        Var logits = ffn2(constant(std::move(ndiff)), store_, prefix + ".normal",
                          {3, 8, 1, Between::Relu});
        Var alpha = segmentSoftmax(logits, ops.edgeDst, ops.nodeCount);
        Var messages = mulColBroadcast(gatherRows(x, ops.edgeSrc), alpha);
        aggregated = segmentSum(messages, ops.edgeDst, ops.nodeCount);
    } else {
        aggregated = constant(Tensor::matrix(static_cast<std::size_t>(n), inW));
    }
    if (ops.hasIsolated) aggregated = add(aggregated, spmm(ops.isolatedSelect, x));

    Var cat = concatCols({x, modulated, aggregated});
    Var w = store_.get(prefix + ".w", {3 * inW, config_.featureWidth}, Init::Glorot);
    Var b = store_.get(prefix + ".b", {1, config_.featureWidth}, Init::Zeros);
    return addRowBroadcast(matmul(cat, w), b);
}

nn::Var Network::localPropagationBlock(const nn::Var& x, const nn::GraphOps& ops, int level,
                                       bool training) {
    using namespace nn;
    const std::string prefix = "lvl" + std::to_string(level) + ".lpb";
    const std::size_t w = config_.featureWidth;
    const bool bnTraining = training && ops.nodeCount >= 2;
    Var h = gat_layer(x, ops, store_, prefix + ".gat", w, w);
    h = batchnorm_elu(h, store_, prefix + ".bn1", bnTraining);
    h = gcn_layer(h, ops, store_, prefix + ".gcn1", w, w);
    h = batchnorm_elu(h, store_, prefix + ".bn2", bnTraining);
    h = gcn_layer(h, ops, store_, prefix + ".gcn2", w, w);
    Var wl = store_.get(prefix + ".out.w", {w, w}, Init::Glorot);
    Var bl = store_.get(prefix + ".out.b", {1, w}, Init::Zeros);
    return addRowBroadcast(matmul(h, wl), bl);
}

nn::Var Network::translate(const nn::Var& nearFeatures, const nn::Var& expandedFar, int level) {
    using namespace nn;
    const std::string prefix = "up" + std::to_string(level) + ".translate";
    const std::size_t w = config_.featureWidth;
    Var t;
    if (config_.kvSource == KvSource::Sum) {
        Var kv = config_.skipConnections ? add(nearFeatures, expandedFar) : expandedFar;
        t = multihead_attention(nearFeatures, kv, kv, store_, prefix + ".mha", w,
                                config_.attentionHeads);
    } else {
        t = multihead_attention(nearFeatures, expandedFar, expandedFar, store_, prefix + ".mha",
                                w, config_.attentionHeads);
        if (config_.skipConnections) t = add(t, nearFeatures);
    }
    return add(t, ffn2(t, store_, prefix + ".ffn", {w, w, w, Between::Relu}));
}

nn::Var Network::forward(const ModelInputs& inputs, bool training) {
    using namespace nn;
    if (!inputs.context) throw ModelError("model: inputs missing mesh context");
    const int L = static_cast<int>(inputs.rawFeatures.size());
    if (L < 1) throw ModelError("model: no hierarchy levels");

    std::vector<Var> down(L);
    for (int l = 0; l < L; ++l) {
        Var x = pointAttentionBlock(constant(inputs.rawFeatures[l]),
                                    inputs.context->graphs[l], inputs.graphOps[l], l);
        if (l > 0) x = add(x, spmm(inputs.poolMatrices[l], down[l - 1]));
        down[l] = localPropagationBlock(x, inputs.graphOps[l], l, training);
    }

    Var up;
    for (int l = L - 1; l >= 0; --l) {
        Var expanded;
        if (l == L - 1) {
            expanded = constant(Tensor::matrix(down[l]->value.rows(), config_.featureWidth));
        } else {
            expanded = kpconv_expand(up, inputs.kpconvPlans[l], store_,
                                     "up" + std::to_string(l) + ".kpconv", config_.featureWidth);
        }
        up = translate(down[l], expanded, l);
    }

    Var wh = store_.get("head.w", {config_.featureWidth, 6}, Init::Glorot);
    Var bh = store_.get("head.b", {1, 6}, Init::Zeros);
    Var y = addRowBroadcast(matmul(up, wh), bh);
    y = scale(y, inputs.wave.amplitude / constants::kFreeSpaceImpedance);
    return tangentialProject(y, inputs.levelNormals[0]);
}

SurfaceCurrentField Network::predict(const ModelInputs& inputs) {
    return toCurrents(forward(inputs, false)->value);
}

SurfaceCurrentField Network::toCurrents(const nn::Tensor& out6) {
    if (out6.cols() != 6) throw ModelError("model: expected 6 output channels");
    SurfaceCurrentField field = SurfaceCurrentField::zero(static_cast<int>(out6.rows()));
    for (std::size_t i = 0; i < out6.rows(); ++i)
        for (int a = 0; a < 3; ++a)
            field.perFaceCurrent[i][a] = Complex(out6.at(i, a), out6.at(i, a + 3));
    return field;
}

}  // namespace emscat
