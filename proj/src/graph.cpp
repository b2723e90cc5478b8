#include "emscat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace emscat {

std::vector<double> kde_density(const std::vector<Vec3>& points,
                                const std::vector<std::vector<int>>& neighborhoods,
                                double bandwidth) {
    if (bandwidth <= 0) throw GraphError("kde_density: bandwidth must be positive");
    if (neighborhoods.size() != points.size())
        throw GraphError("kde_density: neighborhood/point count mismatch");
    const double h = bandwidth;
    const double norm = std::pow(2.0 * M_PI, 1.5) * h * h * h;
    std::vector<double> density(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        double sum = 1.0;  // self term, exp(0)
        for (int j : neighborhoods[k]) {
            double d2 = (points[k] - points[j]).squaredNorm() / (h * h);
            sum += std::exp(-0.5 * d2);
        }
        double count = 1.0 + neighborhoods[k].size();
        density[k] = sum / (count * norm);
    }
    return density;
}

std::vector<double> normalized_inverse_density(const std::vector<double>& density) {
    std::vector<double> inv(density.size());
    double maxInv = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i) {
        if (density[i] <= 0) throw GraphError("normalized_inverse_density: zero density");
        inv[i] = 1.0 / density[i];
        maxInv = std::max(maxInv, inv[i]);
    }
    for (auto& v : inv) v /= maxInv;
    return inv;
}

std::vector<double> curvature_proxy(const std::vector<Vec3>& normals,
                                    const std::vector<std::vector<int>>& neighborhoods,
                                    bool allowIsolated) {
    if (neighborhoods.size() != normals.size())
        throw GraphError("curvature_proxy: neighborhood/normal count mismatch");
    std::vector<double> kappa(normals.size(), 0.0);
    for (std::size_t i = 0; i < normals.size(); ++i) {
        if (neighborhoods[i].empty()) {
            if (!allowIsolated) throw GraphError("curvature_proxy: empty neighborhood");
            continue;
        }
        double sum = 0.0;
        for (int j : neighborhoods[i]) {
            double c = std::clamp(normals[i].dot(normals[j]), -1.0, 1.0);
            sum += std::acos(c);
        }
        kappa[i] = sum / neighborhoods[i].size();
    }
    return kappa;
}

double mean_nearest_neighbor_distance(const std::vector<Vec3>& points) {
    if (points.size() < 2) return 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double best = std::numeric_limits<double>::max();
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, (points[i] - points[j]).squaredNorm());
        }
        sum += std::sqrt(best);
    }
    return sum / points.size();
}

PhysicsGraph build_physics_graph(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                 const std::vector<std::vector<int>>& neighborhoods,
                                 const GraphOptions& options) {
    if (points.size() != normals.size() || points.size() != neighborhoods.size())
        throw GraphError("build_physics_graph: input size mismatch");
    PhysicsGraph g;
    g.positions = points;
    g.normals = normals;
    double h = options.bandwidth > 0 ? options.bandwidth : mean_nearest_neighbor_distance(points);
    g.normalizedInverseDensity = normalized_inverse_density(kde_density(points, neighborhoods, h));
    g.curvature = curvature_proxy(normals, neighborhoods, options.allowIsolated);

    // undirected edge list, each pair once
    double deltaSum = 0.0;
    double kappaDiffSum = 0.0;
    for (std::size_t i = 0; i < neighborhoods.size(); ++i) {
        for (int j : neighborhoods[i]) {
            if (j <= static_cast<int>(i)) continue;
            GraphEdge e;
            e.i = static_cast<int>(i);
            e.j = j;
            e.delta = (points[i] - points[j]).norm();
            deltaSum += e.delta;
            kappaDiffSum += std::abs(g.curvature[i] - g.curvature[j]);
            g.edges.push_back(e);
        }
    }
    if (!g.edges.empty()) {
        double alpha = static_cast<double>(g.edges.size()) / deltaSum;
        double sigmaKappa = kappaDiffSum / g.edges.size();
        if (sigmaKappa == 0.0) sigmaKappa = 1.0;
        for (auto& e : g.edges) {
            e.similarity = std::exp(-std::abs(g.curvature[e.i] - g.curvature[e.j]) / sigmaKappa);
            e.weight = e.similarity / (1.0 + alpha * e.delta);
        }
    }
    g.neighbors.assign(points.size(), {});
    for (const auto& e : g.edges) {
        g.neighbors[e.i].push_back(e.j);
        g.neighbors[e.j].push_back(e.i);
    }
    for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
    return g;
}

std::string serialize_graph_edges(const PhysicsGraph& graph) {
    std::ostringstream out;
    out << "i,j,delta_m,S,w\n";
    char buf[160];
    for (const auto& e : graph.edges) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", e.i, e.j, e.delta,
                      e.similarity, e.weight);
        out << buf;
    }
    return out.str();
}

std::string serialize_graph_nodes(const PhysicsGraph& graph) {
    std::ostringstream out;
    out << "node,x,y,z,nx,ny,nz,d_norm,kappa\n";
    char buf[320];
    for (int i = 0; i < graph.nodeCount(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                      graph.positions[i].x(), graph.positions[i].y(), graph.positions[i].z(),
                      graph.normals[i].x(), graph.normals[i].y(), graph.normals[i].z(),
                      graph.normalizedInverseDensity[i], graph.curvature[i]);
        out << buf;
    }
    return out.str();
}

}  // namespace emscat
