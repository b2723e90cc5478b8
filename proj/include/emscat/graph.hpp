#pragma once

#include <string>
#include <vector>

#include "emscat/geometry.hpp"

namespace emscat {

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GraphEdge {
    int i;         // i < j
    int j;
    double delta;  // Euclidean distance, m
    double similarity;
    double weight;  // in (0, 1]
};

/// Sparse weighted graph over one hierarchy level's point set. Node order
/// matches the level point order.
struct PhysicsGraph {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    std::vector<double> normalizedInverseDensity;  // max is exactly 1
    std::vector<double> curvature;                 // rad
    std::vector<GraphEdge> edges;                  // undirected, stored once with i < j
    std::vector<std::vector<int>> neighbors;       // adjacency mirror of edges

    int nodeCount() const { return static_cast<int>(positions.size()); }
};

/// Gaussian KDE over the near neighborhoods; the point itself is always
/// included so isolated points get a finite density.
std::vector<double> kde_density(const std::vector<Vec3>& points,
                                const std::vector<std::vector<int>>& neighborhoods,
                                double bandwidth);

std::vector<double> normalized_inverse_density(const std::vector<double>& density);

/// Mean angular deviation between a node's normal and its neighbors' normals.
/// Nodes without neighbors raise unless allowIsolated, in which case they get 0.
std::vector<double> curvature_proxy(const std::vector<Vec3>& normals,
                                    const std::vector<std::vector<int>>& neighborhoods,
                                    bool allowIsolated = false);

/// Mean nearest-neighbor distance of the point set (default KDE bandwidth).
double mean_nearest_neighbor_distance(const std::vector<Vec3>& points);

struct GraphOptions {
    double bandwidth = 0.0;  // <= 0 picks mean nearest-neighbor distance
    bool allowIsolated = false;
};

PhysicsGraph build_physics_graph(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                 const std::vector<std::vector<int>>& neighborhoods,
                                 const GraphOptions& options = {});

std::string serialize_graph_edges(const PhysicsGraph& graph);
std::string serialize_graph_nodes(const PhysicsGraph& graph);

}  // namespace emscat
