#pragma once

#include <array>
#include <string>
#include <vector>

#include "emscat/geometry.hpp"

namespace emscat {

struct HierarchyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Integer cube coordinates on the grid anchored at the cloud bbox min.
using CubeCoord = std::array<long long, 3>;

struct HierarchyLevel {
    std::vector<int> pointIndices;          // indices into the base PointCloud
    double cubeEdge = 0.0;                  // (lambda/2) * 2^level
    std::vector<CubeCoord> leafAssignment;  // per level point, its cube
    std::vector<int> parentMap;             // level point -> index in next level (empty at top)
    std::vector<std::vector<int>> nearLists;  // per level point, neighbor level-point indices
};

struct LevelHierarchy {
    std::vector<HierarchyLevel> levels;  // finest first
    Vec3 gridAnchor = Vec3::Zero();      // bbox min corner of the base cloud
    double wavelength = 0.0;

    int levelCount() const { return static_cast<int>(levels.size()); }
};

/// Greedy farthest point sampling; first pick is seedIndex, subsequent picks
/// maximize the min distance to the picked set, lowest index breaking ties.
std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m, int seedIndex);

LevelHierarchy build_octree(const PointCloud& cloud, double wavelength, int maxLevels);

const std::vector<std::vector<int>>& near_neighbors(const LevelHierarchy& hier, int level);

std::string serialize_hierarchy(const LevelHierarchy& hier);

}  // namespace emscat
