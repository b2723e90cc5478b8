#include "emscat/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace emscat {

namespace {

CubeCoord cube_of(const Vec3& p, const Vec3& anchor, double edge) {
    Vec3 rel = (p - anchor) / edge;
    return {static_cast<long long>(std::floor(rel.x())),
            static_cast<long long>(std::floor(rel.y())),
            static_cast<long long>(std::floor(rel.z()))};
}

std::vector<int> fps_positions(const std::vector<Vec3>& pts, int m, int seed) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> picks;
    picks.reserve(m);
    std::vector<double> minDist(n, std::numeric_limits<double>::max());
    std::vector<char> picked(n, 0);
    int current = seed;
    for (int step = 0; step < m; ++step) {
        picks.push_back(current);
        picked[current] = 1;
        for (int i = 0; i < n; ++i) {
            double d = (pts[i] - pts[current]).squaredNorm();
            if (d < minDist[i]) minDist[i] = d;
        }
        int best = -1;
        double bestDist = -1.0;
        for (int i = 0; i < n; ++i) {
            if (picked[i]) continue;
            if (minDist[i] > bestDist) {  // strict: lowest index wins ties
                bestDist = minDist[i];
                best = i;
            }
        }
        current = best;
    }
    return picks;
}

void compute_near_lists(HierarchyLevel& level) {
    const int n = static_cast<int>(level.pointIndices.size());
    std::map<CubeCoord, std::vector<int>> byCube;
    for (int i = 0; i < n; ++i) byCube[level.leafAssignment[i]].push_back(i);
    level.nearLists.assign(n, {});
    for (int i = 0; i < n; ++i) {
        const CubeCoord& c = level.leafAssignment[i];
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy)
                for (long long dz = -1; dz <= 1; ++dz) {
                    auto it = byCube.find({c[0] + dx, c[1] + dy, c[2] + dz});
                    if (it == byCube.end()) continue;
                    for (int j : it->second)
                        if (j != i) level.nearLists[i].push_back(j);
                }
        std::sort(level.nearLists[i].begin(), level.nearLists[i].end());
    }
}

}  // namespace

std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m, int seedIndex) {
    const int n = cloud.size();
    if (m < 1 || m > n) throw HierarchyError("farthest_point_sampling: m out of range");
    if (seedIndex < 0 || seedIndex >= n) throw HierarchyError("farthest_point_sampling: bad seed");
    return fps_positions(cloud.points, m, seedIndex);
}

LevelHierarchy build_octree(const PointCloud& cloud, double wavelength, int maxLevels) {
    if (cloud.size() == 0) throw HierarchyError("build_octree: empty cloud");
    if (wavelength <= 0) throw HierarchyError("build_octree: wavelength must be positive");
    if (maxLevels < 1) throw HierarchyError("build_octree: maxLevels must be >= 1");

    LevelHierarchy hier;
    hier.wavelength = wavelength;
    Vec3 anchor = Vec3::Constant(std::numeric_limits<double>::max());
    for (const auto& p : cloud.points) anchor = anchor.cwiseMin(p);
    hier.gridAnchor = anchor;

    // level 0: all points on the lambda/2 leaf grid
    {
        HierarchyLevel level;
        level.cubeEdge = wavelength / 2.0;
        level.pointIndices.resize(cloud.size());
        for (int i = 0; i < cloud.size(); ++i) level.pointIndices[i] = i;
        level.leafAssignment.reserve(cloud.size());
        for (const auto& p : cloud.points) level.leafAssignment.push_back(cube_of(p, anchor, level.cubeEdge));
        compute_near_lists(level);
        hier.levels.push_back(std::move(level));
    }

    while (hier.levelCount() < maxLevels) {
        HierarchyLevel& prev = hier.levels.back();
        const int prevCount = static_cast<int>(prev.pointIndices.size());
        if (prevCount <= 1) break;
        double edge = prev.cubeEdge * 2.0;

        std::vector<Vec3> prevPts(prevCount);
        for (int i = 0; i < prevCount; ++i) prevPts[i] = cloud.points[prev.pointIndices[i]];

        std::map<CubeCoord, std::vector<int>> byCube;  // deterministic cube order
        for (int i = 0; i < prevCount; ++i) byCube[cube_of(prevPts[i], anchor, edge)].push_back(i);
        const int occupied = static_cast<int>(byCube.size());
        if (occupied >= prevCount) break;  // would not strictly decrease

        std::vector<int> fpsPicks = fps_positions(prevPts, occupied, 0);
        std::vector<char> isPick(prevCount, 0);
        for (int p : fpsPicks) isPick[p] = 1;

        HierarchyLevel level;
        level.cubeEdge = edge;
        prev.parentMap.assign(prevCount, -1);
        for (const auto& [coord, members] : byCube) {
            Vec3 center = anchor + Vec3(coord[0] + 0.5, coord[1] + 0.5, coord[2] + 0.5) * edge;
            // representative: FPS pick closest to the cube center; if the cube
            // caught no pick, fall back to the member closest to the center
            int rep = -1;
            double repDist = std::numeric_limits<double>::max();
            for (int pass = 0; pass < 2 && rep < 0; ++pass) {
                for (int m : members) {
                    if (pass == 0 && !isPick[m]) continue;
                    double d = (prevPts[m] - center).squaredNorm();
                    if (d < repDist) {
                        repDist = d;
                        rep = m;
                    }
                }
            }
            int levelIdx = static_cast<int>(level.pointIndices.size());
            level.pointIndices.push_back(prev.pointIndices[rep]);
            level.leafAssignment.push_back(coord);
            for (int m : members) prev.parentMap[m] = levelIdx;
        }
        compute_near_lists(level);
        hier.levels.push_back(std::move(level));
    }
    return hier;
}

const std::vector<std::vector<int>>& near_neighbors(const LevelHierarchy& hier, int level) {
    if (level < 0 || level >= hier.levelCount()) throw HierarchyError("near_neighbors: bad level");
    return hier.levels[level].nearLists;
}

std::string serialize_hierarchy(const LevelHierarchy& hier) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "hierarchy wavelength=%.17g anchor=%.17g %.17g %.17g levels=%d\n",
                  hier.wavelength, hier.gridAnchor.x(), hier.gridAnchor.y(), hier.gridAnchor.z(),
                  hier.levelCount());
    out << buf;
    for (int l = 0; l < hier.levelCount(); ++l) {
        const auto& level = hier.levels[l];
        std::snprintf(buf, sizeof buf, "level %d edge=%.17g points=%zu\n", l, level.cubeEdge,
                      level.pointIndices.size());
        out << buf;
        for (std::size_t i = 0; i < level.pointIndices.size(); ++i) {
            out << "point " << level.pointIndices[i] << " cube=" << level.leafAssignment[i][0]
                << ' ' << level.leafAssignment[i][1] << ' ' << level.leafAssignment[i][2];
            if (!level.parentMap.empty()) out << " parent=" << level.parentMap[i];
            out << '\n';
        }
        for (std::size_t i = 0; i < level.nearLists.size(); ++i) {
            out << "near " << i << ':';
            for (int j : level.nearLists[i]) out << ' ' << j;
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace emscat
