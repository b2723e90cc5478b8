#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emscat {

using Vec3 = Eigen::Vector3d;

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Triangulated PEC surface. Per-face centroid/normal/area are derived on
/// construction and kept in sync with the face list.
class TriangleMesh {
  public:
    TriangleMesh() = default;
    TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& faces() const { return faces_; }
    int faceCount() const { return static_cast<int>(faces_.size()); }

    const Vec3& centroid(int face) const { return centroids_[face]; }
    const Vec3& normal(int face) const { return normals_[face]; }
    double area(int face) const { return areas_[face]; }
    const std::vector<Vec3>& centroids() const { return centroids_; }
    const std::vector<Vec3>& normals() const { return normals_; }
    const std::vector<double>& areas() const { return areas_; }

    double totalArea() const;
    double meanEdgeLength() const;
    Vec3 boundingBoxMin() const;
    Vec3 boundingBoxMax() const;

    /// Flips face winding so normals point away from `center`. Only valid
    /// for star-convex shapes; used by the generators.
    void orientOutward(const Vec3& center);

    void translate(const Vec3& d);

  private:
    void rebuildDerived();

    std::vector<Vec3> vertices_;
    std::vector<std::array<int, 3>> faces_;
    std::vector<Vec3> centroids_;
    std::vector<Vec3> normals_;
    std::vector<double> areas_;
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<double> areas;

    int size() const { return static_cast<int>(points.size()); }
};

enum class MeshFormat { OFF, OBJ };

TriangleMesh load_mesh(const std::string& path, MeshFormat format);
TriangleMesh load_mesh(const std::string& path);  // format from extension
void write_off(const TriangleMesh& mesh, const std::string& path);

struct ShapeParams {
    // sphere: radius; cube: side; cone: radius,height;
    // frustum: bottomRadius,topRadius,height; cylinder: radius,height;
    // assembly: overall scale (cube side)
    std::vector<double> values;
};

enum class ShapeKind { Sphere, Cube, Cone, Frustum, Cylinder, Assembly };

ShapeKind shape_kind_from_string(const std::string& s);

TriangleMesh generate_shape(ShapeKind kind, const ShapeParams& params, double targetEdgeLen);

/// One point per face at the centroid; normals and areas copied, face order
/// preserved.
PointCloud to_point_cloud(const TriangleMesh& mesh);

struct InteriorEdge {
    int faceA;
    int faceB;
    int vertexA;
    int vertexB;
    double length;
};

std::vector<InteriorEdge> rwg_edges(const TriangleMesh& mesh);

}  // namespace emscat
