#include "emscat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace emscat {

namespace {

constexpr double kDegenerateArea = 1e-12;

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    rebuildDerived();
}

void TriangleMesh::rebuildDerived() {
    const int n = static_cast<int>(vertices_.size());
    centroids_.clear();
    normals_.clear();
    areas_.clear();
    centroids_.reserve(faces_.size());
    normals_.reserve(faces_.size());
    areas_.reserve(faces_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const auto& tri = faces_[f];
        for (int idx : tri) {
            if (idx < 0 || idx >= n)
                throw MeshError("face " + std::to_string(f) + " references vertex " +
                                std::to_string(idx) + " out of range");
        }
        const Vec3& a = vertices_[tri[0]];
        const Vec3& b = vertices_[tri[1]];
        const Vec3& c = vertices_[tri[2]];
        Vec3 cross = (b - a).cross(c - a);
        double area = 0.5 * cross.norm();
        if (area <= kDegenerateArea)
            throw MeshError("degenerate face " + std::to_string(f) + " (area " +
                            std::to_string(area) + " m^2)");
        centroids_.push_back((a + b + c) / 3.0);
        normals_.push_back(cross.normalized());
        areas_.push_back(area);
    }
}

double TriangleMesh::totalArea() const {
    double s = 0;
    for (double a : areas_) s += a;
    return s;
}

double TriangleMesh::meanEdgeLength() const {
    double s = 0;
    int count = 0;
    for (const auto& tri : faces_) {
        s += (vertices_[tri[0]] - vertices_[tri[1]]).norm();
        s += (vertices_[tri[1]] - vertices_[tri[2]]).norm();
        s += (vertices_[tri[2]] - vertices_[tri[0]]).norm();
        count += 3;
    }
    return count ? s / count : 0.0;
}

Vec3 TriangleMesh::boundingBoxMin() const {
    Vec3 m = Vec3::Constant(std::numeric_limits<double>::max());
    for (const auto& v : vertices_) m = m.cwiseMin(v);
    return m;
}

Vec3 TriangleMesh::boundingBoxMax() const {
    Vec3 m = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (const auto& v : vertices_) m = m.cwiseMax(v);
    return m;
}

void TriangleMesh::orientOutward(const Vec3& center) {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        if ((centroids_[f] - center).dot(normals_[f]) < 0)
            std::swap(faces_[f][1], faces_[f][2]);
    }
    rebuildDerived();
}

void TriangleMesh::translate(const Vec3& d) {
    for (auto& v : vertices_) v += d;
    rebuildDerived();
}

// ---------------------------------------------------------------------------
// File IO

namespace {

std::vector<std::string> read_significant_lines(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream probe(line);
        std::string tok;
        if (probe >> tok) lines.push_back(line);
    }
    return lines;
}

TriangleMesh parse_off(std::istream& in, const std::string& path) {
    auto lines = read_significant_lines(in);
    std::size_t cursor = 0;
    if (cursor >= lines.size()) throw MeshError(path + ": empty OFF file");
    {
        std::istringstream head(lines[cursor]);
        std::string tag;
        head >> tag;
        if (tag == "OFF") {
            ++cursor;
        } else if (!std::isdigit(static_cast<unsigned char>(tag[0]))) {
            throw MeshError(path + ": expected OFF header, got '" + tag + "'");
        }
    }
    if (cursor >= lines.size()) throw MeshError(path + ": missing OFF counts");
    int nv = 0, nf = 0, ne = 0;
    {
        std::istringstream counts(lines[cursor++]);
        if (!(counts >> nv >> nf >> ne)) throw MeshError(path + ": malformed OFF counts line");
    }
    if (nv < 0 || nf < 0) throw MeshError(path + ": negative OFF counts");
    std::vector<Vec3> vertices;
    vertices.reserve(nv);
    for (int i = 0; i < nv; ++i) {
        if (cursor >= lines.size()) throw MeshError(path + ": truncated vertex list");
        std::istringstream vs(lines[cursor++]);
        double x, y, z;
        if (!(vs >> x >> y >> z)) throw MeshError(path + ": malformed vertex " + std::to_string(i));
        vertices.emplace_back(x, y, z);
    }
    std::vector<std::array<int, 3>> faces;
    faces.reserve(nf);
    for (int i = 0; i < nf; ++i) {
        if (cursor >= lines.size()) throw MeshError(path + ": truncated face list");
        std::istringstream fs(lines[cursor++]);
        int arity;
        if (!(fs >> arity)) throw MeshError(path + ": malformed face " + std::to_string(i));
        if (arity != 3)
            throw MeshError(path + ": face " + std::to_string(i) + " has " +
                            std::to_string(arity) + " vertices; only triangles are accepted");
        std::array<int, 3> tri{};
        if (!(fs >> tri[0] >> tri[1] >> tri[2]))
            throw MeshError(path + ": malformed face " + std::to_string(i));
        faces.push_back(tri);
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

TriangleMesh parse_obj(std::istream& in, const std::string& path) {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw MeshError(path + ":" + std::to_string(lineNo) + ": malformed vertex");
            vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string ref;
            while (ls >> ref) {
                // "v", "v/vt", "v/vt/vn", "v//vn" -- leading integer is the vertex
                std::size_t slash = ref.find('/');
                std::string head = slash == std::string::npos ? ref : ref.substr(0, slash);
                int v = 0;
                try {
                    v = std::stoi(head);
                } catch (const std::exception&) {
                    throw MeshError(path + ":" + std::to_string(lineNo) + ": malformed face index '" +
                                    ref + "'");
                }
                if (v < 0) v = static_cast<int>(vertices.size()) + v + 1;
                idx.push_back(v - 1);
            }
            if (idx.size() != 3)
                throw MeshError(path + ":" + std::to_string(lineNo) + ": face has " +
                                std::to_string(idx.size()) + " vertices; only triangles are accepted");
            faces.push_back({idx[0], idx[1], idx[2]});
        }
        // other tags ignored
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

}  // namespace

TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open mesh file: " + path);
    return format == MeshFormat::OFF ? parse_off(in, path) : parse_obj(in, path);
}

TriangleMesh load_mesh(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : lowercase(path.substr(dot + 1));
    if (ext == "off") return load_mesh(path, MeshFormat::OFF);
    if (ext == "obj") return load_mesh(path, MeshFormat::OBJ);
    throw MeshError("unrecognized mesh extension: " + path);
}

void write_off(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write mesh file: " + path);
    out << "OFF\n" << mesh.vertices().size() << ' ' << mesh.faces().size() << " 0\n";
    char buf[128];
    for (const auto& v : mesh.vertices()) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    if (!out) throw MeshError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Shape generators

namespace {

struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int addVertex(const Vec3& v) {
        vertices.push_back(v);
        return static_cast<int>(vertices.size()) - 1;
    }
    void addFace(int a, int b, int c) { faces.push_back({a, b, c}); }

    void append(const TriangleMesh& mesh) {
        int base = static_cast<int>(vertices.size());
        for (const auto& v : mesh.vertices()) vertices.push_back(v);
        for (const auto& f : mesh.faces()) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }

    TriangleMesh build() { return TriangleMesh(std::move(vertices), std::move(faces)); }
};

void require_positive(const ShapeParams& p, std::size_t count, const char* what) {
    if (p.values.size() < count)
        throw MeshError(std::string(what) + ": expected " + std::to_string(count) +
                        " size parameter(s)");
    for (std::size_t i = 0; i < count; ++i)
        if (p.values[i] <= 0) throw MeshError(std::string(what) + ": size parameters must be positive");
}

TriangleMesh make_icosphere(double radius, double targetEdgeLen) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> base = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> tris = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& v : base) v = v.normalized() * radius;

    // icosahedron edge for circumradius r is ~1.0515 r
    double icoEdge = radius * 4.0 / std::sqrt(10.0 + 2.0 * std::sqrt(5.0));
    int freq = std::max(1, static_cast<int>(std::lround(icoEdge / targetEdgeLen)));

    MeshBuilder out;
    std::map<std::array<long long, 3>, int> dedupe;
    auto key = [&](const Vec3& v) {
        return std::array<long long, 3>{static_cast<long long>(std::llround(v.x() * 1e9)),
                                        static_cast<long long>(std::llround(v.y() * 1e9)),
                                        static_cast<long long>(std::llround(v.z() * 1e9))};
    };
    auto emit = [&](const Vec3& v) {
        Vec3 p = v.normalized() * radius;
        auto k = key(p);
        auto it = dedupe.find(k);
        if (it != dedupe.end()) return it->second;
        int idx = out.addVertex(p);
        dedupe.emplace(k, idx);
        return idx;
    };
    for (const auto& tri : tris) {
        const Vec3 &a = base[tri[0]], &b = base[tri[1]], &c = base[tri[2]];
        // barycentric frequency-freq subdivision of each icosahedron face
        std::vector<std::vector<int>> grid(freq + 1);
        for (int i = 0; i <= freq; ++i) {
            grid[i].resize(i + 1);
            for (int j = 0; j <= i; ++j) {
                double u = static_cast<double>(i) / freq;
                double v = static_cast<double>(j) / freq;
                Vec3 p = a + (b - a) * u + (c - b) * v;
                grid[i][j] = emit(p);
            }
        }
        for (int i = 0; i < freq; ++i) {
            for (int j = 0; j <= i; ++j) {
                out.addFace(grid[i][j], grid[i + 1][j], grid[i + 1][j + 1]);
                if (j < i) out.addFace(grid[i][j], grid[i + 1][j + 1], grid[i][j + 1]);
            }
        }
    }
    TriangleMesh mesh = out.build();
    mesh.orientOutward(Vec3::Zero());
    return mesh;
}

TriangleMesh make_cube(double side, double targetEdgeLen) {
    int n = std::max(1, static_cast<int>(std::lround(side / targetEdgeLen)));
    double h = side / 2.0;
    MeshBuilder out;
    std::map<std::array<long long, 3>, int> dedupe;
    auto emit = [&](const Vec3& v) {
        std::array<long long, 3> k{static_cast<long long>(std::llround(v.x() * 1e9)),
                                   static_cast<long long>(std::llround(v.y() * 1e9)),
                                   static_cast<long long>(std::llround(v.z() * 1e9))};
        auto it = dedupe.find(k);
        if (it != dedupe.end()) return it->second;
        int idx = out.addVertex(v);
        dedupe.emplace(k, idx);
        return idx;
    };
    // six faces, each an n x n quad grid split into triangles
    auto face = [&](const Vec3& origin, const Vec3& du, const Vec3& dv) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                Vec3 p00 = origin + du * (static_cast<double>(i) / n) + dv * (static_cast<double>(j) / n);
                Vec3 p10 = origin + du * (static_cast<double>(i + 1) / n) + dv * (static_cast<double>(j) / n);
                Vec3 p01 = origin + du * (static_cast<double>(i) / n) + dv * (static_cast<double>(j + 1) / n);
                Vec3 p11 = origin + du * (static_cast<double>(i + 1) / n) + dv * (static_cast<double>(j + 1) / n);
                int a = emit(p00), b = emit(p10), c = emit(p11), d = emit(p01);
                out.addFace(a, b, c);
                out.addFace(a, c, d);
            }
        }
    };
    Vec3 ex(side, 0, 0), ey(0, side, 0), ez(0, 0, side);
    face(Vec3(-h, -h, h), ex, ey);    // +z
    face(Vec3(-h, -h, -h), ex, ey);   // -z (flipped below by orientOutward)
    face(Vec3(-h, -h, -h), ex, ez);   // -y
    face(Vec3(-h, h, -h), ex, ez);    // +y
    face(Vec3(-h, -h, -h), ey, ez);   // -x
    face(Vec3(h, -h, -h), ey, ez);    // +x
    TriangleMesh mesh = out.build();
    mesh.orientOutward(Vec3::Zero());
    return mesh;
}

// Shared lateral/caps builder: a stack of rings from bottom to top radius.
// topRadius == 0 degenerates the top ring to an apex (cone).
TriangleMesh make_conic(double bottomRadius, double topRadius, double height, double targetEdgeLen) {
    double maxRadius = std::max(bottomRadius, topRadius);
    int segments = std::max(3, static_cast<int>(std::lround(2.0 * std::numbers::pi * maxRadius / targetEdgeLen)));
    double slant = std::hypot(height, bottomRadius - topRadius);
    int rows = std::max(1, static_cast<int>(std::lround(slant / targetEdgeLen)));

    MeshBuilder out;
    auto ring = [&](double radius, double z) {
        std::vector<int> idx;
        for (int s = 0; s < segments; ++s) {
            double a = 2.0 * std::numbers::pi * s / segments;
            idx.push_back(out.addVertex(Vec3(radius * std::cos(a), radius * std::sin(a), z)));
        }
        return idx;
    };
    auto cap = [&](const std::vector<int>& rim, double z, bool up) {
        // radial fan rings so cap edge lengths track targetEdgeLen
        int center = out.addVertex(Vec3(0, 0, z));
        double radius = (out.vertices[rim[0]] - Vec3(0, 0, z)).norm();
        int capRows = std::max(1, static_cast<int>(std::lround(radius / targetEdgeLen)));
        std::vector<int> inner(rim);
        for (int r = capRows - 1; r >= 1; --r) {
            double rr = radius * r / capRows;
            std::vector<int> next;
            for (int s = 0; s < segments; ++s) {
                double a = 2.0 * std::numbers::pi * s / segments;
                next.push_back(out.addVertex(Vec3(rr * std::cos(a), rr * std::sin(a), z)));
            }
            for (int s = 0; s < segments; ++s) {
                int s1 = (s + 1) % segments;
                if (up) {
                    out.addFace(inner[s], inner[s1], next[s]);
                    out.addFace(inner[s1], next[s1], next[s]);
                } else {
                    out.addFace(inner[s], next[s], inner[s1]);
                    out.addFace(inner[s1], next[s], next[s1]);
                }
            }
            inner = next;
        }
        for (int s = 0; s < segments; ++s) {
            int s1 = (s + 1) % segments;
            if (up)
                out.addFace(inner[s], inner[s1], center);
            else
                out.addFace(inner[s], center, inner[s1]);
        }
    };

    std::vector<std::vector<int>> rings;
    bool apex = topRadius <= 0.0;
    int lateralRows = apex ? rows : rows;
    for (int r = 0; r <= lateralRows; ++r) {
        double t = static_cast<double>(r) / lateralRows;
        double radius = bottomRadius + (topRadius - bottomRadius) * t;
        double z = height * t;
        if (apex && r == lateralRows) break;
        rings.push_back(ring(radius, z));
    }
    int apexIdx = apex ? out.addVertex(Vec3(0, 0, height)) : -1;

    for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
        const auto& lo = rings[r];
        const auto& hi = rings[r + 1];
        for (int s = 0; s < segments; ++s) {
            int s1 = (s + 1) % segments;
            out.addFace(lo[s], lo[s1], hi[s]);
            out.addFace(lo[s1], hi[s1], hi[s]);
        }
    }
    if (apex) {
        const auto& top = rings.back();
        for (int s = 0; s < segments; ++s) out.addFace(top[s], top[(s + 1) % segments], apexIdx);
    } else {
        cap(rings.back(), height, true);
    }
    cap(rings.front(), 0.0, false);

    TriangleMesh mesh = out.build();
    mesh.orientOutward(Vec3(0, 0, height / 2.0));
    return mesh;
}

}  // namespace

ShapeKind shape_kind_from_string(const std::string& s) {
    std::string k = lowercase(s);
    if (k == "sphere") return ShapeKind::Sphere;
    if (k == "cube") return ShapeKind::Cube;
    if (k == "cone") return ShapeKind::Cone;
    if (k == "frustum") return ShapeKind::Frustum;
    if (k == "cylinder") return ShapeKind::Cylinder;
    if (k == "assembly") return ShapeKind::Assembly;
    throw MeshError("unknown shape kind: " + s);
}

TriangleMesh generate_shape(ShapeKind kind, const ShapeParams& params, double targetEdgeLen) {
    if (targetEdgeLen <= 0) throw MeshError("target edge length must be positive");
    switch (kind) {
        case ShapeKind::Sphere:
            require_positive(params, 1, "sphere");
            return make_icosphere(params.values[0], targetEdgeLen);
        case ShapeKind::Cube:
            require_positive(params, 1, "cube");
            return make_cube(params.values[0], targetEdgeLen);
        case ShapeKind::Cone:
            require_positive(params, 2, "cone");
            return make_conic(params.values[0], 0.0, params.values[1], targetEdgeLen);
        case ShapeKind::Frustum: {
            require_positive(params, 3, "frustum");
            if (params.values[1] >= params.values[0])
                throw MeshError("frustum: top radius must be smaller than bottom radius");
            return make_conic(params.values[0], params.values[1], params.values[2], targetEdgeLen);
        }
        case ShapeKind::Cylinder:
            require_positive(params, 2, "cylinder");
            return make_conic(params.values[0], params.values[0], params.values[1], targetEdgeLen);
        case ShapeKind::Assembly: {
            // cube with a cylinder stacked on top and a cone on top of that
            require_positive(params, 1, "assembly");
            double s = params.values[0];
            MeshBuilder out;
            TriangleMesh cube = make_cube(s, targetEdgeLen);
            TriangleMesh cylinder = make_conic(s / 4.0, s / 4.0, s / 2.0, targetEdgeLen);
            cylinder.translate(Vec3(0, 0, s / 2.0));
            TriangleMesh cone = make_conic(s / 4.0, 0.0, s / 2.0, targetEdgeLen);
            cone.translate(Vec3(0, 0, s));
            out.append(cube);
            out.append(cylinder);
            out.append(cone);
            return out.build();
        }
    }
    throw MeshError("unreachable shape kind");
}

PointCloud to_point_cloud(const TriangleMesh& mesh) {
    PointCloud cloud;
    cloud.points = mesh.centroids();
    cloud.normals = mesh.normals();
    cloud.areas = mesh.areas();
    return cloud;
}

std::vector<InteriorEdge> rwg_edges(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, std::vector<int>> incident;
    const auto& faces = mesh.faces();
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int e = 0; e < 3; ++e) {
            int a = faces[f][e];
            int b = faces[f][(e + 1) % 3];
            incident[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
        }
    }
    std::vector<InteriorEdge> edges;
    for (const auto& [key, facesOnEdge] : incident) {
        if (facesOnEdge.size() > 2)
            throw MeshError("non-manifold edge (" + std::to_string(key.first) + "," +
                            std::to_string(key.second) + ") with " +
                            std::to_string(facesOnEdge.size()) + " incident faces");
        if (facesOnEdge.size() != 2) continue;  // boundary edge
        double len = (mesh.vertices()[key.first] - mesh.vertices()[key.second]).norm();
        edges.push_back({facesOnEdge[0], facesOnEdge[1], key.first, key.second, len});
    }
    return edges;
}

}  // namespace emscat
