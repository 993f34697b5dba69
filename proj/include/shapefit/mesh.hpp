#pragma once

#include "shapefit/geometry.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace shapefit {

struct BinaryVolume; // volume.hpp

/// Triangulated surface. Vertex order is meaningful: it carries the
/// point correspondence across template meshes.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

struct MeshTopologyReport {
    bool is_closed = false;
    bool is_edge_manifold = false;
    long long euler_characteristic = 0; // V - E + F over unique undirected edges
    std::size_t connected_components = 0;
};

/// Throws IoError if a face index is out of range, a face repeats a vertex,
/// or a coordinate is not finite.
void validate_mesh(const TriMesh& mesh);

/// ASCII PLY reader. Accepts exactly triangular faces; errors carry the
/// offending line number.
TriMesh load_mesh(const std::string& path);

/// ASCII PLY writer; coordinates at full double precision so that
/// load_mesh(save_mesh(m)) == m.
void save_mesh(const TriMesh& mesh, const std::string& path);

/// Undirected 1-ring neighbor lists in CSR form, built from the face list.
struct VertexAdjacency {
    std::vector<std::uint32_t> offsets;   // size = vertex_count + 1
    std::vector<std::uint32_t> neighbors; // sorted within each vertex

    static VertexAdjacency from_mesh(const TriMesh& mesh);
    static VertexAdjacency from_edges(std::size_t vertex_count,
                                      const std::vector<std::array<std::uint32_t, 2>>& edges);

    std::size_t vertex_count() const { return offsets.size() - 1; }
};

/// Geometric Laplacian of one vertex: v minus the inverse-distance-weighted
/// average of its 1-ring neighbors. Hard error on isolated vertices and on
/// coincident neighbors (zero distance).
Vec3 vertex_gl(const std::vector<Vec3>& positions, const VertexAdjacency& adj,
               std::uint32_t v);
Vec3 vertex_gl(const TriMesh& mesh, std::uint32_t v);

/// Sum of |GL(v)| over all vertices; lower is smoother.
double surface_gl(const std::vector<Vec3>& positions, const VertexAdjacency& adj);
double surface_gl(const TriMesh& mesh);

MeshTopologyReport topology_report(const TriMesh& mesh);

/// Isosurface of a binary mask at value 0.5, sampled at voxel centers in mm.
/// The grid is implicitly padded with one background layer so the surface
/// closes even when foreground touches the border. Triangles are wound with
/// outward orientation.
TriMesh marching_cubes(const BinaryVolume& volume);

/// Signed enclosed volume via the divergence theorem; positive for closed
/// outward-oriented surfaces.
double signed_volume(const TriMesh& mesh);

/// Mean of the vertex positions.
Vec3 vertex_centroid(const TriMesh& mesh);

} // namespace shapefit
