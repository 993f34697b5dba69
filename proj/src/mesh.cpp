#include "shapefit/mesh.hpp"

#include "shapefit/errors.hpp"
#include "shapefit/volume.hpp"
#include "mc_tables.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace shapefit {

void validate_mesh(const TriMesh& mesh)
{
    const std::size_t n = mesh.vertices.size();
    for (std::size_t i = 0; i < n; ++i)
        if (!is_finite(mesh.vertices[i]))
            throw IoError("mesh vertex " + std::to_string(i) + " has non-finite coordinates");
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        for (int c = 0; c < 3; ++c)
            if (face[c] >= n)
                throw IoError("mesh face " + std::to_string(f) + " references vertex " +
                              std::to_string(face[c]) + " but the mesh has " +
                              std::to_string(n) + " vertices");
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            throw IoError("mesh face " + std::to_string(f) + " repeats a vertex index");
    }
}

// ---------------------------------------------------------------------------
// ASCII PLY

namespace {

struct LineReader {
    std::istream& in;
    std::string line{};
    long number = 0;

    bool next()
    {
        while (std::getline(in, line)) {
            ++number;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return true;
        }
        return false;
    }
};

[[noreturn]] void parse_fail(const std::string& path, long line, const std::string& what)
{
    throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& s)
{
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok)
        out.push_back(tok);
    return out;
}

bool parse_double(const std::string& tok, double& out)
{
    char* end = nullptr;
    out = std::strtod(tok.c_str(), &end);
    return end && *end == '\0' && end != tok.c_str();
}

bool parse_long(const std::string& tok, long long& out)
{
    char* end = nullptr;
    out = std::strtoll(tok.c_str(), &end, 10);
    return end && *end == '\0' && end != tok.c_str();
}

} // namespace

TriMesh load_mesh(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open mesh file: " + path);
    LineReader rd{in};

    if (!rd.next() || rd.line != "ply")
        parse_fail(path, rd.number, "not a PLY file (missing 'ply' magic)");
    if (!rd.next() || split_ws(rd.line) != std::vector<std::string>{"format", "ascii", "1.0"})
        parse_fail(path, rd.number, "expected 'format ascii 1.0'");

    long long vertex_count = -1, face_count = -1;
    std::vector<std::string> vertex_props;
    int xcol = -1, ycol = -1, zcol = -1;
    bool face_list_seen = false;
    std::string current_element;

    while (true) {
        if (!rd.next())
            parse_fail(path, rd.number, "unexpected end of file inside header");
        auto tok = split_ws(rd.line);
        if (tok.empty())
            continue;
        if (tok[0] == "comment")
            continue;
        if (tok[0] == "end_header")
            break;
        if (tok[0] == "element") {
            if (tok.size() != 3)
                parse_fail(path, rd.number, "malformed element line");
            long long count;
            if (!parse_long(tok[2], count) || count < 0)
                parse_fail(path, rd.number, "bad element count '" + tok[2] + "'");
            current_element = tok[1];
            if (tok[1] == "vertex")
                vertex_count = count;
            else if (tok[1] == "face")
                face_count = count;
            else
                parse_fail(path, rd.number, "unsupported element '" + tok[1] + "'");
            continue;
        }
        if (tok[0] == "property") {
            if (current_element == "vertex") {
                if (tok.size() != 3 || tok[1] == "list")
                    parse_fail(path, rd.number, "vertex properties must be scalar");
                int col = static_cast<int>(vertex_props.size());
                if (tok[2] == "x") xcol = col;
                if (tok[2] == "y") ycol = col;
                if (tok[2] == "z") zcol = col;
                vertex_props.push_back(tok[2]);
            } else if (current_element == "face") {
                if (tok.size() != 5 || tok[1] != "list" ||
                    (tok[4] != "vertex_indices" && tok[4] != "vertex_index"))
                    parse_fail(path, rd.number, "expected 'property list <t> <t> vertex_indices'");
                face_list_seen = true;
            } else {
                parse_fail(path, rd.number, "property before any element");
            }
            continue;
        }
        parse_fail(path, rd.number, "unrecognized header line '" + rd.line + "'");
    }

    if (vertex_count < 0)
        parse_fail(path, rd.number, "header has no vertex element");
    if (xcol < 0 || ycol < 0 || zcol < 0)
        parse_fail(path, rd.number, "vertex element lacks x/y/z properties");
    if (face_count < 0)
        parse_fail(path, rd.number, "header has no face element");
    if (face_count > 0 && !face_list_seen)
        parse_fail(path, rd.number, "face element lacks a vertex_indices list property");

    TriMesh mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(vertex_count));
    for (long long i = 0; i < vertex_count; ++i) {
        if (!rd.next())
            parse_fail(path, rd.number, "unexpected end of file in vertex data");
        auto tok = split_ws(rd.line);
        if (tok.size() != vertex_props.size())
            parse_fail(path, rd.number, "expected " + std::to_string(vertex_props.size()) +
                                            " vertex values, got " + std::to_string(tok.size()));
        double vals[3];
        const int cols[3] = {xcol, ycol, zcol};
        for (int c = 0; c < 3; ++c)
            if (!parse_double(tok[cols[c]], vals[c]) || !std::isfinite(vals[c]))
                parse_fail(path, rd.number, "bad coordinate '" + tok[cols[c]] + "'");
        mesh.vertices.push_back({vals[0], vals[1], vals[2]});
    }

    mesh.faces.reserve(static_cast<std::size_t>(face_count));
    for (long long f = 0; f < face_count; ++f) {
        if (!rd.next())
            parse_fail(path, rd.number, "unexpected end of file in face data");
        auto tok = split_ws(rd.line);
        long long cnt;
        if (tok.empty() || !parse_long(tok[0], cnt))
            parse_fail(path, rd.number, "bad face line");
        if (cnt != 3)
            parse_fail(path, rd.number, "non-triangular face with " + std::to_string(cnt) +
                                            " vertices");
        if (tok.size() != 4)
            parse_fail(path, rd.number, "face line has wrong token count");
        std::array<std::uint32_t, 3> face{};
        for (int c = 0; c < 3; ++c) {
            long long idx;
            if (!parse_long(tok[c + 1], idx))
                parse_fail(path, rd.number, "bad face index '" + tok[c + 1] + "'");
            if (idx < 0 || idx >= vertex_count)
                parse_fail(path, rd.number, "face index " + std::to_string(idx) +
                                                " out of range [0, " +
                                                std::to_string(vertex_count) + ")");
            face[c] = static_cast<std::uint32_t>(idx);
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            parse_fail(path, rd.number, "degenerate face repeats a vertex index");
        mesh.faces.push_back(face);
    }

    return mesh;
}

void save_mesh(const TriMesh& mesh, const std::string& path)
{
    validate_mesh(mesh);
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << "\n";
    if (!out)
        throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Adjacency and geometric Laplacian

VertexAdjacency VertexAdjacency::from_edges(
    std::size_t vertex_count, const std::vector<std::array<std::uint32_t, 2>>& edges)
{
    VertexAdjacency adj;
    adj.offsets.assign(vertex_count + 1, 0);
    for (const auto& e : edges) {
        ++adj.offsets[e[0] + 1];
        ++adj.offsets[e[1] + 1];
    }
    for (std::size_t i = 1; i <= vertex_count; ++i)
        adj.offsets[i] += adj.offsets[i - 1];
    adj.neighbors.resize(adj.offsets[vertex_count]);
    std::vector<std::uint32_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
    for (const auto& e : edges) {
        adj.neighbors[cursor[e[0]]++] = e[1];
        adj.neighbors[cursor[e[1]]++] = e[0];
    }
    for (std::size_t i = 0; i < vertex_count; ++i)
        std::sort(adj.neighbors.begin() + adj.offsets[i], adj.neighbors.begin() + adj.offsets[i + 1]);
    return adj;
}

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b)
{
    if (a > b)
        std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::unordered_map<std::uint64_t, int> edge_face_counts(const TriMesh& mesh)
{
    std::unordered_map<std::uint64_t, int> counts;
    counts.reserve(mesh.faces.size() * 2);
    for (const auto& f : mesh.faces) {
        ++counts[edge_key(f[0], f[1])];
        ++counts[edge_key(f[1], f[2])];
        ++counts[edge_key(f[2], f[0])];
    }
    return counts;
}

} // namespace

VertexAdjacency VertexAdjacency::from_mesh(const TriMesh& mesh)
{
    auto counts = edge_face_counts(mesh);
    std::vector<std::array<std::uint32_t, 2>> edges;
    edges.reserve(counts.size());
    for (const auto& [key, cnt] : counts)
        edges.push_back({static_cast<std::uint32_t>(key >> 32),
                         static_cast<std::uint32_t>(key & 0xffffffffu)});
    return from_edges(mesh.vertices.size(), edges);
}

Vec3 vertex_gl(const std::vector<Vec3>& positions, const VertexAdjacency& adj, std::uint32_t v)
{
    const std::uint32_t begin = adj.offsets[v], end = adj.offsets[v + 1];
    if (begin == end)
        throw ComputeError("geometric Laplacian undefined: vertex " + std::to_string(v) +
                           " has no neighbors");
    const Vec3 p = positions[v];
    Vec3 weighted{0, 0, 0};
    double weight_sum = 0.0;
    for (std::uint32_t e = begin; e < end; ++e) {
        const Vec3 q = positions[adj.neighbors[e]];
        const double l = norm(p - q);
        if (l == 0.0)
            throw ComputeError("geometric Laplacian undefined: vertex " + std::to_string(v) +
                               " coincides with neighbor " + std::to_string(adj.neighbors[e]));
        const double w = 1.0 / l;
        weighted += q * w;
        weight_sum += w;
    }
    return p - weighted / weight_sum;
}

Vec3 vertex_gl(const TriMesh& mesh, std::uint32_t v)
{
    return vertex_gl(mesh.vertices, VertexAdjacency::from_mesh(mesh), v);
}

double surface_gl(const std::vector<Vec3>& positions, const VertexAdjacency& adj)
{
    double total = 0.0;
    for (std::uint32_t v = 0; v < adj.vertex_count(); ++v)
        total += norm(vertex_gl(positions, adj, v));
    return total;
}

double surface_gl(const TriMesh& mesh)
{
    return surface_gl(mesh.vertices, VertexAdjacency::from_mesh(mesh));
}

// ---------------------------------------------------------------------------
// Topology

namespace {

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n)
    {
        std::iota(parent.begin(), parent.end(), 0u);
    }
    std::uint32_t find(std::uint32_t x)
    {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace

MeshTopologyReport topology_report(const TriMesh& mesh)
{
    validate_mesh(mesh);
    auto counts = edge_face_counts(mesh);

    MeshTopologyReport rep;
    rep.is_closed = true;
    rep.is_edge_manifold = true;
    for (const auto& [key, cnt] : counts) {
        if (cnt != 2)
            rep.is_closed = false;
        if (cnt > 2)
            rep.is_edge_manifold = false;
    }
    rep.euler_characteristic = static_cast<long long>(mesh.vertices.size()) -
                               static_cast<long long>(counts.size()) +
                               static_cast<long long>(mesh.faces.size());

    UnionFind uf(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        uf.unite(f[0], f[1]);
        uf.unite(f[1], f[2]);
    }
    std::size_t components = 0;
    for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v)
        if (uf.find(v) == v)
            ++components;
    rep.connected_components = components;
    return rep;
}

// ---------------------------------------------------------------------------
// Marching cubes

namespace {

// Local corner offsets matching the table convention in mc_tables.hpp.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

} // namespace

TriMesh marching_cubes(const BinaryVolume& volume)
{
    validate_grid(volume.grid);
    const auto& g = volume.grid;
    const std::int64_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

    auto sample = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> int {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz)
            return 0; // implicit background padding closes border surfaces
        return volume.at(i, j, k) ? 1 : 0;
    };

    // Welded vertices live on lattice edges; key = lattice point id * 3 + axis.
    const std::int64_t px = nx + 2, py = ny + 2;
    auto point_id = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> std::int64_t {
        return (i + 1) + px * ((j + 1) + py * (k + 1));
    };

    TriMesh mesh;
    std::unordered_map<std::int64_t, std::uint32_t> edge_vertex;
    edge_vertex.reserve(4096);

    int corner_val[8];
    std::uint32_t edge_idx[12];

    for (std::int64_t k = -1; k < nz; ++k)
        for (std::int64_t j = -1; j < ny; ++j)
            for (std::int64_t i = -1; i < nx; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    corner_val[c] = sample(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
                    if (corner_val[c] == 0) // below isolevel 0.5
                        cube |= 1 << c;
                }
                const int edges = detail::kMcEdgeTable[cube];
                if (edges == 0)
                    continue;

                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e)))
                        continue;
                    const int a = kEdgeEnds[e][0], b = kEdgeEnds[e][1];
                    const std::int64_t ia = i + kCorner[a][0], ja = j + kCorner[a][1],
                                       ka = k + kCorner[a][2];
                    const std::int64_t ib = i + kCorner[b][0], jb = j + kCorner[b][1],
                                       kb = k + kCorner[b][2];
                    // canonical key: lower lattice endpoint + axis
                    int axis = (ia != ib) ? 0 : (ja != jb ? 1 : 2);
                    std::int64_t id = (ia + ja + ka < ib + jb + kb) ? point_id(ia, ja, ka)
                                                                    : point_id(ib, jb, kb);
                    const std::int64_t key = id * 3 + axis;
                    auto [it, inserted] = edge_vertex.try_emplace(
                        key, static_cast<std::uint32_t>(mesh.vertices.size()));
                    if (inserted) {
                        // binary data: the 0.5 crossing is the exact edge midpoint
                        const Vec3 pa = g.voxel_center(ia, ja, ka);
                        const Vec3 pb = g.voxel_center(ib, jb, kb);
                        mesh.vertices.push_back((pa + pb) * 0.5);
                    }
                    edge_idx[e] = it->second;
                }

                const int* tris = detail::kMcTriTable[cube];
                for (int v = 0; tris[v] != -1; v += 3)
                    mesh.faces.push_back(
                        {edge_idx[tris[v]], edge_idx[tris[v + 1]], edge_idx[tris[v + 2]]});
            }

    return mesh;
}

double signed_volume(const TriMesh& mesh)
{
    double vol = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        vol += dot(a, cross(b, c));
    }
    return vol / 6.0;
}

Vec3 vertex_centroid(const TriMesh& mesh)
{
    Vec3 c{0, 0, 0};
    if (mesh.vertices.empty())
        return c;
    for (const auto& v : mesh.vertices)
        c += v;
    return c / static_cast<double>(mesh.vertices.size());
}

} // namespace shapefit
