#include "shapefit/volume.hpp"

#include "shapefit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace shapefit {

void validate_grid(const GridSpec& grid)
{
    for (int d = 0; d < 3; ++d)
        if (grid.dims[d] < 1)
            throw IoError("grid dims must all be >= 1");
    if (grid.spacing.x <= 0 || grid.spacing.y <= 0 || grid.spacing.z <= 0)
        throw IoError("grid spacing must all be > 0");
    if (!is_finite(grid.spacing) || !is_finite(grid.origin))
        throw IoError("grid spacing/origin must be finite");
}

BinaryVolume BinaryVolume::zeros(const GridSpec& grid)
{
    validate_grid(grid);
    BinaryVolume v;
    v.grid = grid;
    v.data.assign(static_cast<std::size_t>(grid.voxel_count()), 0);
    return v;
}

std::int64_t BinaryVolume::foreground_count() const
{
    std::int64_t n = 0;
    for (std::uint8_t b : data)
        n += b;
    return n;
}

// ---------------------------------------------------------------------------
// MetaImage I/O

namespace {

std::string trim(const std::string& s)
{
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
}

} // namespace

BinaryVolume load_volume(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open volume header: " + path);

    GridSpec grid;
    bool have_dims = false;
    std::string element_type, data_file;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "ObjectType") {
            if (val != "Image")
                throw IoError(path + ": unsupported ObjectType '" + val + "'");
        } else if (key == "NDims") {
            if (val != "3")
                throw IoError(path + ": only NDims = 3 is supported");
        } else if (key == "DimSize") {
            std::istringstream is(val);
            if (!(is >> grid.dims[0] >> grid.dims[1] >> grid.dims[2]))
                throw IoError(path + ": malformed DimSize");
            have_dims = true;
        } else if (key == "ElementSpacing") {
            std::istringstream is(val);
            if (!(is >> grid.spacing.x >> grid.spacing.y >> grid.spacing.z))
                throw IoError(path + ": malformed ElementSpacing");
        } else if (key == "Offset") {
            std::istringstream is(val);
            if (!(is >> grid.origin.x >> grid.origin.y >> grid.origin.z))
                throw IoError(path + ": malformed Offset");
        } else if (key == "ElementType") {
            element_type = val;
        } else if (key == "ElementDataFile") {
            data_file = val;
        }
    }
    if (!have_dims)
        throw IoError(path + ": header lacks DimSize");
    if (element_type != "MET_UCHAR")
        throw IoError(path + ": unsupported ElementType '" + element_type +
                      "' (only MET_UCHAR)");
    if (data_file.empty() || data_file == "LOCAL" || data_file == "LIST")
        throw IoError(path + ": ElementDataFile must name a raw file");
    validate_grid(grid);

    const auto raw_path = std::filesystem::path(path).parent_path() / data_file;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw)
        throw IoError("cannot open raw data: " + raw_path.string());
    raw.seekg(0, std::ios::end);
    const std::int64_t size = raw.tellg();
    raw.seekg(0);
    if (size != grid.voxel_count())
        throw IoError(raw_path.string() + ": raw size " + std::to_string(size) +
                      " does not match DimSize product " + std::to_string(grid.voxel_count()));

    BinaryVolume vol;
    vol.grid = grid;
    vol.data.resize(static_cast<std::size_t>(size));
    raw.read(reinterpret_cast<char*>(vol.data.data()), size);
    if (!raw)
        throw IoError("read failed: " + raw_path.string());
    for (auto& b : vol.data)
        b = b ? 1 : 0;
    return vol;
}

void save_volume(const BinaryVolume& volume, const std::string& path)
{
    validate_grid(volume.grid);
    if (volume.data.size() != static_cast<std::size_t>(volume.grid.voxel_count()))
        throw IoError("volume data length does not match grid dims");

    std::filesystem::path hdr_path(path);
    if (hdr_path.extension() != ".mhd")
        hdr_path += ".mhd";
    std::filesystem::path raw_path = hdr_path;
    raw_path.replace_extension(".raw");

    std::ofstream hdr(hdr_path);
    if (!hdr)
        throw IoError("cannot open for writing: " + hdr_path.string());
    const auto& g = volume.grid;
    char buf[160];
    hdr << "ObjectType = Image\nNDims = 3\n";
    hdr << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << "\n";
    std::snprintf(buf, sizeof buf, "ElementSpacing = %.17g %.17g %.17g\n", g.spacing.x,
                  g.spacing.y, g.spacing.z);
    hdr << buf;
    std::snprintf(buf, sizeof buf, "Offset = %.17g %.17g %.17g\n", g.origin.x, g.origin.y,
                  g.origin.z);
    hdr << buf;
    hdr << "ElementType = MET_UCHAR\n";
    hdr << "ElementDataFile = " << raw_path.filename().string() << "\n";
    if (!hdr)
        throw IoError("write failed: " + hdr_path.string());

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw)
        throw IoError("cannot open for writing: " + raw_path.string());
    raw.write(reinterpret_cast<const char*>(volume.data.data()),
              static_cast<std::streamsize>(volume.data.size()));
    if (!raw)
        throw IoError("write failed: " + raw_path.string());
}

// ---------------------------------------------------------------------------
// Point-in-mesh via generalized winding number

namespace {

// Exact test for a point lying on a triangle, used for the documented
// on-surface-counts-as-inside convention.
bool point_on_triangle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p)
{
    const Vec3 n = cross(b - a, c - a);
    if (norm2(n) == 0.0)
        return false; // geometrically degenerate triangle bounds no area
    if (dot(n, p - a) != 0.0)
        return false;
    // coplanar: p inside iff all edge cross products point along n
    const double s1 = dot(cross(b - a, p - a), n);
    const double s2 = dot(cross(c - b, p - b), n);
    const double s3 = dot(cross(a - c, p - c), n);
    return s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0;
}

double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c)
{
    // van Oosterom & Strackee
    const double la = norm(a), lb = norm(b), lc = norm(c);
    const double numer = dot(a, cross(b, c));
    const double denom = la * lb * lc + dot(a, b) * lc + dot(b, c) * la + dot(c, a) * lb;
    return 2.0 * std::atan2(numer, denom);
}

} // namespace

bool point_in_mesh(const TriMesh& mesh, const Vec3& p)
{
    for (const auto& f : mesh.faces)
        if (point_on_triangle(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]], p))
            return true;
    double omega = 0.0;
    for (const auto& f : mesh.faces)
        omega += solid_angle(mesh.vertices[f[0]] - p, mesh.vertices[f[1]] - p,
                             mesh.vertices[f[2]] - p);
    return std::lround(omega / (4.0 * M_PI)) != 0;
}

// ---------------------------------------------------------------------------
// Voxelization

namespace {

struct RowClassifier {
    const TriMesh& mesh;
    const GridSpec& grid;
    std::vector<std::vector<std::uint32_t>> buckets; // triangle ids per (j,k) row

    RowClassifier(const TriMesh& m, const GridSpec& g) : mesh(m), grid(g)
    {
        const std::int64_t ny = g.dims[1], nz = g.dims[2];
        buckets.resize(static_cast<std::size_t>(ny * nz));
        for (std::uint32_t t = 0; t < mesh.faces.size(); ++t) {
            const auto& f = mesh.faces[t];
            double ymin = mesh.vertices[f[0]].y, ymax = ymin;
            double zmin = mesh.vertices[f[0]].z, zmax = zmin;
            for (int c = 1; c < 3; ++c) {
                const Vec3& v = mesh.vertices[f[c]];
                ymin = std::min(ymin, v.y);
                ymax = std::max(ymax, v.y);
                zmin = std::min(zmin, v.z);
                zmax = std::max(zmax, v.z);
            }
            // rows whose (possibly jittered) ray can pierce this triangle;
            // one extra row absorbs the sub-voxel jitter
            std::int64_t j0 = static_cast<std::int64_t>(std::ceil((ymin - g.origin.y) / g.spacing.y)) - 1;
            std::int64_t j1 = static_cast<std::int64_t>(std::floor((ymax - g.origin.y) / g.spacing.y)) + 1;
            std::int64_t k0 = static_cast<std::int64_t>(std::ceil((zmin - g.origin.z) / g.spacing.z)) - 1;
            std::int64_t k1 = static_cast<std::int64_t>(std::floor((zmax - g.origin.z) / g.spacing.z)) + 1;
            j0 = std::max<std::int64_t>(j0, 0);
            k0 = std::max<std::int64_t>(k0, 0);
            j1 = std::min(j1, ny - 1);
            k1 = std::min(k1, nz - 1);
            for (std::int64_t k = k0; k <= k1; ++k)
                for (std::int64_t j = j0; j <= j1; ++j)
                    buckets[static_cast<std::size_t>(k * ny + j)].push_back(t);
        }
    }

    // Gather ray/surface crossing x-coordinates for the ray through (ry, rz).
    // Returns false on a degenerate hit (ray through a projected vertex or
    // edge, or an edge-on triangle).
    bool gather_crossings(const std::vector<std::uint32_t>& tris, double ry, double rz,
                          std::vector<double>& xs) const
    {
        xs.clear();
        for (std::uint32_t t : tris) {
            const auto& f = mesh.faces[t];
            const Vec3& a = mesh.vertices[f[0]];
            const Vec3& b = mesh.vertices[f[1]];
            const Vec3& c = mesh.vertices[f[2]];
            // 2D orientation tests in the (y,z) projection
            const double area2 = (b.y - a.y) * (c.z - a.z) - (b.z - a.z) * (c.y - a.y);
            const double wa = (c.y - b.y) * (rz - b.z) - (c.z - b.z) * (ry - b.y);
            const double wb = (a.y - c.y) * (rz - c.z) - (a.z - c.z) * (ry - c.y);
            const double wc = (b.y - a.y) * (rz - a.z) - (b.z - a.z) * (ry - a.y);
            if (area2 == 0.0) {
                // edge-on triangle: ambiguous only if the ray touches it
                if (wa == 0.0 && wb == 0.0 && wc == 0.0) {
                    double ylo = std::min({a.y, b.y, c.y}), yhi = std::max({a.y, b.y, c.y});
                    double zlo = std::min({a.z, b.z, c.z}), zhi = std::max({a.z, b.z, c.z});
                    if (ry >= ylo && ry <= yhi && rz >= zlo && rz <= zhi)
                        return false;
                }
                continue;
            }
            const double sa = wa / area2, sb = wb / area2, sc = wc / area2;
            if (sa > 0.0 && sb > 0.0 && sc > 0.0) {
                // strictly interior hit
                if (a.x == b.x && b.x == c.x)
                    xs.push_back(a.x); // planar-in-x triangle: exact
                else
                    xs.push_back(sa * a.x + sb * b.x + sc * c.x);
            } else if (sa == 0.0 || sb == 0.0 || sc == 0.0) {
                if (sa >= 0.0 && sb >= 0.0 && sc >= 0.0)
                    return false; // on a projected edge or vertex
            }
        }
        return true;
    }

    void classify_row(std::int64_t j, std::int64_t k, std::uint8_t* out,
                      std::vector<double>& xs) const
    {
        const auto& tris = buckets[static_cast<std::size_t>(k * grid.dims[1] + j)];
        const std::int64_t nx = grid.dims[0];
        if (tris.empty()) {
            std::fill(out, out + nx, std::uint8_t{0});
            return;
        }
        const double ry0 = grid.origin.y + static_cast<double>(j) * grid.spacing.y;
        const double rz0 = grid.origin.z + static_cast<double>(k) * grid.spacing.z;

        // deterministic, asymmetric jitters so diagonal edges cannot track the ray
        for (int attempt = 0; attempt <= 3; ++attempt) {
            const double ry = ry0 + attempt * 1e-4 * grid.spacing.y;
            const double rz = rz0 + attempt * 2e-4 * grid.spacing.z;
            if (!gather_crossings(tris, ry, rz, xs))
                continue;
            std::sort(xs.begin(), xs.end());
            for (std::int64_t i = 0; i < nx; ++i) {
                const double cx = grid.origin.x + static_cast<double>(i) * grid.spacing.x;
                auto lo = std::lower_bound(xs.begin(), xs.end(), cx);
                const bool on_surface = lo != xs.end() && *lo == cx;
                const std::size_t below = static_cast<std::size_t>(lo - xs.begin());
                out[i] = (on_surface || (below & 1)) ? 1 : 0;
            }
            return;
        }
        // persistent degeneracy: decide each center by winding number
        for (std::int64_t i = 0; i < nx; ++i)
            out[i] = point_in_mesh(mesh, grid.voxel_center(i, j, k)) ? 1 : 0;
    }
};

} // namespace

BinaryVolume voxelize(const TriMesh& mesh, const GridSpec& grid, int threads)
{
    validate_mesh(mesh);
    validate_grid(grid);
    if (!topology_report(mesh).is_closed)
        throw ComputeError("voxelize requires a closed mesh (every edge on exactly 2 faces)");

    BinaryVolume vol = BinaryVolume::zeros(grid);
    const std::int64_t ny = grid.dims[1], nz = grid.dims[2], nx = grid.dims[0];
    if (mesh.faces.empty())
        return vol;

    RowClassifier classifier(mesh, grid);
    const std::int64_t rows = ny * nz;

    auto work = [&](std::int64_t row_begin, std::int64_t row_end) {
        std::vector<double> xs;
        for (std::int64_t r = row_begin; r < row_end; ++r) {
            const std::int64_t k = r / ny, j = r % ny;
            classifier.classify_row(j, k, vol.data.data() + (k * ny + j) * nx, xs);
        }
    };

    if (threads <= 1 || rows < 2) {
        work(0, rows);
    } else {
        const int nthreads = static_cast<int>(std::min<std::int64_t>(threads, rows));
        std::vector<std::thread> pool;
        const std::int64_t chunk = (rows + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const std::int64_t lo = t * chunk;
            const std::int64_t hi = std::min(rows, lo + chunk);
            if (lo < hi)
                pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool)
            th.join();
    }
    return vol;
}

std::vector<Vec3> boundary_voxels(const BinaryVolume& volume)
{
    const auto& g = volume.grid;
    const std::int64_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    auto fg = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> bool {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz)
            return false;
        return volume.at(i, j, k) != 0;
    };
    std::vector<Vec3> out;
    for (std::int64_t k = 0; k < nz; ++k)
        for (std::int64_t j = 0; j < ny; ++j)
            for (std::int64_t i = 0; i < nx; ++i) {
                if (!fg(i, j, k))
                    continue;
                if (!fg(i - 1, j, k) || !fg(i + 1, j, k) || !fg(i, j - 1, k) ||
                    !fg(i, j + 1, k) || !fg(i, j, k - 1) || !fg(i, j, k + 1))
                    out.push_back(g.voxel_center(i, j, k));
            }
    return out;
}

} // namespace shapefit
