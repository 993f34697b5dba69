#pragma once

#include "shapefit/geometry.hpp"
#include "shapefit/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shapefit {

/// Rasterization target: voxel counts, spacing and origin in mm.
/// The origin is the world position of the center of voxel (0,0,0).
struct GridSpec {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    double voxel_volume() const { return spacing.x * spacing.y * spacing.z; }

    Vec3 voxel_center(std::int64_t i, std::int64_t j, std::int64_t k) const
    {
        return {origin.x + static_cast<double>(i) * spacing.x,
                origin.y + static_cast<double>(j) * spacing.y,
                origin.z + static_cast<double>(k) * spacing.z};
    }

    bool operator==(const GridSpec& o) const
    {
        return dims == o.dims && spacing == o.spacing && origin == o.origin;
    }
};

/// Throws IoError when dims < 1 or spacing <= 0.
void validate_grid(const GridSpec& grid);

/// Binary mask on a regular grid, one value per voxel, x-fastest ordering.
struct BinaryVolume {
    GridSpec grid;
    std::vector<std::uint8_t> data; // 0 or 1, length = nx*ny*nz

    static BinaryVolume zeros(const GridSpec& grid);

    std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const
    {
        return i + grid.dims[0] * (j + grid.dims[1] * k);
    }
    std::uint8_t at(std::int64_t i, std::int64_t j, std::int64_t k) const
    {
        return data[index(i, j, k)];
    }
    void set(std::int64_t i, std::int64_t j, std::int64_t k, std::uint8_t v)
    {
        data[index(i, j, k)] = v;
    }

    std::int64_t foreground_count() const;
};

/// MetaImage I/O: text .mhd header plus raw MET_UCHAR payload. Any nonzero
/// byte loads as foreground.
BinaryVolume load_volume(const std::string& path);
void save_volume(const BinaryVolume& volume, const std::string& path);

/// Rasterizes a closed surface: a voxel is foreground iff its center lies
/// inside the mesh, decided by +x ray parity per (y,z) row. Degenerate
/// ray/triangle hits are retried with deterministic sub-voxel jitters and
/// finally fall back to the winding-number test. Output is identical for
/// any thread count.
BinaryVolume voxelize(const TriMesh& mesh, const GridSpec& grid, int threads = 1);

/// Generalized winding number test; points exactly on the surface count as
/// inside. Independent route from voxelize's ray parity.
bool point_in_mesh(const TriMesh& mesh, const Vec3& p);

/// World-space centers of foreground voxels with at least one background
/// 6-neighbor (out-of-grid counts as background).
std::vector<Vec3> boundary_voxels(const BinaryVolume& volume);

} // namespace shapefit
