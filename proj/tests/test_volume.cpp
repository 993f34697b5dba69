#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "shapefit/errors.hpp"
#include "shapefit/mesh.hpp"
#include "shapefit/rng.hpp"
#include "shapefit/synth.hpp"
#include "shapefit/volume.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace shapefit;

namespace {

std::filesystem::path temp_dir()
{
    auto dir = std::filesystem::temp_directory_path() / "shapefit_volume_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

// axis-aligned box [lo,hi]^3, outward-oriented
TriMesh make_box(double lo, double hi)
{
    TriMesh m;
    m.vertices = {{lo, lo, lo}, {hi, lo, lo}, {hi, hi, lo}, {lo, hi, lo},
                  {lo, lo, hi}, {hi, lo, hi}, {hi, hi, hi}, {lo, hi, hi}};
    m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
    return m;
}

TriMesh unit_octahedron()
{
    TriMesh m;
    m.vertices = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    m.faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
               {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
    return m;
}

} // namespace

TEST_CASE("volume round trip preserves grid and bit pattern")
{
    GridSpec g{{2, 2, 2}, {0.5, 1.0, 2.0}, {-1.0, 0.25, 3.0}};
    BinaryVolume v = BinaryVolume::zeros(g);
    for (auto& b : v.data)
        b = 1;
    CHECK(v.foreground_count() == 8);

    auto p = (temp_dir() / "cube.mhd").string();
    save_volume(v, p);
    BinaryVolume back = load_volume(p);
    CHECK(back.grid == g);
    CHECK(back.data == v.data);
}

TEST_CASE("load_volume flags a short raw file")
{
    auto hdr = temp_dir() / "short.mhd";
    auto raw = temp_dir() / "short.raw";
    std::ofstream(hdr) << "ObjectType = Image\nNDims = 3\nDimSize = 3 3 3\n"
                          "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
                          "ElementType = MET_UCHAR\nElementDataFile = short.raw\n";
    std::ofstream(raw) << "0123456789"; // 10 bytes instead of 27
    CHECK_THROWS_WITH_AS(load_volume(hdr.string()), doctest::Contains("does not match"),
                         IoError);
}

TEST_CASE("load_volume rejects unsupported element types")
{
    auto hdr = temp_dir() / "float.mhd";
    std::ofstream(hdr) << "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\n"
                          "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
                          "ElementType = MET_FLOAT\nElementDataFile = float.raw\n";
    CHECK_THROWS_WITH_AS(load_volume(hdr.string()), doctest::Contains("MET_UCHAR"), IoError);
}

TEST_CASE("load_volume treats any nonzero byte as foreground")
{
    auto hdr = temp_dir() / "vals.mhd";
    auto raw = temp_dir() / "vals.raw";
    std::ofstream(hdr) << "ObjectType = Image\nNDims = 3\nDimSize = 2 1 1\n"
                          "ElementSpacing = 1 1 1\nOffset = 0 0 0\n"
                          "ElementType = MET_UCHAR\nElementDataFile = vals.raw\n";
    {
        std::ofstream out(raw, std::ios::binary);
        const unsigned char bytes[2] = {0, 200};
        out.write(reinterpret_cast<const char*>(bytes), 2);
    }
    BinaryVolume v = load_volume(hdr.string());
    CHECK(v.data[0] == 0);
    CHECK(v.data[1] == 1);
}

TEST_CASE("voxelize classifies the 8 centers inside a unit-spaced cube")
{
    TriMesh cube = make_box(0.0, 2.0);
    REQUIRE(signed_volume(cube) == doctest::Approx(8.0));
    GridSpec g{{4, 4, 4}, {1, 1, 1}, {-0.5, -0.5, -0.5}}; // centers at -0.5..2.5
    BinaryVolume v = voxelize(cube, g);
    CHECK(v.foreground_count() == 8);
    for (std::int64_t k = 0; k < 4; ++k)
        for (std::int64_t j = 0; j < 4; ++j)
            for (std::int64_t i = 0; i < 4; ++i) {
                const Vec3 c = g.voxel_center(i, j, k);
                const bool inside = c.x > 0 && c.x < 2 && c.y > 0 && c.y < 2 && c.z > 0 && c.z < 2;
                CHECK(v.at(i, j, k) == (inside ? 1 : 0));
                CHECK(v.at(i, j, k) == (point_in_mesh(cube, c) ? 1 : 0));
            }
}

TEST_CASE("voxelize of a mesh outside the grid is all zero")
{
    TriMesh cube = make_box(100.0, 102.0);
    GridSpec g{{8, 8, 8}, {1, 1, 1}, {0, 0, 0}};
    CHECK(voxelize(cube, g).foreground_count() == 0);
}

TEST_CASE("voxelize rejects open meshes")
{
    TriMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    GridSpec g{{4, 4, 4}, {1, 1, 1}, {0, 0, 0}};
    CHECK_THROWS_WITH_AS(voxelize(tri, g), doctest::Contains("closed"), ComputeError);
}

TEST_CASE("voxelize of a 10 mm ball matches the analytic volume within 2%")
{
    TriMesh ball = make_icosphere(4); // 2562 vertices, close to a sphere
    for (auto& v : ball.vertices)
        v = v * 10.0;
    GridSpec g{{25, 25, 25}, {1, 1, 1}, {-12, -12, -12}};
    BinaryVolume v = voxelize(ball, g);
    const double expected = 4.0 / 3.0 * M_PI * 1000.0;
    CHECK(std::abs(v.foreground_count() * g.voxel_volume() - expected) / expected < 0.02);
}

TEST_CASE("point_in_mesh on the cube")
{
    TriMesh cube = make_box(0.0, 2.0);
    CHECK(point_in_mesh(cube, {1, 1, 1}));
    CHECK_FALSE(point_in_mesh(cube, {3, 1, 1}));
}

TEST_CASE("point_in_mesh on the octahedron half-space oracle")
{
    TriMesh oct = unit_octahedron();
    CHECK(point_in_mesh(oct, {0.9, 0, 0}));        // |x|+|y|+|z| = 0.9
    CHECK_FALSE(point_in_mesh(oct, {0.6, 0.6, 0})); // 1.2
}

TEST_CASE("point_in_mesh counts surface points as inside")
{
    TriMesh cube = make_box(0.0, 2.0);
    CHECK(point_in_mesh(cube, {0, 1, 1}));   // face interior
    CHECK(point_in_mesh(cube, {2, 2, 2}));   // corner
    CHECK(point_in_mesh(cube, {1, 0, 0}));   // edge
}

TEST_CASE("voxelize agrees with point_in_mesh at every center of a small grid")
{
    for (std::uint64_t seed : {11u, 12u}) {
        SynthConfig cfg;
        cfg.subdivision_level = 2;
        cfg.template_count = 2;
        cfg.amplitude = 1.2;
        cfg.seed = seed;
        TriMesh mesh = make_templates(cfg)[0];

        GridSpec g{{16, 16, 16}, {1.75, 1.75, 1.75}, {-13.1, -13.2, -13.3}};
        BinaryVolume vox = voxelize(mesh, g);
        std::int64_t mismatches = 0;
        for (std::int64_t k = 0; k < 16; ++k)
            for (std::int64_t j = 0; j < 16; ++j)
                for (std::int64_t i = 0; i < 16; ++i)
                    if ((vox.at(i, j, k) != 0) != point_in_mesh(mesh, g.voxel_center(i, j, k)))
                        ++mismatches;
        CHECK(mismatches == 0);
    }
}

TEST_CASE("voxelize agrees with point_in_mesh at sampled centers of a large grid")
{
    SynthConfig cfg;
    cfg.subdivision_level = 3;
    cfg.template_count = 2;
    cfg.amplitude = 1.5;
    cfg.seed = 8;
    cfg.semi_axes = {16.0, 13.0, 11.0};
    TriMesh mesh = make_templates(cfg)[0];

    GridSpec g{{48, 48, 48}, {0.8, 0.8, 0.8}, {-18.8, -18.8, -18.8}};
    BinaryVolume vox = voxelize(mesh, g, 2);
    Rng rng(123);
    for (int s = 0; s < 400; ++s) {
        const std::int64_t i = static_cast<std::int64_t>(rng.uniform01() * 48);
        const std::int64_t j = static_cast<std::int64_t>(rng.uniform01() * 48);
        const std::int64_t k = static_cast<std::int64_t>(rng.uniform01() * 48);
        CHECK((vox.at(i, j, k) != 0) == point_in_mesh(mesh, g.voxel_center(i, j, k)));
    }
}

TEST_CASE("voxelize shifts with the mesh under whole-voxel translations")
{
    SynthConfig cfg;
    cfg.subdivision_level = 2;
    cfg.template_count = 2;
    cfg.amplitude = 1.0;
    cfg.seed = 5;
    TriMesh mesh = make_templates(cfg)[0];
    GridSpec g{{24, 24, 24}, {1, 1, 1}, {-12, -12, -12}};
    BinaryVolume a = voxelize(mesh, g);

    const Vec3 shift{2.0, -3.0, 1.0}; // integer multiples of spacing
    TriMesh moved = mesh;
    for (auto& v : moved.vertices)
        v += shift;
    GridSpec moved_grid = g;
    moved_grid.origin += shift;
    BinaryVolume b = voxelize(moved, moved_grid);
    CHECK(a.data == b.data);
}

TEST_CASE("voxelize foreground converges to the mesh volume as spacing shrinks")
{
    TriMesh ball = make_icosphere(3);
    for (auto& v : ball.vertices)
        v = v * 8.0;
    const double mesh_volume = signed_volume(ball);

    auto count_error = [&](double spacing, std::int64_t n) {
        GridSpec g{{n, n, n}, {spacing, spacing, spacing},
                   {-spacing * (n - 1) / 2.0, -spacing * (n - 1) / 2.0,
                    -spacing * (n - 1) / 2.0}};
        BinaryVolume v = voxelize(ball, g);
        return std::abs(v.foreground_count() * g.voxel_volume() - mesh_volume) / mesh_volume;
    };
    const double coarse = count_error(2.0, 12);
    const double fine = count_error(1.0, 24);
    CHECK(fine < coarse);
    CHECK(fine < 0.03);
}

TEST_CASE("voxelize output is identical for 1, 2 and 8 threads")
{
    SynthConfig cfg;
    cfg.subdivision_level = 2;
    cfg.template_count = 2;
    cfg.amplitude = 1.5;
    cfg.seed = 21;
    TriMesh mesh = make_templates(cfg)[1];
    GridSpec g{{20, 22, 24}, {1.1, 0.9, 1.3}, {-11, -10, -14}};
    BinaryVolume v1 = voxelize(mesh, g, 1);
    BinaryVolume v2 = voxelize(mesh, g, 2);
    BinaryVolume v8 = voxelize(mesh, g, 8);
    CHECK(v1.data == v2.data);
    CHECK(v1.data == v8.data);
}

TEST_CASE("boundary_voxels of a single voxel is its center")
{
    GridSpec g{{5, 5, 5}, {2, 2, 2}, {1, 1, 1}};
    BinaryVolume v = BinaryVolume::zeros(g);
    v.set(2, 3, 1, 1);
    auto pts = boundary_voxels(v);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0] == g.voxel_center(2, 3, 1));
}

TEST_CASE("boundary_voxels of a solid 3x3x3 block excludes only the center")
{
    GridSpec g{{5, 5, 5}, {1, 1, 1}, {0, 0, 0}};
    BinaryVolume v = BinaryVolume::zeros(g);
    for (std::int64_t k = 1; k <= 3; ++k)
        for (std::int64_t j = 1; j <= 3; ++j)
            for (std::int64_t i = 1; i <= 3; ++i)
                v.set(i, j, k, 1);
    CHECK(boundary_voxels(v).size() == 26);
}

TEST_CASE("boundary_voxels of an empty volume is empty")
{
    BinaryVolume v = BinaryVolume::zeros({{4, 4, 4}, {1, 1, 1}, {0, 0, 0}});
    CHECK(boundary_voxels(v).empty());
}

TEST_CASE("boundary_voxels of a full grid is the border shell")
{
    GridSpec g{{4, 5, 6}, {1, 1, 1}, {0, 0, 0}};
    BinaryVolume v = BinaryVolume::zeros(g);
    for (auto& b : v.data)
        b = 1;
    // interior is (4-2)*(5-2)*(6-2) = 24 voxels
    CHECK(boundary_voxels(v).size() == static_cast<std::size_t>(4 * 5 * 6 - 24));
}
