#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "shapefit/errors.hpp"
#include "shapefit/metrics.hpp"
#include "shapefit/shape_model.hpp"
#include "shapefit/synth.hpp"

#include <cmath>

using namespace shapefit;

TEST_CASE("icosphere vertex and face counts follow subdivision")
{
    TriMesh ico0 = make_icosphere(0);
    CHECK(ico0.vertex_count() == 12);
    CHECK(ico0.face_count() == 20);

    TriMesh ico3 = make_icosphere(3);
    CHECK(ico3.vertex_count() == 642);
    CHECK(ico3.face_count() == 1280);

    auto rep = topology_report(ico3);
    CHECK(rep.is_closed);
    CHECK(rep.euler_characteristic == 2);
    CHECK(signed_volume(ico3) > 0.0); // outward faces
    for (const auto& v : ico3.vertices)
        CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("amplitude zero produces identical ellipsoids")
{
    SynthConfig cfg;
    cfg.template_count = 4;
    cfg.amplitude = 0.0;
    cfg.subdivision_level = 2;
    auto templates = make_templates(cfg);
    REQUIRE(templates.size() == 4);
    for (std::size_t i = 1; i < templates.size(); ++i)
        CHECK(templates[i].vertices == templates[0].vertices);
    // vertices lie on the ellipsoid
    for (const auto& v : templates[0].vertices) {
        const double r = (v.x / cfg.semi_axes.x) * (v.x / cfg.semi_axes.x) +
                         (v.y / cfg.semi_axes.y) * (v.y / cfg.semi_axes.y) +
                         (v.z / cfg.semi_axes.z) * (v.z / cfg.semi_axes.z);
        CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("templates are closed, share faces and satisfy build_model")
{
    SynthConfig cfg;
    cfg.template_count = 5;
    cfg.amplitude = 1.3;
    cfg.subdivision_level = 2;
    cfg.seed = 9;
    auto templates = make_templates(cfg);
    for (const auto& t : templates) {
        CHECK(t.faces == templates[0].faces);
        auto rep = topology_report(t);
        CHECK(rep.is_closed);
        CHECK(rep.euler_characteristic == 2);
    }
    ShapeModel model = build_model(templates, 0.98);
    CHECK(model.n == templates[0].vertex_count());
    CHECK(model.t >= 1);
    CHECK(model.t <= templates.size() - 1);
}

TEST_CASE("make_templates is deterministic per seed")
{
    SynthConfig cfg;
    cfg.template_count = 3;
    cfg.amplitude = 0.8;
    cfg.subdivision_level = 1;
    cfg.seed = 1234;
    auto a = make_templates(cfg);
    auto b = make_templates(cfg);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].vertices == b[i].vertices);

    cfg.seed = 1235;
    auto c = make_templates(cfg);
    CHECK(a[0].vertices != c[0].vertices);
}

TEST_CASE("template mean approaches the base ellipsoid as N grows")
{
    auto mean_error = [](int N) {
        SynthConfig cfg;
        cfg.template_count = N;
        cfg.amplitude = 1.0;
        cfg.subdivision_level = 2;
        cfg.seed = 42;
        auto templates = make_templates(cfg);
        SynthConfig base_cfg = cfg;
        base_cfg.amplitude = 0.0;
        base_cfg.template_count = 2;
        const TriMesh base = make_templates(base_cfg)[0];

        ShapeModel model = build_model(templates, 0.98);
        double err = 0.0;
        for (std::size_t i = 0; i < model.n; ++i)
            err += norm(model.mean.point(i) - base.vertices[i]);
        return err / static_cast<double>(model.n);
    };
    const double e4 = mean_error(4);
    const double e32 = mean_error(32);
    CHECK(e32 < e4);
}

TEST_CASE("excessive amplitude is rejected with a self-intersection error")
{
    SynthConfig cfg;
    cfg.template_count = 2;
    cfg.amplitude = 40.0; // spikes punch through a 12x9x7 ellipsoid
    cfg.subdivision_level = 2;
    cfg.seed = 3;
    CHECK_THROWS_WITH_AS(make_templates(cfg), doctest::Contains("self-intersects"),
                         ComputeError);
}

TEST_CASE("has_self_intersection flags crossing triangles and passes clean meshes")
{
    TriMesh clean = make_icosphere(1);
    CHECK_FALSE(has_self_intersection(clean));

    TriMesh crossing;
    crossing.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0},
                         {0.5, 0.5, -1}, {0.5, 0.5, 1}, {1.5, 1.5, 0.5}};
    crossing.faces = {{0, 1, 2}, {3, 4, 5}};
    CHECK(has_self_intersection(crossing));
}

TEST_CASE("make_target voxelizes the instantiated shape and echoes parameters")
{
    SynthConfig cfg;
    cfg.template_count = 4;
    cfg.amplitude = 0.6;
    cfg.subdivision_level = 2;
    cfg.seed = 11;
    ShapeModel model = build_model(make_templates(cfg), 0.98);

    GridSpec grid{{36, 30, 26}, {1, 1, 1}, {-17.5, -14.5, -12.5}};
    std::vector<double> b(model.t, 0.0);
    PoseParams pose;
    auto [target, params] = make_target(model, b, pose, grid);

    CHECK(params.b == b);
    CHECK(params.pose.scale == 1.0);
    // identity parameters: the target is the voxelized mean shape
    const BinaryVolume direct = voxelize(shape_to_mesh(model.mean, model.faces), grid);
    CHECK(target.data == direct.data);
    CHECK(target.foreground_count() > 100);
}

TEST_CASE("make_target tolerates a grid too coarse for the shape")
{
    SynthConfig cfg;
    cfg.template_count = 2;
    cfg.amplitude = 0.0;
    cfg.subdivision_level = 1;
    ShapeModel model = build_model(make_templates(cfg), 1.0);

    // 5 mm voxels over a 12x9x7 ellipsoid: a handful of centers at most;
    // the call warns on stderr but still returns the mask
    GridSpec coarse{{8, 8, 8}, {5, 5, 5}, {-17.5, -17.5, -17.5}};
    auto [target, params] = make_target(model, std::vector<double>(model.t, 0.0), PoseParams{},
                                        coarse);
    CHECK(target.foreground_count() < 100);
    CHECK(target.grid == coarse);
}
