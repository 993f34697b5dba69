// Acceptance suite: exercises the full pipeline end to end and prints one
// PASS/FAIL line per criterion. Exit code = number of failed criteria.
//
// usage: test_acceptance <path-to-shapefit-binary> [scratch-dir]

#include "shapefit/errors.hpp"
#include "shapefit/fitter.hpp"
#include "shapefit/mesh.hpp"
#include "shapefit/metrics.hpp"
#include "shapefit/rng.hpp"
#include "shapefit/shape_model.hpp"
#include "shapefit/synth.hpp"
#include "shapefit/volume.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

using namespace shapefit;
namespace fs = std::filesystem;

namespace {

std::string g_binary;
fs::path g_scratch;
int g_failures = 0;

void report(int criterion, bool ok, const std::string& what)
{
    std::printf("%s  criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!ok)
        ++g_failures;
}

int run_cli(const std::string& args)
{
    const std::string cmd = g_binary + " " + args + " >/dev/null 2>/dev/null";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        return "<missing:" + p.string() + ">";
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

char fmt_buf[512];
template <typename... Args> std::string fmt(const char* f, Args... args)
{
    std::snprintf(fmt_buf, sizeof fmt_buf, f, args...);
    return fmt_buf;
}

// --------------------------------------------------------------------------
// 1. synthetic end-to-end round trip through the CLI

void criterion_1_and_2()
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = g_scratch / "roundtrip";
    fs::create_directories(dir);

    bool ok = true;
    std::string detail;
    ok &= run_cli("synth --seed 42 --templates 16 --target --out " + (dir / "synth").string()) == 0;
    std::string build_cmd = "build-model";
    for (int i = 0; i < 16; ++i)
        build_cmd += " " + (dir / "synth" / fmt("template_%03d.ply", i)).string();
    build_cmd += " --variance-fraction 0.98 --out " + (dir / "model.json").string();
    ok &= run_cli(build_cmd) == 0;
    ok &= run_cli("fit --model " + (dir / "model.json").string() + " --target " +
                  (dir / "synth" / "target.mhd").string() + " --seed 7 --threads 2 --out " +
                  (dir / "fitted").string()) == 0;

    double dsc_value = 0.0, hd_value = 1e9, seconds = 0.0;
    TriMesh fitted;
    BinaryVolume target;
    if (ok) {
        fitted = load_mesh((dir / "fitted.ply").string());
        target = load_volume((dir / "synth" / "target.mhd").string());
        const BinaryVolume rasterized = voxelize(fitted, target.grid, 2);
        dsc_value = dsc(rasterized, target);
        hd_value = hausdorff(rasterized, target);
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = dsc_value >= 0.95 && hd_value <= 2.0 && seconds < 600.0;
        detail = fmt("round trip: DSC %.4f (>= 0.95), HD %.3f mm (<= 2), %.1f s (< 600)",
                     dsc_value, hd_value, seconds);
    } else {
        detail = "round trip: a pipeline stage exited nonzero";
    }
    report(1, ok, detail);

    // 2. smoothness ordering against a salt-corrupted marching-cubes surface
    if (fitted.vertex_count() == 0) {
        report(2, false, "smoothness ordering: no fitted surface available");
        return;
    }
    BinaryVolume noisy = target;
    Rng rng(99);
    for (auto& b : noisy.data)
        if (b == 0 && rng.uniform01() < 0.05)
            b = 1; // salt
    const TriMesh noisy_mc = marching_cubes(noisy);

    const double gl_fitted = surface_gl(fitted);
    const double gl_noisy = surface_gl(noisy_mc);
    const auto rep_fitted = topology_report(fitted);
    const auto rep_noisy = topology_report(noisy_mc);
    const bool ok2 = gl_fitted < gl_noisy && rep_fitted.is_closed &&
                     rep_fitted.euler_characteristic == 2 && rep_noisy.connected_components > 1;
    report(2, ok2,
           fmt("smoothness ordering: GL %.1f < %.1f, fitted closed chi=%lld, "
               "noisy components=%zu (> 1)",
               gl_fitted, gl_noisy, rep_fitted.euler_characteristic,
               rep_noisy.connected_components));
}

// --------------------------------------------------------------------------
// 3. PCA oracle equivalence

std::vector<TriMesh> random_templates(std::size_t N, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<TriMesh> out(N);
    for (auto& t : out) {
        t.vertices.resize(n);
        for (auto& v : t.vertices)
            v = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    }
    return out;
}

void criterion_3()
{
    double worst_eval = 0.0, worst_evec = 0.0, worst_recon = 0.0;
    const std::size_t Ns[] = {5, 7, 10, 8};
    const std::size_t ns[] = {9, 14, 20, 11};
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t N = Ns[trial], n = ns[trial], dim = 3 * n;
        auto templates = random_templates(N, n, 4200 + trial);
        ShapeModel model = build_model(templates, 1.0);

        Eigen::MatrixXd data(dim, N);
        for (std::size_t i = 0; i < N; ++i) {
            const auto sv = assemble_shape_vector(templates[i]);
            for (std::size_t d = 0; d < dim; ++d)
                data(d, i) = sv.coords[d];
        }
        const Eigen::VectorXd mean = data.rowwise().mean();
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dim, dim);
        for (std::size_t i = 0; i < N; ++i) {
            const Eigen::VectorXd d = data.col(i) - mean;
            S += d * d.transpose();
        }
        S /= static_cast<double>(N);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
        const Eigen::VectorXd evals = solver.eigenvalues().reverse();
        const Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();

        for (std::size_t r = 0; r < model.t; ++r) {
            worst_eval = std::max(worst_eval,
                                  std::abs(model.eigenvalues[r] - evals(r)) / evals(r));
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d)
                dot += model.modes[r][d] * evecs(d, r);
            worst_evec = std::max(worst_evec, std::abs(std::abs(dot) - 1.0));
        }

        for (const auto& tmpl : templates) {
            const ShapeVector target = assemble_shape_vector(tmpl);
            std::vector<double> b(model.t, 0.0);
            for (std::size_t r = 0; r < model.t; ++r)
                for (std::size_t d = 0; d < dim; ++d)
                    b[r] += model.modes[r][d] * (target.coords[d] - model.mean.coords[d]);
            const ShapeVector rec = reconstruct(model, b);
            double err2 = 0.0, scale2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                err2 += (rec.coords[d] - target.coords[d]) * (rec.coords[d] - target.coords[d]);
                scale2 += target.coords[d] * target.coords[d];
            }
            worst_recon = std::max(worst_recon, std::sqrt(err2 / scale2));
        }
    }
    const bool ok = worst_eval < 1e-8 && worst_evec < 1e-8 && worst_recon < 1e-8;
    report(3, ok,
           fmt("PCA oracle: eigenvalue err %.2e, eigenvector err %.2e, "
               "reconstruction err %.2e (all < 1e-8)",
               worst_eval, worst_evec, worst_recon));
}

// --------------------------------------------------------------------------
// 4. voxelizer vs winding-number oracle

void criterion_4()
{
    SynthConfig cfg;
    cfg.subdivision_level = 2;
    cfg.template_count = 25;
    cfg.amplitude = 1.2;
    cfg.seed = 7;
    const auto meshes = make_templates(cfg);
    const GridSpec grid{{32, 32, 32}, {1, 1, 1}, {-15.5, -15.5, -15.5}};

    std::atomic<std::int64_t> mismatches{0};
    std::int64_t checked = 0;
    for (const auto& mesh : meshes) {
        const BinaryVolume vox = voxelize(mesh, grid, 2);
        auto work = [&](std::int64_t k0, std::int64_t k1) {
            std::int64_t local = 0;
            for (std::int64_t k = k0; k < k1; ++k)
                for (std::int64_t j = 0; j < 32; ++j)
                    for (std::int64_t i = 0; i < 32; ++i)
                        if ((vox.at(i, j, k) != 0) !=
                            point_in_mesh(mesh, grid.voxel_center(i, j, k)))
                            ++local;
            mismatches += local;
        };
        std::thread a(work, 0, 16), b(work, 16, 32);
        a.join();
        b.join();
        checked += grid.voxel_count();
    }
    report(4, mismatches == 0,
           fmt("voxelizer oracle: %lld/%lld centers disagree across 25 meshes (need 0)",
               static_cast<long long>(mismatches.load()), static_cast<long long>(checked)));
}

// --------------------------------------------------------------------------
// 5. metric identities

void criterion_5()
{
    GridSpec g{{6, 4, 4}, {1, 1, 1}, {0, 0, 0}};
    BinaryVolume a = BinaryVolume::zeros(g);
    for (std::int64_t k = 0; k < 2; ++k)
        for (std::int64_t j = 0; j < 2; ++j)
            for (std::int64_t i = 0; i < 2; ++i)
                a.set(i, j, k, 1);
    BinaryVolume b = BinaryVolume::zeros(g);
    for (std::int64_t k = 0; k < 2; ++k)
        for (std::int64_t j = 0; j < 2; ++j)
            for (std::int64_t i = 1; i < 3; ++i)
                b.set(i, j, k, 1);

    GridSpec g2{{6, 3, 3}, {1, 1, 1}, {0, 0, 0}};
    BinaryVolume p = BinaryVolume::zeros(g2), q = BinaryVolume::zeros(g2);
    p.set(1, 1, 1, 1);
    q.set(4, 1, 1, 1);

    const bool ok = dsc(a, a) == 1.0 && hausdorff(a, a) == 0.0 && dsc(a, b) == 0.5 &&
                    hausdorff(p, q) == 3.0;
    report(5, ok,
           fmt("metric identities: dsc(a,a)=%g, hd(a,a)=%g, half-overlap dsc=%g, "
               "two-voxel hd=%g",
               dsc(a, a), hausdorff(a, a), dsc(a, b), hausdorff(p, q)));
}

// --------------------------------------------------------------------------
// 6. optimizer sanity over 10 seeds

void criterion_6()
{
    int sphere_pass = 0, rosen_pass = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SwarmConfig cfg; // defaults: swarm 40, 200 iterations
        cfg.seed = seed;
        cfg.stall_iterations = 0; // full iteration budget
        auto res = optimize_test_function(
            [](const std::vector<double>& x) {
                double s = 0;
                for (double v : x)
                    s += v * v;
                return s;
            },
            std::vector<Interval>(5, {-5, 5}), cfg);
        double nrm = 0;
        for (double v : res.best_position)
            nrm += v * v;
        if (std::sqrt(nrm) < 1e-2)
            ++sphere_pass;

        SwarmConfig rcfg;
        rcfg.swarm_size = 60;
        rcfg.max_iterations = 400;
        rcfg.stall_iterations = 0;
        rcfg.seed = seed;
        auto rres = optimize_test_function(
            [](const std::vector<double>& x) {
                const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
                return a * a + 100.0 * b * b;
            },
            std::vector<Interval>(2, {-2.048, 2.048}), rcfg);
        if (rres.best_fitness < 1e-2)
            ++rosen_pass;
    }
    report(6, sphere_pass >= 9 && rosen_pass >= 9,
           fmt("optimizer sanity: sphere %d/10, rosenbrock %d/10 seeds (need >= 9)",
               sphere_pass, rosen_pass));
}

// --------------------------------------------------------------------------
// 7. byte-identical subcommand outputs under 1, 2 and 8 threads

void criterion_7()
{
    const fs::path dir = g_scratch / "determinism";
    fs::create_directories(dir);
    bool ok = true;
    std::string detail = "determinism: all subcommand outputs byte-identical";

    auto check_same = [&](const fs::path& x, const fs::path& y, const char* what) {
        const std::string sx = slurp(x), sy = slurp(y);
        if (sx != sy || sx.rfind("<missing:", 0) == 0) {
            ok = false;
            detail = fmt("determinism: %s outputs differ (%s vs %s)", what, x.string().c_str(),
                         y.string().c_str());
        }
    };

    // synth twice
    for (const char* tag : {"a", "b"})
        if (run_cli(fmt("synth --seed 11 --templates 4 --target --out %s",
                        (dir / (std::string("synth_") + tag)).string().c_str())) != 0)
            ok = false;
    for (const char* f : {"template_000.ply", "template_003.ply", "target.mhd", "target.raw",
                          "target_params.json"})
        check_same(dir / "synth_a" / f, dir / "synth_b" / f, "synth");

    // build-model twice
    std::string tmpl;
    for (int i = 0; i < 4; ++i)
        tmpl += " " + (dir / "synth_a" / fmt("template_%03d.ply", i)).string();
    for (const char* tag : {"a", "b"})
        if (run_cli("build-model" + tmpl + " --out " +
                    (dir / (std::string("model_") + tag + ".json")).string()) != 0)
            ok = false;
    check_same(dir / "model_a.json", dir / "model_b.json", "build-model");

    // mesh twice
    for (const char* tag : {"a", "b"})
        if (run_cli("mesh --mask " + (dir / "synth_a" / "target.mhd").string() + " --out " +
                    (dir / (std::string("mc_") + tag + ".ply")).string()) != 0)
            ok = false;
    check_same(dir / "mc_a.ply", dir / "mc_b.ply", "mesh");

    // voxelize twice per thread count
    for (int threads : {1, 2, 8})
        for (const char* tag : {"a", "b"})
            if (run_cli(fmt("voxelize --mesh %s --like %s --threads %d --out %s",
                            (dir / "mc_a.ply").string().c_str(),
                            (dir / "synth_a" / "target.mhd").string().c_str(), threads,
                            (dir / fmt("vox_%d_%s.mhd", threads, tag)).string().c_str())) != 0)
                ok = false;
    check_same(dir / "vox_1_a.raw", dir / "vox_1_b.raw", "voxelize rerun");
    check_same(dir / "vox_1_a.raw", dir / "vox_2_a.raw", "voxelize threads=2");
    check_same(dir / "vox_1_a.raw", dir / "vox_8_a.raw", "voxelize threads=8");

    // evaluate twice
    for (const char* tag : {"a", "b"})
        if (run_cli("evaluate --surface " + (dir / "mc_a.ply").string() + " --reference " +
                    (dir / "synth_a" / "target.mhd").string() + " --out " +
                    (dir / (std::string("report_") + tag + ".json")).string()) != 0)
            ok = false;
    check_same(dir / "report_a.json", dir / "report_b.json", "evaluate json");
    check_same(dir / "report_a.txt", dir / "report_b.txt", "evaluate table");

    // fit twice per thread count
    for (int threads : {1, 2, 8})
        for (const char* tag : {"a", "b"})
            if (run_cli(fmt("fit --model %s --target %s --seed 5 --swarm-size 10 "
                            "--max-iterations 6 --threads %d --out %s",
                            (dir / "model_a.json").string().c_str(),
                            (dir / "synth_a" / "target.mhd").string().c_str(), threads,
                            (dir / fmt("fit_%d_%s", threads, tag)).string().c_str())) != 0)
                ok = false;
    check_same(dir / "fit_1_a.json", dir / "fit_1_b.json", "fit rerun");
    check_same(dir / "fit_1_a.json", dir / "fit_2_a.json", "fit threads=2");
    check_same(dir / "fit_1_a.json", dir / "fit_8_a.json", "fit threads=8");
    check_same(dir / "fit_1_a.ply", dir / "fit_8_a.ply", "fit mesh threads=8");

    report(7, ok, detail);
}

// --------------------------------------------------------------------------
// 8. geometric Laplacian invariances

void criterion_8()
{
    double worst_shift = 0.0, worst_scale = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TriMesh m = make_icosphere(1);
        Rng rng(800 + seed);
        for (auto& v : m.vertices)
            v += Vec3{rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                      rng.uniform(-0.08, 0.08)};
        const double base = surface_gl(m);

        TriMesh shifted = m;
        for (auto& v : shifted.vertices)
            v += Vec3{3.25, -7.5, 11.125};
        worst_shift = std::max(worst_shift, std::abs(surface_gl(shifted) - base));

        const double s = 2.5;
        TriMesh scaled = m;
        for (auto& v : scaled.vertices)
            v = v * s;
        worst_scale = std::max(worst_scale,
                               std::abs(surface_gl(scaled) - s * base) / (s * base));
    }
    report(8, worst_shift <= 1e-12 && worst_scale <= 1e-12,
           fmt("GL invariances: translation err %.2e (<= 1e-12), "
               "scale homogeneity err %.2e (<= 1e-12 relative)",
               worst_shift, worst_scale));
}

} // namespace

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <shapefit-binary> [scratch-dir]\n", argv[0]);
        return 64;
    }
    g_binary = argv[1];
    g_scratch = argc > 2 ? fs::path(argv[2])
                         : fs::temp_directory_path() / "shapefit_acceptance";
    fs::create_directories(g_scratch);

    criterion_1_and_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();

    std::printf("%s (%d/8 criteria passed)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
                8 - g_failures);
    return g_failures;
}
