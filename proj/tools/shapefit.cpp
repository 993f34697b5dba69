// shapefit: builds PCA shape models from corresponded surfaces, fits them to
// binary segmentation masks with hybrid PSO, and reports DSC/HD/GL quality.

#include "shapefit/errors.hpp"
#include "shapefit/fitter.hpp"
#include "shapefit/mesh.hpp"
#include "shapefit/metrics.hpp"
#include "shapefit/shape_model.hpp"
#include "shapefit/synth.hpp"
#include "shapefit/volume.hpp"

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using nlohmann::json;
namespace fs = std::filesystem;
using namespace shapefit;

namespace {

constexpr const char* kVersion = "0.1.0";

GridSpec parse_grid(const std::string& text)
{
    // NX,NY,NZ/SX,SY,SZ/OX,OY,OZ
    std::vector<std::vector<double>> groups;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t slash = text.find('/', start);
        const std::string group =
            text.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
        std::vector<double> vals;
        std::size_t vstart = 0;
        while (vstart <= group.size()) {
            const std::size_t comma = group.find(',', vstart);
            const std::string tok = group.substr(
                vstart, comma == std::string::npos ? std::string::npos : comma - vstart);
            try {
                vals.push_back(std::stod(tok));
            } catch (...) {
                throw IoError("bad grid component '" + tok + "' in '" + text + "'");
            }
            if (comma == std::string::npos)
                break;
            vstart = comma + 1;
        }
        groups.push_back(vals);
        if (slash == std::string::npos)
            break;
        start = slash + 1;
    }
    if (groups.size() != 3 || groups[0].size() != 3 || groups[1].size() != 3 ||
        groups[2].size() != 3)
        throw IoError("grid must be NX,NY,NZ/SX,SY,SZ/OX,OY,OZ, got '" + text + "'");
    GridSpec g;
    for (int d = 0; d < 3; ++d)
        g.dims[d] = static_cast<std::int64_t>(groups[0][d]);
    g.spacing = {groups[1][0], groups[1][1], groups[1][2]};
    g.origin = {groups[2][0], groups[2][1], groups[2][2]};
    validate_grid(g);
    return g;
}

json grid_to_json(const GridSpec& g)
{
    return {{"dims", g.dims},
            {"spacing", {g.spacing.x, g.spacing.y, g.spacing.z}},
            {"origin", {g.origin.x, g.origin.y, g.origin.z}}};
}

fs::path manifest_path(const fs::path& out)
{
    if (fs::is_directory(out))
        return out / "manifest.json";
    fs::path p = out;
    p.replace_extension();
    p += ".manifest.json";
    return p;
}

struct ManifestWriter {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit ManifestWriter(const std::string& subcommand)
    {
        doc["tool"] = "shapefit";
        doc["version"] = kVersion;
        doc["subcommand"] = subcommand;
        doc["inputs"] = json::array();
        doc["outputs"] = json::array();
    }
    void input(const std::string& p) { doc["inputs"].push_back(p); }
    void output(const std::string& p) { doc["outputs"].push_back(p); }

    void write(const fs::path& out)
    {
        const auto elapsed = std::chrono::steady_clock::now() - start;
        doc["duration_seconds"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() / 1000.0;
        const fs::path path = manifest_path(out);
        std::ofstream f(path);
        if (!f)
            throw IoError("cannot write manifest: " + path.string());
        f << doc.dump(1, '\t') << "\n";
    }
};

void write_text_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed: " + path.string());
}

// target grid when none is given: 1 mm voxels over the mesh box plus margin
GridSpec auto_grid(const TriMesh& mesh)
{
    Vec3 lo = mesh.vertices.at(0), hi = lo;
    for (const auto& v : mesh.vertices) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    const double margin = 3.0;
    GridSpec g;
    g.spacing = {1.0, 1.0, 1.0};
    g.origin = {std::floor(lo.x - margin), std::floor(lo.y - margin), std::floor(lo.z - margin)};
    g.dims = {static_cast<std::int64_t>(std::ceil(hi.x + margin - g.origin.x)) + 1,
              static_cast<std::int64_t>(std::ceil(hi.y + margin - g.origin.y)) + 1,
              static_cast<std::int64_t>(std::ceil(hi.z + margin - g.origin.z)) + 1};
    return g;
}

// --------------------------------------------------------------------------
// subcommands

int cmd_build_model(const std::vector<std::string>& template_paths, double variance_fraction,
                    const std::string& out)
{
    ManifestWriter manifest("build-model");
    manifest.doc["variance_fraction"] = variance_fraction;

    std::vector<TriMesh> templates;
    templates.reserve(template_paths.size());
    for (const auto& p : template_paths) {
        templates.push_back(load_mesh(p));
        manifest.input(p);
    }
    ShapeModel model = build_model(templates, variance_fraction);

    // template sets are expected co-registered; a wide centroid spread hints
    // at a missing alignment step upstream
    Vec3 mean_c{0, 0, 0};
    std::vector<Vec3> centroids;
    for (const auto& t : templates) {
        centroids.push_back(vertex_centroid(t));
        mean_c += centroids.back();
    }
    mean_c = mean_c / static_cast<double>(centroids.size());
    double spread = 0.0;
    for (const auto& c : centroids)
        spread = std::max(spread, norm(c - mean_c));
    Vec3 blo = templates[0].vertices.at(0), bhi = blo;
    for (const auto& v : templates[0].vertices) {
        blo = {std::min(blo.x, v.x), std::min(blo.y, v.y), std::min(blo.z, v.z)};
        bhi = {std::max(bhi.x, v.x), std::max(bhi.y, v.y), std::max(bhi.z, v.z)};
    }
    if (spread > 0.1 * norm(bhi - blo))
        std::fprintf(stderr,
                     "warning: template centroids spread %.2f mm apart; "
                     "templates may not be co-registered\n",
                     spread);

    save_model(model, out);
    manifest.output(out);
    manifest.doc["model"] = {{"n", model.n},
                             {"t", model.t},
                             {"total_variance", model.total_variance}};
    manifest.write(out);
    std::printf("model: %zu points, %zu modes, total variance %.6g mm^2\n", model.n, model.t,
                model.total_variance);
    return 0;
}

int cmd_fit(const std::string& model_path, const std::string& target_path,
            const SwarmConfig& config, int threads, const std::string& out)
{
    ManifestWriter manifest("fit");
    manifest.input(model_path);
    manifest.input(target_path);
    manifest.doc["seed"] = config.seed;
    manifest.doc["threads"] = threads;
    manifest.doc["config"] = json::parse(config_to_json(config));

    const ShapeModel model = load_model(model_path);
    const BinaryVolume target = load_volume(target_path);

    FitResult result = fit(model, target, config, threads);

    const fs::path mesh_path = fs::path(out).replace_extension(".ply");
    const fs::path result_path = fs::path(out).replace_extension(".json");
    save_mesh(instantiate(model, result.params), mesh_path.string());
    save_fit_result(result, result_path.string());
    manifest.output(mesh_path.string());
    manifest.output(result_path.string());
    manifest.doc["dsc"] = result.dsc;
    manifest.doc["iterations_run"] = result.iterations_run;
    manifest.write(out);
    std::printf("fit: DSC %.4f after %d iterations (seed %llu)\n", result.dsc,
                result.iterations_run, static_cast<unsigned long long>(result.seed));
    return 0;
}

int cmd_mesh(const std::string& mask_path, const std::string& out)
{
    ManifestWriter manifest("mesh");
    manifest.input(mask_path);
    const BinaryVolume mask = load_volume(mask_path);
    if (mask.foreground_count() == 0)
        std::fprintf(stderr, "warning: mask %s is empty; writing an empty mesh\n",
                     mask_path.c_str());
    TriMesh surface = marching_cubes(mask);
    save_mesh(surface, out);
    manifest.output(out);
    manifest.doc["vertices"] = surface.vertex_count();
    manifest.doc["faces"] = surface.face_count();
    manifest.write(out);
    std::printf("mesh: %zu vertices, %zu faces\n", surface.vertex_count(), surface.face_count());
    return 0;
}

int cmd_voxelize(const std::string& mesh_path, const std::string& grid_text,
                 const std::string& like_path, int threads, const std::string& out)
{
    ManifestWriter manifest("voxelize");
    manifest.input(mesh_path);
    GridSpec grid;
    if (!grid_text.empty()) {
        grid = parse_grid(grid_text);
    } else if (!like_path.empty()) {
        grid = load_volume(like_path).grid;
        manifest.input(like_path);
    } else {
        throw IoError("voxelize needs --grid or --like to define the target grid");
    }
    const TriMesh mesh = load_mesh(mesh_path);
    BinaryVolume vol = voxelize(mesh, grid, threads);
    save_volume(vol, out);
    manifest.output(out);
    manifest.doc["grid"] = grid_to_json(grid);
    manifest.doc["foreground_voxels"] = vol.foreground_count();
    manifest.write(out);
    std::printf("voxelize: %lld foreground voxels\n",
                static_cast<long long>(vol.foreground_count()));
    return 0;
}

EvaluationReport evaluate_pair(const std::string& surface_path, const std::string& reference_path)
{
    const TriMesh surface = load_mesh(surface_path);
    const BinaryVolume reference = load_volume(reference_path);
    EvaluationReport rep = evaluate(surface, reference, reference.grid);
    rep.surface_id = fs::path(surface_path).stem().string();
    rep.reference_id = fs::path(reference_path).filename().string();
    return rep;
}

int cmd_evaluate(const std::string& surface_path, const std::string& reference_path,
                 const std::string& batch_dir, const std::string& out)
{
    ManifestWriter manifest("evaluate");
    std::vector<EvaluationReport> reports;

    if (!batch_dir.empty()) {
        std::vector<fs::path> surfaces;
        for (const auto& entry : fs::directory_iterator(batch_dir))
            if (entry.path().extension() == ".ply")
                surfaces.push_back(entry.path());
        std::sort(surfaces.begin(), surfaces.end());
        if (surfaces.empty())
            throw IoError("no .ply surfaces found in " + batch_dir);
        for (const auto& s : surfaces) {
            fs::path ref = s;
            ref.replace_extension(".mhd");
            if (!fs::exists(ref))
                throw IoError("missing reference mask for " + s.string() + " (expected " +
                              ref.string() + ")");
            reports.push_back(evaluate_pair(s.string(), ref.string()));
            manifest.input(s.string());
            manifest.input(ref.string());
        }
    } else {
        reports.push_back(evaluate_pair(surface_path, reference_path));
        manifest.input(surface_path);
        manifest.input(reference_path);
    }

    json doc = json::array();
    for (const auto& r : reports)
        doc.push_back(json::parse(report_to_json(r)));
    write_text_file(out, doc.dump(1, '\t') + "\n");
    manifest.output(out);

    const std::string table = reports_to_table(reports, reports.size() > 1);
    fs::path table_path = fs::path(out).replace_extension(".txt");
    write_text_file(table_path, table);
    manifest.output(table_path.string());
    manifest.write(out);
    std::fputs(table.c_str(), stdout);
    return 0;
}

int cmd_synth(const SynthConfig& config, bool with_target, double variance_fraction,
              const std::string& grid_text, const std::string& out_dir)
{
    ManifestWriter manifest("synth");
    fs::create_directories(out_dir);
    manifest.doc["seed"] = config.seed;
    manifest.doc["config"] = json::parse(synth_config_to_json(config));

    const auto templates = make_templates(config);
    json template_files = json::array();
    for (std::size_t i = 0; i < templates.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "template_%03zu.ply", i);
        const fs::path p = fs::path(out_dir) / name;
        save_mesh(templates[i], p.string());
        template_files.push_back(p.filename().string());
        manifest.output(p.string());
    }
    manifest.doc["templates"] = template_files;

    if (with_target) {
        const ShapeModel model = build_model(templates, variance_fraction);

        // held-out generating parameters; decoupled stream so the template
        // draws do not shift the target when template_count changes
        Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);
        std::vector<double> b(model.t);
        for (std::size_t j = 0; j < model.t; ++j)
            b[j] = rng.uniform(-1.5, 1.5) * std::sqrt(model.eigenvalues[j]);
        PoseParams pose;
        pose.translation = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        pose.rotation = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                         rng.uniform(-0.15, 0.15)};
        pose.scale = rng.uniform(0.95, 1.05);

        FitParams params{b, pose};
        const GridSpec grid =
            grid_text.empty() ? auto_grid(instantiate(model, params)) : parse_grid(grid_text);
        auto [target, held] = make_target(model, b, pose, grid);

        const fs::path target_path = fs::path(out_dir) / "target.mhd";
        save_volume(target, target_path.string());
        manifest.output(target_path.string());
        manifest.output((fs::path(out_dir) / "target.raw").string());

        json pj;
        pj["format"] = "shapefit-params-v1";
        pj["b"] = held.b;
        pj["pose"] = {
            {"translation", {pose.translation.x, pose.translation.y, pose.translation.z}},
            {"rotation", {pose.rotation.x, pose.rotation.y, pose.rotation.z}},
            {"scale", pose.scale}};
        pj["grid"] = grid_to_json(grid);
        pj["variance_fraction"] = variance_fraction;
        pj["model_t"] = model.t;
        const fs::path params_path = fs::path(out_dir) / "target_params.json";
        write_text_file(params_path, pj.dump(1, '\t') + "\n");
        manifest.output(params_path.string());
    }

    manifest.write(out_dir);
    std::printf("synth: wrote %zu templates%s to %s\n", templates.size(),
                with_target ? " and a target mask" : "", out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"statistical shape model fitting for binary segmentations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("shapefit ") + kVersion);

    // build-model
    auto* build = app.add_subcommand("build-model", "build a PCA shape model from template PLYs");
    std::vector<std::string> template_paths;
    double variance_fraction = 0.98;
    std::string build_out = "model.json";
    build->add_option("templates", template_paths, "corresponded template meshes (PLY)")
        ->required();
    build->add_option("--variance-fraction", variance_fraction,
                      "cumulative eigenvalue fraction kept");
    build->add_option("--out", build_out, "output model JSON");

    // fit
    auto* fitc = app.add_subcommand("fit", "fit a model to a segmentation mask");
    std::string fit_model, fit_target, fit_config, fit_out = "fitted";
    std::uint64_t fit_seed = 0;
    int fit_threads = 1, fit_swarm = 0, fit_iters = -1;
    fitc->add_option("--model", fit_model, "model JSON")->required();
    fitc->add_option("--target", fit_target, "target mask (.mhd)")->required();
    fitc->add_option("--config", fit_config, "swarm config JSON");
    auto* fit_seed_opt = fitc->add_option("--seed", fit_seed, "RNG seed (overrides config)");
    fitc->add_option("--threads", fit_threads, "fitness evaluation threads");
    fitc->add_option("--swarm-size", fit_swarm, "particle count (overrides config)");
    fitc->add_option("--max-iterations", fit_iters, "iteration budget (overrides config)");
    fitc->add_option("--out", fit_out, "output prefix (.ply and .json)");

    // mesh
    auto* meshc = app.add_subcommand("mesh", "marching-cubes surface of a mask");
    std::string mesh_mask, mesh_out = "surface.ply";
    meshc->add_option("--mask", mesh_mask, "input mask (.mhd)")->required();
    meshc->add_option("--out", mesh_out, "output PLY");

    // voxelize
    auto* voxc = app.add_subcommand("voxelize", "rasterize a closed mesh onto a grid");
    std::string vox_mesh, vox_grid, vox_like, vox_out = "voxelized.mhd";
    int vox_threads = 1;
    voxc->add_option("--mesh", vox_mesh, "input surface (PLY)")->required();
    voxc->add_option("--grid", vox_grid, "grid as NX,NY,NZ/SX,SY,SZ/OX,OY,OZ");
    voxc->add_option("--like", vox_like, "copy the grid of an existing volume (.mhd)");
    voxc->add_option("--threads", vox_threads, "row classification threads");
    voxc->add_option("--out", vox_out, "output volume (.mhd)");

    // evaluate
    auto* evalc = app.add_subcommand("evaluate", "DSC/HD/GL of a surface against a mask");
    std::string eval_surface, eval_reference, eval_batch, eval_out = "report.json";
    evalc->add_option("--surface", eval_surface, "surface to score (PLY)");
    evalc->add_option("--reference", eval_reference, "reference mask (.mhd)");
    evalc->add_option("--batch", eval_batch,
                      "directory of <case>.ply + <case>.mhd pairs (overrides --surface)");
    evalc->add_option("--out", eval_out, "output report JSON (+ .txt table)");

    // synth
    auto* synthc = app.add_subcommand("synth", "generate synthetic templates and targets");
    std::string synth_config_path, synth_out = "synth_out", synth_grid;
    std::uint64_t synth_seed = 0;
    bool synth_target = false;
    int synth_count = 0;
    double synth_variance = 0.98;
    synthc->add_option("--config", synth_config_path, "synth config JSON");
    auto* synth_seed_opt =
        synthc->add_option("--seed", synth_seed, "RNG seed (overrides config)");
    synthc->add_option("--templates", synth_count, "template count (overrides config)");
    synthc->add_flag("--target", synth_target, "also emit a ground-truth mask + parameters");
    synthc->add_option("--variance-fraction", synth_variance, "model fraction for the target");
    synthc->add_option("--grid", synth_grid, "target grid (default: mesh bounding box, 1 mm)");
    synthc->add_option("--out", synth_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (build->parsed()) {
            if (template_paths.size() < 2)
                throw IoError("build-model needs at least 2 templates");
            return cmd_build_model(template_paths, variance_fraction, build_out);
        }
        if (fitc->parsed()) {
            SwarmConfig config =
                fit_config.empty() ? SwarmConfig{} : config_from_json_file(fit_config);
            if (fit_seed_opt->count() > 0)
                config.seed = fit_seed;
            if (fit_swarm > 0)
                config.swarm_size = fit_swarm;
            if (fit_iters >= 0)
                config.max_iterations = fit_iters;
            validate_config(config);
            return cmd_fit(fit_model, fit_target, config, fit_threads, fit_out);
        }
        if (meshc->parsed())
            return cmd_mesh(mesh_mask, mesh_out);
        if (voxc->parsed())
            return cmd_voxelize(vox_mesh, vox_grid, vox_like, vox_threads, vox_out);
        if (evalc->parsed()) {
            if (eval_batch.empty() && (eval_surface.empty() || eval_reference.empty()))
                throw IoError("evaluate needs --surface and --reference, or --batch");
            return cmd_evaluate(eval_surface, eval_reference, eval_batch, eval_out);
        }
        if (synthc->parsed()) {
            SynthConfig config = synth_config_path.empty()
                                     ? SynthConfig{}
                                     : synth_config_from_json_file(synth_config_path);
            if (synth_seed_opt->count() > 0)
                config.seed = synth_seed;
            if (synth_count > 0)
                config.template_count = synth_count;
            validate_synth_config(config);
            return cmd_synth(config, synth_target, synth_variance, synth_grid, synth_out);
        }
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
