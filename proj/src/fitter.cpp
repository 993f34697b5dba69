#include "shapefit/fitter.hpp"

#include "shapefit/errors.hpp"
#include "shapefit/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

using nlohmann::json;

namespace shapefit {

void validate_config(const SwarmConfig& config)
{
    if (config.swarm_size < 2)
        throw IoError("swarm_size must be >= 2");
    if (config.max_iterations < 0)
        throw IoError("max_iterations must be >= 0");
    if (!(config.w >= 0.0 && config.w <= 1.0))
        throw IoError("inertia weight w must lie in [0, 1]");
    if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
        throw IoError("alpha must lie in [0, 1]");
    if (!(config.c1 > 0.0) || !(config.c2 > 0.0))
        throw IoError("acceleration constants c1, c2 must be > 0");
    if (config.neighborhood_radius < 1)
        throw IoError("neighborhood_radius must be >= 1");
    if (!(config.bound_k > 0.0))
        throw IoError("bound_k must be > 0");
    if (!(config.velocity_clamp_fraction > 0.0))
        throw IoError("velocity_clamp_fraction must be > 0");
    if (config.stall_iterations < 0)
        throw IoError("stall_iterations must be >= 0");
    if (!(config.stall_tolerance >= 0.0))
        throw IoError("stall_tolerance must be >= 0");
    if (!(config.pose_bounds.scale.lo > 0.0) ||
        !(config.pose_bounds.scale.hi >= config.pose_bounds.scale.lo))
        throw IoError("scale bounds must satisfy 0 < lo <= hi");
    for (const auto& iv : config.pose_bounds.translation_offset)
        if (!(iv.hi >= iv.lo))
            throw IoError("translation bounds must satisfy lo <= hi");
    for (const auto& iv : config.pose_bounds.rotation)
        if (!(iv.hi >= iv.lo))
            throw IoError("rotation bounds must satisfy lo <= hi");
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

Interval interval_from_json(const json& j)
{
    if (!j.is_array() || j.size() != 2)
        throw IoError("bounds entries must be [lo, hi] pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

json interval_to_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

} // namespace

SwarmConfig config_from_json_text(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("config parse error: ") + e.what());
    }
    SwarmConfig c;
    try {
        c.swarm_size = j.value("swarm_size", c.swarm_size);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.w = j.value("w", c.w);
        c.c1 = j.value("c1", c.c1);
        c.c2 = j.value("c2", c.c2);
        c.alpha = j.value("alpha", c.alpha);
        c.neighborhood_radius = j.value("neighborhood_radius", c.neighborhood_radius);
        c.bound_k = j.value("bound_k", c.bound_k);
        c.velocity_clamp_fraction = j.value("velocity_clamp_fraction", c.velocity_clamp_fraction);
        c.seed = j.value("seed", c.seed);
        c.stall_iterations = j.value("stall_iterations", c.stall_iterations);
        c.stall_tolerance = j.value("stall_tolerance", c.stall_tolerance);
        c.scalar_randomness = j.value("scalar_randomness", c.scalar_randomness);
        if (j.contains("pose_bounds")) {
            const auto& pb = j["pose_bounds"];
            if (pb.contains("translation_offset_mm"))
                for (int d = 0; d < 3; ++d)
                    c.pose_bounds.translation_offset[d] =
                        interval_from_json(pb["translation_offset_mm"][d]);
            if (pb.contains("rotation_rad"))
                for (int d = 0; d < 3; ++d)
                    c.pose_bounds.rotation[d] = interval_from_json(pb["rotation_rad"][d]);
            if (pb.contains("scale"))
                c.pose_bounds.scale = interval_from_json(pb["scale"]);
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("config error: ") + e.what());
    }
    validate_config(c);
    return c;
}

SwarmConfig config_from_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json(const SwarmConfig& c)
{
    json pb;
    pb["translation_offset_mm"] = {interval_to_json(c.pose_bounds.translation_offset[0]),
                                   interval_to_json(c.pose_bounds.translation_offset[1]),
                                   interval_to_json(c.pose_bounds.translation_offset[2])};
    pb["rotation_rad"] = {interval_to_json(c.pose_bounds.rotation[0]),
                          interval_to_json(c.pose_bounds.rotation[1]),
                          interval_to_json(c.pose_bounds.rotation[2])};
    pb["scale"] = interval_to_json(c.pose_bounds.scale);
    json j;
    j["swarm_size"] = c.swarm_size;
    j["max_iterations"] = c.max_iterations;
    j["w"] = c.w;
    j["c1"] = c.c1;
    j["c2"] = c.c2;
    j["alpha"] = c.alpha;
    j["neighborhood_radius"] = c.neighborhood_radius;
    j["bound_k"] = c.bound_k;
    j["pose_bounds"] = pb;
    j["velocity_clamp_fraction"] = c.velocity_clamp_fraction;
    j["seed"] = c.seed;
    j["stall_iterations"] = c.stall_iterations;
    j["stall_tolerance"] = c.stall_tolerance;
    j["scalar_randomness"] = c.scalar_randomness;
    return j.dump(1, '\t');
}

// ---------------------------------------------------------------------------
// PSO engine

namespace {

void parallel_evaluate(const std::vector<std::vector<double>>& positions,
                       std::vector<double>& fitness, const Objective& objective, int threads)
{
    const std::size_t n = positions.size();
    fitness.resize(n);
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            fitness[i] = objective(positions[i]);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            fitness[i] = objective(positions[i]);
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = static_cast<int>(std::min<std::size_t>(threads, n));
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t)
        pool.emplace_back(work);
    for (auto& th : pool)
        th.join();
}

std::size_t global_best_index(const SwarmState& swarm)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < swarm.pbest_fitness.size(); ++i)
        if (swarm.pbest_fitness[i] < swarm.pbest_fitness[best])
            best = i;
    return best;
}

std::size_t local_best_index(const SwarmState& swarm, std::size_t i, int radius)
{
    const long long S = static_cast<long long>(swarm.pbest_fitness.size());
    std::size_t best = i;
    for (int d = -radius; d <= radius; ++d) {
        long long j = (static_cast<long long>(i) + d) % S;
        if (j < 0)
            j += S; // floored modulo; radius may exceed the swarm size
        const std::size_t idx = static_cast<std::size_t>(j);
        if (swarm.pbest_fitness[idx] < swarm.pbest_fitness[best])
            best = idx;
    }
    return best;
}

} // namespace

SwarmState init_swarm(const std::vector<Interval>& bounds, const SwarmConfig& config,
                      const Objective& fitness, const std::vector<double>& seed_position,
                      int threads)
{
    const std::size_t dims = bounds.size();
    const std::size_t S = static_cast<std::size_t>(config.swarm_size);

    SwarmState swarm;
    swarm.rng = Rng(config.seed);
    swarm.position.assign(S, std::vector<double>(dims));
    swarm.velocity.assign(S, std::vector<double>(dims));

    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t d = 0; d < dims; ++d)
            swarm.position[i][d] = swarm.rng.uniform(bounds[d].lo, bounds[d].hi);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t d = 0; d < dims; ++d) {
            const double vmax = config.velocity_clamp_fraction * bounds[d].range();
            swarm.velocity[i][d] = swarm.rng.uniform(-vmax, vmax);
        }
    if (!seed_position.empty()) {
        if (seed_position.size() != dims)
            throw IoError("seed position dimension mismatch");
        for (std::size_t d = 0; d < dims; ++d)
            swarm.position[0][d] = std::clamp(seed_position[d], bounds[d].lo, bounds[d].hi);
    }

    parallel_evaluate(swarm.position, swarm.pbest_fitness, fitness, threads);
    swarm.pbest_position = swarm.position;
    const std::size_t g = global_best_index(swarm);
    swarm.gbest_position = swarm.pbest_position[g];
    swarm.gbest_fitness = swarm.pbest_fitness[g];
    return swarm;
}

void pso_step(SwarmState& swarm, const std::vector<Interval>& bounds, const SwarmConfig& config,
              const Objective& fitness, int threads)
{
    const std::size_t S = swarm.position.size();
    const std::size_t dims = bounds.size();
    const std::size_t g = global_best_index(swarm);

    // all random draws in particle-index order, before any parallel work
    std::vector<double> r1(S * dims), r2(S * dims);
    if (config.scalar_randomness) {
        for (std::size_t i = 0; i < S; ++i) {
            const double a = swarm.rng.uniform01(), b = swarm.rng.uniform01();
            for (std::size_t d = 0; d < dims; ++d) {
                r1[i * dims + d] = a;
                r2[i * dims + d] = b;
            }
        }
    } else {
        for (std::size_t i = 0; i < S; ++i)
            for (std::size_t d = 0; d < dims; ++d) {
                r1[i * dims + d] = swarm.rng.uniform01();
                r2[i * dims + d] = swarm.rng.uniform01();
            }
    }

    for (std::size_t i = 0; i < S; ++i) {
        const auto& pbest = swarm.pbest_position[i];
        const auto& gbest = swarm.pbest_position[g];
        const auto& lbest = swarm.pbest_position[local_best_index(swarm, i, config.neighborhood_radius)];
        auto& x = swarm.position[i];
        auto& v = swarm.velocity[i];
        for (std::size_t d = 0; d < dims; ++d) {
            const double attract = config.alpha * (gbest[d] - x[d]) +
                                   (1.0 - config.alpha) * (lbest[d] - x[d]);
            double vel = config.w * v[d] + config.c1 * r1[i * dims + d] * (pbest[d] - x[d]) +
                         config.c2 * r2[i * dims + d] * attract;
            const double vmax = config.velocity_clamp_fraction * bounds[d].range();
            vel = std::clamp(vel, -vmax, vmax);
            double pos = x[d] + vel;
            if (pos < bounds[d].lo) {
                pos = bounds[d].lo;
                vel = 0.0;
            } else if (pos > bounds[d].hi) {
                pos = bounds[d].hi;
                vel = 0.0;
            }
            v[d] = vel;
            x[d] = pos;
        }
    }

    std::vector<double> fit_values;
    parallel_evaluate(swarm.position, fit_values, fitness, threads);

    for (std::size_t i = 0; i < S; ++i) {
        if (fit_values[i] < swarm.pbest_fitness[i]) {
            swarm.pbest_fitness[i] = fit_values[i];
            swarm.pbest_position[i] = swarm.position[i];
        }
    }
    const std::size_t g2 = global_best_index(swarm);
    if (swarm.pbest_fitness[g2] < swarm.gbest_fitness) {
        swarm.gbest_fitness = swarm.pbest_fitness[g2];
        swarm.gbest_position = swarm.pbest_position[g2];
    }
}

namespace {

OptimizeResult run_swarm(const Objective& f, const std::vector<Interval>& bounds,
                         const SwarmConfig& config, const std::vector<double>& seed_position,
                         int threads)
{
    SwarmState swarm = init_swarm(bounds, config, f, seed_position, threads);
    OptimizeResult res;
    res.fitness_trace.push_back(swarm.gbest_fitness);

    int stall = 0;
    for (int it = 0; it < config.max_iterations; ++it) {
        const double before = swarm.gbest_fitness;
        pso_step(swarm, bounds, config, f, threads);
        res.fitness_trace.push_back(swarm.gbest_fitness);
        ++res.iterations_run;

        const double improvement = before - swarm.gbest_fitness;
        if (improvement < config.stall_tolerance)
            ++stall;
        else
            stall = 0;
        if (config.stall_iterations > 0 && stall >= config.stall_iterations)
            break;
    }
    res.best_position = swarm.gbest_position;
    res.best_fitness = swarm.gbest_fitness;
    return res;
}

} // namespace

OptimizeResult optimize_test_function(const Objective& f, const std::vector<Interval>& bounds,
                                      const SwarmConfig& config, int threads)
{
    if (bounds.empty())
        throw IoError("optimize_test_function needs at least one dimension");
    return run_swarm(f, bounds, config, {}, threads);
}

// ---------------------------------------------------------------------------
// Dice-loss fitting

namespace {

FitParams params_from_vector(const std::vector<double>& x, std::size_t t)
{
    FitParams p;
    p.b.assign(x.begin(), x.begin() + t);
    p.pose.translation = {x[t], x[t + 1], x[t + 2]};
    p.pose.rotation = {x[t + 3], x[t + 4], x[t + 5]};
    p.pose.scale = x[t + 6];
    return p;
}

Vec3 mask_centroid(const BinaryVolume& mask)
{
    Vec3 c{0, 0, 0};
    std::int64_t count = 0;
    const auto& g = mask.grid;
    for (std::int64_t k = 0; k < g.dims[2]; ++k)
        for (std::int64_t j = 0; j < g.dims[1]; ++j)
            for (std::int64_t i = 0; i < g.dims[0]; ++i)
                if (mask.at(i, j, k)) {
                    c += g.voxel_center(i, j, k);
                    ++count;
                }
    return count ? c / static_cast<double>(count) : c;
}

} // namespace

double dice_loss(const FitParams& params, const ShapeModel& model, const BinaryVolume& target,
                 const GridSpec& grid)
{
    if (!(grid == target.grid))
        throw ComputeError("fitness grid must match the target mask grid");
    try {
        const TriMesh candidate = instantiate(model, params);
        const BinaryVolume rasterized = voxelize(candidate, grid);
        // metrics::dsc scores two empty masks as identical; as a fitness that
        // would reward empty candidates, so the loss pins them to 1
        if (target.foreground_count() == 0 && rasterized.foreground_count() == 0)
            return 1.0;
        return 1.0 - dsc(rasterized, target);
    } catch (const ComputeError& e) {
        // one bad particle must not abort the search
        std::fprintf(stderr, "warning: candidate rejected (%s); fitness set to 1\n", e.what());
        return 1.0;
    }
}

FitResult fit(const ShapeModel& model, const BinaryVolume& target, const SwarmConfig& config,
              int threads)
{
    validate_config(config);
    if (target.foreground_count() == 0)
        throw ComputeError("target mask is empty");
    const GridSpec& grid = target.grid;
    const std::size_t t = model.t;

    // centroid-aligned seed: b = 0, translation matching mask centroid,
    // scale from the cube root of the volume ratio
    const TriMesh mean_mesh = shape_to_mesh(model.mean, model.faces);
    const Vec3 seed_translation = mask_centroid(target) - vertex_centroid(mean_mesh);
    double seed_scale = 1.0;
    const double mean_volume = signed_volume(mean_mesh);
    if (mean_volume > 0.0) {
        const double target_volume =
            static_cast<double>(target.foreground_count()) * grid.voxel_volume();
        seed_scale = std::cbrt(target_volume / mean_volume);
    }

    std::vector<Interval> bounds(t + 7);
    for (std::size_t j = 0; j < t; ++j) {
        const double r = config.bound_k * std::sqrt(model.eigenvalues[j]);
        bounds[j] = {-r, r};
    }
    const auto& pb = config.pose_bounds;
    for (int d = 0; d < 3; ++d) {
        const double base = d == 0 ? seed_translation.x
                                   : (d == 1 ? seed_translation.y : seed_translation.z);
        bounds[t + d] = {base + pb.translation_offset[d].lo, base + pb.translation_offset[d].hi};
    }
    for (int d = 0; d < 3; ++d)
        bounds[t + 3 + d] = pb.rotation[d];
    bounds[t + 6] = pb.scale;

    std::vector<double> seed_position(t + 7, 0.0);
    seed_position[t] = seed_translation.x;
    seed_position[t + 1] = seed_translation.y;
    seed_position[t + 2] = seed_translation.z;
    seed_position[t + 6] = seed_scale;

    Objective objective = [&](const std::vector<double>& x) {
        return dice_loss(params_from_vector(x, t), model, target, grid);
    };

    OptimizeResult opt = run_swarm(objective, bounds, config, seed_position, threads);

    FitResult res;
    res.params = params_from_vector(opt.best_position, t);
    res.fitness = opt.best_fitness;
    res.dsc = 1.0 - opt.best_fitness;
    res.iterations_run = opt.iterations_run;
    res.fitness_trace = std::move(opt.fitness_trace);
    res.seed = config.seed;
    return res;
}

// ---------------------------------------------------------------------------
// Result serialization

std::string fit_result_to_json(const FitResult& result)
{
    json j;
    j["format"] = "shapefit-fit-v1";
    j["b"] = result.params.b;
    j["pose"] = {{"translation", {result.params.pose.translation.x,
                                  result.params.pose.translation.y,
                                  result.params.pose.translation.z}},
                 {"rotation", {result.params.pose.rotation.x, result.params.pose.rotation.y,
                               result.params.pose.rotation.z}},
                 {"scale", result.params.pose.scale}};
    j["fitness"] = result.fitness;
    j["dsc"] = result.dsc;
    j["iterations_run"] = result.iterations_run;
    j["fitness_trace"] = result.fitness_trace;
    j["seed"] = result.seed;
    return j.dump(1, '\t');
}

void save_fit_result(const FitResult& result, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    out << fit_result_to_json(result) << "\n";
    if (!out)
        throw IoError("write failed: " + path);
}

} // namespace shapefit
