#pragma once

#include "shapefit/rng.hpp"
#include "shapefit/shape_model.hpp"
#include "shapefit/volume.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shapefit {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double range() const { return hi - lo; }
};

/// Search box for the 7 pose parameters. Translation intervals are offsets
/// around the centroid-aligned seed translation; rotation and scale are
/// absolute.
struct PoseBounds {
    std::array<Interval, 3> translation_offset{Interval{-15.0, 15.0},
                                               Interval{-15.0, 15.0},
                                               Interval{-15.0, 15.0}};
    std::array<Interval, 3> rotation{Interval{-0.35, 0.35}, Interval{-0.35, 0.35},
                                     Interval{-0.35, 0.35}};
    Interval scale{0.8, 1.25};
};

struct SwarmConfig {
    int swarm_size = 40;
    int max_iterations = 200;
    double w = 0.7298;          // inertia
    double c1 = 1.49618;        // pbest acceleration
    double c2 = 1.49618;        // blended gbest/lbest acceleration
    double alpha = 0.5;         // 1 = pure global best, 0 = pure local best
    int neighborhood_radius = 2; // ring topology
    double bound_k = 3.0;       // shape weights within +-bound_k*sqrt(lambda)
    PoseBounds pose_bounds;
    double velocity_clamp_fraction = 0.2;
    std::uint64_t seed = 1;
    int stall_iterations = 30;
    double stall_tolerance = 1e-4;
    bool scalar_randomness = false; // r1,r2 per particle instead of per dimension
};

/// Throws IoError on out-of-range values. The PSO engine itself tolerates
/// degenerate coefficients so unit tests can probe the update equation.
void validate_config(const SwarmConfig& config);

SwarmConfig config_from_json_file(const std::string& path);
SwarmConfig config_from_json_text(const std::string& text);
std::string config_to_json(const SwarmConfig& config);

struct SwarmState {
    // positions/velocities/pbests are swarm_size x dims, row per particle
    std::vector<std::vector<double>> position;
    std::vector<std::vector<double>> velocity;
    std::vector<std::vector<double>> pbest_position;
    std::vector<double> pbest_fitness;
    std::vector<double> gbest_position; // best ever
    double gbest_fitness = 0.0;
    Rng rng{0};
};

using Objective = std::function<double(const std::vector<double>&)>;

/// Uniform init inside bounds; velocities in +-clamp*range. If seed_position
/// is non-empty it replaces particle 0 (clamped to bounds). Evaluates the
/// population and fills the bests.
SwarmState init_swarm(const std::vector<Interval>& bounds, const SwarmConfig& config,
                      const Objective& fitness, const std::vector<double>& seed_position = {},
                      int threads = 1);

/// One synchronous hybrid PSO update: velocities blend the personal best,
/// the global best and the ring-neighborhood best, then positions move and
/// clamp, then all bests refresh. Random draws happen single-threaded in
/// particle-index order, so results do not depend on thread count.
void pso_step(SwarmState& swarm, const std::vector<Interval>& bounds,
              const SwarmConfig& config, const Objective& fitness, int threads = 1);

struct OptimizeResult {
    std::vector<double> best_position;
    double best_fitness = 0.0;
    int iterations_run = 0;
    std::vector<double> fitness_trace; // entry 0 = after init, then one per iteration
};

/// Hybrid PSO on an arbitrary objective over a box; lets benchmarks exercise
/// the velocity/position update in isolation of the shape pipeline.
OptimizeResult optimize_test_function(const Objective& f, const std::vector<Interval>& bounds,
                                      const SwarmConfig& config, int threads = 1);

struct FitResult {
    FitParams params;
    double fitness = 1.0; // final Dice loss
    double dsc = 0.0;     // 1 - fitness
    int iterations_run = 0;
    std::vector<double> fitness_trace;
    std::uint64_t seed = 0;
};

/// 1 - DSC(voxelize(instantiate(model, params), grid), target), in [0,1].
/// A candidate that fails to voxelize scores the worst case 1 with a logged
/// warning instead of aborting the search.
double dice_loss(const FitParams& params, const ShapeModel& model,
                 const BinaryVolume& target, const GridSpec& grid);

/// Full search over the t+7 parameters against a segmentation mask on the
/// target's own grid. Deterministic for a fixed seed and config under any
/// thread count.
FitResult fit(const ShapeModel& model, const BinaryVolume& target,
              const SwarmConfig& config, int threads = 1);

std::string fit_result_to_json(const FitResult& result);
void save_fit_result(const FitResult& result, const std::string& path);

} // namespace shapefit
