#pragma once

#include "shapefit/mesh.hpp"
#include "shapefit/shape_model.hpp"
#include "shapefit/volume.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace shapefit {

/// Synthetic template generator: deformed icosphere ellipsoids standing in
/// for corresponded anatomical templates.
struct SynthConfig {
    Vec3 semi_axes{12.0, 9.0, 7.0}; // mm
    int subdivision_level = 3;      // icosphere level, 3 -> 642 vertices
    int template_count = 16;
    double amplitude = 1.0;  // max radial displacement, mm
    int band_limit = 3;      // spherical-harmonic band limit of the field
    std::uint64_t seed = 1;
};

void validate_synth_config(const SynthConfig& config);

SynthConfig synth_config_from_json_file(const std::string& path);
std::string synth_config_to_json(const SynthConfig& config);

/// Unit icosphere: subdivided icosahedron projected to the sphere,
/// outward-oriented faces.
TriMesh make_icosphere(int subdivision_level);

/// N closed meshes with identical connectivity, each the base ellipsoid
/// displaced along its normals by a band-limited random spherical-harmonic
/// field. Deterministic per seed. Rejects self-intersecting outputs.
std::vector<TriMesh> make_templates(const SynthConfig& config);

/// Ground-truth mask for fitter round trips: voxelize(instantiate(model,
/// {b,pose}), grid) together with the generating parameters. Warns when the
/// grid resolves the shape with fewer than ~100 foreground voxels.
std::pair<BinaryVolume, FitParams> make_target(const ShapeModel& model,
                                               const std::vector<double>& b,
                                               const PoseParams& pose, const GridSpec& grid);

/// True when any two non-adjacent triangles intersect.
bool has_self_intersection(const TriMesh& mesh);

} // namespace shapefit
