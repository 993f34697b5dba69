#pragma once

#include "shapefit/mesh.hpp"
#include "shapefit/volume.hpp"

#include <string>

namespace shapefit {

struct EvaluationReport {
    double dsc = 0.0;
    double hd = 0.0; // mm
    double gl = 0.0;
    std::string surface_id;
    std::string reference_id;
    GridSpec grid;
};

/// Dice similarity coefficient 2|A^B|/(|A|+|B|); both-empty masks compare
/// equal and score 1. Grids must match.
double dsc(const BinaryVolume& a, const BinaryVolume& b);

/// Symmetric Hausdorff distance in mm between 6-connectivity boundary voxel
/// centers. percentile=100 is the classic maximum; lower values take the
/// per-direction percentile instead. Both masks must be nonempty.
double hausdorff(const BinaryVolume& a, const BinaryVolume& b, double percentile = 100.0);

/// DSC and HD of voxelize(surface, grid) against the reference mask, plus
/// the surface's geometric Laplacian.
EvaluationReport evaluate(const TriMesh& surface, const BinaryVolume& reference,
                          const GridSpec& grid);

std::string report_to_json(const EvaluationReport& report);

/// Aligned DSC/HD/GL table, one row per report; with_stats appends a
/// mean +- std footer.
std::string reports_to_table(const std::vector<EvaluationReport>& reports, bool with_stats);

} // namespace shapefit
