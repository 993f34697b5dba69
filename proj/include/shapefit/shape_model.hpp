#pragma once

#include "shapefit/geometry.hpp"
#include "shapefit/mesh.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace shapefit {

/// Flat coordinate vector (x1,y1,z1,...,xn,yn,zn) in mm.
struct ShapeVector {
    std::vector<double> coords;

    std::size_t point_count() const { return coords.size() / 3; }
    Vec3 point(std::size_t i) const
    {
        return {coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]};
    }
};

/// Point distribution model: mean shape, orthonormal modes of variation and
/// their variances, plus the face connectivity shared by all templates.
struct ShapeModel {
    ShapeVector mean;
    std::vector<std::vector<double>> modes; // t columns, each of length 3n
    std::vector<double> eigenvalues;        // descending, all > 0, mm^2
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::size_t n = 0;         // point count
    std::size_t t = 0;         // mode count
    double total_variance = 0; // sum of all covariance eigenvalues
};

/// 7-parameter similarity pose: translation (mm), intrinsic Z-Y-X Euler
/// rotation (rad), isotropic scale.
struct PoseParams {
    Vec3 translation{0.0, 0.0, 0.0};
    Vec3 rotation{0.0, 0.0, 0.0}; // (rx, ry, rz)
    double scale = 1.0;
};

/// The t+7 search vector: shape weights plus pose.
struct FitParams {
    std::vector<double> b;
    PoseParams pose;
};

ShapeVector assemble_shape_vector(const TriMesh& mesh);
TriMesh shape_to_mesh(const ShapeVector& shape,
                      const std::vector<std::array<std::uint32_t, 3>>& faces);

/// Builds the PCA model from corresponded templates. The covariance uses the
/// 1/N normalization; eigenpairs come from the NxN Gram matrix of centered
/// shape vectors and are mapped back to coordinate space. The mode count t is
/// the smallest count reaching variance_fraction of the total variance.
ShapeModel build_model(const std::vector<TriMesh>& templates, double variance_fraction);

/// mean + P*b. Requires b.size() == t.
ShapeVector reconstruct(const ShapeModel& model, const std::vector<double>& b);

/// Similarity transform about a fixed center: p -> R*s*(p - c) + c + t.
/// The fitter always passes the centroid of the model mean as the center.
TriMesh apply_pose(const ShapeVector& shape, const PoseParams& pose,
                   const std::vector<std::array<std::uint32_t, 3>>& faces,
                   const Vec3& center);

/// apply_pose(reconstruct(model, params.b), params.pose) with the model's
/// faces and mean centroid.
TriMesh instantiate(const ShapeModel& model, const FitParams& params);

Vec3 mean_centroid(const ShapeModel& model);

/// JSON serialization ("shapefit-model-v1").
void save_model(const ShapeModel& model, const std::string& path);
ShapeModel load_model(const std::string& path);

/// Eigen-decomposition of a dense symmetric matrix (row-major, size nxn) by
/// cyclic Jacobi rotations; eigenvalues descending, eigenvectors in columns.
/// Deterministic sweep order. Used for the NxN Gram matrices in build_model.
void jacobi_eigensymm(std::vector<double> a, std::size_t n,
                      std::vector<double>& eigenvalues,
                      std::vector<double>& eigenvectors);

} // namespace shapefit
