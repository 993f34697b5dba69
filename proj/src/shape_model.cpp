#include "shapefit/shape_model.hpp"

#include "shapefit/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

using nlohmann::json;

namespace shapefit {

ShapeVector assemble_shape_vector(const TriMesh& mesh)
{
    ShapeVector sv;
    sv.coords.reserve(mesh.vertices.size() * 3);
    for (const auto& v : mesh.vertices) {
        sv.coords.push_back(v.x);
        sv.coords.push_back(v.y);
        sv.coords.push_back(v.z);
    }
    return sv;
}

TriMesh shape_to_mesh(const ShapeVector& shape,
                      const std::vector<std::array<std::uint32_t, 3>>& faces)
{
    TriMesh mesh;
    const std::size_t n = shape.point_count();
    mesh.vertices.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        mesh.vertices.push_back(shape.point(i));
    mesh.faces = faces;
    return mesh;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)

void jacobi_eigensymm(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                      std::vector<double>& eigenvectors)
{
    eigenvectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        eigenvectors[i * n + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                s += a[i * n + j] * a[i * n + j];
        return s;
    };
    double diag_scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        diag_scale = std::max(diag_scale, std::abs(a[i * n + i]));
    const double tol = std::max(1e-300, diag_scale * diag_scale * 1e-30);

    for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0)
                    continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigenvectors[i * n + p], viq = eigenvectors[i * n + q];
                    eigenvectors[i * n + p] = c * vip - s * viq;
                    eigenvectors[i * n + q] = s * vip + c * viq;
                }
            }
    }

    // sort descending by eigenvalue, stable on ties
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

    eigenvalues.resize(n);
    std::vector<double> sorted_vecs(n * n);
    for (std::size_t r = 0; r < n; ++r) {
        eigenvalues[r] = a[order[r] * n + order[r]];
        for (std::size_t i = 0; i < n; ++i)
            sorted_vecs[i * n + r] = eigenvectors[i * n + order[r]];
    }
    eigenvectors = std::move(sorted_vecs);
}

// ---------------------------------------------------------------------------
// Model building

ShapeModel build_model(const std::vector<TriMesh>& templates, double variance_fraction)
{
    if (templates.size() < 2)
        throw IoError("build_model needs at least 2 templates, got " +
                      std::to_string(templates.size()));
    if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
        throw IoError("variance_fraction must lie in (0, 1]");

    const std::size_t N = templates.size();
    const std::size_t n = templates[0].vertices.size();
    for (std::size_t i = 1; i < N; ++i) {
        if (templates[i].vertices.size() != n)
            throw IoError("template " + std::to_string(i) + " has " +
                          std::to_string(templates[i].vertices.size()) + " vertices, expected " +
                          std::to_string(n));
        if (templates[i].faces != templates[0].faces)
            throw IoError("template " + std::to_string(i) +
                          " does not share the face connectivity of template 0");
    }
    const std::size_t dim = 3 * n;

    ShapeModel model;
    model.n = n;
    model.faces = templates[0].faces;
    model.mean.coords.assign(dim, 0.0);

    std::vector<ShapeVector> shapes;
    shapes.reserve(N);
    for (const auto& t : templates)
        shapes.push_back(assemble_shape_vector(t));

    for (const auto& s : shapes)
        for (std::size_t d = 0; d < dim; ++d)
            model.mean.coords[d] += s.coords[d];
    for (std::size_t d = 0; d < dim; ++d)
        model.mean.coords[d] /= static_cast<double>(N);

    // centered deviations, column per template
    std::vector<std::vector<double>> dev(N, std::vector<double>(dim));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t d = 0; d < dim; ++d)
            dev[i][d] = shapes[i].coords[d] - model.mean.coords[d];

    // Gram matrix G = (1/N) D^T D shares its nonzero spectrum with the
    // covariance S = (1/N) D D^T, at N x N instead of 3n x 3n
    std::vector<double> gram(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i; j < N; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d)
                s += dev[i][d] * dev[j][d];
            s /= static_cast<double>(N);
            gram[i * N + j] = s;
            gram[j * N + i] = s;
        }

    double trace = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        trace += gram[i * N + i];
    model.total_variance = trace;

    std::vector<double> lambdas, vecs;
    jacobi_eigensymm(gram, N, lambdas, vecs);

    const double lambda_max = lambdas.empty() ? 0.0 : lambdas.front();
    const double cutoff = std::max({lambda_max * 1e-10, trace * 1e-12, 1e-12});

    for (std::size_t r = 0; r < N; ++r) {
        const double lambda = lambdas[r];
        if (lambda <= cutoff)
            break;
        // map Gram eigenvector u back to coordinate space: v = D u, normalized
        std::vector<double> mode(dim, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const double u = vecs[i * N + r];
            if (u == 0.0)
                continue;
            for (std::size_t d = 0; d < dim; ++d)
                mode[d] += u * dev[i][d];
        }
        double nrm = 0.0;
        for (double x : mode)
            nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0)
            break;
        for (double& x : mode)
            x /= nrm;
        // deterministic sign: largest-magnitude entry positive
        std::size_t arg = 0;
        for (std::size_t d = 1; d < dim; ++d)
            if (std::abs(mode[d]) > std::abs(mode[arg]))
                arg = d;
        if (mode[arg] < 0.0)
            for (double& x : mode)
                x = -x;
        model.modes.push_back(std::move(mode));
        model.eigenvalues.push_back(lambda);
    }

    // smallest mode count reaching the requested variance fraction
    std::size_t t = model.eigenvalues.size();
    if (model.total_variance > 0.0) {
        double cum = 0.0;
        for (std::size_t r = 0; r < model.eigenvalues.size(); ++r) {
            cum += model.eigenvalues[r];
            if (cum >= variance_fraction * model.total_variance) {
                t = r + 1;
                break;
            }
        }
    } else {
        t = 0;
    }
    model.modes.resize(t);
    model.eigenvalues.resize(t);
    model.t = t;
    return model;
}

ShapeVector reconstruct(const ShapeModel& model, const std::vector<double>& b)
{
    if (b.size() != model.t)
        throw IoError("reconstruct expects " + std::to_string(model.t) + " shape weights, got " +
                      std::to_string(b.size()));
    ShapeVector out;
    out.coords = model.mean.coords;
    for (std::size_t j = 0; j < model.t; ++j) {
        const double bj = b[j];
        if (bj == 0.0)
            continue;
        const auto& mode = model.modes[j];
        for (std::size_t d = 0; d < out.coords.size(); ++d)
            out.coords[d] += bj * mode[d];
    }
    return out;
}

TriMesh apply_pose(const ShapeVector& shape, const PoseParams& pose,
                   const std::vector<std::array<std::uint32_t, 3>>& faces, const Vec3& center)
{
    if (!(pose.scale > 0.0))
        throw IoError("pose scale must be > 0");
    if (!is_finite(pose.translation) || !is_finite(pose.rotation) || !std::isfinite(pose.scale))
        throw IoError("pose parameters must be finite");

    const Mat3 R = euler_zyx(pose.rotation.x, pose.rotation.y, pose.rotation.z);
    TriMesh mesh;
    const std::size_t n = shape.point_count();
    mesh.vertices.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = shape.point(i);
        mesh.vertices.push_back(R * ((p - center) * pose.scale) + center + pose.translation);
    }
    mesh.faces = faces;
    return mesh;
}

Vec3 mean_centroid(const ShapeModel& model)
{
    Vec3 c{0, 0, 0};
    if (model.n == 0)
        return c;
    for (std::size_t i = 0; i < model.n; ++i)
        c += model.mean.point(i);
    return c / static_cast<double>(model.n);
}

TriMesh instantiate(const ShapeModel& model, const FitParams& params)
{
    return apply_pose(reconstruct(model, params.b), params.pose, model.faces,
                      mean_centroid(model));
}

// ---------------------------------------------------------------------------
// Serialization

void save_model(const ShapeModel& model, const std::string& path)
{
    json j;
    j["format"] = "shapefit-model-v1";
    j["n"] = model.n;
    j["t"] = model.t;
    j["total_variance"] = model.total_variance;
    j["eigenvalues"] = model.eigenvalues;
    j["mean"] = model.mean.coords;
    j["modes"] = model.modes;
    auto& faces = j["faces"] = json::array();
    for (const auto& f : model.faces)
        faces.push_back({f[0], f[1], f[2]});

    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    out << j.dump(1, '\t') << "\n";
    if (!out)
        throw IoError("write failed: " + path);
}

ShapeModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    if (j.value("format", "") != "shapefit-model-v1")
        throw IoError(path + ": not a shapefit-model-v1 document");

    ShapeModel model;
    try {
        model.n = j.at("n").get<std::size_t>();
        model.t = j.at("t").get<std::size_t>();
        model.total_variance = j.at("total_variance").get<double>();
        model.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
        model.mean.coords = j.at("mean").get<std::vector<double>>();
        model.modes = j.at("modes").get<std::vector<std::vector<double>>>();
        for (const auto& f : j.at("faces")) {
            if (!f.is_array() || f.size() != 3)
                throw IoError(path + ": faces must be index triples");
            model.faces.push_back({f[0].get<std::uint32_t>(), f[1].get<std::uint32_t>(),
                                   f[2].get<std::uint32_t>()});
        }
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }

    if (model.mean.coords.size() != 3 * model.n)
        throw IoError(path + ": mean length does not match n");
    if (model.modes.size() != model.t || model.eigenvalues.size() != model.t)
        throw IoError(path + ": mode/eigenvalue count does not match t");
    for (const auto& m : model.modes)
        if (m.size() != 3 * model.n)
            throw IoError(path + ": mode length does not match n");
    for (std::size_t i = 0; i + 1 < model.eigenvalues.size(); ++i)
        if (model.eigenvalues[i] < model.eigenvalues[i + 1])
            throw IoError(path + ": eigenvalues not sorted descending");
    for (double l : model.eigenvalues)
        if (!(l > 0.0))
            throw IoError(path + ": eigenvalues must be positive");
    return model;
}

} // namespace shapefit
