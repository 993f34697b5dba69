#include "shapefit/synth.hpp"

#include "shapefit/errors.hpp"
#include "shapefit/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

using nlohmann::json;

namespace shapefit {

void validate_synth_config(const SynthConfig& config)
{
    if (!(config.semi_axes.x > 0 && config.semi_axes.y > 0 && config.semi_axes.z > 0))
        throw IoError("semi_axes must all be > 0");
    if (config.subdivision_level < 0 || config.subdivision_level > 7)
        throw IoError("subdivision_level must lie in [0, 7]");
    if (config.template_count < 2)
        throw IoError("template_count must be >= 2");
    if (!(config.amplitude >= 0.0))
        throw IoError("amplitude must be >= 0");
    if (config.band_limit < 0)
        throw IoError("band_limit must be >= 0");
}

SynthConfig synth_config_from_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open synth config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    SynthConfig c;
    try {
        if (j.contains("semi_axes_mm")) {
            const auto& a = j["semi_axes_mm"];
            c.semi_axes = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
        }
        c.subdivision_level = j.value("subdivision_level", c.subdivision_level);
        c.template_count = j.value("template_count", c.template_count);
        c.amplitude = j.value("amplitude_mm", c.amplitude);
        c.band_limit = j.value("band_limit", c.band_limit);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    validate_synth_config(c);
    return c;
}

std::string synth_config_to_json(const SynthConfig& c)
{
    json j;
    j["semi_axes_mm"] = {c.semi_axes.x, c.semi_axes.y, c.semi_axes.z};
    j["subdivision_level"] = c.subdivision_level;
    j["template_count"] = c.template_count;
    j["amplitude_mm"] = c.amplitude;
    j["band_limit"] = c.band_limit;
    j["seed"] = c.seed;
    return j.dump(1, '\t');
}

// ---------------------------------------------------------------------------
// Icosphere

TriMesh make_icosphere(int subdivision_level)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                     {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                     {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : mesh.vertices)
        v = normalized(v);
    mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                  {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                  {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

    for (int level = 0; level < subdivision_level; ++level) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) -> std::uint32_t {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end())
                return it->second;
            const std::uint32_t idx = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(normalized((mesh.vertices[a] + mesh.vertices[b]) * 0.5));
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<std::uint32_t, 3>> faces;
        faces.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            const std::uint32_t ab = mid(f[0], f[1]);
            const std::uint32_t bc = mid(f[1], f[2]);
            const std::uint32_t ca = mid(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(faces);
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// Real spherical harmonics

namespace {

double assoc_legendre(int l, int m, double x)
{
    // P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2), then upward recurrence in l
    double pmm = 1.0;
    if (m > 0) {
        const double somx2 = std::sqrt(std::max(0.0, (1.0 - x) * (1.0 + x)));
        double fact = 1.0;
        for (int i = 1; i <= m; ++i) {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if (l == m)
        return pmm;
    double pmmp1 = x * (2.0 * m + 1.0) * pmm;
    if (l == m + 1)
        return pmmp1;
    double pll = 0.0;
    for (int ll = m + 2; ll <= l; ++ll) {
        pll = (x * (2.0 * ll - 1.0) * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    return pll;
}

double sh_norm(int l, int m)
{
    double frac = 1.0;
    for (int i = l - m + 1; i <= l + m; ++i)
        frac *= i;
    return std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI) / frac);
}

double real_sh(int l, int m, const Vec3& u)
{
    const double ct = std::clamp(u.z, -1.0, 1.0);
    const double phi = std::atan2(u.y, u.x);
    if (m == 0)
        return sh_norm(l, 0) * assoc_legendre(l, 0, ct);
    if (m > 0)
        return std::sqrt(2.0) * sh_norm(l, m) * std::cos(m * phi) * assoc_legendre(l, m, ct);
    return std::sqrt(2.0) * sh_norm(l, -m) * std::sin(-m * phi) * assoc_legendre(l, -m, ct);
}

} // namespace

// ---------------------------------------------------------------------------
// Triangle-triangle intersection (Moller interval test)

namespace {

struct Tri {
    Vec3 a, b, c;
};

bool coplanar_overlap(const Tri& t1, const Tri& t2, const Vec3& n)
{
    // project onto the dominant-axis plane
    int drop = 0;
    double an = std::abs(n.x);
    if (std::abs(n.y) > an) {
        drop = 1;
        an = std::abs(n.y);
    }
    if (std::abs(n.z) > an)
        drop = 2;
    auto proj = [&](const Vec3& v) -> std::array<double, 2> {
        if (drop == 0)
            return {v.y, v.z};
        if (drop == 1)
            return {v.x, v.z};
        return {v.x, v.y};
    };
    const std::array<std::array<double, 2>, 3> p1{proj(t1.a), proj(t1.b), proj(t1.c)};
    const std::array<std::array<double, 2>, 3> p2{proj(t2.a), proj(t2.b), proj(t2.c)};

    auto orient = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                     const std::array<double, 2>& c) {
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    };
    auto seg_intersect = [&](const std::array<double, 2>& a, const std::array<double, 2>& b,
                             const std::array<double, 2>& c, const std::array<double, 2>& d) {
        const double o1 = orient(a, b, c), o2 = orient(a, b, d);
        const double o3 = orient(c, d, a), o4 = orient(c, d, b);
        return ((o1 > 0) != (o2 > 0) || o1 == 0 || o2 == 0) &&
               ((o3 > 0) != (o4 > 0) || o3 == 0 || o4 == 0) &&
               !(o1 == 0 && o2 == 0 && o3 == 0 && o4 == 0);
    };
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (seg_intersect(p1[i], p1[(i + 1) % 3], p2[j], p2[(j + 1) % 3]))
                return true;
    auto inside = [&](const std::array<double, 2>& q, const std::array<std::array<double, 2>, 3>& t) {
        const double o1 = orient(t[0], t[1], q);
        const double o2 = orient(t[1], t[2], q);
        const double o3 = orient(t[2], t[0], q);
        return (o1 >= 0 && o2 >= 0 && o3 >= 0) || (o1 <= 0 && o2 <= 0 && o3 <= 0);
    };
    return inside(p1[0], p2) || inside(p2[0], p1);
}

// interval of the triangle's cross-section along the plane intersection line
bool cross_interval(const std::array<double, 3>& dist, const std::array<double, 3>& proj,
                    double& lo, double& hi)
{
    std::array<double, 4> pts;
    int count = 0;
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        if (dist[i] == 0.0) {
            if (count < 4)
                pts[count++] = proj[i];
        } else if (dist[i] * dist[j] < 0.0) {
            const double s = dist[i] / (dist[i] - dist[j]);
            if (count < 4)
                pts[count++] = proj[i] + s * (proj[j] - proj[i]);
        }
    }
    if (count == 0)
        return false;
    lo = *std::min_element(pts.begin(), pts.begin() + count);
    hi = *std::max_element(pts.begin(), pts.begin() + count);
    return true;
}

bool tri_tri_intersect(const Tri& t1, const Tri& t2)
{
    const Vec3 n2 = cross(t2.b - t2.a, t2.c - t2.a);
    const std::array<double, 3> d1{dot(n2, t1.a - t2.a), dot(n2, t1.b - t2.a),
                                   dot(n2, t1.c - t2.a)};
    if ((d1[0] > 0 && d1[1] > 0 && d1[2] > 0) || (d1[0] < 0 && d1[1] < 0 && d1[2] < 0))
        return false;

    const Vec3 n1 = cross(t1.b - t1.a, t1.c - t1.a);
    const std::array<double, 3> d2{dot(n1, t2.a - t1.a), dot(n1, t2.b - t1.a),
                                   dot(n1, t2.c - t1.a)};
    if ((d2[0] > 0 && d2[1] > 0 && d2[2] > 0) || (d2[0] < 0 && d2[1] < 0 && d2[2] < 0))
        return false;

    if (d1[0] == 0 && d1[1] == 0 && d1[2] == 0)
        return coplanar_overlap(t1, t2, n1);

    const Vec3 dir = cross(n1, n2);
    int axis = 0;
    double amax = std::abs(dir.x);
    if (std::abs(dir.y) > amax) {
        axis = 1;
        amax = std::abs(dir.y);
    }
    if (std::abs(dir.z) > amax)
        axis = 2;

    const std::array<double, 3> p1{t1.a[axis], t1.b[axis], t1.c[axis]};
    const std::array<double, 3> p2{t2.a[axis], t2.b[axis], t2.c[axis]};
    double lo1, hi1, lo2, hi2;
    if (!cross_interval(d1, p1, lo1, hi1) || !cross_interval(d2, p2, lo2, hi2))
        return false;
    return std::max(lo1, lo2) <= std::min(hi1, hi2);
}

} // namespace

bool has_self_intersection(const TriMesh& mesh)
{
    const std::size_t F = mesh.faces.size();
    std::vector<std::array<double, 6>> boxes(F); // xmin..zmax
    for (std::size_t f = 0; f < F; ++f) {
        const auto& face = mesh.faces[f];
        const Vec3& a = mesh.vertices[face[0]];
        const Vec3& b = mesh.vertices[face[1]];
        const Vec3& c = mesh.vertices[face[2]];
        boxes[f] = {std::min({a.x, b.x, c.x}), std::min({a.y, b.y, c.y}),
                    std::min({a.z, b.z, c.z}), std::max({a.x, b.x, c.x}),
                    std::max({a.y, b.y, c.y}), std::max({a.z, b.z, c.z})};
    }
    auto shares_vertex = [&](std::size_t f, std::size_t g) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (mesh.faces[f][i] == mesh.faces[g][j])
                    return true;
        return false;
    };
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t g = f + 1; g < F; ++g) {
            if (boxes[f][3] < boxes[g][0] || boxes[g][3] < boxes[f][0] ||
                boxes[f][4] < boxes[g][1] || boxes[g][4] < boxes[f][1] ||
                boxes[f][5] < boxes[g][2] || boxes[g][5] < boxes[f][2])
                continue;
            if (shares_vertex(f, g))
                continue;
            const auto& ff = mesh.faces[f];
            const auto& gg = mesh.faces[g];
            if (tri_tri_intersect(
                    {mesh.vertices[ff[0]], mesh.vertices[ff[1]], mesh.vertices[ff[2]]},
                    {mesh.vertices[gg[0]], mesh.vertices[gg[1]], mesh.vertices[gg[2]]}))
                return true;
        }
    return false;
}

// ---------------------------------------------------------------------------
// Template and target generation

std::vector<TriMesh> make_templates(const SynthConfig& config)
{
    validate_synth_config(config);
    const TriMesh unit = make_icosphere(config.subdivision_level);
    const std::size_t n = unit.vertices.size();
    const Vec3 ax = config.semi_axes;

    std::vector<Vec3> base(n), normals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& u = unit.vertices[i];
        base[i] = {ax.x * u.x, ax.y * u.y, ax.z * u.z};
        normals[i] = normalized({u.x / ax.x, u.y / ax.y, u.z / ax.z});
    }

    const int L = config.band_limit;
    const std::size_t n_coeffs = static_cast<std::size_t>((L + 1) * (L + 1));
    std::vector<std::vector<double>> sh(n, std::vector<double>(n_coeffs));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = 0;
        for (int l = 0; l <= L; ++l)
            for (int m = -l; m <= l; ++m)
                sh[i][k++] = real_sh(l, m, unit.vertices[i]);
    }

    Rng rng(config.seed);
    std::vector<TriMesh> templates;
    templates.reserve(static_cast<std::size_t>(config.template_count));
    for (int t = 0; t < config.template_count; ++t) {
        std::vector<double> coeffs(n_coeffs);
        for (auto& c : coeffs)
            c = rng.uniform(-1.0, 1.0);

        std::vector<double> field(n, 0.0);
        double fmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            for (std::size_t k = 0; k < n_coeffs; ++k)
                v += coeffs[k] * sh[i][k];
            field[i] = v;
            fmax = std::max(fmax, std::abs(v));
        }
        const double scale = (fmax > 0.0 && config.amplitude > 0.0)
                                 ? config.amplitude / fmax
                                 : 0.0;

        TriMesh mesh;
        mesh.faces = unit.faces;
        mesh.vertices.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            mesh.vertices[i] = base[i] + normals[i] * (scale * field[i]);

        if (scale > 0.0 && has_self_intersection(mesh))
            throw ComputeError("template " + std::to_string(t) + " self-intersects at amplitude " +
                               std::to_string(config.amplitude) +
                               " mm; reduce amplitude or band_limit");
        templates.push_back(std::move(mesh));
    }
    return templates;
}

std::pair<BinaryVolume, FitParams> make_target(const ShapeModel& model,
                                               const std::vector<double>& b,
                                               const PoseParams& pose, const GridSpec& grid)
{
    FitParams params{b, pose};
    BinaryVolume target = voxelize(instantiate(model, params), grid);
    if (target.foreground_count() < 100)
        std::fprintf(stderr,
                     "warning: target resolves to only %lld foreground voxels; "
                     "the grid may be too coarse for the shape\n",
                     static_cast<long long>(target.foreground_count()));
    return {std::move(target), std::move(params)};
}

} // namespace shapefit
