#include "shapefit/metrics.hpp"

#include "shapefit/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

using nlohmann::json;

namespace shapefit {

namespace {

void require_same_grid(const BinaryVolume& a, const BinaryVolume& b)
{
    if (!(a.grid == b.grid))
        throw ComputeError("masks live on different grids (dims/spacing/origin must match)");
}

} // namespace

double dsc(const BinaryVolume& a, const BinaryVolume& b)
{
    require_same_grid(a, b);
    std::int64_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        na += a.data[i];
        nb += b.data[i];
        inter += a.data[i] & b.data[i];
    }
    if (na + nb == 0)
        return 1.0; // two empty masks are identical
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

// ---------------------------------------------------------------------------
// Hausdorff distance on boundary voxel centers

namespace {

// Exact nearest-neighbor distances from each query to the target set,
// accelerated by an x-sorted sweep.
std::vector<double> nearest_distances(const std::vector<Vec3>& queries, std::vector<Vec3> targets)
{
    std::sort(targets.begin(), targets.end(),
              [](const Vec3& a, const Vec3& b) { return a.x < b.x; });
    std::vector<double> out;
    out.reserve(queries.size());
    for (const Vec3& q : queries) {
        auto mid = std::lower_bound(targets.begin(), targets.end(), q.x,
                                    [](const Vec3& t, double x) { return t.x < x; });
        double best = std::numeric_limits<double>::infinity();
        // march outward in x; stop once the x gap alone exceeds the best
        auto fwd = mid;
        while (fwd != targets.end()) {
            const double dx = fwd->x - q.x;
            if (dx * dx >= best)
                break;
            best = std::min(best, norm2(*fwd - q));
            ++fwd;
        }
        auto bwd = mid;
        while (bwd != targets.begin()) {
            --bwd;
            const double dx = q.x - bwd->x;
            if (dx * dx >= best)
                break;
            best = std::min(best, norm2(*bwd - q));
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

double directed_value(std::vector<double> dists, double percentile)
{
    if (percentile >= 100.0)
        return *std::max_element(dists.begin(), dists.end());
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(n)));
    idx = std::min(std::max<std::size_t>(idx, 1), n);
    return dists[idx - 1];
}

} // namespace

double hausdorff(const BinaryVolume& a, const BinaryVolume& b, double percentile)
{
    require_same_grid(a, b);
    if (!(percentile > 0.0 && percentile <= 100.0))
        throw IoError("percentile must lie in (0, 100]");
    const auto ba = boundary_voxels(a);
    const auto bb = boundary_voxels(b);
    if (ba.empty() || bb.empty())
        throw ComputeError("hausdorff distance needs two nonempty masks");
    const double hab = directed_value(nearest_distances(ba, bb), percentile);
    const double hba = directed_value(nearest_distances(bb, ba), percentile);
    return std::max(hab, hba);
}

EvaluationReport evaluate(const TriMesh& surface, const BinaryVolume& reference,
                          const GridSpec& grid)
{
    if (!(grid == reference.grid))
        throw ComputeError("evaluation grid must match the reference mask grid");
    const BinaryVolume rasterized = voxelize(surface, grid);
    EvaluationReport rep;
    rep.grid = grid;
    rep.dsc = dsc(rasterized, reference);
    rep.hd = hausdorff(rasterized, reference);
    rep.gl = surface_gl(surface);
    return rep;
}

std::string report_to_json(const EvaluationReport& report)
{
    json j;
    j["surface"] = report.surface_id;
    j["reference"] = report.reference_id;
    j["dsc"] = report.dsc;
    j["hd_mm"] = report.hd;
    j["gl"] = report.gl;
    j["grid"] = {{"dims", report.grid.dims},
                 {"spacing", {report.grid.spacing.x, report.grid.spacing.y, report.grid.spacing.z}},
                 {"origin", {report.grid.origin.x, report.grid.origin.y, report.grid.origin.z}}};
    return j.dump(1, '\t');
}

std::string reports_to_table(const std::vector<EvaluationReport>& reports, bool with_stats)
{
    std::size_t name_w = 4;
    for (const auto& r : reports)
        name_w = std::max(name_w, r.surface_id.size());

    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %10s\n", static_cast<int>(name_w), "case",
                  "DSC", "HD", "GL");
    os << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.3f  %10.3f\n", static_cast<int>(name_w),
                      r.surface_id.c_str(), r.dsc, r.hd, r.gl);
        os << buf;
    }
    if (with_stats && !reports.empty()) {
        auto stats = [&](auto get) {
            double mean = 0.0;
            for (const auto& r : reports)
                mean += get(r);
            mean /= static_cast<double>(reports.size());
            double var = 0.0;
            for (const auto& r : reports)
                var += (get(r) - mean) * (get(r) - mean);
            var /= static_cast<double>(reports.size());
            return std::pair<double, double>{mean, std::sqrt(var)};
        };
        auto [md, sd] = stats([](const EvaluationReport& r) { return r.dsc; });
        auto [mh, sh] = stats([](const EvaluationReport& r) { return r.hd; });
        auto [mg, sg] = stats([](const EvaluationReport& r) { return r.gl; });
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.3f  %10.3f\n", static_cast<int>(name_w),
                      "mean", md, mh, mg);
        os << buf;
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.3f  %10.3f\n", static_cast<int>(name_w),
                      "std", sd, sh, sg);
        os << buf;
    }
    return os.str();
}

} // namespace shapefit
