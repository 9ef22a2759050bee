#include "nrdz/zone.hpp"

#include "nrdz/csv.hpp"

#include <cmath>
#include <sstream>

namespace nrdz {

const char* to_string(Placement p) {
    switch (p) {
        case Placement::Accepted: return "ACCEPTED";
        case Placement::RejectedInGuard: return "REJECTED";
        case Placement::RejectedOutOfZone: return "REJECTED";
    }
    return "?";
}

static const char* placement_reason(Placement p) {
    switch (p) {
        case Placement::Accepted: return "";
        case Placement::RejectedInGuard: return "in-guard";
        case Placement::RejectedOutOfZone: return "out-of-zone";
    }
    return "?";
}

SensorRing build_sensor_ring(const ZoneLayout& layout, double angular_spacing_rad,
                             const std::vector<double>& altitudes_m) {
    layout.validate();
    if (!(angular_spacing_rad > 0.0))
        fail(Err::NonIntegralSpacing, "angular spacing must be positive");
    const double count_real = kTwoPi / angular_spacing_rad;
    const double count_rounded = std::round(count_real);
    if (std::abs(count_real - count_rounded) > 1e-9)
        fail(Err::NonIntegralSpacing,
             "2*pi / spacing = " + format_double(count_real) + " is not integral");
    const int per_level = static_cast<int>(count_rounded);

    if (altitudes_m.empty()) fail(Err::InvalidLayout, "at least one altitude level required");
    for (size_t i = 0; i < altitudes_m.size(); ++i) {
        if (altitudes_m[i] < 0.0) fail(Err::InvalidLayout, "altitudes must be non-negative");
        if (i > 0 && !(altitudes_m[i] > altitudes_m[i - 1]))
            fail(Err::InvalidLayout, "altitudes must be strictly increasing");
    }

    SensorRing ring;
    ring.angular_spacing_rad = angular_spacing_rad;
    ring.altitudes_m = altitudes_m;
    ring.sensors_per_level = per_level;
    ring.sensors.reserve(static_cast<size_t>(per_level) * altitudes_m.size());
    for (double alt : altitudes_m) {
        for (int k = 0; k < per_level; ++k) {
            const double phi = k * angular_spacing_rad;
            ring.sensors.push_back(Vec3{layout.origin.x + layout.r0_m * std::cos(phi),
                                        layout.origin.y + layout.r0_m * std::sin(phi),
                                        layout.origin.z + alt});
        }
    }
    return ring;
}

ValidationReport validate_sources(const ZoneLayout& layout, const SourceSet& sources) {
    layout.validate();
    ValidationReport report;
    report.checks.reserve(sources.size());
    for (const auto& src : sources) {
        PlacementCheck check;
        check.source_id = src.id;
        check.radius_m = horizontal_distance(src.position, layout.origin);
        if (check.radius_m <= layout.core_radius_m())
            check.verdict = Placement::Accepted;
        else if (check.radius_m <= layout.r0_m)
            check.verdict = Placement::RejectedInGuard;
        else
            check.verdict = Placement::RejectedOutOfZone;
        report.checks.push_back(check);
    }
    return report;
}

void write_validation_csv(const ValidationReport& report, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"source_id", "radius_m", "verdict", "reason"});
    for (const auto& c : report.checks) {
        csv.field(c.source_id);
        csv.field(c.radius_m);
        csv.field(std::string(to_string(c.verdict)));
        csv.field(std::string(placement_reason(c.verdict)));
        csv.end_row();
    }
}

std::string format_validation_text(const ValidationReport& report) {
    std::ostringstream out;
    for (const auto& c : report.checks) {
        out << c.source_id << " r=" << format_double(c.radius_m) << " m " << to_string(c.verdict);
        if (c.verdict != Placement::Accepted) out << " (" << placement_reason(c.verdict) << ")";
        out << "\n";
    }
    return out.str();
}

double azimuth_separation(const Vec3& sensor, const Vec3& a, const Vec3& b) {
    const double ax = a.x - sensor.x, ay = a.y - sensor.y;
    const double bx = b.x - sensor.x, by = b.y - sensor.y;
    if (std::hypot(ax, ay) <= 1e-12 || std::hypot(bx, by) <= 1e-12)
        fail(Err::DegenerateGeometry, "source coincides with sensor in the horizontal plane");
    const double cross = ax * by - ay * bx;
    const double dot = ax * bx + ay * by;
    return std::abs(std::atan2(cross, dot));
}

EvalGrid EvalGrid::make(const Vec3& bbox_min, const Vec3& bbox_max, double spacing_m,
                        double altitude_m) {
    if (!(spacing_m > 0.0)) fail(Err::InvalidLayout, "grid spacing must be positive");
    if (!(bbox_max.x >= bbox_min.x && bbox_max.y >= bbox_min.y))
        fail(Err::InvalidLayout, "grid bounding box is empty");
    EvalGrid grid;
    grid.bbox_min = bbox_min;
    grid.bbox_max = bbox_max;
    grid.spacing_m = spacing_m;
    grid.altitude_m = altitude_m;
    const double eps = 1e-9 * spacing_m;
    for (double y = bbox_min.y; y <= bbox_max.y + eps; y += spacing_m)
        for (double x = bbox_min.x; x <= bbox_max.x + eps; x += spacing_m)
            grid.points.push_back(Vec3{x, y, altitude_m});
    return grid;
}

EvalGrid EvalGrid::square(const Vec3& origin, double halfwidth_m, int n, double altitude_m) {
    if (n < 2) fail(Err::InvalidLayout, "grid needs at least 2 points per side");
    const double spacing = 2.0 * halfwidth_m / (n - 1);
    EvalGrid grid;
    grid.bbox_min = Vec3{origin.x - halfwidth_m, origin.y - halfwidth_m, altitude_m};
    grid.bbox_max = Vec3{origin.x + halfwidth_m, origin.y + halfwidth_m, altitude_m};
    grid.spacing_m = spacing;
    grid.altitude_m = altitude_m;
    grid.points.reserve(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            grid.points.push_back(Vec3{grid.bbox_min.x + i * spacing,
                                       grid.bbox_min.y + j * spacing, altitude_m});
    return grid;
}

} // namespace nrdz
