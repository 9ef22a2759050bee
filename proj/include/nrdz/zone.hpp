#pragma once

#include "nrdz/errors.hpp"
#include "nrdz/geometry.hpp"

#include <string>
#include <vector>

namespace nrdz {

// Disk model of the dynamic zone. Sensors sit on the circle of radius r0_m;
// the guard annulus (r0_m - r_guard_m, r0_m] is kept free of transmitters.
struct ZoneLayout {
    double r0_m = 500.0;
    double r_guard_m = 100.0;
    Vec3 origin;

    double core_radius_m() const { return r0_m - r_guard_m; }

    void validate() const {
        if (!(r0_m > 0.0)) fail(Err::InvalidLayout, "r0 must be positive");
        if (!(r_guard_m > 0.0 && r_guard_m < r0_m))
            fail(Err::InvalidLayout, "guard width must satisfy 0 < r_guard < r0");
    }
};

struct Source {
    std::string id;
    Vec3 position;
    double tx_power_dbm = 0.0;
    double freq_hz = 0.0;
};

using SourceSet = std::vector<Source>;

struct SensorRing {
    double angular_spacing_rad = 0.0;
    std::vector<double> altitudes_m;
    std::vector<Vec3> sensors; // level-major: all of altitude 0 first
    int sensors_per_level = 0;
};

// Sensor k of each level sits at angle k * angular_spacing on the r0 circle.
// 2*pi / angular_spacing must be integral to within 1e-9.
SensorRing build_sensor_ring(const ZoneLayout& layout, double angular_spacing_rad,
                             const std::vector<double>& altitudes_m);

enum class Placement { Accepted, RejectedInGuard, RejectedOutOfZone };

const char* to_string(Placement p);

struct PlacementCheck {
    std::string source_id;
    double radius_m = 0.0;
    Placement verdict = Placement::Accepted;
};

struct ValidationReport {
    std::vector<PlacementCheck> checks;

    bool all_accepted() const {
        for (const auto& c : checks)
            if (c.verdict != Placement::Accepted) return false;
        return true;
    }
};

ValidationReport validate_sources(const ZoneLayout& layout, const SourceSet& sources);

void write_validation_csv(const ValidationReport& report, const std::string& path);
std::string format_validation_text(const ValidationReport& report);

// Horizontal angle in [0, pi] between the bearings of a and b as seen from
// the sensor. Throws DegenerateGeometry when a source sits on the sensor's
// vertical axis.
double azimuth_separation(const Vec3& sensor, const Vec3& a, const Vec3& b);

struct EvalGrid {
    Vec3 bbox_min;
    Vec3 bbox_max;
    double spacing_m = 0.0;
    double altitude_m = 0.0;
    std::vector<Vec3> points; // row-major: y outer, x inner

    static EvalGrid make(const Vec3& bbox_min, const Vec3& bbox_max, double spacing_m,
                         double altitude_m);
    // n x n grid spanning [-halfwidth, halfwidth]^2 around the origin.
    static EvalGrid square(const Vec3& origin, double halfwidth_m, int n, double altitude_m);
};

} // namespace nrdz
