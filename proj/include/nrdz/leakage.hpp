#pragma once

#include "nrdz/kriging.hpp"
#include "nrdz/zone.hpp"

#include <string>
#include <vector>

namespace nrdz {

struct IparReceiver {
    std::string id;
    Vec3 position; // strictly outside the zone
    double threshold_dbm = 0.0;
    double band_low_hz = 0.0;
    double band_high_hz = 0.0;

    void validate(const ZoneLayout& layout) const;
};

enum class LeakageVerdict { Safe, Marginal, Violation };
const char* to_string(LeakageVerdict v);

struct SourceContribution {
    std::string source_id;
    double power_dbm = 0.0;
};

struct IparAssessment {
    std::string ipar_id;
    double predicted_dbm = 0.0; // aggregate over sources
    double margin_db = 0.0;     // k_sigma * sqrt(max per-source variance)
    double threshold_dbm = 0.0;
    LeakageVerdict verdict = LeakageVerdict::Safe;
    std::vector<SourceContribution> contributions; // descending power
};

struct LeakageReport {
    std::vector<IparAssessment> assessments;
};

// Linear-domain power sum of dBm values.
double aggregate_power_dbm(const std::vector<double>& per_source_dbm);

// VIOLATION when predicted + margin exceeds the threshold; SAFE when it
// stays at least 3 dB below; MARGINAL in between.
LeakageReport assess(const RemEstimate& rem, const std::vector<IparReceiver>& ipars,
                     double k_sigma = 2.0);
LeakageReport assess(const PowerField& truth, const std::vector<IparReceiver>& ipars,
                     double k_sigma = 2.0);

struct ContourPoint {
    Vec3 position;
    double aggregate_dbm = 0.0;
};

// Grid points outside the zone whose aggregate predicted power reaches the
// level.
std::vector<ContourPoint> leakage_contour(const RemEstimate& rem, double level_dbm,
                                          const ZoneLayout& layout);
std::vector<ContourPoint> leakage_contour(const PowerField& truth, double level_dbm,
                                          const ZoneLayout& layout);

void write_leakage_csv(const LeakageReport& report, const std::string& path);
void write_contributions_csv(const LeakageReport& report, const std::string& path);
void write_contour_csv(const std::vector<ContourPoint>& contour, const std::string& path);

std::vector<IparReceiver> read_ipar_csv(const std::string& path);

} // namespace nrdz
