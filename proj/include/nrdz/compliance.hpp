#pragma once

#include "nrdz/errors.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nrdz {

enum class BandDirection { Uplink, Downlink, Both };
const char* to_string(BandDirection d);

struct BandRange {
    double low_hz = 0.0;
    double high_hz = 0.0; // [low, high)
    BandDirection direction = BandDirection::Both;
};

enum class BandOrigin { Cellular, Allocation };

struct BandEntry {
    std::string name;    // band number or service name
    std::string duplex;  // "FDD" | "TDD" | "n/a"
    std::string label;   // operators or service description
    BandOrigin origin = BandOrigin::Allocation;
    std::vector<BandRange> ranges;
};

struct BandTable {
    std::string version;
    std::vector<BandEntry> entries;

    static BandTable builtin();
    static BandTable load_json(const std::string& path);
    void save_json(const std::string& path) const;
};

struct BandMatch {
    std::string name;
    std::string duplex;
    std::string label;
    BandOrigin origin = BandOrigin::Allocation;
    double low_hz = 0.0;
    double high_hz = 0.0;
    BandDirection direction = BandDirection::Both;
};

// All entries whose ranges contain the frequency; boundaries are
// inclusive-low, exclusive-high. Overlapping matches are expected.
std::vector<BandMatch> lookup_bands(const BandTable& table, double freq_hz);

struct SweepRecord {
    double timestamp_utc_s = 0.0;
    double freq_hz = 0.0;
    double power_dbm = 0.0;
    std::string node_id;
};

struct SweepSpan {
    double low_hz = 100e6;
    double high_hz = 3e9;
};

// Profile bucket key for a frequency: the first matching table entry in
// table order, or a synthetic 10 MHz bin for unallocated spectrum.
std::string profile_band_key(const BandTable& table, double freq_hz);

int hour_of_day_utc(double timestamp_utc_s);

struct ThresholdCell {
    double mean_dbm = 0.0;
    double std_db = 0.0;
    long count = 0;
    double threshold_dbm = 0.0;
    bool calibrated = false;
};

struct ThresholdProfile {
    double k = 3.0;
    double delta_min_db = 10.0;
    long min_calibration_count = 30;
    std::map<std::pair<std::string, int>, ThresholdCell> cells; // (band key, hour)

    const ThresholdCell* find(const std::string& band_key, int hour) const;
};

// Streaming per-(band, hour) mean/std via Welford accumulation.
class Calibrator {
public:
    explicit Calibrator(const BandTable& table, SweepSpan span = {})
        : table_(&table), span_(span) {}

    void add(const SweepRecord& record);
    ThresholdProfile finalize(double k = 3.0, double delta_min_db = 10.0,
                              long min_count = 30) const;
    long total_records() const { return total_; }

private:
    struct Welford {
        long n = 0;
        double mean = 0.0;
        double m2 = 0.0;
    };
    const BandTable* table_;
    SweepSpan span_;
    std::map<std::pair<std::string, int>, Welford> acc_;
    long total_ = 0;
};

ThresholdProfile calibrate(const BandTable& table, const std::vector<SweepRecord>& history,
                           double k = 3.0, double delta_min_db = 10.0, SweepSpan span = {},
                           long min_count = 30);

enum class SweepVerdict { LocalExperimenter, IncumbentOrAmbient, Uncalibrated };
const char* to_string(SweepVerdict v);

SweepVerdict classify(const SweepRecord& record, const ThresholdProfile& profile,
                      const BandTable& table);

struct FreqRange {
    double low_hz = 0.0;
    double high_hz = 0.0;
};

struct ComplianceEvent {
    double timestamp_utc_s = 0.0;
    double freq_hz = 0.0;
    double power_dbm = 0.0;
    double threshold_dbm = 0.0;
    std::vector<BandMatch> bands;
    SweepVerdict verdict = SweepVerdict::LocalExperimenter;
};

// Event when a local-experimenter transmission falls outside every
// authorized range.
std::optional<ComplianceEvent> authorization_check(const SweepRecord& record,
                                                   const ThresholdProfile& profile,
                                                   const BandTable& table,
                                                   const std::vector<FreqRange>& authorized);

std::vector<SweepRecord> read_sweep_csv(const std::string& path, SweepSpan span = {});
std::string format_event_line(const ComplianceEvent& event);
void write_threshold_csv(const ThresholdProfile& profile, const std::string& path);
ThresholdProfile read_threshold_csv(const std::string& path);

} // namespace nrdz
