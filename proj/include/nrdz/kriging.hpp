#pragma once

#include "nrdz/shadowing.hpp"
#include "nrdz/zone.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace nrdz {

struct SensorMeasurements {
    std::vector<Vec3> sensor_positions;
    SourceSet sources; // positions and tx powers known to the estimator
    Eigen::MatrixXd power_dbm; // |sensors| x |sources|

    void validate() const;

    // Measurements taken from a truth field whose leading points are the
    // sensor positions (harness convention: sensors first, then grid).
    static SensorMeasurements from_field(const PowerField& field, int sensor_count);
};

struct BinStat {
    double mean_separation = 0.0; // meters or radians
    double mean_correlation = 0.0;
    long pair_count = 0;
    bool used = false;
};

struct FitDiagnostics {
    std::vector<BinStat> distance_bins;
    std::vector<BinStat> angle_bins;
    double objective = 0.0; // weighted LS residual (moments) or -loglik (mle)
    std::string method;     // "moments" | "max-likelihood"
    bool theta_defaulted = false;
    int iterations = 0;
};

struct FittedCovariance {
    double sigma_db = 0.0;
    double d_corr_m = 0.0;
    double theta_corr_rad = 0.0;
    FitDiagnostics diag;

    static FittedCovariance from_model(const ShadowingModel& model);
};

struct MomentsFitOptions {
    int distance_bins = 10;
    int angle_bins = 8;
    int min_pairs_per_bin = 4;
    double correlation_floor = 0.05;
    double theta_default_rad = kPi / 6.0;
};

struct MleFitOptions {
    int max_iterations = 200;
    double relative_step_tol = 1e-4;
};

// Shadowing observations: measured minus the known path-loss trend.
Eigen::MatrixXd detrend(const SensorMeasurements& meas, const ShadowingModel& trend);

FittedCovariance fit_moments(const Eigen::MatrixXd& residuals, const SensorMeasurements& meas,
                             const MomentsFitOptions& opts = {});

FittedCovariance fit_mle(const Eigen::MatrixXd& residuals, const SensorMeasurements& meas,
                         const FittedCovariance& init, const MleFitOptions& opts = {});

struct KrigingOptions {
    bool include_cross_source = false;
    double nugget_db2 = 0.0;
};

struct RemEstimate {
    std::vector<Vec3> points;
    std::vector<std::string> source_ids;
    Eigen::MatrixXd pred_dbm;     // |points| x |sources|
    Eigen::MatrixXd variance_db2; // |points| x |sources|
    std::string method;           // "kriging" | "pathloss-baseline"
};

// Ordinary Kriging of the detrended residuals, trend added back. Weights
// solve [C 1; 1' 0][w; mu] = [c0; 1]; variance sigma^2 - w'c0 - mu is
// clamped to [0, sigma^2].
RemEstimate krige(const SensorMeasurements& meas, const ShadowingModel& trend,
                  const FittedCovariance& fitted, const std::vector<Vec3>& query_points,
                  const KrigingOptions& opts = {});

// Trend-only prediction; ignores the sensor data. Variance is sigma^2 by
// convention.
RemEstimate baseline_pathloss(const SensorMeasurements& meas, const ShadowingModel& trend,
                              const std::vector<Vec3>& query_points);

struct RegionFilter {
    enum class Kind { All, InZone, OutZone, RingBand };
    Kind kind = Kind::All;
    Vec3 origin;
    double r0_m = 0.0;
    double halfwidth_m = 0.0;

    static RegionFilter all() { return {}; }
    static RegionFilter in_zone(const ZoneLayout& layout);
    static RegionFilter out_zone(const ZoneLayout& layout);
    static RegionFilter ring_band(const ZoneLayout& layout, double halfwidth_m);

    bool contains(const Vec3& p) const;
};

double rmse(const RemEstimate& estimate, const PowerField& truth, const RegionFilter& region);

void write_rem_csv(const RemEstimate& rem, const std::string& path);

} // namespace nrdz
