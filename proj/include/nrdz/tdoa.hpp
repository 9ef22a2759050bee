#pragma once

#include "nrdz/errors.hpp"
#include "nrdz/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace nrdz {

// Arrival-time differences relative to sensor 0. tdoa_s[i] belongs to
// sensor i+1.
struct TdoaMeasurementSet {
    std::vector<Vec3> sensors;
    std::vector<double> tdoa_s;
    double noise_dev_s = 0.0;

    void validate() const;
};

TdoaMeasurementSet simulate_tdoa(const Vec3& source, const std::vector<Vec3>& sensors,
                                 double noise_dev_s, std::uint64_t seed);

struct LocalizeOptions {
    bool two_d = true;          // solve (x, y) at a fixed altitude
    double fixed_altitude_m = 0.0;
    int max_iterations = 50;
    double step_tol_rel = 1e-9;
    // Coarse-grid initialization box; defaults to the sensor bounding box
    // inflated by half its extent.
    std::optional<Vec3> search_min;
    std::optional<Vec3> search_max;
    int grid_per_axis = 25;
};

struct LocalizeResult {
    Vec3 position;
    double residual_m = 0.0; // RMS range-difference misfit at the solution
    bool converged = false;
    int iterations = 0;
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero(); // from the final Jacobian
};

// Gauss-Newton on the range-difference misfit, grid-search initialized when
// no init is given.
LocalizeResult localize(const TdoaMeasurementSet& meas, std::optional<Vec3> init = {},
                        const LocalizeOptions& opts = {});

struct TrackState {
    Vec3 position;
    Vec3 velocity;
    Eigen::Matrix<double, 6, 6> covariance = Eigen::Matrix<double, 6, 6>::Zero();
    double t_s = 0.0;
};

// Constant-velocity Kalman filter over localize fixes. The fix position is
// the measurement; its covariance comes from the Gauss-Newton Jacobian.
class CvTracker {
public:
    explicit CvTracker(double process_noise_mps2) : process_noise_(process_noise_mps2) {}

    bool initialized() const { return initialized_; }
    const TrackState& state() const { return state_; }

    void initialize(const LocalizeResult& fix, double t_s, double prior_pos_var_m2 = 1e8,
                    double prior_vel_var_m2s2 = 1e8);
    TrackState update(const LocalizeResult& fix, double t_s);

private:
    double process_noise_;
    bool initialized_ = false;
    TrackState state_;
};

std::vector<TrackState> track(const TrackState& init, const std::vector<LocalizeResult>& fixes,
                              const std::vector<double>& times_s, double process_noise_mps2);

} // namespace nrdz
