#pragma once

#include "nrdz/errors.hpp"
#include "nrdz/geometry.hpp"
#include "nrdz/zone.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace nrdz {

// Log-distance path loss plus correlated lognormal shadowing.
// Auto-correlation decays exponentially with 3D separation (scale d_corr_m);
// cross-correlation between sources decays exponentially with their azimuth
// separation (scale theta_corr_rad); the combined model is the product.
struct ShadowingModel {
    double eta = 3.0;            // path-loss exponent
    double sigma_db = 8.0;       // shadowing standard deviation
    double d_corr_m = 50.0;      // decorrelation distance
    double theta_corr_rad = kPi / 6.0; // decorrelation angle
    double ref_distance_m = 1.0; // d0
    double ref_loss_db = 0.0;    // loss at d0

    void validate() const {
        if (!(eta > 0.0)) fail(Err::InvalidLayout, "eta must be positive");
        if (!(sigma_db >= 0.0)) fail(Err::InvalidLayout, "sigma must be non-negative");
        if (!(d_corr_m > 0.0)) fail(Err::InvalidLayout, "d_corr must be positive");
        if (!(theta_corr_rad > 0.0)) fail(Err::InvalidLayout, "theta_corr must be positive");
        if (!(ref_distance_m > 0.0)) fail(Err::InvalidLayout, "ref_distance must be positive");
    }

    // Free-space loss 20*log10(4*pi*d0*f/c), the default reference loss.
    static double free_space_ref_loss_db(double freq_hz, double ref_distance_m = 1.0);
};

double path_loss_db(const ShadowingModel& model, double distance_m);

// Correlation of the shadowing seen at (point_a, src_a) and (point_b, src_b).
// The azimuth separation of the two sources is taken from the midpoint of the
// two locations; same-source pairs carry no angular factor.
double correlation(const ShadowingModel& model, const Vec3& point_a, const Vec3& point_b,
                   const Source& src_a, const Source& src_b);

// Joint covariance over (point, source) samples, source-major:
// sample index = source_index * n_points + point_index. Entries in dB^2.
Eigen::MatrixXd covariance_matrix(const ShadowingModel& model, const std::vector<Vec3>& points,
                                  const SourceSet& sources);

struct PowerField {
    std::vector<Vec3> points;
    SourceSet sources;
    Eigen::MatrixXd power_dbm;    // |points| x |sources|
    Eigen::MatrixXd shadowing_db; // |points| x |sources|
    std::uint64_t seed = 0;
};

// Draws correlated fields over a fixed geometry. The covariance factorization
// happens once in the constructor and is reused by every draw, so Monte Carlo
// trials over the same geometry only pay a matrix-vector product each.
class FieldSampler {
public:
    FieldSampler(const ShadowingModel& model, std::vector<Vec3> points, SourceSet sources);

    PowerField draw(std::uint64_t seed) const;

    const std::vector<Vec3>& points() const { return points_; }
    const SourceSet& sources() const { return sources_; }
    double applied_jitter() const { return applied_jitter_; }

private:
    ShadowingModel model_;
    std::vector<Vec3> points_;
    SourceSet sources_;
    Eigen::MatrixXd trend_dbm_;  // |points| x |sources|
    Eigen::MatrixXd chol_lower_; // empty when sigma == 0
    double applied_jitter_ = 0.0;
};

PowerField sample_field(const ShadowingModel& model, const std::vector<Vec3>& points,
                        const SourceSet& sources, std::uint64_t seed);

// Cholesky with escalating diagonal jitter eps*sigma2, eps in 1e-12 .. 1e-6
// by decades. Returns the lower factor; reports the jitter actually applied.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double sigma2,
                                     double* applied_jitter = nullptr);

void write_power_field_csv(const PowerField& field, const std::string& path);
PowerField read_power_field_csv(const std::string& path);

} // namespace nrdz
