#include "nrdz/tdoa.hpp"

#include "nrdz/rng.hpp"

#include <algorithm>
#include <cmath>

namespace nrdz {

namespace {

double max_pairwise_distance(const std::vector<Vec3>& sensors) {
    double best = 0.0;
    for (size_t i = 0; i < sensors.size(); ++i)
        for (size_t j = i + 1; j < sensors.size(); ++j)
            best = std::max(best, distance(sensors[i], sensors[j]));
    return best;
}

// Smallest singular value of the centered sensor cloud along the requested
// dimensions; ~0 means collinear (2D) or coplanar (3D).
double geometry_spread(const std::vector<Vec3>& sensors, bool two_d) {
    const int dim = two_d ? 2 : 3;
    Eigen::MatrixXd pts(sensors.size(), dim);
    for (size_t i = 0; i < sensors.size(); ++i) {
        pts(i, 0) = sensors[i].x;
        pts(i, 1) = sensors[i].y;
        if (!two_d) pts(i, 2) = sensors[i].z;
    }
    const Eigen::RowVectorXd mean = pts.colwise().mean();
    pts.rowwise() -= mean;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(pts);
    return svd.singularValues()(dim - 1);
}

} // namespace

void TdoaMeasurementSet::validate() const {
    if (sensors.size() < 2) fail(Err::BadGeometry, "need at least 2 sensors");
    if (tdoa_s.size() != sensors.size() - 1)
        fail(Err::BadGeometry, "expected one TDOA per non-reference sensor");
    const double bound =
        max_pairwise_distance(sensors) / kSpeedOfLight + 6.0 * noise_dev_s;
    for (double t : tdoa_s)
        if (std::abs(t) > bound)
            fail(Err::BadGeometry, "TDOA exceeds the light-travel bound for this geometry");
}

TdoaMeasurementSet simulate_tdoa(const Vec3& source, const std::vector<Vec3>& sensors,
                                 double noise_dev_s, std::uint64_t seed) {
    if (sensors.size() < 2) fail(Err::BadGeometry, "need at least 2 sensors");
    if (noise_dev_s < 0.0) fail(Err::BadGeometry, "noise deviation must be non-negative");
    TdoaMeasurementSet meas;
    meas.sensors = sensors;
    meas.noise_dev_s = noise_dev_s;
    Rng rng(seed);
    const double ref_range = distance(source, sensors[0]);
    meas.tdoa_s.reserve(sensors.size() - 1);
    for (size_t i = 1; i < sensors.size(); ++i) {
        const double dt = (distance(source, sensors[i]) - ref_range) / kSpeedOfLight;
        meas.tdoa_s.push_back(dt + (noise_dev_s > 0.0 ? rng.normal(0.0, noise_dev_s) : 0.0));
    }
    return meas;
}

namespace {

struct Misfit {
    const TdoaMeasurementSet& meas;
    bool two_d;

    // Range-difference residuals in meters.
    Eigen::VectorXd residuals(const Vec3& x) const {
        const size_t m = meas.tdoa_s.size();
        Eigen::VectorXd g(m);
        const double r0 = std::max(distance(x, meas.sensors[0]), 1e-9);
        for (size_t i = 0; i < m; ++i) {
            const double ri = std::max(distance(x, meas.sensors[i + 1]), 1e-9);
            g(i) = (ri - r0) - kSpeedOfLight * meas.tdoa_s[i];
        }
        return g;
    }

    Eigen::MatrixXd jacobian(const Vec3& x) const {
        const size_t m = meas.tdoa_s.size();
        const int dim = two_d ? 2 : 3;
        Eigen::MatrixXd J(m, dim);
        const double r0 = std::max(distance(x, meas.sensors[0]), 1e-9);
        const Vec3 d0 = x - meas.sensors[0];
        for (size_t i = 0; i < m; ++i) {
            const double ri = std::max(distance(x, meas.sensors[i + 1]), 1e-9);
            const Vec3 di = x - meas.sensors[i + 1];
            J(i, 0) = di.x / ri - d0.x / r0;
            J(i, 1) = di.y / ri - d0.y / r0;
            if (!two_d) J(i, 2) = di.z / ri - d0.z / r0;
        }
        return J;
    }
};

Vec3 grid_search_init(const Misfit& misfit, const LocalizeOptions& opts) {
    const auto& sensors = misfit.meas.sensors;
    Vec3 lo = sensors[0], hi = sensors[0];
    for (const auto& s : sensors) {
        lo.x = std::min(lo.x, s.x); lo.y = std::min(lo.y, s.y); lo.z = std::min(lo.z, s.z);
        hi.x = std::max(hi.x, s.x); hi.y = std::max(hi.y, s.y); hi.z = std::max(hi.z, s.z);
    }
    const Vec3 extent = hi - lo;
    const double pad = 0.5 * std::max({extent.x, extent.y, extent.z, 1.0});
    Vec3 bmin = opts.search_min.value_or(Vec3{lo.x - pad, lo.y - pad, lo.z - pad});
    Vec3 bmax = opts.search_max.value_or(Vec3{hi.x + pad, hi.y + pad, hi.z + pad});

    const int n = std::max(opts.grid_per_axis, 2);
    const int nz = misfit.two_d ? 1 : 5;
    Vec3 best{0.5 * (bmin.x + bmax.x), 0.5 * (bmin.y + bmax.y), opts.fixed_altitude_m};
    double best_sse = std::numeric_limits<double>::infinity();
    for (int kz = 0; kz < nz; ++kz) {
        const double z = misfit.two_d
                             ? opts.fixed_altitude_m
                             : bmin.z + (bmax.z - bmin.z) * kz / std::max(nz - 1, 1);
        for (int ky = 0; ky < n; ++ky) {
            for (int kx = 0; kx < n; ++kx) {
                const Vec3 p{bmin.x + (bmax.x - bmin.x) * kx / (n - 1),
                             bmin.y + (bmax.y - bmin.y) * ky / (n - 1), z};
                const double sse = misfit.residuals(p).squaredNorm();
                if (sse < best_sse) {
                    best_sse = sse;
                    best = p;
                }
            }
        }
    }
    return best;
}

} // namespace

LocalizeResult localize(const TdoaMeasurementSet& meas, std::optional<Vec3> init,
                        const LocalizeOptions& opts) {
    meas.validate();
    const size_t min_sensors = opts.two_d ? 3 : 4;
    if (meas.sensors.size() < min_sensors)
        fail(Err::BadGeometry, std::string("need at least ") + std::to_string(min_sensors) +
                                   (opts.two_d ? " sensors for 2D" : " sensors for 3D"));
    const double spread = geometry_spread(meas.sensors, opts.two_d);
    const double scale = std::max(max_pairwise_distance(meas.sensors), 1.0);
    if (spread < 1e-9 * scale)
        fail(Err::BadGeometry, opts.two_d ? "sensors are collinear" : "sensors are coplanar");

    Misfit misfit{meas, opts.two_d};
    Vec3 x = init.value_or(Vec3{});
    if (!init) x = grid_search_init(misfit, opts);
    if (opts.two_d && !init) x.z = opts.fixed_altitude_m;

    LocalizeResult result;
    Eigen::VectorXd g = misfit.residuals(x);
    double sse = g.squaredNorm();

    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        const Eigen::MatrixXd J = misfit.jacobian(x);
        const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-g);

        // Backtrack when a full Gauss-Newton step overshoots.
        double alpha = 1.0;
        Vec3 x_next = x;
        Eigen::VectorXd g_next;
        double sse_next = sse;
        for (int bt = 0; bt < 12; ++bt) {
            x_next = x;
            x_next.x += alpha * step(0);
            x_next.y += alpha * step(1);
            if (!opts.two_d) x_next.z += alpha * step(2);
            g_next = misfit.residuals(x_next);
            sse_next = g_next.squaredNorm();
            if (sse_next <= sse) break;
            alpha *= 0.5;
        }
        if (sse_next > sse) break; // no descent direction left

        const double moved = alpha * step.norm();
        x = x_next;
        g = g_next;
        sse = sse_next;
        if (moved < opts.step_tol_rel * std::max(1.0, x.norm())) {
            result.converged = true;
            ++iter;
            break;
        }
    }

    result.position = x;
    result.iterations = iter;
    result.residual_m = std::sqrt(sse / static_cast<double>(meas.tdoa_s.size()));

    // Covariance of the fix from the final Jacobian; range noise is
    // c * timing noise.
    const Eigen::MatrixXd J = misfit.jacobian(x);
    const int dim = opts.two_d ? 2 : 3;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    double range_var = meas.noise_dev_s * kSpeedOfLight;
    range_var *= range_var;
    if (range_var <= 0.0) range_var = 1e-6; // noiseless set; keep R invertible
    Eigen::MatrixXd cov_free =
        JtJ.fullPivLu().isInvertible()
            ? Eigen::MatrixXd(range_var * JtJ.inverse())
            : Eigen::MatrixXd(1e12 * Eigen::MatrixXd::Identity(dim, dim));
    result.covariance.setZero();
    result.covariance.topLeftCorner(dim, dim) = cov_free;
    if (opts.two_d) result.covariance(2, 2) = 1e-6; // altitude pinned, not estimated
    return result;
}

void CvTracker::initialize(const LocalizeResult& fix, double t_s, double prior_pos_var_m2,
                           double prior_vel_var_m2s2) {
    state_.position = fix.position;
    state_.velocity = Vec3{};
    state_.covariance.setZero();
    state_.covariance.topLeftCorner(3, 3) =
        prior_pos_var_m2 * Eigen::Matrix3d::Identity();
    state_.covariance.bottomRightCorner(3, 3) =
        prior_vel_var_m2s2 * Eigen::Matrix3d::Identity();
    state_.t_s = t_s;
    initialized_ = true;
}

TrackState CvTracker::update(const LocalizeResult& fix, double t_s) {
    if (!initialized_) {
        initialize(fix, t_s);
        return state_;
    }
    const double dt = t_s - state_.t_s;
    if (dt < 0.0) fail(Err::BadGeometry, "fix timestamps must be non-decreasing");

    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Vec6 = Eigen::Matrix<double, 6, 1>;

    Mat6 F = Mat6::Identity();
    F.topRightCorner(3, 3) = dt * Eigen::Matrix3d::Identity();

    const double q2 = process_noise_ * process_noise_;
    Mat6 Q = Mat6::Zero();
    Q.topLeftCorner(3, 3) = q2 * (dt * dt * dt * dt / 4.0) * Eigen::Matrix3d::Identity();
    Q.topRightCorner(3, 3) = q2 * (dt * dt * dt / 2.0) * Eigen::Matrix3d::Identity();
    Q.bottomLeftCorner(3, 3) = Q.topRightCorner(3, 3);
    Q.bottomRightCorner(3, 3) = q2 * (dt * dt) * Eigen::Matrix3d::Identity();

    Vec6 xs;
    xs << state_.position.x, state_.position.y, state_.position.z, state_.velocity.x,
        state_.velocity.y, state_.velocity.z;
    xs = F * xs;
    Mat6 P = F * state_.covariance * F.transpose() + Q;

    Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
    H.topLeftCorner(3, 3) = Eigen::Matrix3d::Identity();

    Eigen::Matrix3d R = fix.covariance;
    R.diagonal().array() += 1e-12;

    const Eigen::Vector3d z(fix.position.x, fix.position.y, fix.position.z);
    const Eigen::Vector3d innov = z - H * xs;
    const Eigen::Matrix3d S = H * P * H.transpose() + R;
    const Eigen::Matrix<double, 6, 3> K = P * H.transpose() * S.inverse();

    xs += K * innov;
    const Mat6 IKH = Mat6::Identity() - K * H;
    P = IKH * P * IKH.transpose() + K * R * K.transpose(); // Joseph form
    P = 0.5 * (P + P.transpose());

    state_.position = Vec3{xs(0), xs(1), xs(2)};
    state_.velocity = Vec3{xs(3), xs(4), xs(5)};
    state_.covariance = P;
    state_.t_s = t_s;
    return state_;
}

std::vector<TrackState> track(const TrackState& init, const std::vector<LocalizeResult>& fixes,
                              const std::vector<double>& times_s, double process_noise_mps2) {
    if (fixes.size() != times_s.size())
        fail(Err::BadGeometry, "one timestamp per fix required");
    CvTracker tracker(process_noise_mps2);
    LocalizeResult seed_fix;
    seed_fix.position = init.position;
    seed_fix.covariance = init.covariance.topLeftCorner<3, 3>();
    tracker.initialize(seed_fix, init.t_s, init.covariance(0, 0), init.covariance(3, 3));

    std::vector<TrackState> out;
    out.reserve(fixes.size());
    for (size_t i = 0; i < fixes.size(); ++i) out.push_back(tracker.update(fixes[i], times_s[i]));
    return out;
}

} // namespace nrdz
