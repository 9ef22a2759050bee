#include "nrdz/kriging.hpp"

#include "nrdz/csv.hpp"

#include <algorithm>
#include <cmath>

namespace nrdz {

void SensorMeasurements::validate() const {
    if (sensor_positions.size() < 2)
        fail(Err::InvalidLayout, "at least 2 sensors required");
    if (sources.empty()) fail(Err::EmptyInput, "no sources");
    if (power_dbm.rows() != static_cast<Eigen::Index>(sensor_positions.size()) ||
        power_dbm.cols() != static_cast<Eigen::Index>(sources.size()))
        fail(Err::GridMismatch, "measurement matrix shape does not match sensors x sources");
}

SensorMeasurements SensorMeasurements::from_field(const PowerField& field, int sensor_count) {
    if (sensor_count < 0 || sensor_count > static_cast<int>(field.points.size()))
        fail(Err::GridMismatch, "sensor count exceeds field points");
    SensorMeasurements meas;
    meas.sensor_positions.assign(field.points.begin(), field.points.begin() + sensor_count);
    meas.sources = field.sources;
    meas.power_dbm = field.power_dbm.topRows(sensor_count);
    return meas;
}

FittedCovariance FittedCovariance::from_model(const ShadowingModel& model) {
    FittedCovariance fit;
    fit.sigma_db = model.sigma_db;
    fit.d_corr_m = model.d_corr_m;
    fit.theta_corr_rad = model.theta_corr_rad;
    fit.diag.method = "true-params";
    return fit;
}

Eigen::MatrixXd detrend(const SensorMeasurements& meas, const ShadowingModel& trend) {
    meas.validate();
    const int nsens = static_cast<int>(meas.sensor_positions.size());
    const int nsrc = static_cast<int>(meas.sources.size());
    Eigen::MatrixXd residuals(nsens, nsrc);
    for (int s = 0; s < nsrc; ++s) {
        for (int i = 0; i < nsens; ++i) {
            const double d = distance(meas.sensor_positions[i], meas.sources[s].position);
            residuals(i, s) =
                meas.power_dbm(i, s) - (meas.sources[s].tx_power_dbm - path_loss_db(trend, d));
        }
    }
    return residuals;
}

namespace {

struct BinAccumulator {
    std::vector<double> sep_sum;
    std::vector<double> prod_sum;
    std::vector<long> products;
    std::vector<long> pairs;

    explicit BinAccumulator(int n)
        : sep_sum(n, 0.0), prod_sum(n, 0.0), products(n, 0), pairs(n, 0) {}

    void add(int bin, double separation, double product_sum_over_sources, int n_products,
             int n_pairs) {
        sep_sum[bin] += separation * n_products;
        prod_sum[bin] += product_sum_over_sources;
        products[bin] += n_products;
        pairs[bin] += n_pairs;
    }
};

// Weighted LS through the origin on (separation, log correlation); the decay
// scale is -1/slope.
double fit_exponential_scale(std::vector<BinStat>& bins, double corr_floor, bool* any_usable) {
    double swdl = 0.0, swdd = 0.0;
    *any_usable = false;
    for (auto& b : bins) {
        if (b.pair_count <= 0 || b.mean_correlation <= corr_floor) continue;
        b.used = true;
        *any_usable = true;
        const double rho = std::min(b.mean_correlation, 0.999);
        const double w = static_cast<double>(b.pair_count);
        swdl += w * b.mean_separation * std::log(rho);
        swdd += w * b.mean_separation * b.mean_separation;
    }
    if (!*any_usable) return 0.0;
    const double slope = swdl / swdd;
    return -1.0 / slope;
}

} // namespace

FittedCovariance fit_moments(const Eigen::MatrixXd& residuals, const SensorMeasurements& meas,
                             const MomentsFitOptions& opts) {
    meas.validate();
    const int nsens = static_cast<int>(meas.sensor_positions.size());
    const int nsrc = static_cast<int>(meas.sources.size());
    if (residuals.rows() != nsens || residuals.cols() != nsrc)
        fail(Err::GridMismatch, "residual matrix shape does not match sensors x sources");

    const long sensor_pairs = static_cast<long>(nsens) * (nsens - 1) / 2;
    if (sensor_pairs < 8)
        fail(Err::InsufficientPairs,
             "need >= 8 distinct sensor pairs, have " + std::to_string(sensor_pairs));

    const double sigma2_hat = residuals.array().square().mean();
    if (!(sigma2_hat > 0.0))
        fail(Err::NoPositiveCorrelation, "zero residual variance; nothing to fit");

    FittedCovariance fit;
    fit.sigma_db = std::sqrt(sigma2_hat);
    fit.diag.method = "moments";

    // Same-source pairs binned by sensor separation.
    double max_dist = 0.0;
    for (int i = 0; i < nsens; ++i)
        for (int j = i + 1; j < nsens; ++j)
            max_dist =
                std::max(max_dist, distance(meas.sensor_positions[i], meas.sensor_positions[j]));

    BinAccumulator dist_acc(opts.distance_bins);
    for (int i = 0; i < nsens; ++i) {
        for (int j = i + 1; j < nsens; ++j) {
            const double d = distance(meas.sensor_positions[i], meas.sensor_positions[j]);
            const int bin = std::min(opts.distance_bins - 1,
                                     static_cast<int>(d / max_dist * opts.distance_bins));
            double prod = 0.0;
            for (int s = 0; s < nsrc; ++s) prod += residuals(i, s) * residuals(j, s);
            dist_acc.add(bin, d, prod, nsrc, 1);
        }
    }

    fit.diag.distance_bins.resize(opts.distance_bins);
    for (int b = 0; b < opts.distance_bins; ++b) {
        auto& stat = fit.diag.distance_bins[b];
        if (dist_acc.pairs[b] < opts.min_pairs_per_bin) continue; // discarded
        stat.pair_count = dist_acc.pairs[b];
        stat.mean_separation = dist_acc.sep_sum[b] / dist_acc.products[b];
        stat.mean_correlation = dist_acc.prod_sum[b] / dist_acc.products[b] / sigma2_hat;
    }

    bool any_usable = false;
    fit.d_corr_m = fit_exponential_scale(fit.diag.distance_bins, opts.correlation_floor,
                                         &any_usable);
    if (!any_usable)
        fail(Err::NoPositiveCorrelation,
             "no distance bin shows correlation above " + format_double(opts.correlation_floor));

    // Same-sensor cross-source pairs binned by azimuth separation.
    if (nsrc < 2) {
        fit.theta_corr_rad = opts.theta_default_rad;
        fit.diag.theta_defaulted = true;
        return fit;
    }

    BinAccumulator ang_acc(opts.angle_bins);
    for (int i = 0; i < nsens; ++i) {
        for (int s = 0; s < nsrc; ++s) {
            for (int t = s + 1; t < nsrc; ++t) {
                const double dtheta = azimuth_separation(
                    meas.sensor_positions[i], meas.sources[s].position, meas.sources[t].position);
                const int bin = std::min(opts.angle_bins - 1,
                                         static_cast<int>(dtheta / kPi * opts.angle_bins));
                ang_acc.add(bin, dtheta, residuals(i, s) * residuals(i, t), 1, 1);
            }
        }
    }

    fit.diag.angle_bins.resize(opts.angle_bins);
    for (int b = 0; b < opts.angle_bins; ++b) {
        auto& stat = fit.diag.angle_bins[b];
        if (ang_acc.pairs[b] < opts.min_pairs_per_bin) continue;
        stat.pair_count = ang_acc.pairs[b];
        stat.mean_separation = ang_acc.sep_sum[b] / ang_acc.products[b];
        stat.mean_correlation = ang_acc.prod_sum[b] / ang_acc.products[b] / sigma2_hat;
    }

    fit.theta_corr_rad =
        fit_exponential_scale(fit.diag.angle_bins, opts.correlation_floor, &any_usable);
    if (!any_usable)
        fail(Err::NoPositiveCorrelation, "no angle bin shows correlation above " +
                                             format_double(opts.correlation_floor));
    return fit;
}

namespace {

// Negative log-likelihood of the stacked residuals under the fitted model;
// +inf when the covariance cannot be factorized at these parameters.
double residual_nll(const Eigen::MatrixXd& residuals, const SensorMeasurements& meas,
                    double sigma_db, double d_corr_m, double theta_corr_rad) {
    ShadowingModel m;
    m.sigma_db = sigma_db;
    m.d_corr_m = d_corr_m;
    m.theta_corr_rad = theta_corr_rad;
    Eigen::MatrixXd cov;
    try {
        cov = covariance_matrix(m, meas.sensor_positions, meas.sources);
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
    const int nsens = static_cast<int>(meas.sensor_positions.size());
    const int nsrc = static_cast<int>(meas.sources.size());
    const Eigen::Index n = cov.rows();
    Eigen::VectorXd r(n);
    for (int s = 0; s < nsrc; ++s)
        for (int i = 0; i < nsens; ++i) r(static_cast<Eigen::Index>(s) * nsens + i) =
            residuals(i, s);

    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        for (double eps = 1e-12; eps <= 1e-6 * 1.0001; eps *= 10.0) {
            Eigen::MatrixXd jittered = cov;
            jittered.diagonal().array() += eps * sigma_db * sigma_db;
            llt.compute(jittered);
            if (llt.info() == Eigen::Success) break;
        }
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    }
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double quad = r.dot(llt.solve(r));
    return 0.5 * (logdet + quad + n * std::log(2.0 * kPi));
}

} // namespace

FittedCovariance fit_mle(const Eigen::MatrixXd& residuals, const SensorMeasurements& meas,
                         const FittedCovariance& init, const MleFitOptions& opts) {
    meas.validate();
    if (!(init.sigma_db > 0.0 && init.d_corr_m > 0.0 && init.theta_corr_rad > 0.0))
        fail(Err::InvalidLayout, "mle init parameters must be positive");
    if (!(residuals.array().square().mean() > 0.0))
        fail(Err::NoPositiveCorrelation, "zero residual variance; degenerate likelihood");

    const bool fit_theta = meas.sources.size() >= 2;
    const int dim = fit_theta ? 3 : 2;

    auto objective = [&](const Eigen::VectorXd& u) {
        const double sigma = std::exp(u(0));
        const double dc = std::exp(u(1));
        const double theta = fit_theta ? std::exp(u(2)) : init.theta_corr_rad;
        return residual_nll(residuals, meas, sigma, dc, theta);
    };

    Eigen::VectorXd u0(dim);
    u0(0) = std::log(init.sigma_db);
    u0(1) = std::log(init.d_corr_m);
    if (fit_theta) u0(2) = std::log(init.theta_corr_rad);

    const double f_init = objective(u0);
    if (std::isinf(f_init))
        fail(Err::FactorizationFailure, "likelihood not evaluable at init parameters");

    // Nelder-Mead on the log-parameters.
    std::vector<Eigen::VectorXd> verts(dim + 1, u0);
    std::vector<double> fv(dim + 1);
    fv[0] = f_init;
    for (int i = 0; i < dim; ++i) {
        verts[i + 1](i) += 0.15;
        fv[i + 1] = objective(verts[i + 1]);
    }

    int iterations = 0;
    for (; iterations < opts.max_iterations; ++iterations) {
        std::vector<int> order(dim + 1);
        for (int i = 0; i <= dim; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::vector<Eigen::VectorXd> vs(dim + 1);
        std::vector<double> fs(dim + 1);
        for (int i = 0; i <= dim; ++i) {
            vs[i] = verts[order[i]];
            fs[i] = fv[order[i]];
        }
        verts = vs;
        fv = fs;

        double spread = 0.0;
        for (int i = 1; i <= dim; ++i)
            spread = std::max(spread, (verts[i] - verts[0]).cwiseAbs().maxCoeff());
        if (spread < opts.relative_step_tol) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (int i = 0; i < dim; ++i) centroid += verts[i];
        centroid /= dim;

        const Eigen::VectorXd reflected = centroid + (centroid - verts[dim]);
        const double fr = objective(reflected);
        if (fr < fv[0]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - verts[dim]);
            const double fe = objective(expanded);
            if (fe < fr) {
                verts[dim] = expanded;
                fv[dim] = fe;
            } else {
                verts[dim] = reflected;
                fv[dim] = fr;
            }
        } else if (fr < fv[dim - 1]) {
            verts[dim] = reflected;
            fv[dim] = fr;
        } else {
            const Eigen::VectorXd contracted = centroid + 0.5 * (verts[dim] - centroid);
            const double fc = objective(contracted);
            if (fc < fv[dim]) {
                verts[dim] = contracted;
                fv[dim] = fc;
            } else {
                for (int i = 1; i <= dim; ++i) {
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0]);
                    fv[i] = objective(verts[i]);
                }
            }
        }
    }

    int best = 0;
    for (int i = 1; i <= dim; ++i)
        if (fv[i] < fv[best]) best = i;

    FittedCovariance out;
    out.sigma_db = std::exp(verts[best](0));
    out.d_corr_m = std::exp(verts[best](1));
    out.theta_corr_rad = fit_theta ? std::exp(verts[best](2)) : init.theta_corr_rad;
    out.diag = init.diag;
    out.diag.method = "max-likelihood";
    out.diag.iterations = iterations;
    out.diag.objective = std::min(fv[best], f_init);
    out.diag.theta_defaulted = !fit_theta;
    if (fv[best] > f_init) { // never return worse than init
        out.sigma_db = init.sigma_db;
        out.d_corr_m = init.d_corr_m;
        out.theta_corr_rad = init.theta_corr_rad;
        out.diag.objective = f_init;
    }
    return out;
}

namespace {

// C with escalating jitter until positive definite; throws SingularSystem.
Eigen::MatrixXd ensure_factorizable(Eigen::MatrixXd cov, double sigma2) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return cov;
    for (double eps = 1e-12; eps <= 1e-6 * 1.0001; eps *= 10.0) {
        Eigen::MatrixXd jittered = cov;
        jittered.diagonal().array() += eps * sigma2;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success) return jittered;
    }
    fail(Err::SingularSystem, "kriging covariance rank-deficient beyond jitter policy");
}

} // namespace

RemEstimate krige(const SensorMeasurements& meas, const ShadowingModel& trend,
                  const FittedCovariance& fitted, const std::vector<Vec3>& query_points,
                  const KrigingOptions& opts) {
    meas.validate();
    if (query_points.empty()) fail(Err::EmptyInput, "no query points");
    const int nsens = static_cast<int>(meas.sensor_positions.size());
    const int nsrc = static_cast<int>(meas.sources.size());
    const int nq = static_cast<int>(query_points.size());
    const double sigma2 = fitted.sigma_db * fitted.sigma_db;

    const Eigen::MatrixXd residuals = detrend(meas, trend);

    RemEstimate rem;
    rem.points = query_points;
    rem.method = "kriging";
    rem.source_ids.reserve(nsrc);
    for (const auto& s : meas.sources) rem.source_ids.push_back(s.id);
    rem.pred_dbm.resize(nq, nsrc);
    rem.variance_db2.resize(nq, nsrc);

    ShadowingModel fitted_model = trend;
    fitted_model.sigma_db = fitted.sigma_db;
    fitted_model.d_corr_m = fitted.d_corr_m;
    fitted_model.theta_corr_rad = fitted.theta_corr_rad;

    if (!opts.include_cross_source) {
        // Independent per-source systems; shared sensor geometry.
        Eigen::MatrixXd corr(nsens, nsens);
        for (int i = 0; i < nsens; ++i) {
            corr(i, i) = 1.0;
            for (int j = i + 1; j < nsens; ++j) {
                const double v = std::exp(
                    -distance(meas.sensor_positions[i], meas.sensor_positions[j]) /
                    fitted.d_corr_m);
                corr(i, j) = v;
                corr(j, i) = v;
            }
        }
        Eigen::MatrixXd cov = sigma2 * corr;
        cov.diagonal().array() += opts.nugget_db2;
        cov = ensure_factorizable(std::move(cov), sigma2);

        Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(nsens + 1, nsens + 1);
        bordered.topLeftCorner(nsens, nsens) = cov;
        bordered.topRightCorner(nsens, 1).setOnes();
        bordered.bottomLeftCorner(1, nsens).setOnes();
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(bordered);

        Eigen::VectorXd rhs(nsens + 1);
        for (int g = 0; g < nq; ++g) {
            for (int i = 0; i < nsens; ++i)
                rhs(i) = sigma2 * std::exp(-distance(meas.sensor_positions[i], query_points[g]) /
                                           fitted.d_corr_m);
            rhs(nsens) = 1.0;
            const Eigen::VectorXd sol = lu.solve(rhs);
            const Eigen::VectorXd w = sol.head(nsens);
            const double mu = sol(nsens);
            const double var_raw = sigma2 - w.dot(rhs.head(nsens)) - mu;
            const double var = std::clamp(var_raw, 0.0, sigma2);
            for (int s = 0; s < nsrc; ++s) {
                const double trend_dbm =
                    meas.sources[s].tx_power_dbm -
                    path_loss_db(trend, distance(query_points[g], meas.sources[s].position));
                rem.pred_dbm(g, s) = trend_dbm + w.dot(residuals.col(s));
                rem.variance_db2(g, s) = var;
            }
        }
        return rem;
    }

    // Joint system over all (sensor, source) samples, source-major.
    const Eigen::Index n = static_cast<Eigen::Index>(nsens) * nsrc;
    Eigen::MatrixXd cov = covariance_matrix(fitted_model, meas.sensor_positions, meas.sources);
    cov.diagonal().array() += opts.nugget_db2;
    cov = ensure_factorizable(std::move(cov), sigma2);

    Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(n + 1, n + 1);
    bordered.topLeftCorner(n, n) = cov;
    bordered.topRightCorner(n, 1).setOnes();
    bordered.bottomLeftCorner(1, n).setOnes();
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(bordered);

    Eigen::VectorXd stacked(n);
    for (int s = 0; s < nsrc; ++s)
        for (int i = 0; i < nsens; ++i)
            stacked(static_cast<Eigen::Index>(s) * nsens + i) = residuals(i, s);

    Eigen::VectorXd rhs(n + 1);
    for (int g = 0; g < nq; ++g) {
        for (int s = 0; s < nsrc; ++s) {
            for (int t = 0; t < nsrc; ++t) {
                for (int i = 0; i < nsens; ++i) {
                    const double rho_d = std::exp(
                        -distance(meas.sensor_positions[i], query_points[g]) / fitted.d_corr_m);
                    double rho = rho_d;
                    if (t != s) {
                        const Vec3 view = midpoint(meas.sensor_positions[i], query_points[g]);
                        const double dtheta = azimuth_separation(
                            view, meas.sources[s].position, meas.sources[t].position);
                        rho *= std::exp(-dtheta / fitted.theta_corr_rad);
                    }
                    rhs(static_cast<Eigen::Index>(t) * nsens + i) = sigma2 * rho;
                }
            }
            rhs(n) = 1.0;
            const Eigen::VectorXd sol = lu.solve(rhs);
            const Eigen::VectorXd w = sol.head(n);
            const double mu = sol(n);
            const double var = std::clamp(sigma2 - w.dot(rhs.head(n)) - mu, 0.0, sigma2);
            const double trend_dbm =
                meas.sources[s].tx_power_dbm -
                path_loss_db(trend, distance(query_points[g], meas.sources[s].position));
            rem.pred_dbm(g, s) = trend_dbm + w.dot(stacked);
            rem.variance_db2(g, s) = var;
        }
    }
    return rem;
}

RemEstimate baseline_pathloss(const SensorMeasurements& meas, const ShadowingModel& trend,
                              const std::vector<Vec3>& query_points) {
    meas.validate();
    if (query_points.empty()) fail(Err::EmptyInput, "no query points");
    const int nsrc = static_cast<int>(meas.sources.size());
    const int nq = static_cast<int>(query_points.size());

    RemEstimate rem;
    rem.points = query_points;
    rem.method = "pathloss-baseline";
    for (const auto& s : meas.sources) rem.source_ids.push_back(s.id);
    rem.pred_dbm.resize(nq, nsrc);
    rem.variance_db2 =
        Eigen::MatrixXd::Constant(nq, nsrc, trend.sigma_db * trend.sigma_db);
    for (int g = 0; g < nq; ++g)
        for (int s = 0; s < nsrc; ++s)
            rem.pred_dbm(g, s) =
                meas.sources[s].tx_power_dbm -
                path_loss_db(trend, distance(query_points[g], meas.sources[s].position));
    return rem;
}

RegionFilter RegionFilter::in_zone(const ZoneLayout& layout) {
    RegionFilter f;
    f.kind = Kind::InZone;
    f.origin = layout.origin;
    f.r0_m = layout.r0_m;
    return f;
}

RegionFilter RegionFilter::out_zone(const ZoneLayout& layout) {
    RegionFilter f;
    f.kind = Kind::OutZone;
    f.origin = layout.origin;
    f.r0_m = layout.r0_m;
    return f;
}

RegionFilter RegionFilter::ring_band(const ZoneLayout& layout, double halfwidth_m) {
    RegionFilter f;
    f.kind = Kind::RingBand;
    f.origin = layout.origin;
    f.r0_m = layout.r0_m;
    f.halfwidth_m = halfwidth_m;
    return f;
}

bool RegionFilter::contains(const Vec3& p) const {
    const double r = horizontal_distance(p, origin);
    switch (kind) {
        case Kind::All: return true;
        case Kind::InZone: return r <= r0_m;
        case Kind::OutZone: return r > r0_m;
        case Kind::RingBand: return std::abs(r - r0_m) <= halfwidth_m;
    }
    return true;
}

double rmse(const RemEstimate& estimate, const PowerField& truth, const RegionFilter& region) {
    if (estimate.points.size() != truth.points.size() ||
        estimate.source_ids.size() != truth.sources.size())
        fail(Err::GridMismatch, "estimate and truth cover different points or sources");
    for (size_t i = 0; i < estimate.points.size(); ++i)
        if (distance(estimate.points[i], truth.points[i]) > 1e-9)
            fail(Err::GridMismatch, "grid point mismatch at index " + std::to_string(i));
    for (size_t s = 0; s < estimate.source_ids.size(); ++s)
        if (estimate.source_ids[s] != truth.sources[s].id)
            fail(Err::GridMismatch, "source order mismatch at index " + std::to_string(s));

    double sum = 0.0;
    long count = 0;
    for (size_t p = 0; p < estimate.points.size(); ++p) {
        if (!region.contains(estimate.points[p])) continue;
        for (size_t s = 0; s < estimate.source_ids.size(); ++s) {
            const double e = estimate.pred_dbm(p, s) - truth.power_dbm(p, s);
            sum += e * e;
            ++count;
        }
    }
    if (count == 0) fail(Err::EmptyInput, "region filter selected no points");
    return std::sqrt(sum / count);
}

void write_rem_csv(const RemEstimate& rem, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"x_m", "y_m", "z_m", "source_id", "pred_dbm", "krig_var_db2", "method"});
    for (size_t p = 0; p < rem.points.size(); ++p) {
        for (size_t s = 0; s < rem.source_ids.size(); ++s) {
            csv.field(rem.points[p].x);
            csv.field(rem.points[p].y);
            csv.field(rem.points[p].z);
            csv.field(rem.source_ids[s]);
            csv.field(rem.pred_dbm(p, s));
            csv.field(rem.variance_db2(p, s));
            csv.field(rem.method);
            csv.end_row();
        }
    }
}

} // namespace nrdz
