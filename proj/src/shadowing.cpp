#include "nrdz/shadowing.hpp"

#include "nrdz/csv.hpp"
#include "nrdz/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nrdz {

double ShadowingModel::free_space_ref_loss_db(double freq_hz, double ref_distance_m) {
    if (!(freq_hz > 0.0)) fail(Err::InvalidLayout, "frequency must be positive");
    return 20.0 * std::log10(4.0 * kPi * ref_distance_m * freq_hz / kSpeedOfLight);
}

double path_loss_db(const ShadowingModel& model, double distance_m) {
    if (distance_m < model.ref_distance_m)
        fail(Err::TooClose, "distance " + format_double(distance_m) +
                                " m below reference distance " +
                                format_double(model.ref_distance_m) + " m");
    return model.ref_loss_db + 10.0 * model.eta * std::log10(distance_m / model.ref_distance_m);
}

static bool same_source(const Source& a, const Source& b) {
    return &a == &b || a.id == b.id;
}

double correlation(const ShadowingModel& model, const Vec3& point_a, const Vec3& point_b,
                   const Source& src_a, const Source& src_b) {
    const double rho_dist = std::exp(-distance(point_a, point_b) / model.d_corr_m);
    if (same_source(src_a, src_b)) return rho_dist;
    const Vec3 view = midpoint(point_a, point_b);
    const double dtheta = azimuth_separation(view, src_a.position, src_b.position);
    return rho_dist * std::exp(-dtheta / model.theta_corr_rad);
}

Eigen::MatrixXd covariance_matrix(const ShadowingModel& model, const std::vector<Vec3>& points,
                                  const SourceSet& sources) {
    model.validate();
    if (points.empty() || sources.empty())
        fail(Err::EmptyInput, "covariance needs at least one point and one source");
    const int np = static_cast<int>(points.size());
    const int ns = static_cast<int>(sources.size());

    for (int i = 0; i < np; ++i)
        for (int j = i + 1; j < np; ++j)
            if (distance(points[i], points[j]) == 0.0)
                fail(Err::DuplicateSample, "points " + std::to_string(i) + " and " +
                                               std::to_string(j) + " coincide");

    const double sigma2 = model.sigma_db * model.sigma_db;
    const Eigen::Index n = static_cast<Eigen::Index>(np) * ns;
    Eigen::MatrixXd cov(n, n);

    // Distance factor is shared by every source block.
    Eigen::MatrixXd dist_factor(np, np);
    for (int i = 0; i < np; ++i) {
        dist_factor(i, i) = 1.0;
        for (int j = i + 1; j < np; ++j) {
            const double v = std::exp(-distance(points[i], points[j]) / model.d_corr_m);
            dist_factor(i, j) = v;
            dist_factor(j, i) = v;
        }
    }

    for (int s = 0; s < ns; ++s) {
        cov.block(static_cast<Eigen::Index>(s) * np, static_cast<Eigen::Index>(s) * np, np, np) =
            sigma2 * dist_factor;
        for (int t = s + 1; t < ns; ++t) {
            Eigen::MatrixXd block(np, np);
            for (int i = 0; i < np; ++i) {
                for (int j = i; j < np; ++j) {
                    const Vec3 view = midpoint(points[i], points[j]);
                    const double dtheta =
                        azimuth_separation(view, sources[s].position, sources[t].position);
                    const double v =
                        sigma2 * dist_factor(i, j) * std::exp(-dtheta / model.theta_corr_rad);
                    block(i, j) = v;
                    block(j, i) = v;
                }
            }
            cov.block(static_cast<Eigen::Index>(s) * np, static_cast<Eigen::Index>(t) * np, np,
                      np) = block;
            cov.block(static_cast<Eigen::Index>(t) * np, static_cast<Eigen::Index>(s) * np, np,
                      np) = block.transpose();
        }
    }
    return cov;
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double sigma2,
                                     double* applied_jitter) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        if (applied_jitter) *applied_jitter = 0.0;
        return llt.matrixL();
    }
    for (double eps = 1e-12; eps <= 1e-6 * 1.0001; eps *= 10.0) {
        Eigen::MatrixXd jittered = cov;
        jittered.diagonal().array() += eps * sigma2;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success) {
            if (applied_jitter) *applied_jitter = eps * sigma2;
            return llt.matrixL();
        }
    }
    fail(Err::FactorizationFailure, "covariance not factorizable after jitter escalation");
}

FieldSampler::FieldSampler(const ShadowingModel& model, std::vector<Vec3> points,
                           SourceSet sources)
    : model_(model), points_(std::move(points)), sources_(std::move(sources)) {
    model_.validate();
    if (points_.empty() || sources_.empty())
        fail(Err::EmptyInput, "field needs at least one point and one source");

    const int np = static_cast<int>(points_.size());
    const int ns = static_cast<int>(sources_.size());
    trend_dbm_.resize(np, ns);
    for (int s = 0; s < ns; ++s)
        for (int p = 0; p < np; ++p)
            trend_dbm_(p, s) = sources_[s].tx_power_dbm -
                               path_loss_db(model_, distance(points_[p], sources_[s].position));

    if (model_.sigma_db > 0.0) {
        const Eigen::MatrixXd cov = covariance_matrix(model_, points_, sources_);
        chol_lower_ =
            cholesky_with_jitter(cov, model_.sigma_db * model_.sigma_db, &applied_jitter_);
    }
}

PowerField FieldSampler::draw(std::uint64_t seed) const {
    const int np = static_cast<int>(points_.size());
    const int ns = static_cast<int>(sources_.size());

    PowerField field;
    field.points = points_;
    field.sources = sources_;
    field.seed = seed;
    field.shadowing_db = Eigen::MatrixXd::Zero(np, ns);

    if (chol_lower_.size() > 0) {
        Rng rng(seed);
        Eigen::VectorXd z(chol_lower_.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
        const Eigen::VectorXd shadow = chol_lower_ * z;
        for (int s = 0; s < ns; ++s)
            for (int p = 0; p < np; ++p)
                field.shadowing_db(p, s) = shadow(static_cast<Eigen::Index>(s) * np + p);
    }
    field.power_dbm = trend_dbm_ + field.shadowing_db;
    return field;
}

PowerField sample_field(const ShadowingModel& model, const std::vector<Vec3>& points,
                        const SourceSet& sources, std::uint64_t seed) {
    return FieldSampler(model, points, sources).draw(seed);
}

void write_power_field_csv(const PowerField& field, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"x_m", "y_m", "z_m", "source_id", "power_dbm", "shadowing_db"});
    for (size_t p = 0; p < field.points.size(); ++p) {
        for (size_t s = 0; s < field.sources.size(); ++s) {
            csv.field(field.points[p].x);
            csv.field(field.points[p].y);
            csv.field(field.points[p].z);
            csv.field(field.sources[s].id);
            csv.field(field.power_dbm(p, s));
            csv.field(field.shadowing_db(p, s));
            csv.end_row();
        }
    }
}

PowerField read_power_field_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int cx = table.column_index("x_m");
    const int cy = table.column_index("y_m");
    const int cz = table.column_index("z_m");
    const int cid = table.column_index("source_id");
    const int cp = table.column_index("power_dbm");
    const int csh = table.column_index("shadowing_db");

    PowerField field;
    std::vector<std::string> source_order;
    std::map<std::string, int> source_index;
    std::vector<std::tuple<Vec3, std::string, double, double>> rows;
    rows.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        Vec3 pt{std::stod(row[cx]), std::stod(row[cy]), std::stod(row[cz])};
        const std::string& sid = row[cid];
        if (!source_index.count(sid)) {
            source_index[sid] = static_cast<int>(source_order.size());
            source_order.push_back(sid);
        }
        rows.emplace_back(pt, sid, std::stod(row[cp]), std::stod(row[csh]));
    }
    const int ns = static_cast<int>(source_order.size());
    if (ns == 0 || rows.size() % ns != 0)
        fail(Err::IoError, "power field CSV is not a complete point x source table");
    const int np = static_cast<int>(rows.size()) / ns;

    field.sources.resize(ns);
    for (int s = 0; s < ns; ++s) field.sources[s].id = source_order[s];
    field.points.reserve(np);
    field.power_dbm.resize(np, ns);
    field.shadowing_db.resize(np, ns);
    for (int p = 0; p < np; ++p) {
        field.points.push_back(std::get<0>(rows[static_cast<size_t>(p) * ns]));
        for (int s = 0; s < ns; ++s) {
            const auto& row = rows[static_cast<size_t>(p) * ns + s];
            const int si = source_index.at(std::get<1>(row));
            field.power_dbm(p, si) = std::get<2>(row);
            field.shadowing_db(p, si) = std::get<3>(row);
        }
    }
    return field;
}

} // namespace nrdz
