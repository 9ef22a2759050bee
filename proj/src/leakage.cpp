#include "nrdz/leakage.hpp"

#include "nrdz/csv.hpp"

#include <algorithm>
#include <cmath>

namespace nrdz {

void IparReceiver::validate(const ZoneLayout& layout) const {
    if (!(horizontal_distance(position, layout.origin) > layout.r0_m))
        fail(Err::InvalidLayout, "IPAR " + id + " must sit strictly outside the zone");
    if (!std::isfinite(threshold_dbm))
        fail(Err::InvalidLayout, "IPAR " + id + " threshold must be finite");
}

const char* to_string(LeakageVerdict v) {
    switch (v) {
        case LeakageVerdict::Safe: return "SAFE";
        case LeakageVerdict::Marginal: return "MARGINAL";
        case LeakageVerdict::Violation: return "VIOLATION";
    }
    return "?";
}

double aggregate_power_dbm(const std::vector<double>& per_source_dbm) {
    if (per_source_dbm.empty()) fail(Err::EmptyInput, "no per-source powers to aggregate");
    double linear = 0.0;
    for (double dbm : per_source_dbm) {
        if (!std::isfinite(dbm)) fail(Err::EmptyInput, "non-finite power in aggregate");
        linear += std::pow(10.0, dbm / 10.0);
    }
    return 10.0 * std::log10(linear);
}

namespace {

constexpr double kMarginalBandDb = 3.0;

int find_point(const std::vector<Vec3>& points, const Vec3& target) {
    for (size_t i = 0; i < points.size(); ++i)
        if (distance(points[i], target) <= 1e-6) return static_cast<int>(i);
    return -1;
}

LeakageReport assess_impl(const std::vector<Vec3>& points,
                          const std::vector<std::string>& source_ids,
                          const Eigen::MatrixXd& pred_dbm, const Eigen::MatrixXd& variance_db2,
                          const std::vector<IparReceiver>& ipars, double k_sigma) {
    LeakageReport report;
    report.assessments.reserve(ipars.size());
    for (const auto& ipar : ipars) {
        const int idx = find_point(points, ipar.position);
        if (idx < 0)
            fail(Err::MissingPrediction,
                 "no prediction at IPAR " + ipar.id + " position");

        IparAssessment a;
        a.ipar_id = ipar.id;
        a.threshold_dbm = ipar.threshold_dbm;

        std::vector<double> per_source(source_ids.size());
        double max_var = 0.0;
        for (size_t s = 0; s < source_ids.size(); ++s) {
            per_source[s] = pred_dbm(idx, s);
            max_var = std::max(max_var, variance_db2(idx, s));
            a.contributions.push_back({source_ids[s], per_source[s]});
        }
        std::sort(a.contributions.begin(), a.contributions.end(),
                  [](const SourceContribution& x, const SourceContribution& y) {
                      if (x.power_dbm != y.power_dbm) return x.power_dbm > y.power_dbm;
                      return x.source_id < y.source_id;
                  });

        a.predicted_dbm = aggregate_power_dbm(per_source);
        a.margin_db = k_sigma * std::sqrt(max_var);
        const double upper = a.predicted_dbm + a.margin_db;
        if (upper > ipar.threshold_dbm)
            a.verdict = LeakageVerdict::Violation;
        else if (upper <= ipar.threshold_dbm - kMarginalBandDb)
            a.verdict = LeakageVerdict::Safe;
        else
            a.verdict = LeakageVerdict::Marginal;
        report.assessments.push_back(std::move(a));
    }
    return report;
}

template <typename Matrix>
std::vector<ContourPoint> contour_impl(const std::vector<Vec3>& points, const Matrix& pred_dbm,
                                       double level_dbm, const ZoneLayout& layout) {
    std::vector<ContourPoint> out;
    const Eigen::Index nsrc = pred_dbm.cols();
    std::vector<double> per_source(nsrc);
    for (size_t p = 0; p < points.size(); ++p) {
        if (horizontal_distance(points[p], layout.origin) <= layout.r0_m) continue;
        for (Eigen::Index s = 0; s < nsrc; ++s) per_source[s] = pred_dbm(p, s);
        const double agg = aggregate_power_dbm(per_source);
        if (agg >= level_dbm) out.push_back({points[p], agg});
    }
    return out;
}

} // namespace

LeakageReport assess(const RemEstimate& rem, const std::vector<IparReceiver>& ipars,
                     double k_sigma) {
    return assess_impl(rem.points, rem.source_ids, rem.pred_dbm, rem.variance_db2, ipars,
                       k_sigma);
}

LeakageReport assess(const PowerField& truth, const std::vector<IparReceiver>& ipars,
                     double k_sigma) {
    std::vector<std::string> ids;
    for (const auto& s : truth.sources) ids.push_back(s.id);
    const Eigen::MatrixXd zero_var =
        Eigen::MatrixXd::Zero(truth.power_dbm.rows(), truth.power_dbm.cols());
    return assess_impl(truth.points, ids, truth.power_dbm, zero_var, ipars, k_sigma);
}

std::vector<ContourPoint> leakage_contour(const RemEstimate& rem, double level_dbm,
                                          const ZoneLayout& layout) {
    return contour_impl(rem.points, rem.pred_dbm, level_dbm, layout);
}

std::vector<ContourPoint> leakage_contour(const PowerField& truth, double level_dbm,
                                          const ZoneLayout& layout) {
    return contour_impl(truth.points, truth.power_dbm, level_dbm, layout);
}

void write_leakage_csv(const LeakageReport& report, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"ipar_id", "pred_dbm", "margin_db", "threshold_dbm", "verdict"});
    for (const auto& a : report.assessments) {
        csv.field(a.ipar_id);
        csv.field(a.predicted_dbm);
        csv.field(a.margin_db);
        csv.field(a.threshold_dbm);
        csv.field(std::string(to_string(a.verdict)));
        csv.end_row();
    }
}

void write_contributions_csv(const LeakageReport& report, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"ipar_id", "source_id", "contrib_dbm"});
    for (const auto& a : report.assessments) {
        for (const auto& c : a.contributions) {
            csv.field(a.ipar_id);
            csv.field(c.source_id);
            csv.field(c.power_dbm);
            csv.end_row();
        }
    }
}

void write_contour_csv(const std::vector<ContourPoint>& contour, const std::string& path) {
    CsvWriter csv(path);
    csv.header({"x_m", "y_m", "z_m", "agg_dbm"});
    for (const auto& c : contour) {
        csv.field(c.position.x);
        csv.field(c.position.y);
        csv.field(c.position.z);
        csv.field(c.aggregate_dbm);
        csv.end_row();
    }
}

std::vector<IparReceiver> read_ipar_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int cid = table.column_index("ipar_id");
    const int cx = table.column_index("x_m");
    const int cy = table.column_index("y_m");
    const int cz = table.column_index("z_m");
    const int ct = table.column_index("threshold_dbm");
    const int clo = table.column_index("band_low_hz");
    const int chi = table.column_index("band_high_hz");

    std::vector<IparReceiver> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        IparReceiver r;
        r.id = row[cid];
        r.position = Vec3{std::stod(row[cx]), std::stod(row[cy]), std::stod(row[cz])};
        r.threshold_dbm = std::stod(row[ct]);
        r.band_low_hz = std::stod(row[clo]);
        r.band_high_hz = std::stod(row[chi]);
        out.push_back(r);
    }
    return out;
}

} // namespace nrdz
