#include "dadiff/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace dadiff {

double iou(const BoundingBox& a, const BoundingBox& b) {
    a.validate();
    b.validate();
    double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return inter / uni;
}

double cle(const BoundingBox& a, const BoundingBox& b) {
    return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

double success_auc(const std::vector<double>& ious) {
    if (ious.empty()) throw std::invalid_argument("success_auc: empty IoU list");
    double acc = 0.0;
    for (int k = 0; k <= 20; ++k) {
        double thr = k * 0.05;
        std::size_t n = 0;
        for (double v : ious)
            if (v > thr) ++n;
        acc += static_cast<double>(n) / static_cast<double>(ious.size());
    }
    return acc / 21.0;
}

double precision_at(const std::vector<double>& cles, double threshold) {
    if (cles.empty()) throw std::invalid_argument("precision_at: empty CLE list");
    std::size_t n = 0;
    for (double v : cles)
        if (v <= threshold) ++n;
    return static_cast<double>(n) / static_cast<double>(cles.size());
}

double norm_precision_auc(const std::vector<BoundingBox>& pred,
                          const std::vector<BoundingBox>& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("norm_precision_auc: list length mismatch");
    if (pred.empty()) throw std::invalid_argument("norm_precision_auc: empty lists");
    std::vector<double> errs;
    errs.reserve(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i].w > 0.0) || !(gt[i].h > 0.0))
            throw std::invalid_argument("norm_precision_auc: zero-size ground-truth box");
        errs.push_back(std::hypot((pred[i].cx() - gt[i].cx()) / gt[i].w,
                                  (pred[i].cy() - gt[i].cy()) / gt[i].h));
    }
    double acc = 0.0;
    for (int k = 0; k <= 20; ++k) {
        double thr = k * 0.025;
        std::size_t n = 0;
        for (double e : errs)
            if (e <= thr) ++n;
        acc += static_cast<double>(n) / static_cast<double>(errs.size());
    }
    return acc / 21.0;
}

double discrepancy(const std::vector<FeatureMap>& day_feats,
                   const std::vector<FeatureMap>& night_feats) {
    if (day_feats.size() < 2 || night_feats.size() < 2)
        throw std::invalid_argument("discrepancy: need at least 2 maps per side");

    auto channel_means = [](const std::vector<FeatureMap>& maps) {
        check_feature_map(maps[0], "discrepancy");
        std::size_t c = maps[0].dim(0);
        Eigen::MatrixXd m(static_cast<long>(maps.size()), static_cast<long>(c));
        for (std::size_t i = 0; i < maps.size(); ++i) {
            if (maps[i].rank() != 3 || maps[i].dim(0) != c)
                throw std::invalid_argument("discrepancy: inconsistent map shapes");
            std::size_t hw = maps[i].dim(1) * maps[i].dim(2);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t j = 0; j < hw; ++j) acc += maps[i][ch * hw + j];
                m(static_cast<long>(i), static_cast<long>(ch)) =
                    acc / static_cast<double>(hw);
            }
        }
        return m;
    };

    Eigen::MatrixXd d = channel_means(day_feats);
    Eigen::MatrixXd n = channel_means(night_feats);
    if (d.cols() != n.cols())
        throw std::invalid_argument("discrepancy: channel count mismatch");

    Eigen::VectorXd mu_d = d.colwise().mean();
    Eigen::VectorXd mu_n = n.colwise().mean();
    Eigen::MatrixXd cd = d.rowwise() - mu_d.transpose();
    Eigen::MatrixXd cn = n.rowwise() - mu_n.transpose();
    Eigen::MatrixXd sd = cd.transpose() * cd / static_cast<double>(d.rows() - 1);
    Eigen::MatrixXd sn = cn.transpose() * cn / static_cast<double>(n.rows() - 1);

    // tr((Sd Sn)^(1/2)) via the symmetric form Sd^(1/2) Sn Sd^(1/2)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_d(sd);
    Eigen::VectorXd ev = es_d.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd sqrt_d =
        es_d.eigenvectors() * ev.asDiagonal() * es_d.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(sqrt_d * sn * sqrt_d);
    double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double mean_term = (mu_d - mu_n).squaredNorm();
    double trace_term = sd.trace() + sn.trace() - 2.0 * tr_sqrt;
    return mean_term + trace_term;
}

double percent_delta(double old_value, double new_value) {
    if (!(old_value > 0.0))
        throw std::invalid_argument("percent_delta: baseline must be positive");
    double pct = 100.0 * (new_value - old_value) / old_value;
    return std::round(pct * 10.0) / 10.0;
}

namespace {

MetricReport pooled_metrics(const std::vector<const SequenceResult*>& results) {
    std::vector<double> ious, cles;
    std::vector<BoundingBox> preds, gts;
    for (const SequenceResult* r : results) {
        if (r->pred.size() != r->gt.size())
            throw std::invalid_argument("attribute_report: sequence '" + r->name +
                                        "' has " + std::to_string(r->pred.size()) +
                                        " predictions but " + std::to_string(r->gt.size()) +
                                        " ground-truth boxes");
        for (std::size_t i = 0; i < r->pred.size(); ++i) {
            ious.push_back(iou(r->pred[i], r->gt[i]));
            cles.push_back(cle(r->pred[i], r->gt[i]));
            preds.push_back(r->pred[i]);
            gts.push_back(r->gt[i]);
        }
    }
    MetricReport rep;
    rep.sequence_count = results.size();
    rep.success_auc = success_auc(ious);
    rep.precision_at_20 = precision_at(cles);
    rep.norm_precision_auc = norm_precision_auc(preds, gts);
    return rep;
}

} // namespace

MetricReport attribute_report(const std::vector<SequenceResult>& results) {
    if (results.empty()) throw std::invalid_argument("attribute_report: no sequences");
    std::vector<const SequenceResult*> all;
    for (const auto& r : results) all.push_back(&r);
    MetricReport rep = pooled_metrics(all);

    std::map<std::string, std::vector<const SequenceResult*>> by_attr;
    for (const auto& r : results)
        for (const std::string& a : r.attributes) {
            if (!is_known_attribute(a))
                rep.warnings.push_back("unknown attribute '" + a + "' on sequence '" +
                                       r.name + "'");
            by_attr[a].push_back(&r);
        }
    for (auto& [attr, seqs] : by_attr) rep.per_attribute[attr] = pooled_metrics(seqs);
    return rep;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["success_auc"] = success_auc;
    j["precision_at_20"] = precision_at_20;
    j["norm_precision_auc"] = norm_precision_auc;
    j["sequence_count"] = sequence_count;
    for (const auto& [attr, sub] : per_attribute) {
        nlohmann::json s;
        s["success_auc"] = sub.success_auc;
        s["precision_at_20"] = sub.precision_at_20;
        s["norm_precision_auc"] = sub.norm_precision_auc;
        s["sequence_count"] = sub.sequence_count;
        j["attributes"][attr] = s;
    }
    if (!warnings.empty()) j["warnings"] = warnings;
    return j.dump(2);
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %8s %8s %10s %6s\n", "slice", "succ",
                  "prec20", "normprec", "seqs");
    os << line;
    auto row = [&](const std::string& name, const MetricReport& r) {
        std::snprintf(line, sizeof(line), "%-10s %8.3f %8.3f %10.3f %6zu\n", name.c_str(),
                      r.success_auc, r.precision_at_20, r.norm_precision_auc,
                      r.sequence_count);
        os << line;
    };
    row("overall", *this);
    for (const auto& [attr, sub] : per_attribute) row(attr, sub);
    return os.str();
}

} // namespace dadiff
