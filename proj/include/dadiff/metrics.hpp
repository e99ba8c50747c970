#pragma once

#include <map>
#include <string>
#include <vector>

#include "dadiff/tensor.hpp"
#include "dadiff/types.hpp"

namespace dadiff {

double iou(const BoundingBox& a, const BoundingBox& b);
double cle(const BoundingBox& a, const BoundingBox& b);

/// One-pass success score: mean over thresholds {0, 0.05, ..., 1.0} of the
/// fraction of frames with IoU strictly above the threshold.
double success_auc(const std::vector<double>& ious);

/// Fraction of frames with CLE <= threshold (default 20 px).
double precision_at(const std::vector<double>& cles, double threshold = 20.0);

/// Center error normalized per axis by the ground-truth box size; curve
/// over thresholds {0, 0.025, ..., 0.5} with <= comparisons.
double norm_precision_auc(const std::vector<BoundingBox>& pred,
                          const std::vector<BoundingBox>& gt);

/// Frechet-style Gaussian distance between the channel-mean vectors of two
/// feature-map sets: ||mu_d - mu_n||^2 + tr(S_d + S_n - 2 (S_d S_n)^(1/2)).
double discrepancy(const std::vector<FeatureMap>& day_feats,
                   const std::vector<FeatureMap>& night_feats);

/// 100 * (new - old) / old, rounded to one decimal place.
double percent_delta(double old_value, double new_value);

struct MetricReport {
    double success_auc = 0.0;
    double precision_at_20 = 0.0;
    double norm_precision_auc = 0.0;
    std::size_t sequence_count = 0;
    std::map<std::string, MetricReport> per_attribute; // empty in sub-reports
    std::vector<std::string> warnings;

    std::string to_json() const;
    std::string to_table() const;
};

struct SequenceResult {
    std::string name;
    std::vector<BoundingBox> pred;
    std::vector<BoundingBox> gt;
    std::set<std::string> attributes;
};

/// Overall metrics over the union of frames of all sequences, plus one
/// sub-report per attribute over the union of frames of sequences carrying
/// it. Unknown attributes produce a warning, not an error.
MetricReport attribute_report(const std::vector<SequenceResult>& results);

} // namespace dadiff
