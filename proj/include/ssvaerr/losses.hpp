#pragma once

#include <string>
#include <vector>

#include "ssvaerr/labels.hpp"
#include "ssvaerr/ops.hpp"

namespace ssvaerr::losses {

using diff::Array;
using diff::NodeId;
using diff::Tape;

// Weights for the four loss terms, split by affect dimension.
struct DimWeights {
    double ccc = 0.0;
    double mse = 0.0;
    double ce = 0.0;
    double ncce = 0.0;
};

struct CompositeLossConfig {
    DimWeights valence;
    DimWeights arousal;
    // Eq. 5 weight is constant by default; enabling this differentiates
    // through the cost norm as well.
    bool grad_through_cost_norm = false;

    void validate() const;
};

CompositeLossConfig parse_loss_config_text(const std::string& text);
CompositeLossConfig read_loss_config(const std::string& path);
std::string loss_config_text(const CompositeLossConfig& cfg);

// Regression/classification outputs for one clip segment, column 0 is
// valence, column 1 arousal.
struct PredictionBatch {
    NodeId reg;     // [F,2]
    NodeId logits;  // [F,2,L]
    labels::AffectSeries targets;
    Array onehot_valence;  // [F,L]
    Array onehot_arousal;  // [F,L]
};

PredictionBatch make_batch(Tape& t, NodeId reg, NodeId logits,
                           labels::AffectSeries targets, const labels::Discretizer& d);

// ---- metric (plain) forms ----

// Lin's concordance correlation with population moments; throws
// DegenerateSignal when the denominator collapses (both series constant).
double ccc_metric(const std::vector<double>& y, const std::vector<double>& yhat);

// Concatenates per-video series in the given order, then one ccc_metric.
double combined_ccc(const std::vector<std::vector<double>>& y_per_video,
                    const std::vector<std::vector<double>>& yhat_per_video);

double cost_norm_value(const Array& onehot, const Array& probs,
                       const std::vector<double>& centroids);

// ---- differentiable forms ----

// eps > 0 keeps the denominator away from zero during training.
NodeId ccc_node(Tape& t, NodeId y, NodeId yhat, double eps);
NodeId ccc_loss_node(Tape& t, NodeId y, NodeId yhat);  // 1 - ccc with eps=1e-8
NodeId mse_node(Tape& t, NodeId y, NodeId yhat);
NodeId ce_node(Tape& t, NodeId onehot, NodeId logits);  // both [F,L]
NodeId ncce_node(Tape& t, NodeId onehot, NodeId logits,
                 const std::vector<double>& centroids, bool grad_through_norm);

struct LossBreakdown {
    NodeId total;
    // per-dimension term values at the forward point, for logging
    double valence_ccc = 0, valence_mse = 0, valence_ce = 0, valence_ncce = 0;
    double arousal_ccc = 0, arousal_mse = 0, arousal_ce = 0, arousal_ncce = 0;
};

// Weighted Eq. 6 sum over both dimensions; only the first valid_frames
// rows participate (trailing padding is excluded).
LossBreakdown composite_loss(Tape& t, const PredictionBatch& batch,
                             const CompositeLossConfig& cfg,
                             const std::vector<double>& centroids,
                             int valid_frames = -1);

} // namespace ssvaerr::losses
