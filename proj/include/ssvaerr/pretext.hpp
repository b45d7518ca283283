#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssvaerr/augment.hpp"
#include "ssvaerr/datagen.hpp"
#include "ssvaerr/model.hpp"
#include "ssvaerr/optim.hpp"
#include "ssvaerr/rng.hpp"
#include "ssvaerr/tape.hpp"

namespace ssvaerr::pretext {

using augment::Clip;
using diff::Array;
using diff::NodeId;
using diff::Tape;

// Two-layer perceptron: x -> relu(x w1 + b1) w2 + b2.
struct MlpParams {
    Array w1, b1, w2, b2;
};

struct MlpNodes {
    NodeId w1, b1, w2, b2;
};

struct PretextConfig {
    int proj_hidden = 64;
    int proj_out = 32;
    double tau_ema = 0.996;
    double tau_student = 0.1;
    double tau_teacher = 0.04;  // kept below tau_student so the teacher sharpens
    double center_momentum = 0.9;
    int global_views = 2;
    int local_views = 2;
    double global_area = 0.75;
    double local_area = 0.4;
    bool per_frame = false;  // embed every frame instead of the time-pooled clip
    bool centering = true;
    int lira_hidden = 64;
    int segment_frames = 32;  // temporal window per step; <= 0 uses whole clips

    void validate() const;
};

// Online half trains by gradient; the target half moves only through
// ema_update. The recurrent head + output map serve feature regression.
struct PretextState {
    model::TrunkConfig tcfg;
    PretextConfig pcfg;
    model::TrunkParams online;
    MlpParams online_proj;
    MlpParams predictor;
    model::TrunkParams target;
    MlpParams target_proj;
    model::GruCell lira_gru;
    Array lira_w;       // [lira_hidden, D]
    Array lira_b;       // [D]
    Array dino_center;  // [proj_out]
};

PretextState init_pretext(const model::TrunkConfig& tcfg, const PretextConfig& pcfg,
                          int feature_dim, std::uint64_t seed);

// Parameters the optimizer updates under the given method.
std::vector<model::ParamRef> online_registry(PretextState& s, const std::string& method);

// Moving-average pair: destination tensors and their online counterparts,
// positionally aligned.
std::vector<model::ParamRef> target_registry(PretextState& s);
std::vector<model::ParamRef> online_ema_sources(PretextState& s);

// p_t <- tau * p_t + (1 - tau) * p_o for every tensor pair.
void ema_update(const std::vector<model::ParamRef>& target,
                const std::vector<model::ParamRef>& online, double tau);

// ---- views ----

struct View {
    Clip clip;
    bool global;
};

// Per view: random crop with side = frame side * sqrt(area), coin-flip
// mirror, nearest resize to out_hw. Global views come first.
std::vector<View> make_views(const Clip& clip, int out_hw, const PretextConfig& cfg,
                             KeyedRng& rng);

// ---- graph pieces ----

MlpNodes lift_mlp(Tape& t, const MlpParams& p, bool trainable);
NodeId mlp_node(Tape& t, NodeId x, const MlpNodes& m);

// Trunk + projector on one normalized view [T,H,W]. Rows of the [R,K] result
// are the time-pooled clip (R=1) or each frame (R=T) under per_frame.
NodeId embed_view(Tape& t, const Array& view, const model::TrunkConfig& tcfg,
                  const std::vector<NodeId>& trunk_nodes, const MlpNodes& proj,
                  bool per_frame);

// ---- objectives ----

// 2 - 2 * mean row cosine, one ordering; range [0,4]. The node form treats z
// as data (no gradient through the target branch).
double byol_loss_value(const Array& q, const Array& z);
NodeId byol_loss_node(Tape& t, NodeId q, const Array& z);

// Row-wise softmax((logits - center) / tau_teacher).
Array dino_teacher_probs(const Array& logits, const Array& center, double tau_teacher);

struct DinoOut {
    NodeId loss;
    Array new_center;
};

// Cross-entropy from sharpened teacher to student, averaged over
// (teacher view, student view) pairs with differing indices; also returns the
// momentum-updated center over all teacher logits.
DinoOut dino_step(Tape& t, const std::vector<NodeId>& student_logits,
                  const std::vector<int>& student_views,
                  const std::vector<Array>& teacher_logits,
                  const std::vector<int>& teacher_views, const Array& center,
                  const PretextConfig& cfg);

// Per-frame feature regression: trunk -> recurrent head -> linear map,
// mean-squared error against the [T,D] stream.
NodeId lira_loss_node(Tape& t, const Array& clip, const Array& stream,
                      const model::TrunkConfig& tcfg,
                      const std::vector<NodeId>& trunk_nodes,
                      const model::GruCellNodes& cell, NodeId out_w, NodeId out_b);

// ---- driver ----

struct PretrainResult {
    std::vector<double> epoch_losses;
    PretextState final_state;
};

// Runs the chosen objective over the manifest's training split, writes the
// trunk checkpoint and a per-epoch loss CSV. Deterministic per seed.
PretrainResult pretrain(const std::string& method, const datagen::DatasetManifest& data,
                        int epochs, std::uint64_t seed, const model::TrunkConfig& tcfg,
                        const PretextConfig& pcfg, const trainer::AdamWConfig& opt_cfg,
                        const std::string& checkpoint_path, const std::string& loss_csv_path);

} // namespace ssvaerr::pretext
