#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssvaerr/ops.hpp"
#include "ssvaerr/rng.hpp"

namespace ssvaerr::model {

using diff::Array;
using diff::NodeId;
using diff::Tape;

struct TrunkConfig {
    int input_hw = 48;
    std::vector<int> widths = {8, 16, 32, 64};
    int frontend_kt = 5;
    int frontend_khw = 7;
    bool coord_channels = true;  // fixed x/y position ramps appended to the input

    bool operator==(const TrunkConfig&) const = default;
    void validate() const;
    int input_channels() const { return coord_channels ? 3 : 1; }
};

struct HeadConfig {
    int hidden = 64;
    int classes_per_dim = 20;
    bool bidirectional = false;

    bool operator==(const HeadConfig&) const = default;
    void validate() const;
    int gru_output() const { return bidirectional ? 2 * hidden : hidden; }
};

// One residual stage: optional strided transition conv into the stage width,
// then a two-conv block with an identity shortcut.
struct StageParams {
    bool has_down = false;
    Array down_kernel, down_scale, down_shift;
    Array a_kernel, a_scale, a_shift;
    Array b_kernel, b_scale, b_shift;
};

struct TrunkParams {
    TrunkConfig cfg;
    Array frontend_kernel;  // [W0, Cin, kt, khw, khw]
    Array frontend_scale, frontend_shift;
    std::vector<StageParams> stages;
};

struct GruCell {
    Array wz, uz, bz;
    Array wr, ur, br;
    Array wh, uh, bh;
};

struct HeadParams {
    HeadConfig cfg;
    GruCell gru;
    GruCell gru_rev;  // used only when bidirectional
    Array reg_w, reg_b;  // [gru_out, 2], [2]
    Array cls_w, cls_b;  // [gru_out, 2*L], [2*L]
};

// ---- parameter registry ----

struct ParamRef {
    std::string name;
    Array* array;
    bool in_frontend;
    bool in_trunk;  // frontend + stages
};

std::vector<ParamRef> param_registry(TrunkParams& trunk, HeadParams& heads);
std::vector<ParamRef> trunk_registry(TrunkParams& trunk);

enum class FreezePreset { None, Frontend, Trunk };

FreezePreset parse_freeze(const std::string& name);
std::string freeze_name(FreezePreset p);

// Per-parameter trainability in registry order.
std::vector<bool> freeze_mask(const std::vector<ParamRef>& params, FreezePreset preset);

// ---- init ----

TrunkParams init_trunk(const TrunkConfig& cfg, std::uint64_t seed);
HeadParams init_heads(const HeadConfig& cfg, int trunk_out, std::uint64_t seed);

// ---- forward ----

// Node-space mirror of the parameter structs; frozen entries are constants.
struct LiftedParams {
    std::vector<NodeId> nodes;  // registry order
};

LiftedParams lift(Tape& t, const std::vector<ParamRef>& params, const std::vector<bool>& trainable);

struct ForwardNodes {
    NodeId reg;       // [B,T,2]
    NodeId logits;    // [B,T,2,L]
    NodeId features;  // [B,T,gru_out]
};

// clip_batch: [B,T,H,W], already normalized. Params come from `lift` over
// param_registry(trunk, heads) so indices line up with the registry order.
ForwardNodes forward_graph(Tape& t, NodeId clip_batch, const TrunkConfig& tcfg,
                           const HeadConfig& hcfg, const LiftedParams& params);

// Number of trunk tensors in registry order (what trunk_features consumes).
std::size_t trunk_registry_size(const TrunkConfig& cfg);

// Trunk applied to a single clip node [1,T,H,W]: coord planes, causal
// frontend, residual stages, spatial pooling. Returns [C_out,T].
// trunk_params must be exactly the trunk slice of the registry order.
NodeId trunk_features(Tape& t, NodeId clip, const TrunkConfig& cfg,
                      const std::vector<NodeId>& trunk_params);

// Tape handles for one recurrent cell, in registry order.
struct GruCellNodes {
    NodeId wz, uz, bz, wr, ur, br, wh, uh, bh;
};

GruCellNodes lift_gru_cell(Tape& t, const GruCell& cell, bool trainable);

// One recurrence step on a [B,C] input given [B,hidden] state.
NodeId gru_step_node(Tape& t, NodeId x, NodeId h, const GruCellNodes& cell);

// Zero-filled cell of the right shapes for a given input width.
GruCell make_gru_cell(int input_width, int hidden);

// Appends the cell's nine tensors to a registry, names prefixed "<prefix>.".
void append_gru_refs(std::vector<ParamRef>& out, const std::string& prefix, GruCell& cell);

struct ForwardResult {
    Array reg;
    Array logits;
    Array features;
};

// Convenience inference wrapper: builds a gradient-free graph internally.
ForwardResult forward(const Array& clip_batch, TrunkParams& trunk, HeadParams& heads);

// Per-frame trunk output width (GRU input size).
int trunk_output_width(const TrunkConfig& cfg);

// ---- transfer / freeze ----

// Copies every trunk tensor from `pretext` into `downstream`; heads are not
// touched. Configurations must match exactly.
void transfer_weights(const TrunkParams& pretext, TrunkParams& downstream);

// ---- checkpoints ----

void save_checkpoint(const std::string& path, TrunkParams& trunk, HeadParams& heads);
void load_checkpoint(const std::string& path, TrunkParams& trunk, HeadParams& heads);

// Trunk-only checkpoints, as emitted by the pretext stage.
void save_trunk_checkpoint(const std::string& path, TrunkParams& trunk);
TrunkParams load_trunk_checkpoint(const std::string& path);

// Read just the shapes/config: returns configs stored in the file.
std::pair<TrunkConfig, HeadConfig> peek_checkpoint(const std::string& path);

// ---- reporting ----

std::int64_t param_count(TrunkParams& trunk, HeadParams& heads);
std::string describe(TrunkParams& trunk, HeadParams& heads);

} // namespace ssvaerr::model
