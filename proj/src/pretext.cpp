#include "ssvaerr/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssvaerr/errors.hpp"
#include "ssvaerr/labels.hpp"
#include "ssvaerr/ops.hpp"

namespace ssvaerr::pretext {

using namespace diff;

namespace {

void check(bool ok, const std::string& msg) {
    if (!ok) throw ContractError(msg);
}

} // namespace

void PretextConfig::validate() const {
    if (proj_hidden <= 0 || proj_out <= 0 || lira_hidden <= 0)
        throw ConfigError("pretext: layer widths must be positive");
    if (tau_ema < 0.0 || tau_ema > 1.0)
        throw ConfigError("pretext: moving-average momentum must lie in [0,1]");
    if (tau_student <= 0.0 || tau_teacher <= 0.0)
        throw ConfigError("pretext: temperatures must be positive");
    if (tau_teacher >= tau_student)
        throw ConfigError("pretext: teacher temperature must stay below the student's");
    if (center_momentum < 0.0 || center_momentum > 1.0)
        throw ConfigError("pretext: center momentum must lie in [0,1]");
    if (global_views < 0 || local_views < 0)
        throw ConfigError("pretext: view counts must be non-negative");
    if (global_area <= 0.0 || global_area > 1.0 || local_area <= 0.0 || local_area > 1.0)
        throw ConfigError("pretext: crop areas must lie in (0,1]");
}

namespace {

void fill_uniform(Array& a, double bound, KeyedRng& rng) {
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
}

void init_linear(Array& w, const char* name, std::uint64_t seed) {
    KeyedRng rng(fold_key(seed, hash_str(name)));
    fill_uniform(w, std::sqrt(6.0 / static_cast<double>(w.dim(0))), rng);
}

MlpParams make_mlp(int in, int hidden, int out, const char* prefix, std::uint64_t seed) {
    MlpParams p;
    p.w1 = Array({in, hidden});
    p.b1 = Array({hidden});
    p.w2 = Array({hidden, out});
    p.b2 = Array({out});
    init_linear(p.w1, (std::string(prefix) + ".w1").c_str(), seed);
    init_linear(p.w2, (std::string(prefix) + ".w2").c_str(), seed);
    return p;
}

void append_mlp_refs(std::vector<model::ParamRef>& out, const std::string& prefix, MlpParams& p) {
    out.push_back({prefix + ".w1", &p.w1, false, false});
    out.push_back({prefix + ".b1", &p.b1, false, false});
    out.push_back({prefix + ".w2", &p.w2, false, false});
    out.push_back({prefix + ".b2", &p.b2, false, false});
}

} // namespace

PretextState init_pretext(const model::TrunkConfig& tcfg, const PretextConfig& pcfg,
                          int feature_dim, std::uint64_t seed) {
    tcfg.validate();
    pcfg.validate();
    if (feature_dim <= 0) throw ConfigError("pretext: feature dim must be positive");
    PretextState s;
    s.tcfg = tcfg;
    s.pcfg = pcfg;
    s.online = model::init_trunk(tcfg, fold_key(seed, hash_str("pretext.trunk")));
    const int width = model::trunk_output_width(tcfg);
    s.online_proj = make_mlp(width, pcfg.proj_hidden, pcfg.proj_out, "pretext.proj", seed);
    s.predictor = make_mlp(pcfg.proj_out, pcfg.proj_hidden, pcfg.proj_out, "pretext.pred", seed);
    s.target = s.online;
    s.target_proj = s.online_proj;
    s.lira_gru = model::make_gru_cell(width, pcfg.lira_hidden);
    const double gb = 1.0 / std::sqrt(static_cast<double>(pcfg.lira_hidden));
    auto fill_cell = [&](Array& a, const char* name) {
        KeyedRng rng(fold_key(seed, hash_str(name)));
        fill_uniform(a, gb, rng);
    };
    fill_cell(s.lira_gru.wz, "pretext.lira.wz");
    fill_cell(s.lira_gru.uz, "pretext.lira.uz");
    fill_cell(s.lira_gru.wr, "pretext.lira.wr");
    fill_cell(s.lira_gru.ur, "pretext.lira.ur");
    fill_cell(s.lira_gru.wh, "pretext.lira.wh");
    fill_cell(s.lira_gru.uh, "pretext.lira.uh");
    s.lira_w = Array({pcfg.lira_hidden, feature_dim});
    s.lira_b = Array({feature_dim});
    init_linear(s.lira_w, "pretext.lira.out", seed);
    s.dino_center = Array({pcfg.proj_out});
    return s;
}

std::vector<model::ParamRef> online_registry(PretextState& s, const std::string& method) {
    std::vector<model::ParamRef> refs = model::trunk_registry(s.online);
    if (method == "lira") {
        model::append_gru_refs(refs, "lira.gru", s.lira_gru);
        refs.push_back({"lira.out.weight", &s.lira_w, false, false});
        refs.push_back({"lira.out.bias", &s.lira_b, false, false});
    } else if (method == "byol") {
        append_mlp_refs(refs, "proj", s.online_proj);
        append_mlp_refs(refs, "pred", s.predictor);
    } else if (method == "dino") {
        append_mlp_refs(refs, "proj", s.online_proj);
    } else {
        throw ConfigError("unknown pretext method: " + method);
    }
    return refs;
}

std::vector<model::ParamRef> target_registry(PretextState& s) {
    std::vector<model::ParamRef> refs = model::trunk_registry(s.target);
    append_mlp_refs(refs, "proj", s.target_proj);
    return refs;
}

std::vector<model::ParamRef> online_ema_sources(PretextState& s) {
    std::vector<model::ParamRef> refs = model::trunk_registry(s.online);
    append_mlp_refs(refs, "proj", s.online_proj);
    return refs;
}

void ema_update(const std::vector<model::ParamRef>& target,
                const std::vector<model::ParamRef>& online, double tau) {
    check(target.size() == online.size(), "moving average: tensor count mismatch");
    check(tau >= 0.0 && tau <= 1.0, "moving average: momentum must lie in [0,1]");
    for (std::size_t i = 0; i < target.size(); ++i) {
        Array& t = *target[i].array;
        const Array& o = *online[i].array;
        check(t.shape() == o.shape(), "moving average: shape mismatch at " + target[i].name);
        for (std::int64_t j = 0; j < t.size(); ++j) t[j] = tau * t[j] + (1.0 - tau) * o[j];
    }
}

std::vector<View> make_views(const Clip& clip, int out_hw, const PretextConfig& cfg,
                             KeyedRng& rng) {
    check(out_hw > 0, "views: output side must be positive");
    const int H = clip.h(), W = clip.w();
    std::vector<View> views;
    views.reserve(static_cast<std::size_t>(cfg.global_views + cfg.local_views));
    auto one = [&](double area, bool global) {
        const double side = std::sqrt(area);
        const int ch = std::max(1, static_cast<int>(std::lround(side * H)));
        const int cw = std::max(1, static_cast<int>(std::lround(side * W)));
        const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - ch + 1)));
        const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - cw + 1)));
        Clip v = augment::crop(clip, top, left, ch, cw);
        if (rng.bernoulli(0.5)) v = augment::flip_horizontal(v);
        views.push_back({augment::resize_nearest(v, out_hw, out_hw), global});
    };
    for (int i = 0; i < cfg.global_views; ++i) one(cfg.global_area, true);
    for (int i = 0; i < cfg.local_views; ++i) one(cfg.local_area, false);
    return views;
}

MlpNodes lift_mlp(Tape& t, const MlpParams& p, bool trainable) {
    return {t.leaf(p.w1, trainable), t.leaf(p.b1, trainable), t.leaf(p.w2, trainable),
            t.leaf(p.b2, trainable)};
}

NodeId mlp_node(Tape& t, NodeId x, const MlpNodes& m) {
    NodeId h = relu(t, add_bias(t, matmul(t, x, m.w1), m.b1));
    return add_bias(t, matmul(t, h, m.w2), m.b2);
}

NodeId embed_view(Tape& t, const Array& view, const model::TrunkConfig& tcfg,
                  const std::vector<NodeId>& trunk_nodes, const MlpNodes& proj,
                  bool per_frame) {
    check(view.rank() == 3, "embed: view must be [T,H,W]");
    const int T = view.dim(0);
    NodeId clip = t.constant(view);
    clip = reshape(t, clip, {1, T, view.dim(1), view.dim(2)});
    NodeId feats = model::trunk_features(t, clip, tcfg, trunk_nodes);  // [C,T]
    const int C = t.value(feats).dim(0);
    NodeId rows;
    if (per_frame) {
        std::vector<NodeId> frames;
        frames.reserve(static_cast<std::size_t>(T));
        for (int f = 0; f < T; ++f)
            frames.push_back(reshape(t, slice(t, feats, 1, f, 1), {1, C}));
        rows = frames.size() == 1 ? frames[0] : concat(t, frames, 0);
    } else {
        rows = reshape(t, mean_axis(t, feats, 1), {1, C});
    }
    return mlp_node(t, rows, proj);
}

namespace {

double row_cosine(const double* a, const double* b, int k) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < k; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

} // namespace

double byol_loss_value(const Array& q, const Array& z) {
    check(q.rank() == 2 && q.shape() == z.shape(), "prediction loss: outputs must match");
    const int R = q.dim(0), K = q.dim(1);
    double mean_cos = 0.0;
    for (int r = 0; r < R; ++r)
        mean_cos += row_cosine(q.data() + static_cast<std::int64_t>(r) * K,
                               z.data() + static_cast<std::int64_t>(r) * K, K);
    mean_cos /= static_cast<double>(R);
    return 2.0 - 2.0 * mean_cos;
}

NodeId byol_loss_node(Tape& t, NodeId q, const Array& z) {
    check(t.value(q).rank() == 2 && t.value(q).shape() == z.shape(),
          "prediction loss: outputs must match");
    NodeId qn = l2_normalize_last(t, q);
    NodeId zn = l2_normalize_last(t, t.constant(z));
    NodeId cos = mean_all(t, sum_axis(t, mul(t, qn, zn), 1));
    return add_scalar(t, mul_scalar(t, cos, -2.0), 2.0);
}

Array dino_teacher_probs(const Array& logits, const Array& center, double tau_teacher) {
    check(logits.rank() == 2 && center.rank() == 1 && logits.dim(1) == center.dim(0),
          "teacher probs: logits [R,K] need a center of width K");
    check(tau_teacher > 0.0, "teacher probs: temperature must be positive");
    const int R = logits.dim(0), K = logits.dim(1);
    Array probs({R, K});
    for (int r = 0; r < R; ++r) {
        const double* in = logits.data() + static_cast<std::int64_t>(r) * K;
        double* out = probs.data() + static_cast<std::int64_t>(r) * K;
        double hi = -1e308;
        for (int k = 0; k < K; ++k) hi = std::max(hi, (in[k] - center[k]) / tau_teacher);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
            out[k] = std::exp((in[k] - center[k]) / tau_teacher - hi);
            sum += out[k];
        }
        for (int k = 0; k < K; ++k) out[k] /= sum;
    }
    return probs;
}

DinoOut dino_step(Tape& t, const std::vector<NodeId>& student_logits,
                  const std::vector<int>& student_views,
                  const std::vector<Array>& teacher_logits,
                  const std::vector<int>& teacher_views, const Array& center,
                  const PretextConfig& cfg) {
    check(!teacher_logits.empty(), "distillation step: needs at least one global view");
    check(teacher_logits.size() == teacher_views.size() &&
              student_logits.size() == student_views.size() && !student_logits.empty(),
          "distillation step: logits and view indices must pair up");
    const int K = center.dim(0);

    // Student side stays on the tape; the teacher is plain data.
    std::vector<NodeId> student_logp;
    student_logp.reserve(student_logits.size());
    for (NodeId s : student_logits) {
        check(t.value(s).rank() == 2 && t.value(s).dim(1) == K,
              "distillation step: student logits must be [R,K]");
        student_logp.push_back(
            log_op(t, softmax_last(t, mul_scalar(t, s, 1.0 / cfg.tau_student)), 1e-300));
    }

    std::vector<NodeId> pair_losses;
    for (std::size_t i = 0; i < teacher_logits.size(); ++i) {
        Array probs = dino_teacher_probs(teacher_logits[i], center, cfg.tau_teacher);
        const int rows = probs.dim(0);
        for (std::size_t j = 0; j < student_logp.size(); ++j) {
            if (teacher_views[i] == student_views[j]) continue;
            check(t.value(student_logp[j]).dim(0) == rows,
                  "distillation step: row count differs between teacher and student");
            NodeId ce = mul_scalar(t, sum_all(t, mul(t, t.constant(probs), student_logp[j])),
                                   -1.0 / static_cast<double>(rows));
            pair_losses.push_back(ce);
        }
    }
    check(!pair_losses.empty(), "distillation step: no teacher-student pair with distinct views");
    NodeId loss = pair_losses[0];
    for (std::size_t i = 1; i < pair_losses.size(); ++i) loss = add(t, loss, pair_losses[i]);
    loss = mul_scalar(t, loss, 1.0 / static_cast<double>(pair_losses.size()));

    Array mean_logits({K});
    std::int64_t rows = 0;
    for (const Array& tl : teacher_logits) {
        for (int r = 0; r < tl.dim(0); ++r)
            for (int k = 0; k < K; ++k) mean_logits[k] += tl[static_cast<std::int64_t>(r) * K + k];
        rows += tl.dim(0);
    }
    for (int k = 0; k < K; ++k) mean_logits[k] /= static_cast<double>(rows);
    Array new_center({K});
    for (int k = 0; k < K; ++k)
        new_center[k] = cfg.center_momentum * center[k] + (1.0 - cfg.center_momentum) * mean_logits[k];
    return {loss, std::move(new_center)};
}

NodeId lira_loss_node(Tape& t, const Array& clip, const Array& stream,
                      const model::TrunkConfig& tcfg,
                      const std::vector<NodeId>& trunk_nodes,
                      const model::GruCellNodes& cell, NodeId out_w, NodeId out_b) {
    check(clip.rank() == 3, "feature regression: clip must be [T,H,W]");
    check(stream.rank() == 2 && stream.dim(0) == clip.dim(0),
          "feature regression: stream length must match clip frames");
    const int T = clip.dim(0);
    NodeId x = reshape(t, t.constant(clip), {1, T, clip.dim(1), clip.dim(2)});
    NodeId feats = model::trunk_features(t, x, tcfg, trunk_nodes);  // [C,T]
    const int C = t.value(feats).dim(0);
    const int hidden = t.value(cell.bz).dim(0);
    NodeId h = t.constant(Array({1, hidden}));
    std::vector<NodeId> outs;
    outs.reserve(static_cast<std::size_t>(T));
    for (int f = 0; f < T; ++f) {
        NodeId xt = reshape(t, slice(t, feats, 1, f, 1), {1, C});
        h = gru_step_node(t, xt, h, cell);
        outs.push_back(add_bias(t, matmul(t, h, out_w), out_b));
    }
    NodeId pred = outs.size() == 1 ? outs[0] : concat(t, outs, 0);  // [T,D]
    NodeId diff_sq = square(t, sub(t, pred, t.constant(stream)));
    return mean_all(t, diff_sq);
}

namespace {

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
        out << i << ',' << labels::format_double(losses[i]) << '\n';
    if (!out.flush()) throw IoError("short write to " + path);
}

struct LiftedOnline {
    std::vector<NodeId> trunk;
    std::vector<NodeId> rest;
};

LiftedOnline lift_online(Tape& t, const std::vector<model::ParamRef>& refs,
                         std::size_t trunk_count) {
    model::LiftedParams lifted =
        model::lift(t, refs, std::vector<bool>(refs.size(), true));
    LiftedOnline out;
    out.trunk.assign(lifted.nodes.begin(),
                     lifted.nodes.begin() + static_cast<std::ptrdiff_t>(trunk_count));
    out.rest.assign(lifted.nodes.begin() + static_cast<std::ptrdiff_t>(trunk_count),
                    lifted.nodes.end());
    return out;
}

std::vector<NodeId> concat_nodes(const LiftedOnline& n) {
    std::vector<NodeId> all = n.trunk;
    all.insert(all.end(), n.rest.begin(), n.rest.end());
    return all;
}

std::vector<Array> collect_grads(Tape& t, const std::vector<NodeId>& nodes) {
    std::vector<Array> grads;
    grads.reserve(nodes.size());
    for (NodeId n : nodes) grads.push_back(t.grad(n));
    return grads;
}

MlpNodes mlp_from(const std::vector<NodeId>& nodes, std::size_t at) {
    return {nodes[at], nodes[at + 1], nodes[at + 2], nodes[at + 3]};
}

model::GruCellNodes cell_from(const std::vector<NodeId>& nodes, std::size_t at) {
    return {nodes[at],     nodes[at + 1], nodes[at + 2], nodes[at + 3], nodes[at + 4],
            nodes[at + 5], nodes[at + 6], nodes[at + 7], nodes[at + 8]};
}

// Teacher forward outside the gradient tape: values only.
std::vector<Array> teacher_embed(PretextState& s, const std::vector<Array>& views) {
    Tape tt;
    std::vector<model::ParamRef> refs = target_registry(s);
    model::LiftedParams lifted = model::lift(tt, refs, std::vector<bool>(refs.size(), false));
    const std::size_t tcount = model::trunk_registry_size(s.tcfg);
    std::vector<NodeId> trunk(lifted.nodes.begin(),
                              lifted.nodes.begin() + static_cast<std::ptrdiff_t>(tcount));
    MlpNodes proj = mlp_from(lifted.nodes, tcount);
    std::vector<Array> out;
    out.reserve(views.size());
    for (const Array& v : views)
        out.push_back(tt.value(embed_view(tt, v, s.tcfg, trunk, proj, s.pcfg.per_frame)));
    return out;
}

} // namespace

PretrainResult pretrain(const std::string& method, const datagen::DatasetManifest& data,
                        int epochs, std::uint64_t seed, const model::TrunkConfig& tcfg,
                        const PretextConfig& pcfg, const trainer::AdamWConfig& opt_cfg,
                        const std::string& checkpoint_path, const std::string& loss_csv_path) {
    if (method != "lira" && method != "byol" && method != "dino")
        throw ConfigError("unknown pretext method: " + method);
    if (epochs < 0) throw ConfigError("pretext: epochs must be non-negative");
    pcfg.validate();
    if (method == "byol" && pcfg.global_views < 2)
        throw ConfigError("pretext: the prediction objective needs two global views");
    if (method == "dino" && (pcfg.global_views < 1 || pcfg.global_views + pcfg.local_views < 2))
        throw ConfigError("pretext: distillation needs a global view and a second view");

    const std::vector<int> train = data.indices_of("train");
    if (train.empty()) throw ConfigError("pretext: manifest has no training clips");
    const int feature_dim = datagen::load_entry(data, train[0]).features.dim(1);

    PretextState s = init_pretext(tcfg, pcfg, feature_dim, seed);
    std::vector<model::ParamRef> online = online_registry(s, method);
    trainer::AdamW opt(opt_cfg, online, std::vector<bool>(online.size(), true));
    const std::size_t tcount = model::trunk_registry_size(tcfg);

    PretextConfig byol_views = pcfg;
    byol_views.local_views = 0;

    PretrainResult result;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int> order = train;
        KeyedRng order_rng(fold_key(seed, hash_str("pretext.order"),
                                    static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int idx : order) {
            KeyedRng rng(fold_key(seed, hash_str("pretext.step"),
                                  static_cast<std::uint64_t>(idx),
                                  static_cast<std::uint64_t>(epoch)));
            datagen::LabeledClip entry = datagen::load_entry(data, idx);
            if (pcfg.segment_frames > 0 && entry.clip.t() > pcfg.segment_frames)
                entry = datagen::sample_segment(entry, pcfg.segment_frames, rng);

            if (entry.clip.h() < tcfg.input_hw || entry.clip.w() < tcfg.input_hw)
                throw ConfigError("pretext: clip frames smaller than the model input");

            double step_loss = 0.0;
            if (method == "lira") {
                const int hw = tcfg.input_hw;
                const int top = static_cast<int>(
                    rng.below(static_cast<std::uint64_t>(entry.clip.h() - hw + 1)));
                const int left = static_cast<int>(
                    rng.below(static_cast<std::uint64_t>(entry.clip.w() - hw + 1)));
                Clip cropped = augment::crop(entry.clip, top, left, hw, hw);
                Array x = datagen::normalize_frames(cropped.frames, data.mean, data.stddev);
                Tape t;
                LiftedOnline nodes = lift_online(t, online, tcount);
                model::GruCellNodes cell = cell_from(nodes.rest, 0);
                NodeId loss = lira_loss_node(t, x, entry.features, tcfg, nodes.trunk, cell,
                                             nodes.rest[9], nodes.rest[10]);
                t.backward(loss);
                opt.step(collect_grads(t, concat_nodes(nodes)));
                step_loss = t.value(loss)[0];
            } else if (method == "byol") {
                std::vector<View> views = make_views(entry.clip, tcfg.input_hw, byol_views, rng);
                std::vector<Array> normed;
                for (const View& v : views)
                    normed.push_back(
                        datagen::normalize_frames(v.clip.frames, data.mean, data.stddev));
                std::vector<Array> targets = teacher_embed(s, normed);
                Tape t;
                LiftedOnline nodes = lift_online(t, online, tcount);
                MlpNodes proj = mlp_from(nodes.rest, 0);
                MlpNodes pred = mlp_from(nodes.rest, 4);
                NodeId loss = t.constant(Array::scalar(0.0));
                for (int a = 0; a < 2; ++a) {
                    NodeId e = embed_view(t, normed[static_cast<std::size_t>(a)], tcfg,
                                          nodes.trunk, proj, pcfg.per_frame);
                    NodeId q = mlp_node(t, e, pred);
                    loss = add(t, loss,
                               byol_loss_node(t, q, targets[static_cast<std::size_t>(1 - a)]));
                }
                t.backward(loss);
                opt.step(collect_grads(t, concat_nodes(nodes)));
                ema_update(target_registry(s), online_ema_sources(s), pcfg.tau_ema);
                step_loss = t.value(loss)[0];
            } else {
                std::vector<View> views = make_views(entry.clip, tcfg.input_hw, pcfg, rng);
                std::vector<Array> normed;
                std::vector<Array> teacher_in;
                std::vector<int> teacher_idx;
                for (std::size_t v = 0; v < views.size(); ++v) {
                    normed.push_back(
                        datagen::normalize_frames(views[v].clip.frames, data.mean, data.stddev));
                    if (views[v].global) {
                        teacher_in.push_back(normed.back());
                        teacher_idx.push_back(static_cast<int>(v));
                    }
                }
                std::vector<Array> teacher_logits = teacher_embed(s, teacher_in);
                Tape t;
                LiftedOnline nodes = lift_online(t, online, tcount);
                MlpNodes proj = mlp_from(nodes.rest, 0);
                std::vector<NodeId> student;
                std::vector<int> student_idx;
                for (std::size_t v = 0; v < normed.size(); ++v) {
                    student.push_back(
                        embed_view(t, normed[v], tcfg, nodes.trunk, proj, pcfg.per_frame));
                    student_idx.push_back(static_cast<int>(v));
                }
                DinoOut out = dino_step(t, student, student_idx, teacher_logits, teacher_idx,
                                        s.dino_center, pcfg);
                t.backward(out.loss);
                opt.step(collect_grads(t, concat_nodes(nodes)));
                ema_update(target_registry(s), online_ema_sources(s), pcfg.tau_ema);
                if (pcfg.centering) s.dino_center = out.new_center;
                step_loss = t.value(out.loss)[0];
            }
            epoch_loss += step_loss;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    }

    model::save_trunk_checkpoint(checkpoint_path, s.online);
    write_loss_csv(loss_csv_path, result.epoch_losses);
    result.final_state = std::move(s);
    return result;
}

} // namespace ssvaerr::pretext
