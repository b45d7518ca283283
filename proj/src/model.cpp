#include "ssvaerr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ssvaerr::model {

void TrunkConfig::validate() const {
    if (input_hw < 8) throw ConfigError("trunk: input size too small");
    if (widths.empty()) throw ConfigError("trunk: need at least one stage");
    for (int w : widths)
        if (w < 1) throw ConfigError("trunk: stage widths must be positive");
    if (frontend_kt < 1 || frontend_kt % 2 == 0)
        throw ConfigError("trunk: temporal kernel must be odd and positive");
    if (frontend_khw < 1 || frontend_khw % 2 == 0)
        throw ConfigError("trunk: spatial kernel must be odd and positive");
}

void HeadConfig::validate() const {
    if (hidden < 1) throw ConfigError("heads: hidden size must be positive");
    if (classes_per_dim < 2) throw ConfigError("heads: need at least two classes");
}

int trunk_output_width(const TrunkConfig& cfg) { return cfg.widths.back(); }

// ---- registry ----

namespace {

void push_cell(std::vector<ParamRef>& out, const std::string& prefix, GruCell& c) {
    out.push_back({prefix + ".wz", &c.wz, false, false});
    out.push_back({prefix + ".uz", &c.uz, false, false});
    out.push_back({prefix + ".bz", &c.bz, false, false});
    out.push_back({prefix + ".wr", &c.wr, false, false});
    out.push_back({prefix + ".ur", &c.ur, false, false});
    out.push_back({prefix + ".br", &c.br, false, false});
    out.push_back({prefix + ".wh", &c.wh, false, false});
    out.push_back({prefix + ".uh", &c.uh, false, false});
    out.push_back({prefix + ".bh", &c.bh, false, false});
}

} // namespace

std::vector<ParamRef> trunk_registry(TrunkParams& trunk) {
    std::vector<ParamRef> out;
    out.push_back({"frontend.kernel", &trunk.frontend_kernel, true, true});
    out.push_back({"frontend.scale", &trunk.frontend_scale, true, true});
    out.push_back({"frontend.shift", &trunk.frontend_shift, true, true});
    for (std::size_t s = 0; s < trunk.stages.size(); ++s) {
        StageParams& st = trunk.stages[s];
        const std::string p = "stage" + std::to_string(s + 1);
        if (st.has_down) {
            out.push_back({p + ".down.kernel", &st.down_kernel, false, true});
            out.push_back({p + ".down.scale", &st.down_scale, false, true});
            out.push_back({p + ".down.shift", &st.down_shift, false, true});
        }
        out.push_back({p + ".a.kernel", &st.a_kernel, false, true});
        out.push_back({p + ".a.scale", &st.a_scale, false, true});
        out.push_back({p + ".a.shift", &st.a_shift, false, true});
        out.push_back({p + ".b.kernel", &st.b_kernel, false, true});
        out.push_back({p + ".b.scale", &st.b_scale, false, true});
        out.push_back({p + ".b.shift", &st.b_shift, false, true});
    }
    return out;
}

std::vector<ParamRef> param_registry(TrunkParams& trunk, HeadParams& heads) {
    std::vector<ParamRef> out = trunk_registry(trunk);
    push_cell(out, "gru", heads.gru);
    if (heads.cfg.bidirectional) push_cell(out, "gru_rev", heads.gru_rev);
    out.push_back({"reg.weight", &heads.reg_w, false, false});
    out.push_back({"reg.bias", &heads.reg_b, false, false});
    out.push_back({"cls.weight", &heads.cls_w, false, false});
    out.push_back({"cls.bias", &heads.cls_b, false, false});
    return out;
}

FreezePreset parse_freeze(const std::string& name) {
    if (name == "none") return FreezePreset::None;
    if (name == "frontend") return FreezePreset::Frontend;
    if (name == "trunk") return FreezePreset::Trunk;
    throw ConfigError("unknown freeze preset: " + name + " (expected none|frontend|trunk)");
}

std::string freeze_name(FreezePreset p) {
    switch (p) {
        case FreezePreset::None: return "none";
        case FreezePreset::Frontend: return "frontend";
        case FreezePreset::Trunk: return "trunk";
    }
    return "none";
}

std::vector<bool> freeze_mask(const std::vector<ParamRef>& params, FreezePreset preset) {
    std::vector<bool> trainable(params.size(), true);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (preset == FreezePreset::Frontend && params[i].in_frontend) trainable[i] = false;
        if (preset == FreezePreset::Trunk && params[i].in_trunk) trainable[i] = false;
    }
    return trainable;
}

// ---- init ----

namespace {

TrunkParams make_trunk_shapes(const TrunkConfig& cfg) {
    cfg.validate();
    TrunkParams p;
    p.cfg = cfg;
    const int w0 = cfg.widths[0];
    p.frontend_kernel =
        Array({w0, cfg.input_channels(), cfg.frontend_kt, cfg.frontend_khw, cfg.frontend_khw});
    p.frontend_scale = Array({w0});
    p.frontend_shift = Array({w0});
    int prev = w0;
    for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
        StageParams st;
        const int w = cfg.widths[s];
        st.has_down = s > 0;
        if (st.has_down) {
            st.down_kernel = Array({w, prev, 3, 3});
            st.down_scale = Array({w});
            st.down_shift = Array({w});
        } else {
            check(prev == w, "trunk: frontend width must match first stage width");
        }
        st.a_kernel = Array({w, w, 3, 3});
        st.a_scale = Array({w});
        st.a_shift = Array({w});
        st.b_kernel = Array({w, w, 3, 3});
        st.b_scale = Array({w});
        st.b_shift = Array({w});
        p.stages.push_back(std::move(st));
        prev = w;
    }
    return p;
}

HeadParams make_head_shapes(const HeadConfig& cfg, int trunk_out) {
    cfg.validate();
    check(trunk_out > 0, "heads: trunk output width must be positive");
    HeadParams p;
    p.cfg = cfg;
    auto cell = [&](GruCell& c) {
        c.wz = Array({trunk_out, cfg.hidden});
        c.uz = Array({cfg.hidden, cfg.hidden});
        c.bz = Array({cfg.hidden});
        c.wr = Array({trunk_out, cfg.hidden});
        c.ur = Array({cfg.hidden, cfg.hidden});
        c.br = Array({cfg.hidden});
        c.wh = Array({trunk_out, cfg.hidden});
        c.uh = Array({cfg.hidden, cfg.hidden});
        c.bh = Array({cfg.hidden});
    };
    cell(p.gru);
    if (cfg.bidirectional) cell(p.gru_rev);
    const int g = cfg.gru_output();
    p.reg_w = Array({g, 2});
    p.reg_b = Array({2});
    p.cls_w = Array({g, 2 * cfg.classes_per_dim});
    p.cls_b = Array({2 * cfg.classes_per_dim});
    return p;
}

void fill_uniform(Array& a, double bound, KeyedRng& rng) {
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
}

void fill_named(const ParamRef& ref, int hidden, std::uint64_t seed) {
    Array& a = *ref.array;
    KeyedRng rng(fold_key(seed, hash_str(ref.name.c_str())));
    const bool is_gru = ref.name.rfind("gru", 0) == 0;
    const bool is_kernel = ref.name.size() > 7 &&
                           ref.name.compare(ref.name.size() - 7, 7, ".kernel") == 0;
    const bool is_weight = ref.name.size() > 7 &&
                           ref.name.compare(ref.name.size() - 7, 7, ".weight") == 0;
    const bool is_scale = ref.name.size() > 6 &&
                          ref.name.compare(ref.name.size() - 6, 6, ".scale") == 0;
    if (is_gru) {
        // weights named .w*/.u*, biases .b*
        const char kind = ref.name[ref.name.size() - 2];
        if (kind == 'b') return;  // zeros
        fill_uniform(a, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
        return;
    }
    if (is_kernel) {
        const std::int64_t fan_in = a.size() / a.dim(0);
        fill_uniform(a, std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
        return;
    }
    if (is_weight) {
        fill_uniform(a, std::sqrt(6.0 / static_cast<double>(a.dim(0))), rng);
        return;
    }
    if (is_scale)
        for (std::int64_t i = 0; i < a.size(); ++i) a[i] = 1.0;
    // .shift and .bias stay zero
}

} // namespace

TrunkParams init_trunk(const TrunkConfig& cfg, std::uint64_t seed) {
    TrunkParams p = make_trunk_shapes(cfg);
    for (const ParamRef& ref : trunk_registry(p)) fill_named(ref, 1, seed);
    return p;
}

GruCell make_gru_cell(int input_width, int hidden) {
    check(input_width > 0 && hidden > 0, "recurrent cell dims must be positive");
    GruCell c;
    c.wz = Array({input_width, hidden});
    c.uz = Array({hidden, hidden});
    c.bz = Array({hidden});
    c.wr = Array({input_width, hidden});
    c.ur = Array({hidden, hidden});
    c.br = Array({hidden});
    c.wh = Array({input_width, hidden});
    c.uh = Array({hidden, hidden});
    c.bh = Array({hidden});
    return c;
}

void append_gru_refs(std::vector<ParamRef>& out, const std::string& prefix, GruCell& cell) {
    push_cell(out, prefix, cell);
}

HeadParams init_heads(const HeadConfig& cfg, int trunk_out, std::uint64_t seed) {
    HeadParams p = make_head_shapes(cfg, trunk_out);
    std::vector<ParamRef> refs;
    push_cell(refs, "gru", p.gru);
    if (cfg.bidirectional) push_cell(refs, "gru_rev", p.gru_rev);
    refs.push_back({"reg.weight", &p.reg_w, false, false});
    refs.push_back({"reg.bias", &p.reg_b, false, false});
    refs.push_back({"cls.weight", &p.cls_w, false, false});
    refs.push_back({"cls.bias", &p.cls_b, false, false});
    for (const ParamRef& ref : refs) fill_named(ref, cfg.hidden, seed);
    return p;
}

// ---- forward ----

LiftedParams lift(Tape& t, const std::vector<ParamRef>& params,
                  const std::vector<bool>& trainable) {
    check(params.size() == trainable.size(), "lift: mask size mismatch");
    LiftedParams out;
    out.nodes.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        out.nodes.push_back(t.leaf(*params[i].array, trainable[i]));
    return out;
}

namespace {

using namespace ssvaerr::diff;

struct Cursor {
    const std::vector<NodeId>* nodes;
    std::size_t i = 0;
    NodeId next() {
        check(i < nodes->size(), "forward: parameter list too short");
        return (*nodes)[i++];
    }
};

GruCellNodes take_cell(Cursor& c) {
    GruCellNodes g;
    g.wz = c.next();
    g.uz = c.next();
    g.bz = c.next();
    g.wr = c.next();
    g.ur = c.next();
    g.br = c.next();
    g.wh = c.next();
    g.uh = c.next();
    g.bh = c.next();
    return g;
}

Array coord_planes(int T, int H, int W) {
    Array c({2, T, H, W});
    for (int tt = 0; tt < T; ++tt)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::int64_t base = (static_cast<std::int64_t>(tt) * H + y) * W + x;
                c[base] = W > 1 ? 2.0 * x / (W - 1) - 1.0 : 0.0;
                c[static_cast<std::int64_t>(T) * H * W + base] =
                    H > 1 ? 2.0 * y / (H - 1) - 1.0 : 0.0;
            }
    return c;
}

} // namespace

std::size_t trunk_registry_size(const TrunkConfig& cfg) {
    return 3 + 6 * cfg.widths.size() + 3 * (cfg.widths.size() - 1);
}

NodeId gru_step_node(Tape& t, NodeId x, NodeId h, const GruCellNodes& g) {
    NodeId z = sigmoid(t, add_bias(t, add(t, matmul(t, x, g.wz), matmul(t, h, g.uz)), g.bz));
    NodeId r = sigmoid(t, add_bias(t, add(t, matmul(t, x, g.wr), matmul(t, h, g.ur)), g.br));
    NodeId rh = mul(t, r, h);
    NodeId cand = tanh_op(t, add_bias(t, add(t, matmul(t, x, g.wh), matmul(t, rh, g.uh)), g.bh));
    NodeId one_minus_z = add_scalar(t, mul_scalar(t, z, -1.0), 1.0);
    return add(t, mul(t, one_minus_z, h), mul(t, z, cand));
}

GruCellNodes lift_gru_cell(Tape& t, const GruCell& cell, bool trainable) {
    auto one = [&](const Array& a) { return t.leaf(a, trainable); };
    GruCellNodes g;
    g.wz = one(cell.wz);
    g.uz = one(cell.uz);
    g.bz = one(cell.bz);
    g.wr = one(cell.wr);
    g.ur = one(cell.ur);
    g.br = one(cell.br);
    g.wh = one(cell.wh);
    g.uh = one(cell.uh);
    g.bh = one(cell.bh);
    return g;
}

NodeId trunk_features(Tape& t, NodeId clip, const TrunkConfig& cfg,
                      const std::vector<NodeId>& trunk_params) {
    const Array& in = t.value(clip);
    check(in.rank() == 4 && in.dim(0) == 1,
          "trunk: expected [1,T,H,W], got " + Array::shape_str(in.shape()));
    const int T = in.dim(1), H = in.dim(2), W = in.dim(3);
    check(H == cfg.input_hw && W == cfg.input_hw,
          "trunk: input is " + std::to_string(H) + "x" + std::to_string(W) + ", model expects " +
              std::to_string(cfg.input_hw) + "x" + std::to_string(cfg.input_hw));
    check(T >= 1, "trunk: empty clip");
    check(trunk_params.size() == trunk_registry_size(cfg), "trunk: parameter list size mismatch");

    Cursor cur{&trunk_params};
    const NodeId fe_k = cur.next(), fe_s = cur.next(), fe_b = cur.next();
    const Conv3dSpec fe_spec{{1, 2, 2}, {0, cfg.frontend_khw / 2, cfg.frontend_khw / 2}};
    const Conv3dSpec keep_spec{{1, 1, 1}, {0, 1, 1}};
    const Conv3dSpec down_spec{{1, 2, 2}, {0, 1, 1}};

    // stage kernels are stored 2-D; run them as temporal-size-1 3-D convs so a
    // whole clip goes through in one op
    auto as5d = [&](NodeId k) {
        const Array& ka = t.value(k);
        return reshape(t, k, {ka.dim(0), ka.dim(1), 1, ka.dim(2), ka.dim(3)});
    };

    NodeId x = clip;
    if (cfg.coord_channels) x = concat(t, {x, t.constant(coord_planes(T, H, W))}, 0);
    // Causal temporal padding: every output frame may only see the past, so
    // the kt-1 pad frames all go on the left.
    if (cfg.frontend_kt > 1)
        x = concat(t, {t.constant(Array({cfg.input_channels(), cfg.frontend_kt - 1, H, W})), x}, 1);
    x = relu(t, channel_affine(t, conv3d(t, x, fe_k, fe_spec), fe_s, fe_b));
    for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
        if (s > 0) {
            const NodeId dk = cur.next(), ds = cur.next(), db = cur.next();
            x = relu(t, channel_affine(t, conv3d(t, x, as5d(dk), down_spec), ds, db));
        }
        const NodeId ak = cur.next(), as_ = cur.next(), ab = cur.next();
        const NodeId bk = cur.next(), bs = cur.next(), bb = cur.next();
        NodeId y = relu(t, channel_affine(t, conv3d(t, x, as5d(ak), keep_spec), as_, ab));
        y = channel_affine(t, conv3d(t, y, as5d(bk), keep_spec), bs, bb);
        x = relu(t, add(t, x, y));
    }
    const Array& xa = t.value(x);  // [C,T,h,w]
    const int C = trunk_output_width(cfg);
    NodeId flat = reshape(t, x, {C, T, xa.dim(2) * xa.dim(3)});
    return mean_axis(t, flat, 2);  // [C,T]
}

ForwardNodes forward_graph(Tape& t, NodeId clip_batch, const TrunkConfig& tcfg,
                           const HeadConfig& hcfg, const LiftedParams& params) {
    const Array& in = t.value(clip_batch);
    check(in.rank() == 4, "forward: expected [B,T,H,W], got " + Array::shape_str(in.shape()));
    const int B = in.dim(0), T = in.dim(1);
    check(B >= 1, "forward: empty batch");

    const std::size_t n_trunk = trunk_registry_size(tcfg);
    check(params.nodes.size() > n_trunk, "forward: parameter list too short");
    const std::vector<NodeId> trunk_nodes(params.nodes.begin(),
                                          params.nodes.begin() + static_cast<long>(n_trunk));
    std::vector<NodeId> rest(params.nodes.begin() + static_cast<long>(n_trunk),
                             params.nodes.end());
    Cursor cur{&rest};
    GruCellNodes gfwd = take_cell(cur);
    GruCellNodes grev{};
    if (hcfg.bidirectional) grev = take_cell(cur);
    const NodeId reg_w = cur.next(), reg_b = cur.next();
    const NodeId cls_w = cur.next(), cls_b = cur.next();
    check(cur.i == rest.size(), "forward: parameter list too long");

    const int C = trunk_output_width(tcfg);
    // features[b] is [C,T] after pooling
    std::vector<NodeId> pooled;
    pooled.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b)
        pooled.push_back(trunk_features(t, slice(t, clip_batch, 0, b, 1), tcfg, trunk_nodes));

    // per-frame GRU inputs [B,C]
    std::vector<NodeId> xs(static_cast<std::size_t>(T));
    for (int f = 0; f < T; ++f) {
        std::vector<NodeId> rows;
        rows.reserve(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b)
            rows.push_back(reshape(t, slice(t, pooled[static_cast<std::size_t>(b)], 1, f, 1), {1, C}));
        xs[static_cast<std::size_t>(f)] = B == 1 ? rows[0] : concat(t, rows, 0);
    }

    const int hid = hcfg.hidden;
    std::vector<NodeId> hs(static_cast<std::size_t>(T));
    NodeId h = t.constant(Array({B, hid}));
    for (int f = 0; f < T; ++f) {
        h = gru_step_node(t, xs[static_cast<std::size_t>(f)], h, gfwd);
        hs[static_cast<std::size_t>(f)] = h;
    }
    if (hcfg.bidirectional) {
        NodeId hr = t.constant(Array({B, hid}));
        std::vector<NodeId> hrs(static_cast<std::size_t>(T));
        for (int f = T - 1; f >= 0; --f) {
            hr = gru_step_node(t, xs[static_cast<std::size_t>(f)], hr, grev);
            hrs[static_cast<std::size_t>(f)] = hr;
        }
        for (int f = 0; f < T; ++f)
            hs[static_cast<std::size_t>(f)] =
                concat(t, {hs[static_cast<std::size_t>(f)], hrs[static_cast<std::size_t>(f)]}, 1);
    }

    const int G = hcfg.gru_output();
    std::vector<NodeId> stacked;
    stacked.reserve(static_cast<std::size_t>(T));
    for (int f = 0; f < T; ++f)
        stacked.push_back(reshape(t, hs[static_cast<std::size_t>(f)], {B, 1, G}));
    NodeId features = T == 1 ? stacked[0] : concat(t, stacked, 1);  // [B,T,G]

    NodeId flat_feats = reshape(t, features, {B * T, G});
    NodeId reg = tanh_op(t, add_bias(t, matmul(t, flat_feats, reg_w), reg_b));
    reg = reshape(t, reg, {B, T, 2});
    NodeId logits = add_bias(t, matmul(t, flat_feats, cls_w), cls_b);
    logits = reshape(t, logits, {B, T, 2, hcfg.classes_per_dim});

    return {reg, logits, features};
}

ForwardResult forward(const Array& clip_batch, TrunkParams& trunk, HeadParams& heads) {
    Tape t;
    auto refs = param_registry(trunk, heads);
    auto lifted = lift(t, refs, std::vector<bool>(refs.size(), false));
    NodeId in = t.constant(clip_batch);
    ForwardNodes out = forward_graph(t, in, trunk.cfg, heads.cfg, lifted);
    return {t.value(out.reg), t.value(out.logits), t.value(out.features)};
}

// ---- transfer ----

void transfer_weights(const TrunkParams& pretext, TrunkParams& downstream) {
    const TrunkConfig& a = pretext.cfg;
    const TrunkConfig& b = downstream.cfg;
    auto fail = [](const std::string& field) {
        throw CheckpointMismatch("trunk configuration differs at " + field);
    };
    if (a.input_hw != b.input_hw) fail("input_hw");
    if (a.widths != b.widths) fail("widths");
    if (a.frontend_kt != b.frontend_kt) fail("frontend_kt");
    if (a.frontend_khw != b.frontend_khw) fail("frontend_khw");
    if (a.coord_channels != b.coord_channels) fail("coord_channels");
    auto src = trunk_registry(const_cast<TrunkParams&>(pretext));
    auto dst = trunk_registry(downstream);
    check(src.size() == dst.size(), "transfer: registry size mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        check(src[i].name == dst[i].name, "transfer: registry order mismatch");
        *dst[i].array = *src[i].array;
    }
}

// ---- checkpoints ----

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& f, const std::string& path) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated checkpoint: " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_record(std::ofstream& f, const std::string& name, const Array& a) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(a.rank()));
    for (int i = 0; i < a.rank(); ++i) put_u32(f, static_cast<std::uint32_t>(a.dim(i)));
    for (std::int64_t i = 0; i < a.size(); ++i) put_f64(f, a[i]);
}

std::map<std::string, Array> read_records(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "SSVK", 4) != 0)
        throw IoError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(f, path);
    if (version != 1) throw IoError("unsupported checkpoint version in " + path);
    const std::uint32_t count = get_u32(f, path);
    std::map<std::string, Array> out;
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t nlen = get_u32(f, path);
        if (nlen > 4096) throw IoError("corrupt checkpoint record name in " + path);
        std::string name(nlen, '\0');
        if (!f.read(name.data(), nlen)) throw IoError("truncated checkpoint: " + path);
        const std::uint32_t rank = get_u32(f, path);
        if (rank > 8) throw IoError("corrupt checkpoint record shape in " + path);
        std::vector<int> shape;
        std::int64_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<int>(get_u32(f, path)));
            n *= shape.back();
        }
        Array a(shape);
        for (std::int64_t i = 0; i < n; ++i) a[i] = get_f64(f, path);
        if (!out.emplace(std::move(name), std::move(a)).second)
            throw IoError("duplicate checkpoint record in " + path);
    }
    return out;
}

Array trunk_config_record(const TrunkConfig& c) {
    return Array({4}, {static_cast<double>(c.input_hw), static_cast<double>(c.frontend_kt),
                       static_cast<double>(c.frontend_khw), c.coord_channels ? 1.0 : 0.0});
}

Array head_config_record(const HeadConfig& c) {
    return Array({3}, {static_cast<double>(c.hidden), static_cast<double>(c.classes_per_dim),
                       c.bidirectional ? 1.0 : 0.0});
}

} // namespace

void save_checkpoint(const std::string& path, TrunkParams& trunk, HeadParams& heads) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    auto refs = param_registry(trunk, heads);
    f.write("SSVK", 4);
    put_u32(f, 1);
    put_u32(f, static_cast<std::uint32_t>(refs.size() + 3));
    put_record(f, "config.trunk", trunk_config_record(trunk.cfg));
    Array widths({static_cast<int>(trunk.cfg.widths.size())});
    for (std::size_t i = 0; i < trunk.cfg.widths.size(); ++i)
        widths[static_cast<std::int64_t>(i)] = static_cast<double>(trunk.cfg.widths[i]);
    put_record(f, "config.trunk.widths", widths);
    put_record(f, "config.heads", head_config_record(heads.cfg));
    for (const ParamRef& ref : refs) put_record(f, ref.name, *ref.array);
    if (!f) throw IoError("write failed: " + path);
}

std::pair<TrunkConfig, HeadConfig> peek_checkpoint(const std::string& path) {
    auto records = read_records(path);
    auto need = [&](const char* name) -> const Array& {
        auto it = records.find(name);
        if (it == records.end())
            throw IoError(std::string("checkpoint missing record ") + name + " in " + path);
        return it->second;
    };
    const Array& tc = need("config.trunk");
    const Array& tw = need("config.trunk.widths");
    const Array& hc = need("config.heads");
    if (tc.size() != 4 || hc.size() != 3) throw IoError("corrupt config records in " + path);
    TrunkConfig t;
    t.input_hw = static_cast<int>(tc[0]);
    t.frontend_kt = static_cast<int>(tc[1]);
    t.frontend_khw = static_cast<int>(tc[2]);
    t.coord_channels = tc[3] != 0.0;
    t.widths.clear();
    for (std::int64_t i = 0; i < tw.size(); ++i) t.widths.push_back(static_cast<int>(tw[i]));
    HeadConfig h;
    h.hidden = static_cast<int>(hc[0]);
    h.classes_per_dim = static_cast<int>(hc[1]);
    h.bidirectional = hc[2] != 0.0;
    return {t, h};
}

void load_checkpoint(const std::string& path, TrunkParams& trunk, HeadParams& heads) {
    auto [tcfg, hcfg] = peek_checkpoint(path);
    auto records = read_records(path);
    trunk = make_trunk_shapes(tcfg);
    heads = make_head_shapes(hcfg, trunk_output_width(tcfg));
    for (const ParamRef& ref : param_registry(trunk, heads)) {
        auto it = records.find(ref.name);
        if (it == records.end())
            throw CheckpointMismatch("checkpoint missing parameter " + ref.name + " in " + path);
        if (it->second.shape() != ref.array->shape())
            throw CheckpointMismatch("checkpoint shape mismatch for " + ref.name + " in " + path);
        *ref.array = std::move(it->second);
        records.erase(it);
    }
    records.erase("config.trunk");
    records.erase("config.trunk.widths");
    records.erase("config.heads");
    if (!records.empty())
        throw CheckpointMismatch("checkpoint has unexpected record " + records.begin()->first +
                                 " in " + path);
}

void save_trunk_checkpoint(const std::string& path, TrunkParams& trunk) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    auto refs = trunk_registry(trunk);
    f.write("SSVK", 4);
    put_u32(f, 1);
    put_u32(f, static_cast<std::uint32_t>(refs.size() + 2));
    put_record(f, "config.trunk", trunk_config_record(trunk.cfg));
    Array widths({static_cast<int>(trunk.cfg.widths.size())});
    for (std::size_t i = 0; i < trunk.cfg.widths.size(); ++i)
        widths[static_cast<std::int64_t>(i)] = static_cast<double>(trunk.cfg.widths[i]);
    put_record(f, "config.trunk.widths", widths);
    for (const ParamRef& ref : refs) put_record(f, ref.name, *ref.array);
    if (!f) throw IoError("write failed: " + path);
}

TrunkParams load_trunk_checkpoint(const std::string& path) {
    auto records = read_records(path);
    auto tc_it = records.find("config.trunk");
    auto tw_it = records.find("config.trunk.widths");
    if (tc_it == records.end() || tw_it == records.end())
        throw IoError("checkpoint missing trunk config in " + path);
    if (tc_it->second.size() != 4) throw IoError("corrupt config records in " + path);
    TrunkConfig cfg;
    cfg.input_hw = static_cast<int>(tc_it->second[0]);
    cfg.frontend_kt = static_cast<int>(tc_it->second[1]);
    cfg.frontend_khw = static_cast<int>(tc_it->second[2]);
    cfg.coord_channels = tc_it->second[3] != 0.0;
    cfg.widths.clear();
    for (std::int64_t i = 0; i < tw_it->second.size(); ++i)
        cfg.widths.push_back(static_cast<int>(tw_it->second[i]));
    TrunkParams trunk = make_trunk_shapes(cfg);
    for (const ParamRef& ref : trunk_registry(trunk)) {
        auto it = records.find(ref.name);
        if (it == records.end())
            throw CheckpointMismatch("checkpoint missing parameter " + ref.name + " in " + path);
        if (it->second.shape() != ref.array->shape())
            throw CheckpointMismatch("checkpoint shape mismatch for " + ref.name + " in " + path);
        *ref.array = std::move(it->second);
    }
    return trunk;
}

// ---- reporting ----

std::int64_t param_count(TrunkParams& trunk, HeadParams& heads) {
    std::int64_t n = 0;
    for (const ParamRef& ref : param_registry(trunk, heads)) n += ref.array->size();
    return n;
}

std::string describe(TrunkParams& trunk, HeadParams& heads) {
    std::ostringstream os;
    std::int64_t total = 0;
    for (const ParamRef& ref : param_registry(trunk, heads)) {
        os << ref.name << "  " << Array::shape_str(ref.array->shape()) << "  "
           << ref.array->size() << "\n";
        total += ref.array->size();
    }
    os << "total parameters: " << total << "\n";
    return os.str();
}

} // namespace ssvaerr::model
