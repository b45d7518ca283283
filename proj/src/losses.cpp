#include "ssvaerr/losses.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ssvaerr::losses {

void CompositeLossConfig::validate() const {
    const double ws[] = {valence.ccc, valence.mse, valence.ce, valence.ncce,
                         arousal.ccc, arousal.mse, arousal.ce, arousal.ncce};
    double total = 0.0;
    for (double w : ws) {
        if (w < 0.0) throw ConfigError("loss config: negative weight");
        total += w;
    }
    if (total <= 0.0) throw ConfigError("loss config: all weights zero");
}

namespace {

double* weight_slot(CompositeLossConfig& cfg, const std::string& key) {
    DimWeights* dim = nullptr;
    std::string term;
    if (key.rfind("valence.", 0) == 0) {
        dim = &cfg.valence;
        term = key.substr(8);
    } else if (key.rfind("arousal.", 0) == 0) {
        dim = &cfg.arousal;
        term = key.substr(8);
    } else {
        return nullptr;
    }
    if (term == "ccc") return &dim->ccc;
    if (term == "mse") return &dim->mse;
    if (term == "ce") return &dim->ce;
    if (term == "ncce") return &dim->ncce;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

CompositeLossConfig parse_loss_config_text(const std::string& text) {
    CompositeLossConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("loss config: expected key=value, got: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        double* slot = weight_slot(cfg, key);
        if (!slot) throw ConfigError("loss config: unknown key: " + key);
        double parsed;
        auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), parsed);
        if (ec != std::errc() || p != val.data() + val.size())
            throw ConfigError("loss config: bad value for " + key + ": " + val);
        *slot = parsed;
    }
    cfg.validate();
    return cfg;
}

CompositeLossConfig read_loss_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open loss config: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_loss_config_text(buf.str());
}

std::string loss_config_text(const CompositeLossConfig& cfg) {
    std::ostringstream out;
    auto emit = [&](const char* dim, const DimWeights& w) {
        if (w.ccc != 0.0) out << dim << ".ccc=" << labels::format_double(w.ccc) << '\n';
        if (w.mse != 0.0) out << dim << ".mse=" << labels::format_double(w.mse) << '\n';
        if (w.ce != 0.0) out << dim << ".ce=" << labels::format_double(w.ce) << '\n';
        if (w.ncce != 0.0) out << dim << ".ncce=" << labels::format_double(w.ncce) << '\n';
    };
    emit("valence", cfg.valence);
    emit("arousal", cfg.arousal);
    return out.str();
}

PredictionBatch make_batch(Tape& t, NodeId reg, NodeId logits,
                           labels::AffectSeries targets, const labels::Discretizer& d) {
    const Array& vr = t.value(reg);
    const Array& vl = t.value(logits);
    check(vr.rank() == 2 && vr.dim(1) == 2,
          "prediction batch: reg must be [F,2], got " + Array::shape_str(vr.shape()));
    check(vl.rank() == 3 && vl.dim(1) == 2,
          "prediction batch: logits must be [F,2,L], got " + Array::shape_str(vl.shape()));
    check(vl.dim(2) == d.bins(), "prediction batch: logit classes != discretizer bins");
    const int F = vr.dim(0);
    check(vl.dim(0) == F, "prediction batch: frame count mismatch between reg and logits");
    check(targets.frames() == F, "prediction batch: target frames != prediction frames");

    const int L = d.bins();
    Array hv({F, L}), ha({F, L});
    for (int f = 0; f < F; ++f) {
        hv[static_cast<std::int64_t>(f) * L + d.discretize(targets.valence[static_cast<std::size_t>(f)])] = 1.0;
        ha[static_cast<std::int64_t>(f) * L + d.discretize(targets.arousal[static_cast<std::size_t>(f)])] = 1.0;
    }
    return PredictionBatch{reg, logits, std::move(targets), std::move(hv), std::move(ha)};
}

double ccc_metric(const std::vector<double>& y, const std::vector<double>& yhat) {
    check(y.size() == yhat.size(), "ccc: series lengths differ");
    check(y.size() >= 2, "ccc: need at least 2 frames");
    const double n = static_cast<double>(y.size());
    double my = 0.0, mh = 0.0;
    for (double v : y) my += v;
    for (double v : yhat) mh += v;
    my /= n;
    mh /= n;
    double vy = 0.0, vh = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double dy = y[i] - my;
        const double dh = yhat[i] - mh;
        vy += dy * dy;
        vh += dh * dh;
        cov += dy * dh;
    }
    vy /= n;
    vh /= n;
    cov /= n;
    const double denom = vy + vh + (my - mh) * (my - mh);
    if (denom < 1e-12)
        throw DegenerateSignal("ccc: both series constant, coefficient undefined");
    return 2.0 * cov / denom;
}

double combined_ccc(const std::vector<std::vector<double>>& y_per_video,
                    const std::vector<std::vector<double>>& yhat_per_video) {
    check(y_per_video.size() == yhat_per_video.size(), "combined ccc: video count mismatch");
    std::vector<double> y, yhat;
    for (std::size_t i = 0; i < y_per_video.size(); ++i) {
        check(y_per_video[i].size() == yhat_per_video[i].size(),
              "combined ccc: per-video length mismatch");
        y.insert(y.end(), y_per_video[i].begin(), y_per_video[i].end());
        yhat.insert(yhat.end(), yhat_per_video[i].begin(), yhat_per_video[i].end());
    }
    return ccc_metric(y, yhat);
}

double cost_norm_value(const Array& onehot, const Array& probs,
                       const std::vector<double>& centroids) {
    check(onehot.size() == probs.size(), "cost norm: shape mismatch");
    check(static_cast<std::size_t>(onehot.size()) == centroids.size(),
          "cost norm: centroid count mismatch");
    double s = 0.0;
    for (std::int64_t l = 0; l < onehot.size(); ++l)
        s += centroids[static_cast<std::size_t>(l)] * (onehot[l] - probs[l]);
    return 1.0 + std::fabs(s);
}

NodeId ccc_node(Tape& t, NodeId y, NodeId yhat, double eps) {
    using namespace diff;
    const Array& vy = t.value(y);
    const Array& vh = t.value(yhat);
    check(vy.size() == vh.size(), "ccc: series lengths differ");
    check(vy.size() >= 2, "ccc: need at least 2 frames");
    NodeId my = mean_all(t, y);
    NodeId mh = mean_all(t, yhat);
    NodeId dy = sub(t, y, my);
    NodeId dh = sub(t, yhat, mh);
    NodeId var_y = mean_all(t, square(t, dy));
    NodeId var_h = mean_all(t, square(t, dh));
    NodeId cov = mean_all(t, mul(t, dy, dh));
    NodeId md = sub(t, my, mh);
    NodeId denom = add_scalar(t, add(t, add(t, var_y, var_h), square(t, md)), eps);
    return div(t, mul_scalar(t, cov, 2.0), denom);
}

NodeId ccc_loss_node(Tape& t, NodeId y, NodeId yhat) {
    using namespace diff;
    NodeId c = ccc_node(t, y, yhat, 1e-8);
    return add_scalar(t, mul_scalar(t, c, -1.0), 1.0);
}

NodeId mse_node(Tape& t, NodeId y, NodeId yhat) {
    using namespace diff;
    check(t.value(y).size() == t.value(yhat).size(), "mse: series lengths differ");
    return mean_all(t, square(t, sub(t, yhat, y)));
}

NodeId ce_node(Tape& t, NodeId onehot, NodeId logits) {
    using namespace diff;
    const Array& vt = t.value(onehot);
    const Array& vl = t.value(logits);
    check(vt.rank() == 2 && vl.rank() == 2, "ce: expected [F,L] targets and logits");
    check(vt.dim(0) == vl.dim(0) && vt.dim(1) == vl.dim(1),
          "ce: target shape " + Array::shape_str(vt.shape()) + " != logit shape " +
              Array::shape_str(vl.shape()));
    const int F = vt.dim(0);
    NodeId lp = log_op(t, softmax_last(t, logits), 1e-12);
    NodeId picked = sum_all(t, mul(t, onehot, lp));
    return mul_scalar(t, picked, -1.0 / F);
}

NodeId ncce_node(Tape& t, NodeId onehot, NodeId logits,
                 const std::vector<double>& centroids, bool grad_through_norm) {
    using namespace diff;
    const Array& vt = t.value(onehot);
    const Array& vl = t.value(logits);
    check(vt.rank() == 2 && vl.rank() == 2, "ncce: expected [F,L] targets and logits");
    check(vt.dim(0) == vl.dim(0) && vt.dim(1) == vl.dim(1), "ncce: shape mismatch");
    const int F = vt.dim(0);
    const int L = vt.dim(1);
    check(static_cast<int>(centroids.size()) == L, "ncce: centroid count != classes");

    NodeId probs = softmax_last(t, logits);
    NodeId lp = log_op(t, probs, 1e-12);
    NodeId frame_nll = mul_scalar(t, sum_axis(t, mul(t, onehot, lp), 1), -1.0);  // [F]

    NodeId weights;
    if (grad_through_norm) {
        Array kcol({L, 1});
        for (int l = 0; l < L; ++l) kcol[l] = centroids[static_cast<std::size_t>(l)];
        NodeId k = t.constant(kcol);
        NodeId diffs = sub(t, onehot, probs);                       // [F,L]
        NodeId proj = reshape(t, matmul(t, diffs, k), {F});         // [F]
        weights = add_scalar(t, abs_op(t, proj), 1.0);
    } else {
        Array w({F});
        const Array& pv = t.value(probs);
        for (int f = 0; f < F; ++f) {
            double s = 0.0;
            for (int l = 0; l < L; ++l)
                s += centroids[static_cast<std::size_t>(l)] *
                     (vt[static_cast<std::int64_t>(f) * L + l] - pv[static_cast<std::int64_t>(f) * L + l]);
            w[f] = 1.0 + std::fabs(s);
        }
        weights = t.constant(w);
    }
    return mul_scalar(t, sum_all(t, mul(t, weights, frame_nll)), 1.0 / F);
}

LossBreakdown composite_loss(Tape& t, const PredictionBatch& batch,
                             const CompositeLossConfig& cfg,
                             const std::vector<double>& centroids,
                             int valid_frames) {
    using namespace diff;
    cfg.validate();
    const Array& vr = t.value(batch.reg);
    const int F_total = vr.dim(0);
    const int F = valid_frames < 0 ? F_total : valid_frames;
    check(F >= 1 && F <= F_total, "composite loss: valid frame window out of range");
    const int L = t.value(batch.logits).dim(2);

    NodeId reg = batch.reg;
    NodeId logits = batch.logits;
    Array hv = batch.onehot_valence;
    Array ha = batch.onehot_arousal;
    if (F != F_total) {
        reg = slice(t, reg, 0, 0, F);
        logits = slice(t, logits, 0, 0, F);
        hv = Array({F, L}, std::vector<double>(hv.data(), hv.data() + static_cast<std::int64_t>(F) * L));
        ha = Array({F, L}, std::vector<double>(ha.data(), ha.data() + static_cast<std::int64_t>(F) * L));
    }

    NodeId pred_v = reshape(t, slice(t, reg, 1, 0, 1), {F});
    NodeId pred_a = reshape(t, slice(t, reg, 1, 1, 1), {F});
    NodeId logits_v = reshape(t, slice(t, logits, 1, 0, 1), {F, L});
    NodeId logits_a = reshape(t, slice(t, logits, 1, 1, 1), {F, L});

    std::vector<double> yv(batch.targets.valence.begin(), batch.targets.valence.begin() + F);
    std::vector<double> ya(batch.targets.arousal.begin(), batch.targets.arousal.begin() + F);
    NodeId target_v = t.constant(Array({F}, yv));
    NodeId target_a = t.constant(Array({F}, ya));
    NodeId onehot_v = t.constant(hv);
    NodeId onehot_a = t.constant(ha);

    LossBreakdown out{};
    std::vector<NodeId> terms;
    auto add_dim = [&](const DimWeights& w, NodeId target, NodeId pred, NodeId oh, NodeId lg,
                       double& t_ccc, double& t_mse, double& t_ce, double& t_ncce) {
        if (w.ccc > 0.0) {
            NodeId n = ccc_loss_node(t, target, pred);
            t_ccc = t.value(n)[0];
            terms.push_back(mul_scalar(t, n, w.ccc));
        }
        if (w.mse > 0.0) {
            NodeId n = mse_node(t, target, pred);
            t_mse = t.value(n)[0];
            terms.push_back(mul_scalar(t, n, w.mse));
        }
        if (w.ce > 0.0) {
            NodeId n = ce_node(t, oh, lg);
            t_ce = t.value(n)[0];
            terms.push_back(mul_scalar(t, n, w.ce));
        }
        if (w.ncce > 0.0) {
            NodeId n = ncce_node(t, oh, lg, centroids, cfg.grad_through_cost_norm);
            t_ncce = t.value(n)[0];
            terms.push_back(mul_scalar(t, n, w.ncce));
        }
    };
    add_dim(cfg.valence, target_v, pred_v, onehot_v, logits_v,
            out.valence_ccc, out.valence_mse, out.valence_ce, out.valence_ncce);
    add_dim(cfg.arousal, target_a, pred_a, onehot_a, logits_a,
            out.arousal_ccc, out.arousal_mse, out.arousal_ce, out.arousal_ncce);

    NodeId total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(t, total, terms[i]);
    out.total = total;
    return out;
}

} // namespace ssvaerr::losses
