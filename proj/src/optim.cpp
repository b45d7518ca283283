#include "ssvaerr/optim.hpp"

#include <cmath>

namespace ssvaerr::trainer {

void AdamWConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("optimizer: betas must lie in [0,1)");
    if (eps <= 0.0) throw ConfigError("optimizer: eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("optimizer: negative weight decay");
}

AdamW::AdamW(AdamWConfig cfg, std::vector<model::ParamRef> params, std::vector<bool> trainable)
    : cfg_(cfg), params_(std::move(params)), trainable_(std::move(trainable)) {
    cfg_.validate();
    check(params_.size() == trainable_.size(), "optimizer: mask size mismatch");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!trainable_[i]) continue;
        m_[i] = Array(params_[i].array->shape());
        v_[i] = Array(params_[i].array->shape());
    }
}

void AdamW::step(const std::vector<Array>& grads) {
    check(grads.size() == params_.size(), "optimizer: gradient list size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!trainable_[i]) continue;
        Array& p = *params_[i].array;
        const Array& g = grads[i];
        check(g.same_shape(p), "optimizer: gradient shape mismatch for " + params_[i].name);
        Array& m = m_[i];
        Array& v = v_[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[j]);
        }
    }
}

} // namespace ssvaerr::trainer
