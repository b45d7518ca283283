#pragma once

#include <vector>

#include "ssvaerr/model.hpp"

namespace ssvaerr::trainer {

using diff::Array;

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    void validate() const;
};

// Adam with decoupled weight decay. Frozen parameters carry no optimizer
// state, receive no decay, and are never written to.
class AdamW {
public:
    AdamW(AdamWConfig cfg, std::vector<model::ParamRef> params, std::vector<bool> trainable);

    // grads in registry order; entries for frozen parameters are ignored.
    void step(const std::vector<Array>& grads);

    int steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::vector<model::ParamRef> params_;
    std::vector<bool> trainable_;
    std::vector<Array> m_, v_;
    int t_ = 0;
};

} // namespace ssvaerr::trainer
