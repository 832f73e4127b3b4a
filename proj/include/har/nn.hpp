#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "har/layers.hpp"
#include "har/tensor.hpp"

namespace har::nn {

// Cross-entropy over already-softmaxed probabilities. The returned gradient
// is w.r.t. the pre-softmax logits (fused softmax + cross-entropy), i.e.
// (p - t) / batch; feed it to Network::backward_from skipping the Softmax.
struct CrossEntropyResult {
    double loss = 0.0;
    Tensor grad_logits;
};
CrossEntropyResult categorical_cross_entropy(const Tensor& probs, const Tensor& one_hot);

struct MseResult {
    double loss = 0.0;
    Tensor grad;
};
MseResult mean_squared_error(const Tensor& pred, const Tensor& target);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
};

// Bias-corrected Adam. Moments are allocated on first step and keyed by
// parameter order, which must stay stable across steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Param>& params);

    std::size_t steps() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_, v_;
};

enum class GradCheckLoss { CrossEntropy, MeanSquared };

struct GradCheckIssue {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckIssue> worst;  // top offenders, largest first

    std::string summary() const;
};

// Central-difference check of every parameter gradient. Each forward pass
// re-seeds its rng so stochastic layers (dropout) replay the same masks.
// rel_error = |a - n| / max(1e-5, |a| + |n|).
GradCheckReport grad_check(Network& net, const Tensor& input, const Tensor& target,
                           GradCheckLoss loss_kind, double tolerance = 1e-4, double h = 1e-5,
                           Mode mode = Mode::Train, std::uint64_t rng_seed = 1234);

} // namespace har::nn
