#include "har/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "har/errors.hpp"

namespace har::nn {

CrossEntropyResult categorical_cross_entropy(const Tensor& probs, const Tensor& one_hot) {
    if (probs.shape() != one_hot.shape() || probs.rank() != 2)
        throw ShapeMismatch("cross entropy expects matching rank-2 prob/target tensors");
    const std::size_t batch = probs.dim(0), classes = probs.dim(1);
    CrossEntropyResult out;
    out.grad_logits = Tensor(probs.shape());
    for (std::size_t r = 0; r < batch; ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) row_sum += probs.at2(r, c);
        if (std::abs(row_sum - 1.0) > 1e-6)
            throw ShapeMismatch("probability row " + std::to_string(r) + " sums to " +
                                std::to_string(row_sum));
        for (std::size_t c = 0; c < classes; ++c) {
            const double t = one_hot.at2(r, c);
            if (t != 0.0) {
                const double p = std::clamp(probs.at2(r, c), 1e-12, 1.0);
                out.loss -= t * std::log(p);
            }
            out.grad_logits.at2(r, c) =
                (probs.at2(r, c) - t) / static_cast<double>(batch);
        }
    }
    out.loss /= static_cast<double>(batch);
    return out;
}

MseResult mean_squared_error(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeMismatch("mse expects matching shapes");
    MseResult out;
    out.grad = Tensor(pred.shape());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        out.loss += d * d;
        out.grad[i] = 2.0 * d / n;
    }
    out.loss /= n;
    return out;
}

void Adam::step(const std::vector<Param>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor(p.value->shape()));
            v_.push_back(Tensor(p.value->shape()));
        }
    }
    if (m_.size() != params.size())
        throw ShapeMismatch("adam was initialized with a different parameter list");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = *params[i].grad;
        Tensor& val = *params[i].value;
        if (g.shape() != val.shape())
            throw ShapeMismatch("gradient shape mismatch for " + params[i].name);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < val.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

namespace {

double eval_loss(Network& net, const Tensor& input, const Tensor& target, GradCheckLoss kind,
                 Mode mode, std::uint64_t seed) {
    Rng rng(seed);
    const Tensor out = net.forward(input, mode, &rng);
    if (kind == GradCheckLoss::CrossEntropy)
        return categorical_cross_entropy(out, target).loss;
    return mean_squared_error(out, target).loss;
}

} // namespace

std::string GradCheckReport::summary() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: %zu gradients checked, max rel error %.3g",
                  pass ? "pass" : "FAIL", checked, max_rel_error);
    std::string s = buf;
    for (const auto& w : worst) {
        std::snprintf(buf, sizeof(buf), "\n  %-24s[%zu] analytic=%.6g numeric=%.6g rel=%.3g",
                      w.param.c_str(), w.index, w.analytic, w.numeric, w.rel_error);
        s += buf;
    }
    return s;
}

GradCheckReport grad_check(Network& net, const Tensor& input, const Tensor& target,
                           GradCheckLoss loss_kind, double tolerance, double h, Mode mode,
                           std::uint64_t rng_seed) {
    // Analytic pass.
    net.zero_grads();
    Rng rng(rng_seed);
    const Tensor out = net.forward(input, mode, &rng);
    if (loss_kind == GradCheckLoss::CrossEntropy) {
        const auto ce = categorical_cross_entropy(out, target);
        const auto& layers = net.layers();
        if (layers.empty() || layers.back()->spec().kind != LayerKind::Softmax)
            throw ConfigError("cross-entropy grad check expects a Softmax final layer");
        net.backward_from(ce.grad_logits, layers.size() - 1);
    } else {
        const auto mse = mean_squared_error(out, target);
        net.backward(mse.grad);
    }

    GradCheckReport report;
    auto params = net.params();
    for (auto& p : params) {
        for (std::size_t j = 0; j < p.value->size(); ++j) {
            const double saved = (*p.value)[j];
            (*p.value)[j] = saved + h;
            const double lp = eval_loss(net, input, target, loss_kind, mode, rng_seed);
            (*p.value)[j] = saved - h;
            const double lm = eval_loss(net, input, target, loss_kind, mode, rng_seed);
            (*p.value)[j] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = (*p.grad)[j];
            const double rel =
                std::abs(analytic - numeric) / std::max(1e-5, std::abs(analytic) + std::abs(numeric));
            ++report.checked;
            if (rel > report.max_rel_error) report.max_rel_error = rel;
            if (rel > tolerance) {
                report.pass = false;
                report.worst.push_back({p.name, j, analytic, numeric, rel});
            }
        }
    }
    std::sort(report.worst.begin(), report.worst.end(),
              [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
    if (report.worst.size() > 10) report.worst.resize(10);
    return report;
}

} // namespace har::nn
