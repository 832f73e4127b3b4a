#include "har/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "har/errors.hpp"

namespace har::nn {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.vec()) v = rng.uniform(-limit, limit);
}

void add_bias_rows(Tensor& y, const Tensor& b) {
    const std::size_t n = b.size();
    const std::size_t rows = y.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        double* yr = y.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) yr[j] += b[j];
    }
}

// [B,T,C] with the time axis reversed.
Tensor reverse_time(const Tensor& x) {
    const std::size_t b = x.dim(0), t = x.dim(1), c = x.dim(2);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < t; ++j)
            std::memcpy(out.data() + (i * t + j) * c, x.data() + (i * t + (t - 1 - j)) * c,
                        c * sizeof(double));
    return out;
}

} // namespace

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Softmax: return "Softmax";
        case LayerKind::Dropout: return "Dropout";
        case LayerKind::Conv1D: return "Conv1D";
        case LayerKind::MaxPool1D: return "MaxPool1D";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::LSTM: return "LSTM";
        case LayerKind::BiLSTM: return "BiLSTM";
        case LayerKind::GRU: return "GRU";
    }
    throw ConfigError("unhandled layer kind");
}

LayerKind parse_layer_kind(const std::string& name) {
    for (auto k : {LayerKind::Dense, LayerKind::ReLU, LayerKind::Softmax, LayerKind::Dropout,
                   LayerKind::Conv1D, LayerKind::MaxPool1D, LayerKind::Flatten, LayerKind::LSTM,
                   LayerKind::BiLSTM, LayerKind::GRU})
        if (layer_kind_name(k) == name) return k;
    throw ConfigError("unknown layer kind '" + name + "'");
}

std::size_t Layer::param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value->size();
    return n;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

class DenseLayer final : public Layer {
public:
    DenseLayer(LayerSpec spec, std::size_t in)
        : spec_(spec), in_(in), out_(spec.units),
          w_({out_, in_}), b_({out_}), dw_({out_, in_}), db_({out_}) {
        if (out_ < 1) throw ConfigError("Dense units must be >= 1");
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 2 || input[1] != in_)
            throw ShapeMismatch("Dense expects (batch," + std::to_string(in_) + "), got " +
                                shape_str(input));
        return {input[0], out_};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        input_ = x;
        const std::size_t batch = x.dim(0);
        Tensor y({batch, out_});
        gemm_bt_acc(x.data(), w_.data(), y.data(), batch, in_, out_);
        add_bias_rows(y, b_);
        return y;
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t batch = input_.dim(0);
        if (g.shape() != Shape{batch, out_})
            throw ShapeMismatch("Dense backward grad shape " + shape_str(g.shape()));
        gemm_at_acc(g.data(), input_.data(), dw_.data(), batch, out_, in_);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < out_; ++j) db_[j] += g.at2(r, j);
        Tensor dx({batch, in_});
        gemm_acc(g.data(), w_.data(), dx.data(), batch, out_, in_);
        return dx;
    }

    std::vector<Param> params() override {
        return {{"W", &w_, &dw_}, {"b", &b_, &db_}};
    }

    void init_params(Rng& rng) override { glorot_uniform(w_, in_, out_, rng); b_.fill(0.0); }

private:
    LayerSpec spec_;
    std::size_t in_, out_;
    Tensor w_, b_, dw_, db_;
    Tensor input_;
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

class ReLULayer final : public Layer {
public:
    explicit ReLULayer(LayerSpec spec) : spec_(spec) {}
    const LayerSpec& spec() const override { return spec_; }
    Shape output_shape(const Shape& input) const override { return input; }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        input_ = x;
        Tensor y = x;
        for (auto& v : y.vec()) v = v > 0.0 ? v : 0.0;
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (g.shape() != input_.shape()) throw ShapeMismatch("ReLU backward grad shape");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (input_[i] <= 0.0) dx[i] = 0.0;
        return dx;
    }

private:
    LayerSpec spec_;
    Tensor input_;
};

// ---------------------------------------------------------------------------
// Softmax (rowwise over the last axis of a rank-2 tensor)
// ---------------------------------------------------------------------------

class SoftmaxLayer final : public Layer {
public:
    explicit SoftmaxLayer(LayerSpec spec) : spec_(spec) {}
    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 2) throw ShapeMismatch("Softmax expects rank-2 input");
        return input;
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        const std::size_t rows = x.dim(0), cols = x.dim(1);
        Tensor y(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = x.data() + r * cols;
            double* yr = y.data() + r * cols;
            const double mx = *std::max_element(xr, xr + cols);
            double sum = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                yr[j] = std::exp(xr[j] - mx);
                sum += yr[j];
            }
            for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
        }
        output_ = y;
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (g.shape() != output_.shape()) throw ShapeMismatch("Softmax backward grad shape");
        const std::size_t rows = g.dim(0), cols = g.dim(1);
        Tensor dx(g.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cols;
            const double* yr = output_.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
            double* dr = dx.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) dr[j] = yr[j] * (gr[j] - dot);
        }
        return dx;
    }

private:
    LayerSpec spec_;
    Tensor output_;
};

// ---------------------------------------------------------------------------
// Dropout (inverted)
// ---------------------------------------------------------------------------

class DropoutLayer final : public Layer {
public:
    explicit DropoutLayer(LayerSpec spec) : spec_(spec) {
        if (spec.rate < 0.0 || spec.rate >= 1.0)
            throw ConfigError("dropout rate must be in [0,1)");
    }
    const LayerSpec& spec() const override { return spec_; }
    Shape output_shape(const Shape& input) const override { return input; }

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override {
        if (mode == Mode::Infer || spec_.rate == 0.0) {
            train_pass_ = false;
            return x;
        }
        if (!rng) throw ConfigError("dropout in train mode needs an rng");
        train_pass_ = true;
        mask_ = Tensor(x.shape());
        const double keep_scale = 1.0 / (1.0 - spec_.rate);
        Tensor y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng->uniform() < spec_.rate ? 0.0 : keep_scale;
            y[i] = x[i] * mask_[i];
        }
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (!train_pass_) return g;
        if (g.shape() != mask_.shape()) throw ShapeMismatch("Dropout backward grad shape");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
        return dx;
    }

private:
    LayerSpec spec_;
    Tensor mask_;
    bool train_pass_ = false;
};

// ---------------------------------------------------------------------------
// Conv1D (valid padding, stride 1)
// ---------------------------------------------------------------------------

class Conv1DLayer final : public Layer {
public:
    Conv1DLayer(LayerSpec spec, std::size_t steps, std::size_t channels)
        : spec_(spec), steps_(steps), channels_(channels), filters_(spec.filters),
          kernel_(spec.kernel_size),
          w_({filters_, kernel_ * channels_}), b_({filters_}),
          dw_({filters_, kernel_ * channels_}), db_({filters_}) {
        if (filters_ < 1) throw ConfigError("Conv1D filters must be >= 1");
        if (kernel_ < 1 || kernel_ > steps_)
            throw ConfigError("Conv1D kernel must be in [1, input length]");
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 3 || input[1] != steps_ || input[2] != channels_)
            throw ShapeMismatch("Conv1D expects (batch," + std::to_string(steps_) + "," +
                                std::to_string(channels_) + "), got " + shape_str(input));
        return {input[0], steps_ - kernel_ + 1, filters_};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        const std::size_t m = steps_ - kernel_ + 1;
        const std::size_t kc = kernel_ * channels_;
        patches_ = Tensor({batch, m, kc});
        Tensor y({batch, m, filters_});
        for (std::size_t bi = 0; bi < batch; ++bi) {
            double* p = patches_.data() + bi * m * kc;
            const double* xb = x.data() + bi * steps_ * channels_;
            // Patch rows are contiguous slices of the input row block.
            for (std::size_t l = 0; l < m; ++l)
                std::memcpy(p + l * kc, xb + l * channels_, kc * sizeof(double));
            double* yb = y.data() + bi * m * filters_;
            gemm_bt_acc(p, w_.data(), yb, m, kc, filters_);
        }
        add_bias_rows(y, b_);
        batch_ = batch;
        return y;
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t m = steps_ - kernel_ + 1;
        const std::size_t kc = kernel_ * channels_;
        if (g.shape() != Shape{batch_, m, filters_})
            throw ShapeMismatch("Conv1D backward grad shape " + shape_str(g.shape()));
        Tensor dx({batch_, steps_, channels_});
        std::vector<double> dpatch(m * kc);
        for (std::size_t bi = 0; bi < batch_; ++bi) {
            const double* gb = g.data() + bi * m * filters_;
            const double* p = patches_.data() + bi * m * kc;
            gemm_at_acc(gb, p, dw_.data(), m, filters_, kc);
            std::fill(dpatch.begin(), dpatch.end(), 0.0);
            gemm_acc(gb, w_.data(), dpatch.data(), m, filters_, kc);
            double* dxb = dx.data() + bi * steps_ * channels_;
            for (std::size_t l = 0; l < m; ++l) {
                const double* dp = dpatch.data() + l * kc;
                double* target = dxb + l * channels_;
                for (std::size_t j = 0; j < kc; ++j) target[j] += dp[j];
            }
            for (std::size_t l = 0; l < m; ++l)
                for (std::size_t f = 0; f < filters_; ++f) db_[f] += gb[l * filters_ + f];
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"W", &w_, &dw_}, {"b", &b_, &db_}};
    }

    void init_params(Rng& rng) override {
        glorot_uniform(w_, kernel_ * channels_, kernel_ * filters_, rng);
        b_.fill(0.0);
    }

private:
    LayerSpec spec_;
    std::size_t steps_, channels_, filters_, kernel_;
    Tensor w_, b_, dw_, db_;
    Tensor patches_;
    std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// MaxPool1D (non-overlapping; floor remainder dropped)
// ---------------------------------------------------------------------------

class MaxPool1DLayer final : public Layer {
public:
    MaxPool1DLayer(LayerSpec spec, std::size_t steps, std::size_t channels)
        : spec_(spec), steps_(steps), channels_(channels), pool_(spec.pool_size) {
        if (pool_ < 1 || pool_ > steps_) throw ConfigError("MaxPool1D pool size out of range");
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 3 || input[1] != steps_ || input[2] != channels_)
            throw ShapeMismatch("MaxPool1D expects (batch," + std::to_string(steps_) + "," +
                                std::to_string(channels_) + "), got " + shape_str(input));
        return {input[0], steps_ / pool_, channels_};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        const std::size_t m = steps_ / pool_;
        Tensor y({batch, m, channels_});
        argmax_.assign(batch * m * channels_, 0);
        for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t l = 0; l < m; ++l) {
                for (std::size_t c = 0; c < channels_; ++c) {
                    std::size_t best = (bi * steps_ + l * pool_) * channels_ + c;
                    double bv = x[best];
                    for (std::size_t k = 1; k < pool_; ++k) {
                        const std::size_t idx = (bi * steps_ + l * pool_ + k) * channels_ + c;
                        if (x[idx] > bv) {
                            bv = x[idx];
                            best = idx;
                        }
                    }
                    y.at3(bi, l, c) = bv;
                    argmax_[(bi * m + l) * channels_ + c] = best;
                }
            }
        }
        batch_ = batch;
        return y;
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t m = steps_ / pool_;
        if (g.shape() != Shape{batch_, m, channels_})
            throw ShapeMismatch("MaxPool1D backward grad shape");
        Tensor dx({batch_, steps_, channels_});
        for (std::size_t i = 0; i < g.size(); ++i) dx[argmax_[i]] += g[i];
        return dx;
    }

private:
    LayerSpec spec_;
    std::size_t steps_, channels_, pool_;
    std::vector<std::size_t> argmax_;
    std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

class FlattenLayer final : public Layer {
public:
    explicit FlattenLayer(LayerSpec spec) : spec_(spec) {}
    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() < 2) throw ShapeMismatch("Flatten expects rank >= 2");
        std::size_t flat = 1;
        for (std::size_t i = 1; i < input.size(); ++i) flat *= input[i];
        return {input[0], flat};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        in_shape_ = x.shape();
        return x.reshaped(output_shape(x.shape()));
    }

    Tensor backward(const Tensor& g) override { return g.reshaped(in_shape_); }

private:
    LayerSpec spec_;
    Shape in_shape_;
};

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Gate row blocks in weight matrices are ordered [input, forget, candidate,
// output]. The forget-gate bias initializes to +1.
class LSTMLayer final : public Layer {
public:
    LSTMLayer(LayerSpec spec, std::size_t steps, std::size_t in)
        : spec_(spec), steps_(steps), in_(in), units_(spec.units),
          wx_({4 * units_, in_}), wh_({4 * units_, units_}), b_({4 * units_}),
          dwx_({4 * units_, in_}), dwh_({4 * units_, units_}), db_({4 * units_}) {
        if (units_ < 1) throw ConfigError("LSTM units must be >= 1");
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 3 || input[1] != steps_ || input[2] != in_)
            throw ShapeMismatch("LSTM expects (batch," + std::to_string(steps_) + "," +
                                std::to_string(in_) + "), got " + shape_str(input));
        if (spec_.return_sequences) return {input[0], steps_, units_};
        return {input[0], units_};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        batch_ = batch;
        input_ = x;
        const std::size_t h = units_;
        acts_.assign(steps_, Tensor({batch, 4 * h}));
        c_.assign(steps_ + 1, Tensor({batch, h}));
        tanh_c_.assign(steps_, Tensor({batch, h}));
        h_.assign(steps_ + 1, Tensor({batch, h}));

        Tensor xt({batch, in_});
        for (std::size_t t = 0; t < steps_; ++t) {
            gather_step(x, t, xt);
            Tensor& z = acts_[t];
            z.fill(0.0);
            gemm_bt_acc(xt.data(), wx_.data(), z.data(), batch, in_, 4 * h);
            gemm_bt_acc(h_[t].data(), wh_.data(), z.data(), batch, h, 4 * h);
            add_bias_rows(z, b_);
            for (std::size_t r = 0; r < batch; ++r) {
                double* zr = z.data() + r * 4 * h;
                const double* cp = c_[t].data() + r * h;
                double* cn = c_[t + 1].data() + r * h;
                double* tc = tanh_c_[t].data() + r * h;
                double* hn = h_[t + 1].data() + r * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double i_g = sigmoid(zr[j]);
                    const double f_g = sigmoid(zr[h + j]);
                    const double g_g = std::tanh(zr[2 * h + j]);
                    const double o_g = sigmoid(zr[3 * h + j]);
                    zr[j] = i_g;
                    zr[h + j] = f_g;
                    zr[2 * h + j] = g_g;
                    zr[3 * h + j] = o_g;
                    cn[j] = f_g * cp[j] + i_g * g_g;
                    tc[j] = std::tanh(cn[j]);
                    hn[j] = o_g * tc[j];
                }
            }
        }

        if (spec_.return_sequences) {
            Tensor y({batch, steps_, units_});
            for (std::size_t t = 0; t < steps_; ++t)
                for (std::size_t r = 0; r < batch; ++r)
                    std::memcpy(y.data() + (r * steps_ + t) * units_,
                                h_[t + 1].data() + r * units_, units_ * sizeof(double));
            return y;
        }
        return h_[steps_];
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t h = units_;
        const std::size_t batch = batch_;
        const bool seq = spec_.return_sequences;
        if (seq) {
            if (g.shape() != Shape{batch, steps_, h}) throw ShapeMismatch("LSTM backward grad shape");
        } else if (g.shape() != Shape{batch, h}) {
            throw ShapeMismatch("LSTM backward grad shape");
        }

        Tensor dx({batch, steps_, in_});
        Tensor dh({batch, h});
        Tensor dc({batch, h});
        Tensor dz({batch, 4 * h});
        Tensor xt({batch, in_});
        Tensor dxt({batch, in_});

        for (std::size_t t = steps_; t-- > 0;) {
            // Upstream contribution at this step.
            if (seq) {
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t j = 0; j < h; ++j) dh.at2(r, j) += g.at3(r, t, j);
            } else if (t == steps_ - 1) {
                for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += g[i];
            }

            const Tensor& z = acts_[t];
            for (std::size_t r = 0; r < batch; ++r) {
                const double* zr = z.data() + r * 4 * h;
                const double* cp = c_[t].data() + r * h;
                const double* tc = tanh_c_[t].data() + r * h;
                double* dhr = dh.data() + r * h;
                double* dcr = dc.data() + r * h;
                double* dzr = dz.data() + r * 4 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double i_g = zr[j], f_g = zr[h + j], g_g = zr[2 * h + j], o_g = zr[3 * h + j];
                    const double d_o = dhr[j] * tc[j];
                    const double d_c = dhr[j] * o_g * (1.0 - tc[j] * tc[j]) + dcr[j];
                    const double d_i = d_c * g_g;
                    const double d_f = d_c * cp[j];
                    const double d_g = d_c * i_g;
                    dzr[j] = d_i * i_g * (1.0 - i_g);
                    dzr[h + j] = d_f * f_g * (1.0 - f_g);
                    dzr[2 * h + j] = d_g * (1.0 - g_g * g_g);
                    dzr[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    dcr[j] = d_c * f_g;  // flows to step t-1
                }
            }

            gather_step(input_, t, xt);
            gemm_at_acc(dz.data(), xt.data(), dwx_.data(), batch, 4 * h, in_);
            gemm_at_acc(dz.data(), h_[t].data(), dwh_.data(), batch, 4 * h, h);
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t j = 0; j < 4 * h; ++j) db_[j] += dz.at2(r, j);

            dxt.fill(0.0);
            gemm_acc(dz.data(), wx_.data(), dxt.data(), batch, 4 * h, in_);
            for (std::size_t r = 0; r < batch; ++r)
                std::memcpy(dx.data() + (r * steps_ + t) * in_, dxt.data() + r * in_,
                            in_ * sizeof(double));

            dh.fill(0.0);
            gemm_acc(dz.data(), wh_.data(), dh.data(), batch, 4 * h, h);
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"Wx", &wx_, &dwx_}, {"Wh", &wh_, &dwh_}, {"b", &b_, &db_}};
    }

    void init_params(Rng& rng) override {
        glorot_uniform(wx_, in_, units_, rng);
        glorot_uniform(wh_, units_, units_, rng);
        b_.fill(0.0);
        for (std::size_t j = 0; j < units_; ++j) b_[units_ + j] = 1.0;  // forget gate
    }

private:
    void gather_step(const Tensor& x, std::size_t t, Tensor& xt) const {
        for (std::size_t r = 0; r < x.dim(0); ++r)
            std::memcpy(xt.data() + r * in_, x.data() + (r * steps_ + t) * in_,
                        in_ * sizeof(double));
    }

    LayerSpec spec_;
    std::size_t steps_, in_, units_;
    Tensor wx_, wh_, b_, dwx_, dwh_, db_;

    Tensor input_;
    std::vector<Tensor> acts_, c_, tanh_c_, h_;
    std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// BiLSTM: independent forward and reversed passes, outputs concatenated.
// ---------------------------------------------------------------------------

class BiLSTMLayer final : public Layer {
public:
    BiLSTMLayer(LayerSpec spec, std::size_t steps, std::size_t in)
        : spec_(spec), steps_(steps), in_(in), units_(spec.units) {
        LayerSpec sub = spec;
        sub.kind = LayerKind::LSTM;
        fwd_ = std::make_unique<LSTMLayer>(sub, steps, in);
        bwd_ = std::make_unique<LSTMLayer>(sub, steps, in);
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 3 || input[1] != steps_ || input[2] != in_)
            throw ShapeMismatch("BiLSTM expects (batch," + std::to_string(steps_) + "," +
                                std::to_string(in_) + "), got " + shape_str(input));
        if (spec_.return_sequences) return {input[0], steps_, 2 * units_};
        return {input[0], 2 * units_};
    }

    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override {
        (void)output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        batch_ = batch;
        const Tensor yf = fwd_->forward(x, mode, rng);
        const Tensor yb = bwd_->forward(reverse_time(x), mode, rng);
        const std::size_t h = units_;
        if (spec_.return_sequences) {
            Tensor y({batch, steps_, 2 * h});
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t t = 0; t < steps_; ++t) {
                    std::memcpy(y.data() + (r * steps_ + t) * 2 * h,
                                yf.data() + (r * steps_ + t) * h, h * sizeof(double));
                    std::memcpy(y.data() + (r * steps_ + t) * 2 * h + h,
                                yb.data() + (r * steps_ + (steps_ - 1 - t)) * h, h * sizeof(double));
                }
            return y;
        }
        Tensor y({batch, 2 * h});
        for (std::size_t r = 0; r < batch; ++r) {
            std::memcpy(y.data() + r * 2 * h, yf.data() + r * h, h * sizeof(double));
            std::memcpy(y.data() + r * 2 * h + h, yb.data() + r * h, h * sizeof(double));
        }
        return y;
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t h = units_;
        const std::size_t batch = batch_;
        Tensor gf, gb;
        if (spec_.return_sequences) {
            if (g.shape() != Shape{batch, steps_, 2 * h})
                throw ShapeMismatch("BiLSTM backward grad shape");
            gf = Tensor({batch, steps_, h});
            gb = Tensor({batch, steps_, h});
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t t = 0; t < steps_; ++t) {
                    std::memcpy(gf.data() + (r * steps_ + t) * h,
                                g.data() + (r * steps_ + t) * 2 * h, h * sizeof(double));
                    // The reversed pass saw time mirrored.
                    std::memcpy(gb.data() + (r * steps_ + (steps_ - 1 - t)) * h,
                                g.data() + (r * steps_ + t) * 2 * h + h, h * sizeof(double));
                }
        } else {
            if (g.shape() != Shape{batch, 2 * h}) throw ShapeMismatch("BiLSTM backward grad shape");
            gf = Tensor({batch, h});
            gb = Tensor({batch, h});
            for (std::size_t r = 0; r < batch; ++r) {
                std::memcpy(gf.data() + r * h, g.data() + r * 2 * h, h * sizeof(double));
                std::memcpy(gb.data() + r * h, g.data() + r * 2 * h + h, h * sizeof(double));
            }
        }
        Tensor dx = fwd_->backward(gf);
        const Tensor dxr = reverse_time(bwd_->backward(gb));
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxr[i];
        return dx;
    }

    std::vector<Param> params() override {
        std::vector<Param> out;
        for (auto& p : fwd_->params()) out.push_back({"fwd." + p.name, p.value, p.grad});
        for (auto& p : bwd_->params()) out.push_back({"bwd." + p.name, p.value, p.grad});
        return out;
    }

    void init_params(Rng& rng) override {
        fwd_->init_params(rng);
        bwd_->init_params(rng);
    }

private:
    LayerSpec spec_;
    std::size_t steps_, in_, units_;
    std::unique_ptr<LSTMLayer> fwd_, bwd_;
    std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// GRU (update/reset gates, candidate applied to reset-scaled state)
// ---------------------------------------------------------------------------

// Gate row blocks: [update z, reset r, candidate]. State update follows
// h_t = z * h_{t-1} + (1 - z) * candidate.
class GRULayer final : public Layer {
public:
    GRULayer(LayerSpec spec, std::size_t steps, std::size_t in)
        : spec_(spec), steps_(steps), in_(in), units_(spec.units),
          wx_({3 * units_, in_}), wh_({3 * units_, units_}), b_({3 * units_}),
          dwx_({3 * units_, in_}), dwh_({3 * units_, units_}), db_({3 * units_}) {
        if (units_ < 1) throw ConfigError("GRU units must be >= 1");
    }

    const LayerSpec& spec() const override { return spec_; }

    Shape output_shape(const Shape& input) const override {
        if (input.size() != 3 || input[1] != steps_ || input[2] != in_)
            throw ShapeMismatch("GRU expects (batch," + std::to_string(steps_) + "," +
                                std::to_string(in_) + "), got " + shape_str(input));
        if (spec_.return_sequences) return {input[0], steps_, units_};
        return {input[0], units_};
    }

    Tensor forward(const Tensor& x, Mode, Rng*) override {
        (void)output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        const std::size_t h = units_;
        batch_ = batch;
        input_ = x;
        z_.assign(steps_, Tensor({batch, h}));
        r_.assign(steps_, Tensor({batch, h}));
        cand_.assign(steps_, Tensor({batch, h}));
        rh_.assign(steps_, Tensor({batch, h}));
        h_.assign(steps_ + 1, Tensor({batch, h}));

        Tensor xt({batch, in_});
        Tensor a({batch, 3 * h});
        for (std::size_t t = 0; t < steps_; ++t) {
            gather_step(x, t, xt);
            a.fill(0.0);
            gemm_bt_acc(xt.data(), wx_.data(), a.data(), batch, in_, 3 * h);
            add_bias_rows(a, b_);
            // z and r see the raw previous state.
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* hp = h_[t].data() + r2 * h;
                double* ar = a.data() + r2 * 3 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double* uz = wh_.data() + j * h;
                    const double* ur = wh_.data() + (h + j) * h;
                    double accz = 0.0, accr = 0.0;
                    for (std::size_t k = 0; k < h; ++k) {
                        accz += uz[k] * hp[k];
                        accr += ur[k] * hp[k];
                    }
                    ar[j] += accz;
                    ar[h + j] += accr;
                }
            }
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* ar = a.data() + r2 * 3 * h;
                const double* hp = h_[t].data() + r2 * h;
                double* zr = z_[t].data() + r2 * h;
                double* rr = r_[t].data() + r2 * h;
                double* rhr = rh_[t].data() + r2 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    zr[j] = sigmoid(ar[j]);
                    rr[j] = sigmoid(ar[h + j]);
                    rhr[j] = rr[j] * hp[j];
                }
            }
            // Candidate sees the reset-scaled state.
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* rhr = rh_[t].data() + r2 * h;
                double* ar = a.data() + r2 * 3 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double* uh = wh_.data() + (2 * h + j) * h;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < h; ++k) acc += uh[k] * rhr[k];
                    ar[2 * h + j] += acc;
                }
            }
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* ar = a.data() + r2 * 3 * h;
                const double* hp = h_[t].data() + r2 * h;
                double* cr = cand_[t].data() + r2 * h;
                double* hn = h_[t + 1].data() + r2 * h;
                const double* zr = z_[t].data() + r2 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    cr[j] = std::tanh(ar[2 * h + j]);
                    hn[j] = zr[j] * hp[j] + (1.0 - zr[j]) * cr[j];
                }
            }
        }

        if (spec_.return_sequences) {
            Tensor y({batch, steps_, h});
            for (std::size_t t = 0; t < steps_; ++t)
                for (std::size_t r2 = 0; r2 < batch; ++r2)
                    std::memcpy(y.data() + (r2 * steps_ + t) * h, h_[t + 1].data() + r2 * h,
                                h * sizeof(double));
            return y;
        }
        return h_[steps_];
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t h = units_;
        const std::size_t batch = batch_;
        const bool seq = spec_.return_sequences;
        if (seq) {
            if (g.shape() != Shape{batch, steps_, h}) throw ShapeMismatch("GRU backward grad shape");
        } else if (g.shape() != Shape{batch, h}) {
            throw ShapeMismatch("GRU backward grad shape");
        }

        Tensor dx({batch, steps_, in_});
        Tensor dh({batch, h});
        Tensor da({batch, 3 * h});  // [daz, dar, dah]
        Tensor xt({batch, in_});
        Tensor dxt({batch, in_});

        for (std::size_t t = steps_; t-- > 0;) {
            if (seq) {
                for (std::size_t r2 = 0; r2 < batch; ++r2)
                    for (std::size_t j = 0; j < h; ++j) dh.at2(r2, j) += g.at3(r2, t, j);
            } else if (t == steps_ - 1) {
                for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += g[i];
            }

            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* zr = z_[t].data() + r2 * h;
                const double* cr = cand_[t].data() + r2 * h;
                const double* hp = h_[t].data() + r2 * h;
                const double* dhr = dh.data() + r2 * h;
                double* dar = da.data() + r2 * 3 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double d_z = dhr[j] * (hp[j] - cr[j]);
                    const double d_cand = dhr[j] * (1.0 - zr[j]);
                    dar[2 * h + j] = d_cand * (1.0 - cr[j] * cr[j]);
                    dar[j] = d_z * zr[j] * (1.0 - zr[j]);
                    // reset-gate grad needs drh first; filled below
                    dar[h + j] = 0.0;
                }
            }

            // drh = dah * Uh; dr = drh .* h_prev; also dh_prev pieces.
            Tensor drh({batch, h});
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* dar = da.data() + r2 * 3 * h;
                double* drhr = drh.data() + r2 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double* uh = wh_.data() + (2 * h + j) * h;
                    const double dah_j = dar[2 * h + j];
                    for (std::size_t k = 0; k < h; ++k) drhr[k] += dah_j * uh[k];
                }
            }
            for (std::size_t r2 = 0; r2 < batch; ++r2) {
                const double* rr = r_[t].data() + r2 * h;
                const double* hp = h_[t].data() + r2 * h;
                const double* drhr = drh.data() + r2 * h;
                double* dar = da.data() + r2 * 3 * h;
                for (std::size_t j = 0; j < h; ++j) {
                    const double d_r = drhr[j] * hp[j];
                    dar[h + j] = d_r * rr[j] * (1.0 - rr[j]);
                }
            }

            // Parameter gradients.
            gather_step(input_, t, xt);
            gemm_at_acc(da.data(), xt.data(), dwx_.data(), batch, 3 * h, in_);
            for (std::size_t r2 = 0; r2 < batch; ++r2)
                for (std::size_t j = 0; j < 3 * h; ++j) db_[j] += da.at2(r2, j);
            // dWh blocks: z and r against h_prev, candidate against rh.
            {
                // views: da_z = da[:, 0:h], da_r = da[:, h:2h], da_h = da[:, 2h:3h]
                Tensor daz({batch, h}), dar2({batch, h}), dah({batch, h});
                for (std::size_t r2 = 0; r2 < batch; ++r2) {
                    const double* src = da.data() + r2 * 3 * h;
                    std::memcpy(daz.data() + r2 * h, src, h * sizeof(double));
                    std::memcpy(dar2.data() + r2 * h, src + h, h * sizeof(double));
                    std::memcpy(dah.data() + r2 * h, src + 2 * h, h * sizeof(double));
                }
                gemm_at_acc(daz.data(), h_[t].data(), dwh_.data(), batch, h, h);
                gemm_at_acc(dar2.data(), h_[t].data(), dwh_.data() + h * h, batch, h, h);
                gemm_at_acc(dah.data(), rh_[t].data(), dwh_.data() + 2 * h * h, batch, h, h);

                // dh_prev = dh.*z + drh.*r + daz*Uz + dar*Ur
                Tensor dhp({batch, h});
                for (std::size_t r2 = 0; r2 < batch; ++r2) {
                    const double* zr = z_[t].data() + r2 * h;
                    const double* rr = r_[t].data() + r2 * h;
                    const double* dhr = dh.data() + r2 * h;
                    const double* drhr = drh.data() + r2 * h;
                    double* out = dhp.data() + r2 * h;
                    for (std::size_t j = 0; j < h; ++j)
                        out[j] = dhr[j] * zr[j] + drhr[j] * rr[j];
                }
                gemm_acc(daz.data(), wh_.data(), dhp.data(), batch, h, h);
                gemm_acc(dar2.data(), wh_.data() + h * h, dhp.data(), batch, h, h);

                dxt.fill(0.0);
                gemm_acc(da.data(), wx_.data(), dxt.data(), batch, 3 * h, in_);
                for (std::size_t r2 = 0; r2 < batch; ++r2)
                    std::memcpy(dx.data() + (r2 * steps_ + t) * in_, dxt.data() + r2 * in_,
                                in_ * sizeof(double));
                dh = dhp;
            }
        }
        return dx;
    }

    std::vector<Param> params() override {
        return {{"Wx", &wx_, &dwx_}, {"Wh", &wh_, &dwh_}, {"b", &b_, &db_}};
    }

    void init_params(Rng& rng) override {
        glorot_uniform(wx_, in_, units_, rng);
        glorot_uniform(wh_, units_, units_, rng);
        b_.fill(0.0);
    }

private:
    void gather_step(const Tensor& x, std::size_t t, Tensor& xt) const {
        for (std::size_t r2 = 0; r2 < x.dim(0); ++r2)
            std::memcpy(xt.data() + r2 * in_, x.data() + (r2 * steps_ + t) * in_,
                        in_ * sizeof(double));
    }

    LayerSpec spec_;
    std::size_t steps_, in_, units_;
    Tensor wx_, wh_, b_, dwx_, dwh_, db_;

    Tensor input_;
    std::vector<Tensor> z_, r_, cand_, rh_, h_;
    std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input_no_batch) {
    const auto need_rank = [&](std::size_t r) {
        if (input_no_batch.size() != r)
            throw ShapeMismatch(layer_kind_name(spec.kind) + " expects input rank " +
                                std::to_string(r + 1) + ", got shape " +
                                shape_str(input_no_batch));
    };
    switch (spec.kind) {
        case LayerKind::Dense:
            need_rank(1);
            return std::make_unique<DenseLayer>(spec, input_no_batch[0]);
        case LayerKind::ReLU:
            return std::make_unique<ReLULayer>(spec);
        case LayerKind::Softmax:
            need_rank(1);
            return std::make_unique<SoftmaxLayer>(spec);
        case LayerKind::Dropout:
            return std::make_unique<DropoutLayer>(spec);
        case LayerKind::Conv1D:
            need_rank(2);
            return std::make_unique<Conv1DLayer>(spec, input_no_batch[0], input_no_batch[1]);
        case LayerKind::MaxPool1D:
            need_rank(2);
            return std::make_unique<MaxPool1DLayer>(spec, input_no_batch[0], input_no_batch[1]);
        case LayerKind::Flatten:
            need_rank(2);
            return std::make_unique<FlattenLayer>(spec);
        case LayerKind::LSTM:
            need_rank(2);
            return std::make_unique<LSTMLayer>(spec, input_no_batch[0], input_no_batch[1]);
        case LayerKind::BiLSTM:
            need_rank(2);
            return std::make_unique<BiLSTMLayer>(spec, input_no_batch[0], input_no_batch[1]);
        case LayerKind::GRU:
            need_rank(2);
            return std::make_unique<GRULayer>(spec, input_no_batch[0], input_no_batch[1]);
    }
    throw ConfigError("unhandled layer kind");
}

Tensor Network::forward(const Tensor& input, Mode mode, Rng* rng) {
    Tensor x = input;
    for (auto& layer : layers_) {
        x = layer->forward(x, mode, rng);
#ifndef NDEBUG
        if (!x.all_finite())
            throw NonFiniteLoss("non-finite activation after " +
                                layer_kind_name(layer->spec().kind));
#endif
    }
    return x;
}

Tensor Network::backward_from(const Tensor& grad, std::size_t n_layers) {
    if (n_layers > layers_.size()) throw ShapeMismatch("backward_from past end of network");
    Tensor g = grad;
    for (std::size_t i = n_layers; i-- > 0;) g = layers_[i]->backward(g);
    return g;
}

std::vector<Param> Network::params() {
    std::vector<Param> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (auto& p : layers_[i]->params())
            out.push_back({"layer" + std::to_string(i) + "." + p.name, p.value, p.grad});
    }
    return out;
}

void Network::zero_grads() {
    for (auto& p : params()) p.grad->fill(0.0);
}

std::size_t Network::param_count() {
    std::size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
}

} // namespace har::nn
