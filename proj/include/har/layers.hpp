#pragma once

#include <memory>
#include <string>
#include <vector>

#include "har/rng.hpp"
#include "har/tensor.hpp"

namespace har::nn {

enum class Mode { Train, Infer };

enum class LayerKind { Dense, ReLU, Softmax, Dropout, Conv1D, MaxPool1D, Flatten, LSTM, BiLSTM, GRU };

std::string layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& name);

// Declarative layer description; hyperparameters are validated against the
// kind and the incoming shape when the layer is instantiated.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t units = 0;        // Dense / LSTM / BiLSTM / GRU
    std::size_t filters = 0;      // Conv1D
    std::size_t kernel_size = 0;  // Conv1D
    std::size_t pool_size = 2;    // MaxPool1D
    double rate = 0.0;            // Dropout, in [0, 1)
    bool return_sequences = false;

    static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units}; }
    static LayerSpec relu() { return {LayerKind::ReLU}; }
    static LayerSpec softmax() { return {LayerKind::Softmax}; }
    static LayerSpec dropout(double rate) {
        LayerSpec s{LayerKind::Dropout};
        s.rate = rate;
        return s;
    }
    static LayerSpec conv1d(std::size_t filters, std::size_t kernel) {
        LayerSpec s{LayerKind::Conv1D};
        s.filters = filters;
        s.kernel_size = kernel;
        return s;
    }
    static LayerSpec maxpool1d(std::size_t pool = 2) {
        LayerSpec s{LayerKind::MaxPool1D};
        s.pool_size = pool;
        return s;
    }
    static LayerSpec flatten() { return {LayerKind::Flatten}; }
    static LayerSpec lstm(std::size_t units, bool return_sequences = false) {
        LayerSpec s{LayerKind::LSTM, units};
        s.return_sequences = return_sequences;
        return s;
    }
    static LayerSpec bilstm(std::size_t units, bool return_sequences = false) {
        LayerSpec s{LayerKind::BiLSTM, units};
        s.return_sequences = return_sequences;
        return s;
    }
    static LayerSpec gru(std::size_t units, bool return_sequences = false) {
        LayerSpec s{LayerKind::GRU, units};
        s.return_sequences = return_sequences;
        return s;
    }
};

// Named view of one parameter tensor and its gradient accumulator.
struct Param {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual const LayerSpec& spec() const = 0;

    // Shape transform including the leading batch dimension.
    virtual Shape output_shape(const Shape& input) const = 0;

    // Forward pass; caches whatever backward needs. rng is only consumed in
    // train mode (dropout); infer mode is deterministic and rng-free.
    virtual Tensor forward(const Tensor& input, Mode mode, Rng* rng) = 0;

    // Backward pass for the most recent forward; accumulates parameter
    // gradients and returns the gradient w.r.t. the layer input.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::vector<Param> params() { return {}; }

    virtual void init_params(Rng&) {}

    std::size_t param_count();
};

// Instantiates a layer for a concrete input shape (batch dim excluded).
// Throws ShapeMismatch/ConfigError on invalid hyperparameters.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input_no_batch);

// Feed-forward stack of layers with a shared forward/backward protocol.
class Network {
public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& input, Mode mode, Rng* rng = nullptr);

    // Full backward through every layer.
    Tensor backward(const Tensor& grad_out) { return backward_from(grad_out, layers_.size()); }

    // Backward through the first n layers only; used with the fused
    // softmax+cross-entropy gradient, which already accounts for the final
    // Softmax layer.
    Tensor backward_from(const Tensor& grad, std::size_t n_layers);

    std::vector<Param> params();
    void zero_grads();
    std::size_t param_count();

    std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

} // namespace har::nn
