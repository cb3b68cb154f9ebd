#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfield/core.hpp"

namespace gfield {

class Rng;

// Fully connected decoder: ReLU hidden layers, sigmoid output.
// Parameters are one flat array, per layer W (out x in, row-major) followed by b (out).
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> widths);

    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    std::size_t layer_count() const { return widths_.size() - 1; }
    std::size_t param_count() const { return params_.size(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + static_cast<std::size_t>(widths_[layer]) * widths_[layer + 1];
    }

    // Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    void init_random(Rng& rng);

    // Activations of one batched forward pass, kept for backward.
    struct Cache {
        std::size_t rows = 0;
        // layer_outputs[0] is the input; layer_outputs[k] the post-activation output of layer k.
        std::vector<std::vector<double>> layer_outputs;

        bool empty() const { return layer_outputs.empty(); }
        std::span<const double> output() const { return layer_outputs.back(); }
    };

    // input is rows x input_dim; returns rows x output_dim.
    std::vector<double> forward(std::span<const double> input, std::size_t rows, Cache* cache = nullptr) const;

    // Accumulates parameter gradients into param_grad (param_count long) and returns the
    // rows x input_dim gradient w.r.t. the input. `upstream` is d(loss)/d(output).
    std::vector<double> backward(const Cache& cache, std::span<const double> upstream,
                                 std::span<double> param_grad) const;

private:
    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

Mlp make_mlp(int input_dim, int hidden_layers, int hidden_width, int output_dim);

// Element-wise Smooth-L1 with mean reduction over all elements.
double smooth_l1(std::span<const double> pred, std::span<const double> target, double beta);
std::vector<double> smooth_l1_grad(std::span<const double> pred, std::span<const double> target, double beta);

struct AdamState {
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
    std::vector<double> m;
    std::vector<double> v;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update using state.lr (or lr_override when >= 0).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr_override = -1.0);

}  // namespace gfield
