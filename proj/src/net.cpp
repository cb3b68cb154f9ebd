#include "gfield/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gfield/kernels.hpp"
#include "gfield/random.hpp"

namespace gfield {

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw Error(Errc::config, "mlp needs at least an input and an output width");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        if (widths_[l] < 1 || widths_[l + 1] < 1) throw Error(Errc::config, "mlp widths must be >= 1");
        offsets_.push_back(total);
        total += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
    }
    params_.assign(total, 0.0);
}

Mlp make_mlp(int input_dim, int hidden_layers, int hidden_width, int output_dim) {
    std::vector<int> widths{input_dim};
    for (int i = 0; i < hidden_layers; ++i) widths.push_back(hidden_width);
    widths.push_back(output_dim);
    return Mlp(std::move(widths));
}

void Mlp::init_random(Rng& rng) {
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const int in = widths_[l], out = widths_[l + 1];
        const double bound = std::sqrt(6.0 / (in + out));
        double* w = params_.data() + weight_offset(l);
        for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) w[i] = rng.uniform(-bound, bound);
        std::fill_n(params_.data() + bias_offset(l), out, 0.0);
    }
}

std::vector<double> Mlp::forward(std::span<const double> input, std::size_t rows, Cache* cache) const {
    if (input.size() != rows * static_cast<std::size_t>(input_dim()))
        throw Error(Errc::dimension_mismatch, "mlp input has " + std::to_string(input.size()) +
                                                  " values, expected " + std::to_string(rows * input_dim()));
    const auto& k = kernels::active();
    std::vector<double> cur(input.begin(), input.end());
    if (cache) {
        cache->rows = rows;
        cache->layer_outputs.clear();
        cache->layer_outputs.push_back(cur);
    }
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const auto in = static_cast<std::size_t>(widths_[l]);
        const auto out = static_cast<std::size_t>(widths_[l + 1]);
        std::vector<double> next(rows * out);
        k.dense_forward(params_.data() + weight_offset(l), params_.data() + bias_offset(l), cur.data(),
                        next.data(), rows, in, out);
        if (l + 1 < layer_count()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        } else {
            for (double& v : next) v = 1.0 / (1.0 + std::exp(-v));
        }
        cur = std::move(next);
        if (cache) cache->layer_outputs.push_back(cur);
    }
    return cur;
}

std::vector<double> Mlp::backward(const Cache& cache, std::span<const double> upstream,
                                  std::span<double> param_grad) const {
    if (cache.empty() || cache.layer_outputs.size() != layer_count() + 1)
        throw Error(Errc::state, "mlp backward called without a matching forward cache");
    const std::size_t rows = cache.rows;
    if (upstream.size() != rows * static_cast<std::size_t>(output_dim()))
        throw Error(Errc::dimension_mismatch, "mlp upstream gradient has the wrong length");
    if (param_grad.size() != param_count())
        throw Error(Errc::dimension_mismatch, "mlp parameter gradient buffer has the wrong length");

    const auto& k = kernels::active();
    // Gradient w.r.t. the pre-activation of the current layer.
    std::vector<double> delta(upstream.begin(), upstream.end());
    {
        const auto& y = cache.layer_outputs.back();
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= y[i] * (1.0 - y[i]);
    }
    for (std::size_t l = layer_count(); l-- > 0;) {
        const auto in = static_cast<std::size_t>(widths_[l]);
        const auto out = static_cast<std::size_t>(widths_[l + 1]);
        const auto& x = cache.layer_outputs[l];
        std::vector<double> dx(rows * in);
        k.dense_backward(params_.data() + weight_offset(l), x.data(), delta.data(), dx.data(),
                         param_grad.data() + weight_offset(l), param_grad.data() + bias_offset(l), rows, in, out);
        if (l > 0) {
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dx[i] : 0.0;
        }
        delta = std::move(dx);
    }
    return delta;
}

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target, double beta) {
    if (pred.size() != target.size())
        throw Error(Errc::dimension_mismatch, "smooth_l1: prediction and target lengths differ");
    if (!(beta > 0.0)) throw Error(Errc::domain, "smooth_l1: beta must be > 0");
}

}  // namespace

double smooth_l1(std::span<const double> pred, std::span<const double> target, double beta) {
    check_pair(pred, target, beta);
    if (pred.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = std::abs(pred[i] - target[i]);
        sum += r < beta ? 0.5 * r * r / beta : r - 0.5 * beta;
    }
    return sum / static_cast<double>(pred.size());
}

std::vector<double> smooth_l1_grad(std::span<const double> pred, std::span<const double> target, double beta) {
    check_pair(pred, target, beta);
    std::vector<double> g(pred.size());
    const double inv_n = pred.empty() ? 0.0 : 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        const double d = std::abs(r) < beta ? r / beta : (r > 0.0 ? 1.0 : -1.0);
        g[i] = d * inv_n;
    }
    return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr_override) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw Error(Errc::dimension_mismatch, "adam_step: parameter, gradient and moment shapes differ");
    const double lr = lr_override >= 0.0 ? lr_override : state.lr;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
    double* m = state.m.data();
    double* v = state.v.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        if (lr == 0.0) continue;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace gfield
