#include "gbmseg/diffgrid.hpp"

#include <cmath>

#include "gbmseg/kernels.hpp"

namespace gbmseg {

namespace {

template <typename T>
void require_5d(const TDiffGrid<T>& g, const char* what) {
    if (!g.valid() || g.shape().size() != 5) {
        throw ContractViolation(std::string(what) + ": expected a 5-d grid (N x C x D x H x W)");
    }
}

} // namespace

template <typename T>
TDiffGrid<T> conv3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& weight,
                    const TDiffGrid<T>& bias, int ksize) {
    require_5d(input, "conv3d input");
    require_5d(weight, "conv3d weight");
    if (ksize != 1 && ksize != 3) throw ContractViolation("conv3d: kernel size must be 1 or 3");
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    if (ws[2] != ksize || ws[3] != ksize || ws[4] != ksize) {
        throw ContractViolation("conv3d: weight spatial extents " + shape_str(ws) + " do not match kernel size");
    }
    if (ws[1] != is[1]) {
        throw ContractViolation("conv3d: input has " + std::to_string(is[1]) + " channels but weight expects " +
                                std::to_string(ws[1]));
    }
    if (bias.shape() != Shape{ws[0]}) throw ContractViolation("conv3d: bias must have one value per output channel");

    TGrid<T> out_value(Shape{is[0], ws[0], is[2], is[3], is[4]});
    kernels::conv3d_forward(input.value(), weight.value(), bias.value(), out_value, ksize);
    const bool req = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    TDiffGrid<T> out(std::move(out_value), req);
    if (tape && req) {
        auto in_n = input.node();
        auto w_n = weight.node();
        auto b_n = bias.node();
        auto out_n = out.node();
        tape->record([in_n, w_n, b_n, out_n, ksize] {
            if (w_n->requires_grad || b_n->requires_grad) {
                kernels::conv3d_backward_weights(out_n->grad, in_n->value, w_n->grad, b_n->grad, ksize);
            }
            if (in_n->requires_grad) {
                kernels::conv3d_backward_data(out_n->grad, w_n->value, in_n->grad, ksize);
            }
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> transposed_conv3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& weight,
                               const TDiffGrid<T>& bias) {
    require_5d(input, "transposed_conv3d input");
    require_5d(weight, "transposed_conv3d weight");
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    if (ws[2] != 2 || ws[3] != 2 || ws[4] != 2) {
        throw ContractViolation("transposed_conv3d: kernel must be 2x2x2");
    }
    if (ws[0] != is[1]) {
        throw ContractViolation("transposed_conv3d: input has " + std::to_string(is[1]) +
                                " channels but weight expects " + std::to_string(ws[0]));
    }
    if (bias.shape() != Shape{ws[1]}) {
        throw ContractViolation("transposed_conv3d: bias must have one value per output channel");
    }

    TGrid<T> out_value(Shape{is[0], ws[1], 2 * is[2], 2 * is[3], 2 * is[4]});
    kernels::tconv3d_forward(input.value(), weight.value(), bias.value(), out_value);
    const bool req = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    TDiffGrid<T> out(std::move(out_value), req);
    if (tape && req) {
        auto in_n = input.node();
        auto w_n = weight.node();
        auto b_n = bias.node();
        auto out_n = out.node();
        tape->record([in_n, w_n, b_n, out_n] {
            if (w_n->requires_grad || b_n->requires_grad) {
                kernels::tconv3d_backward_weights(out_n->grad, in_n->value, w_n->grad, b_n->grad);
            }
            if (in_n->requires_grad) {
                kernels::tconv3d_backward_data(out_n->grad, w_n->value, in_n->grad);
            }
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> maxpool3d(TTape<T>* tape, const TDiffGrid<T>& input) {
    require_5d(input, "maxpool3d input");
    const auto& is = input.shape();
    static const char* axis_name[3] = {"D", "H", "W"};
    for (int a = 0; a < 3; ++a) {
        if (is[2 + a] % 2 != 0) {
            throw ContractViolation(std::string("maxpool3d: spatial axis ") + axis_name[a] + " has odd extent " +
                                    std::to_string(is[2 + a]));
        }
    }
    TGrid<T> out_value(Shape{is[0], is[1], is[2] / 2, is[3] / 2, is[4] / 2});
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    kernels::maxpool3d_forward(input.value(), out_value, *argmax);
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n, argmax] { kernels::maxpool3d_backward(out_n->grad, *argmax, in_n->grad); });
    }
    return out;
}

template <typename T>
TDiffGrid<T> batchnorm3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& gamma,
                         const TDiffGrid<T>& beta, TBatchNormState<T>& state, bool training, double momentum,
                         double eps) {
    require_5d(input, "batchnorm3d input");
    const std::int64_t C = input.shape()[1];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
        throw ContractViolation("batchnorm3d: gamma/beta must have one value per channel");
    }
    if (state.running_mean.shape != Shape{C}) {
        throw ContractViolation("batchnorm3d: running stats channel count mismatch");
    }

    auto mean = std::make_shared<std::vector<double>>();
    auto var = std::make_shared<std::vector<double>>();
    if (training) {
        kernels::bn_stats(input.value(), *mean, *var);
        for (std::int64_t c = 0; c < C; ++c) {
            state.running_mean[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(state.running_mean[c]) +
                                                   momentum * (*mean)[static_cast<std::size_t>(c)]);
            state.running_var[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(state.running_var[c]) +
                                                  momentum * (*var)[static_cast<std::size_t>(c)]);
        }
    } else {
        mean->resize(static_cast<std::size_t>(C));
        var->resize(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
            (*mean)[static_cast<std::size_t>(c)] = static_cast<double>(state.running_mean[c]);
            (*var)[static_cast<std::size_t>(c)] = static_cast<double>(state.running_var[c]);
        }
    }

    auto xhat = std::make_shared<TGrid<T>>(input.shape());
    TGrid<T> out_value(input.shape());
    kernels::bn_normalize(input.value(), *mean, *var, gamma.value(), beta.value(), eps, *xhat, out_value);
    const bool req = input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    TDiffGrid<T> out(std::move(out_value), req);
    if (tape && req) {
        auto in_n = input.node();
        auto g_n = gamma.node();
        auto b_n = beta.node();
        auto out_n = out.node();
        tape->record([in_n, g_n, b_n, out_n, xhat, var, eps, training] {
            if (training) {
                kernels::bn_backward_train(out_n->grad, *xhat, g_n->value, *var, eps, in_n->grad, g_n->grad,
                                           b_n->grad);
            } else {
                kernels::bn_backward_eval(out_n->grad, *xhat, g_n->value, *var, eps, in_n->grad, g_n->grad,
                                          b_n->grad);
            }
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> sigmoid(TTape<T>* tape, const TDiffGrid<T>& input) {
    TGrid<T> out_value(input.shape());
    kernels::sigmoid_forward(input.value(), out_value);
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n] { kernels::sigmoid_backward(out_n->grad, out_n->value, in_n->grad); });
    }
    return out;
}

template <typename T>
TDiffGrid<T> relu(TTape<T>* tape, const TDiffGrid<T>& input) {
    TGrid<T> out_value(input.shape());
    kernels::relu_forward(input.value(), out_value);
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n] { kernels::relu_backward(out_n->grad, in_n->value, in_n->grad); });
    }
    return out;
}

template <typename T>
TDiffGrid<T> spatial_dropout3d(TTape<T>* tape, const TDiffGrid<T>& input, double rate, RngState& rng,
                               bool training) {
    require_5d(input, "spatial_dropout3d input");
    if (rate < 0.0 || rate >= 1.0) {
        throw ContractViolation("spatial_dropout3d: rate must be in [0, 1)");
    }
    if (!training || rate == 0.0) return input;

    const std::int64_t NC = input.shape()[0] * input.shape()[1];
    auto factors = std::make_shared<std::vector<T>>(static_cast<std::size_t>(NC));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < NC; ++i) {
        (*factors)[static_cast<std::size_t>(i)] = rng.uniform01() < rate ? T(0) : keep_scale;
    }
    TGrid<T> out_value(input.shape());
    kernels::scale_channels(input.value(), *factors, out_value);
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n, factors] {
            TGrid<T> scaled(out_n->grad.shape);
            kernels::scale_channels(out_n->grad, *factors, scaled);
            for (std::int64_t i = 0; i < scaled.numel(); ++i) in_n->grad[i] += scaled[i];
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> concat_channels(TTape<T>* tape, const TDiffGrid<T>& a, const TDiffGrid<T>& b) {
    require_5d(a, "concat_channels a");
    require_5d(b, "concat_channels b");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3] || as[4] != bs[4]) {
        throw ContractViolation("concat_channels: N/D/H/W mismatch " + shape_str(as) + " vs " + shape_str(bs));
    }
    TGrid<T> out_value(Shape{as[0], as[1] + bs[1], as[2], as[3], as[4]});
    kernels::concat_channels_forward(a.value(), b.value(), out_value);
    const bool req = a.requires_grad() || b.requires_grad();
    TDiffGrid<T> out(std::move(out_value), req);
    if (tape && req) {
        auto a_n = a.node();
        auto b_n = b.node();
        auto out_n = out.node();
        tape->record([a_n, b_n, out_n] { kernels::concat_channels_backward(out_n->grad, a_n->grad, b_n->grad); });
    }
    return out;
}

template <typename T>
TDiffGrid<T> slice_channels(TTape<T>* tape, const TDiffGrid<T>& input, std::int64_t c0, std::int64_t c1) {
    require_5d(input, "slice_channels input");
    const auto& is = input.shape();
    if (c0 < 0 || c1 <= c0 || c1 > is[1]) throw ContractViolation("slice_channels: bad channel range");
    const std::int64_t N = is[0], C = is[1], S = is[2] * is[3] * is[4];
    TGrid<T> out_value(Shape{N, c1 - c0, is[2], is[3], is[4]});
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy_n(input.value().data.data() + (n * C + c0) * S, (c1 - c0) * S,
                    out_value.data.data() + n * (c1 - c0) * S);
    }
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n, c0, c1, N, C, S] {
            for (std::int64_t n = 0; n < N; ++n) {
                const T* src = out_n->grad.data.data() + n * (c1 - c0) * S;
                T* dst = in_n->grad.data.data() + (n * C + c0) * S;
                for (std::int64_t i = 0; i < (c1 - c0) * S; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> sum_all(TTape<T>* tape, const TDiffGrid<T>& input) {
    TGrid<T> out_value(Shape{1});
    out_value[0] = static_cast<T>(kernels::sum_all(input.value()));
    TDiffGrid<T> out(std::move(out_value), input.requires_grad());
    if (tape && input.requires_grad()) {
        auto in_n = input.node();
        auto out_n = out.node();
        tape->record([in_n, out_n] {
            const T g = out_n->grad[0];
            for (std::int64_t i = 0; i < in_n->grad.numel(); ++i) in_n->grad[i] += g;
        });
    }
    return out;
}

template <typename T>
TDiffGrid<T> mul(TTape<T>* tape, const TDiffGrid<T>& a, const TDiffGrid<T>& b) {
    check_same_shape(a.shape(), b.shape(), "mul");
    TGrid<T> out_value(a.shape());
    for (std::int64_t i = 0; i < out_value.numel(); ++i) out_value[i] = a.value()[i] * b.value()[i];
    const bool req = a.requires_grad() || b.requires_grad();
    TDiffGrid<T> out(std::move(out_value), req);
    if (tape && req) {
        auto a_n = a.node();
        auto b_n = b.node();
        auto out_n = out.node();
        tape->record([a_n, b_n, out_n] {
            for (std::int64_t i = 0; i < out_n->grad.numel(); ++i) {
                if (a_n->requires_grad) a_n->grad[i] += out_n->grad[i] * b_n->value[i];
                if (b_n->requires_grad) b_n->grad[i] += out_n->grad[i] * a_n->value[i];
            }
        });
    }
    return out;
}

template <typename T>
void backward(TTape<T>& tape, const TDiffGrid<T>& root) {
    tape.backward(root);
}

#define GBMSEG_INSTANTIATE_OPS(T)                                                                              \
    template TDiffGrid<T> conv3d<T>(TTape<T>*, const TDiffGrid<T>&, const TDiffGrid<T>&, const TDiffGrid<T>&, \
                                    int);                                                                      \
    template TDiffGrid<T> transposed_conv3d<T>(TTape<T>*, const TDiffGrid<T>&, const TDiffGrid<T>&,           \
                                               const TDiffGrid<T>&);                                           \
    template TDiffGrid<T> maxpool3d<T>(TTape<T>*, const TDiffGrid<T>&);                                       \
    template TDiffGrid<T> batchnorm3d<T>(TTape<T>*, const TDiffGrid<T>&, const TDiffGrid<T>&,                 \
                                         const TDiffGrid<T>&, TBatchNormState<T>&, bool, double, double);      \
    template TDiffGrid<T> sigmoid<T>(TTape<T>*, const TDiffGrid<T>&);                                         \
    template TDiffGrid<T> relu<T>(TTape<T>*, const TDiffGrid<T>&);                                            \
    template TDiffGrid<T> spatial_dropout3d<T>(TTape<T>*, const TDiffGrid<T>&, double, RngState&, bool);      \
    template TDiffGrid<T> concat_channels<T>(TTape<T>*, const TDiffGrid<T>&, const TDiffGrid<T>&);            \
    template TDiffGrid<T> slice_channels<T>(TTape<T>*, const TDiffGrid<T>&, std::int64_t, std::int64_t);      \
    template TDiffGrid<T> sum_all<T>(TTape<T>*, const TDiffGrid<T>&);                                         \
    template TDiffGrid<T> mul<T>(TTape<T>*, const TDiffGrid<T>&, const TDiffGrid<T>&);                        \
    template void backward<T>(TTape<T>&, const TDiffGrid<T>&);

GBMSEG_INSTANTIATE_OPS(float)
GBMSEG_INSTANTIATE_OPS(double)
#undef GBMSEG_INSTANTIATE_OPS

} // namespace gbmseg
