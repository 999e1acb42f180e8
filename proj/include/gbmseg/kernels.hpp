#pragma once

#include <cstdint>
#include <vector>

#include "gbmseg/exec.hpp"
#include "gbmseg/grid.hpp"

// Low-level numeric kernels. Each heavy kernel exists twice: a plain
// nested-loop reference in kernels::serial and an OpenMP version in
// kernels::par. Both accumulate per output element in the same order
// (64-bit accumulators inside reductions), and the parallel versions only
// split independent output elements across threads, so results do not depend
// on thread count. The unqualified kernels:: wrappers dispatch on exec::mode().
//
// Kernels assume shapes already validated by the calling op. Gradient kernels
// accumulate (+=) into their output grids.

namespace gbmseg::kernels {

// Per-(n,s) sums backing the soft Dice loss; kept for the backward pass.
struct DiceParts {
    std::vector<double> num; // sum p*g per (n,s)
    std::vector<double> den; // sum p^2 + sum g^2 + eps per (n,s)
    double loss = 0.0;
};

#define GBMSEG_DECLARE_KERNELS(ns)                                                                            \
    namespace ns {                                                                                            \
    template <typename T>                                                                                     \
    void conv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out, int ksize);  \
    template <typename T>                                                                                     \
    void conv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin, int ksize);             \
    template <typename T>                                                                                     \
    void conv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb,        \
                                 int ksize);                                                                  \
    template <typename T>                                                                                     \
    void tconv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out);            \
    template <typename T>                                                                                     \
    void tconv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin);                       \
    template <typename T>                                                                                     \
    void tconv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb);      \
    template <typename T>                                                                                     \
    void maxpool3d_forward(const TGrid<T>& in, TGrid<T>& out, std::vector<std::int64_t>& argmax);             \
    template <typename T>                                                                                     \
    void maxpool3d_backward(const TGrid<T>& gout, const std::vector<std::int64_t>& argmax, TGrid<T>& gin);    \
    template <typename T>                                                                                     \
    void bn_stats(const TGrid<T>& in, std::vector<double>& mean, std::vector<double>& var);                   \
    template <typename T>                                                                                     \
    void bn_normalize(const TGrid<T>& in, const std::vector<double>& mean, const std::vector<double>& var,    \
                      const TGrid<T>& gamma, const TGrid<T>& beta, double eps, TGrid<T>& xhat, TGrid<T>& y);  \
    template <typename T>                                                                                     \
    void bn_backward_train(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,                 \
                           const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,       \
                           TGrid<T>& dbeta);                                                                  \
    template <typename T>                                                                                     \
    void bn_backward_eval(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,                  \
                          const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,        \
                          TGrid<T>& dbeta);                                                                   \
    template <typename T>                                                                                     \
    void sigmoid_forward(const TGrid<T>& in, TGrid<T>& out);                                                  \
    template <typename T>                                                                                     \
    void sigmoid_backward(const TGrid<T>& gout, const TGrid<T>& y, TGrid<T>& gin);                            \
    template <typename T>                                                                                     \
    void relu_forward(const TGrid<T>& in, TGrid<T>& out);                                                     \
    template <typename T>                                                                                     \
    void relu_backward(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gin);                              \
    template <typename T>                                                                                     \
    DiceParts dice_forward(const TGrid<T>& pred, const TGrid<T>& target, double eps);                         \
    template <typename T>                                                                                     \
    void dice_backward(const TGrid<T>& pred, const TGrid<T>& target, const DiceParts& parts, double upstream, \
                       TGrid<T>& gpred);                                                                      \
    template <typename T>                                                                                     \
    void adam_update(TGrid<T>& param, const TGrid<T>& grad, TGrid<T>& m, TGrid<T>& v, std::int64_t t,         \
                     double lr, double beta1, double beta2, double eps);                                      \
    }

GBMSEG_DECLARE_KERNELS(serial)
GBMSEG_DECLARE_KERNELS(par)
#undef GBMSEG_DECLARE_KERNELS

// Shared single-implementation helpers (cheap, memory-bound).
template <typename T>
void scale_channels(const TGrid<T>& in, const std::vector<T>& factor_per_nc, TGrid<T>& out);
template <typename T>
void concat_channels_forward(const TGrid<T>& a, const TGrid<T>& b, TGrid<T>& out);
template <typename T>
void concat_channels_backward(const TGrid<T>& gout, TGrid<T>& ga, TGrid<T>& gb);
template <typename T>
double sum_all(const TGrid<T>& in);

// Mode dispatch.
#define GBMSEG_DISPATCH(fn, ...) \
    (exec::mode() == exec::Mode::Serial ? serial::fn(__VA_ARGS__) : par::fn(__VA_ARGS__))

template <typename T>
inline void conv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out, int ksize) {
    GBMSEG_DISPATCH(conv3d_forward, in, w, b, out, ksize);
}
template <typename T>
inline void conv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin, int ksize) {
    GBMSEG_DISPATCH(conv3d_backward_data, gout, w, gin, ksize);
}
template <typename T>
inline void conv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb,
                                    int ksize) {
    GBMSEG_DISPATCH(conv3d_backward_weights, gout, in, gw, gb, ksize);
}
template <typename T>
inline void tconv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out) {
    GBMSEG_DISPATCH(tconv3d_forward, in, w, b, out);
}
template <typename T>
inline void tconv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin) {
    GBMSEG_DISPATCH(tconv3d_backward_data, gout, w, gin);
}
template <typename T>
inline void tconv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb) {
    GBMSEG_DISPATCH(tconv3d_backward_weights, gout, in, gw, gb);
}
template <typename T>
inline void maxpool3d_forward(const TGrid<T>& in, TGrid<T>& out, std::vector<std::int64_t>& argmax) {
    GBMSEG_DISPATCH(maxpool3d_forward, in, out, argmax);
}
template <typename T>
inline void maxpool3d_backward(const TGrid<T>& gout, const std::vector<std::int64_t>& argmax, TGrid<T>& gin) {
    GBMSEG_DISPATCH(maxpool3d_backward, gout, argmax, gin);
}
template <typename T>
inline void bn_stats(const TGrid<T>& in, std::vector<double>& mean, std::vector<double>& var) {
    GBMSEG_DISPATCH(bn_stats, in, mean, var);
}
template <typename T>
inline void bn_normalize(const TGrid<T>& in, const std::vector<double>& mean, const std::vector<double>& var,
                         const TGrid<T>& gamma, const TGrid<T>& beta, double eps, TGrid<T>& xhat, TGrid<T>& y) {
    GBMSEG_DISPATCH(bn_normalize, in, mean, var, gamma, beta, eps, xhat, y);
}
template <typename T>
inline void bn_backward_train(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,
                              const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,
                              TGrid<T>& dbeta) {
    GBMSEG_DISPATCH(bn_backward_train, gout, xhat, gamma, var, eps, gin, dgamma, dbeta);
}
template <typename T>
inline void bn_backward_eval(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,
                             const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,
                             TGrid<T>& dbeta) {
    GBMSEG_DISPATCH(bn_backward_eval, gout, xhat, gamma, var, eps, gin, dgamma, dbeta);
}
template <typename T>
inline void sigmoid_forward(const TGrid<T>& in, TGrid<T>& out) {
    GBMSEG_DISPATCH(sigmoid_forward, in, out);
}
template <typename T>
inline void sigmoid_backward(const TGrid<T>& gout, const TGrid<T>& y, TGrid<T>& gin) {
    GBMSEG_DISPATCH(sigmoid_backward, gout, y, gin);
}
template <typename T>
inline void relu_forward(const TGrid<T>& in, TGrid<T>& out) {
    GBMSEG_DISPATCH(relu_forward, in, out);
}
template <typename T>
inline void relu_backward(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gin) {
    GBMSEG_DISPATCH(relu_backward, gout, in, gin);
}
template <typename T>
inline DiceParts dice_forward(const TGrid<T>& pred, const TGrid<T>& target, double eps) {
    return GBMSEG_DISPATCH(dice_forward, pred, target, eps);
}
template <typename T>
inline void dice_backward(const TGrid<T>& pred, const TGrid<T>& target, const DiceParts& parts, double upstream,
                          TGrid<T>& gpred) {
    GBMSEG_DISPATCH(dice_backward, pred, target, parts, upstream, gpred);
}
template <typename T>
inline void adam_update(TGrid<T>& param, const TGrid<T>& grad, TGrid<T>& m, TGrid<T>& v, std::int64_t t,
                        double lr, double beta1, double beta2, double eps) {
    GBMSEG_DISPATCH(adam_update, param, grad, m, v, t, lr, beta1, beta2, eps);
}

#undef GBMSEG_DISPATCH

} // namespace gbmseg::kernels
