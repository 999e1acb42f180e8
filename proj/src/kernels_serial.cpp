// Reference kernels: straightforward nested loops, no threading. These define
// the numeric ground truth the OpenMP kernels are tested against.

#include <algorithm>
#include <cmath>

#include "gbmseg/kernels.hpp"

namespace gbmseg::kernels {

namespace serial {

template <typename T>
void conv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out, int ksize) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = w.shape[0];
    const int pad = ksize / 2;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) {
                        double acc = static_cast<double>(b[co]);
                        for (std::int64_t ci = 0; ci < Ci; ++ci)
                            for (int kz = 0; kz < ksize; ++kz)
                                for (int ky = 0; ky < ksize; ++ky)
                                    for (int kx = 0; kx < ksize; ++kx) {
                                        const std::int64_t zi = z + kz - pad;
                                        const std::int64_t yi = y + ky - pad;
                                        const std::int64_t xi = x + kx - pad;
                                        if (zi < 0 || zi >= D || yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                                        acc += static_cast<double>(in.at5(n, ci, zi, yi, xi)) *
                                               static_cast<double>(w.data[(((co * Ci + ci) * ksize + kz) * ksize + ky) * ksize + kx]);
                                    }
                        out.at5(n, co, z, y, x) = static_cast<T>(acc);
                    }
}

template <typename T>
void conv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin, int ksize) {
    const std::int64_t N = gin.shape[0], Ci = gin.shape[1], D = gin.shape[2], H = gin.shape[3], W = gin.shape[4];
    const std::int64_t Co = gout.shape[1];
    const int pad = ksize / 2;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) {
                        double acc = 0.0;
                        for (std::int64_t co = 0; co < Co; ++co)
                            for (int kz = 0; kz < ksize; ++kz)
                                for (int ky = 0; ky < ksize; ++ky)
                                    for (int kx = 0; kx < ksize; ++kx) {
                                        // output voxel that read this input voxel through tap k
                                        const std::int64_t zo = z - kz + pad;
                                        const std::int64_t yo = y - ky + pad;
                                        const std::int64_t xo = x - kx + pad;
                                        if (zo < 0 || zo >= D || yo < 0 || yo >= H || xo < 0 || xo >= W) continue;
                                        acc += static_cast<double>(gout.at5(n, co, zo, yo, xo)) *
                                               static_cast<double>(w.data[(((co * Ci + ci) * ksize + kz) * ksize + ky) * ksize + kx]);
                                    }
                        gin.at5(n, ci, z, y, x) += static_cast<T>(acc);
                    }
}

template <typename T>
void conv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb, int ksize) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = gout.shape[1];
    const int pad = ksize / 2;
    for (std::int64_t co = 0; co < Co; ++co)
        for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (int kz = 0; kz < ksize; ++kz)
                for (int ky = 0; ky < ksize; ++ky)
                    for (int kx = 0; kx < ksize; ++kx) {
                        double acc = 0.0;
                        for (std::int64_t n = 0; n < N; ++n)
                            for (std::int64_t z = 0; z < D; ++z)
                                for (std::int64_t y = 0; y < H; ++y)
                                    for (std::int64_t x = 0; x < W; ++x) {
                                        const std::int64_t zi = z + kz - pad;
                                        const std::int64_t yi = y + ky - pad;
                                        const std::int64_t xi = x + kx - pad;
                                        if (zi < 0 || zi >= D || yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                                        acc += static_cast<double>(gout.at5(n, co, z, y, x)) *
                                               static_cast<double>(in.at5(n, ci, zi, yi, xi));
                                    }
                        gw.data[(((co * Ci + ci) * ksize + kz) * ksize + ky) * ksize + kx] += static_cast<T>(acc);
                    }
    for (std::int64_t co = 0; co < Co; ++co) {
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) acc += static_cast<double>(gout.at5(n, co, z, y, x));
        gb[co] += static_cast<T>(acc);
    }
}

// Transposed conv, kernel 2 stride 2: every output voxel receives exactly one
// tap, from input voxel (Z/2, Y/2, X/2) through weight (Z%2, Y%2, X%2).
template <typename T>
void tconv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1];
    const std::int64_t Co = w.shape[1];
    const std::int64_t Do = out.shape[2], Ho = out.shape[3], Wo = out.shape[4];
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t Z = 0; Z < Do; ++Z)
                for (std::int64_t Y = 0; Y < Ho; ++Y)
                    for (std::int64_t X = 0; X < Wo; ++X) {
                        const std::int64_t kz = Z % 2, ky = Y % 2, kx = X % 2;
                        double acc = static_cast<double>(b[co]);
                        for (std::int64_t ci = 0; ci < Ci; ++ci)
                            acc += static_cast<double>(in.at5(n, ci, Z / 2, Y / 2, X / 2)) *
                                   static_cast<double>(w.data[(((ci * Co + co) * 2 + kz) * 2 + ky) * 2 + kx]);
                        out.at5(n, co, Z, Y, X) = static_cast<T>(acc);
                    }
}

template <typename T>
void tconv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin) {
    const std::int64_t N = gin.shape[0], Ci = gin.shape[1], D = gin.shape[2], H = gin.shape[3], W = gin.shape[4];
    const std::int64_t Co = gout.shape[1];
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) {
                        double acc = 0.0;
                        for (std::int64_t co = 0; co < Co; ++co)
                            for (int kz = 0; kz < 2; ++kz)
                                for (int ky = 0; ky < 2; ++ky)
                                    for (int kx = 0; kx < 2; ++kx)
                                        acc += static_cast<double>(gout.at5(n, co, 2 * z + kz, 2 * y + ky, 2 * x + kx)) *
                                               static_cast<double>(w.data[(((ci * Co + co) * 2 + kz) * 2 + ky) * 2 + kx]);
                        gin.at5(n, ci, z, y, x) += static_cast<T>(acc);
                    }
}

template <typename T>
void tconv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = gout.shape[1];
    for (std::int64_t ci = 0; ci < Ci; ++ci)
        for (std::int64_t co = 0; co < Co; ++co)
            for (int kz = 0; kz < 2; ++kz)
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx) {
                        double acc = 0.0;
                        for (std::int64_t n = 0; n < N; ++n)
                            for (std::int64_t z = 0; z < D; ++z)
                                for (std::int64_t y = 0; y < H; ++y)
                                    for (std::int64_t x = 0; x < W; ++x)
                                        acc += static_cast<double>(in.at5(n, ci, z, y, x)) *
                                               static_cast<double>(gout.at5(n, co, 2 * z + kz, 2 * y + ky, 2 * x + kx));
                        gw.data[(((ci * Co + co) * 2 + kz) * 2 + ky) * 2 + kx] += static_cast<T>(acc);
                    }
    for (std::int64_t co = 0; co < Co; ++co) {
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t Z = 0; Z < gout.shape[2]; ++Z)
                for (std::int64_t Y = 0; Y < gout.shape[3]; ++Y)
                    for (std::int64_t X = 0; X < gout.shape[4]; ++X)
                        acc += static_cast<double>(gout.at5(n, co, Z, Y, X));
        gb[co] += static_cast<T>(acc);
    }
}

template <typename T>
void maxpool3d_forward(const TGrid<T>& in, TGrid<T>& out, std::vector<std::int64_t>& argmax) {
    const std::int64_t N = in.shape[0], C = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    argmax.assign(static_cast<std::size_t>(out.numel()), -1);
    std::int64_t o = 0;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t z = 0; z < D / 2; ++z)
                for (std::int64_t y = 0; y < H / 2; ++y)
                    for (std::int64_t x = 0; x < W / 2; ++x, ++o) {
                        T best = in.at5(n, c, 2 * z, 2 * y, 2 * x);
                        std::int64_t best_idx = (((n * C + c) * D + 2 * z) * H + 2 * y) * W + 2 * x;
                        // first maximal element in row-major block order wins ties
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const T v = in.at5(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                                    if (v > best) {
                                        best = v;
                                        best_idx = (((n * C + c) * D + 2 * z + dz) * H + 2 * y + dy) * W + 2 * x + dx;
                                    }
                                }
                        out[o] = best;
                        argmax[static_cast<std::size_t>(o)] = best_idx;
                    }
}

template <typename T>
void maxpool3d_backward(const TGrid<T>& gout, const std::vector<std::int64_t>& argmax, TGrid<T>& gin) {
    for (std::int64_t o = 0; o < gout.numel(); ++o) gin[argmax[static_cast<std::size_t>(o)]] += gout[o];
}

template <typename T>
void bn_stats(const TGrid<T>& in, std::vector<double>& mean, std::vector<double>& var) {
    const std::int64_t N = in.shape[0], C = in.shape[1];
    const std::int64_t S = in.shape[2] * in.shape[3] * in.shape[4];
    const double M = static_cast<double>(N * S);
    mean.assign(static_cast<std::size_t>(C), 0.0);
    var.assign(static_cast<std::size_t>(C), 0.0);
    for (std::int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* p = in.data.data() + (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) s += static_cast<double>(p[i]);
        }
        const double mu = s / M;
        double sq = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* p = in.data.data() + (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
                const double d = static_cast<double>(p[i]) - mu;
                sq += d * d;
            }
        }
        mean[static_cast<std::size_t>(c)] = mu;
        var[static_cast<std::size_t>(c)] = sq / M; // biased
    }
}

template <typename T>
void bn_normalize(const TGrid<T>& in, const std::vector<double>& mean, const std::vector<double>& var,
                  const TGrid<T>& gamma, const TGrid<T>& beta, double eps, TGrid<T>& xhat, TGrid<T>& y) {
    const std::int64_t N = in.shape[0], C = in.shape[1];
    const std::int64_t S = in.shape[2] * in.shape[3] * in.shape[4];
    for (std::int64_t c = 0; c < C; ++c) {
        const double invstd = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const double mu = mean[static_cast<std::size_t>(c)];
        const double g = static_cast<double>(gamma[c]), bt = static_cast<double>(beta[c]);
        for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
                const double xh = (static_cast<double>(in[base + i]) - mu) * invstd;
                xhat[base + i] = static_cast<T>(xh);
                y[base + i] = static_cast<T>(g * xh + bt);
            }
        }
    }
}

template <typename T>
void bn_backward_train(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,
                       const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,
                       TGrid<T>& dbeta) {
    const std::int64_t N = gout.shape[0], C = gout.shape[1];
    const std::int64_t S = gout.shape[2] * gout.shape[3] * gout.shape[4];
    const double M = static_cast<double>(N * S);
    for (std::int64_t c = 0; c < C; ++c) {
        double s1 = 0.0, s2 = 0.0; // sum g, sum g*xhat
        for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
                const double g = static_cast<double>(gout[base + i]);
                s1 += g;
                s2 += g * static_cast<double>(xhat[base + i]);
            }
        }
        const double invstd = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const double gmm = static_cast<double>(gamma[c]);
        for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
                const double g = static_cast<double>(gout[base + i]);
                const double xh = static_cast<double>(xhat[base + i]);
                gin[base + i] += static_cast<T>(gmm * invstd * (g - s1 / M - xh * s2 / M));
            }
        }
        dgamma[c] += static_cast<T>(s2);
        dbeta[c] += static_cast<T>(s1);
    }
}

template <typename T>
void bn_backward_eval(const TGrid<T>& gout, const TGrid<T>& xhat, const TGrid<T>& gamma,
                      const std::vector<double>& var, double eps, TGrid<T>& gin, TGrid<T>& dgamma,
                      TGrid<T>& dbeta) {
    const std::int64_t N = gout.shape[0], C = gout.shape[1];
    const std::int64_t S = gout.shape[2] * gout.shape[3] * gout.shape[4];
    for (std::int64_t c = 0; c < C; ++c) {
        const double invstd = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const double gmm = static_cast<double>(gamma[c]);
        double s1 = 0.0, s2 = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t base = (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
                const double g = static_cast<double>(gout[base + i]);
                s1 += g;
                s2 += g * static_cast<double>(xhat[base + i]);
                gin[base + i] += static_cast<T>(gmm * invstd * g);
            }
        }
        dgamma[c] += static_cast<T>(s2);
        dbeta[c] += static_cast<T>(s1);
    }
}

template <typename T>
void sigmoid_forward(const TGrid<T>& in, TGrid<T>& out) {
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        const double x = static_cast<double>(in[i]);
        if (x >= 0.0) {
            out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-x)));
        } else {
            const double e = std::exp(x);
            out[i] = static_cast<T>(e / (1.0 + e));
        }
    }
}

template <typename T>
void sigmoid_backward(const TGrid<T>& gout, const TGrid<T>& y, TGrid<T>& gin) {
    for (std::int64_t i = 0; i < gout.numel(); ++i) {
        const double yd = static_cast<double>(y[i]);
        gin[i] += static_cast<T>(static_cast<double>(gout[i]) * yd * (1.0 - yd));
    }
}

template <typename T>
void relu_forward(const TGrid<T>& in, TGrid<T>& out) {
    for (std::int64_t i = 0; i < in.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gin) {
    for (std::int64_t i = 0; i < gout.numel(); ++i) gin[i] += in[i] > T(0) ? gout[i] : T(0);
}

template <typename T>
DiceParts dice_forward(const TGrid<T>& pred, const TGrid<T>& target, double eps) {
    const std::int64_t N = pred.shape[0], C = pred.shape[1];
    const std::int64_t S = pred.shape[2] * pred.shape[3] * pred.shape[4];
    DiceParts parts;
    parts.num.assign(static_cast<std::size_t>(N * C), 0.0);
    parts.den.assign(static_cast<std::size_t>(N * C), 0.0);
    double total = 0.0;
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* p = pred.data.data() + nc * S;
        const T* g = target.data.data() + nc * S;
        double num = 0.0, psq = 0.0, gsq = 0.0;
        for (std::int64_t i = 0; i < S; ++i) {
            const double pv = static_cast<double>(p[i]);
            const double gv = static_cast<double>(g[i]);
            num += pv * gv;
            psq += pv * pv;
            gsq += gv * gv;
        }
        const double den = psq + gsq + eps;
        parts.num[static_cast<std::size_t>(nc)] = num;
        parts.den[static_cast<std::size_t>(nc)] = den;
        total += 1.0 - 2.0 * num / den;
    }
    parts.loss = total / static_cast<double>(N * C);
    return parts;
}

template <typename T>
void dice_backward(const TGrid<T>& pred, const TGrid<T>& target, const DiceParts& parts, double upstream,
                   TGrid<T>& gpred) {
    const std::int64_t N = pred.shape[0], C = pred.shape[1];
    const std::int64_t S = pred.shape[2] * pred.shape[3] * pred.shape[4];
    const double scale = upstream / static_cast<double>(N * C);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double num = parts.num[static_cast<std::size_t>(nc)];
        const double den = parts.den[static_cast<std::size_t>(nc)];
        const T* p = pred.data.data() + nc * S;
        const T* g = target.data.data() + nc * S;
        T* gp = gpred.data.data() + nc * S;
        for (std::int64_t i = 0; i < S; ++i) {
            const double pv = static_cast<double>(p[i]);
            const double gv = static_cast<double>(g[i]);
            // d/dp [1 - 2 num/den] with den = sum p^2 + sum g^2 + eps
            gp[i] += static_cast<T>(scale * (-2.0 * gv * den + 4.0 * num * pv) / (den * den));
        }
    }
}

template <typename T>
void adam_update(TGrid<T>& param, const TGrid<T>& grad, TGrid<T>& m, TGrid<T>& v, std::int64_t t, double lr,
                 double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::int64_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}

#define GBMSEG_INSTANTIATE(T)                                                                                   \
    template void conv3d_forward<T>(const TGrid<T>&, const TGrid<T>&, const TGrid<T>&, TGrid<T>&, int);        \
    template void conv3d_backward_data<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&, int);                   \
    template void conv3d_backward_weights<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&, TGrid<T>&, int);     \
    template void tconv3d_forward<T>(const TGrid<T>&, const TGrid<T>&, const TGrid<T>&, TGrid<T>&);            \
    template void tconv3d_backward_data<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&);                       \
    template void tconv3d_backward_weights<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&, TGrid<T>&);         \
    template void maxpool3d_forward<T>(const TGrid<T>&, TGrid<T>&, std::vector<std::int64_t>&);                \
    template void maxpool3d_backward<T>(const TGrid<T>&, const std::vector<std::int64_t>&, TGrid<T>&);         \
    template void bn_stats<T>(const TGrid<T>&, std::vector<double>&, std::vector<double>&);                    \
    template void bn_normalize<T>(const TGrid<T>&, const std::vector<double>&, const std::vector<double>&,     \
                                  const TGrid<T>&, const TGrid<T>&, double, TGrid<T>&, TGrid<T>&);             \
    template void bn_backward_train<T>(const TGrid<T>&, const TGrid<T>&, const TGrid<T>&,                      \
                                       const std::vector<double>&, double, TGrid<T>&, TGrid<T>&, TGrid<T>&);   \
    template void bn_backward_eval<T>(const TGrid<T>&, const TGrid<T>&, const TGrid<T>&,                       \
                                      const std::vector<double>&, double, TGrid<T>&, TGrid<T>&, TGrid<T>&);    \
    template void sigmoid_forward<T>(const TGrid<T>&, TGrid<T>&);                                              \
    template void sigmoid_backward<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&);                            \
    template void relu_forward<T>(const TGrid<T>&, TGrid<T>&);                                                 \
    template void relu_backward<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&);                               \
    template DiceParts dice_forward<T>(const TGrid<T>&, const TGrid<T>&, double);                              \
    template void dice_backward<T>(const TGrid<T>&, const TGrid<T>&, const DiceParts&, double, TGrid<T>&);     \
    template void adam_update<T>(TGrid<T>&, const TGrid<T>&, TGrid<T>&, TGrid<T>&, std::int64_t, double,       \
                                 double, double, double);

GBMSEG_INSTANTIATE(float)
GBMSEG_INSTANTIATE(double)
#undef GBMSEG_INSTANTIATE

} // namespace serial

// Shared cheap helpers.

template <typename T>
void scale_channels(const TGrid<T>& in, const std::vector<T>& factor_per_nc, TGrid<T>& out) {
    const std::int64_t NC = in.shape[0] * in.shape[1];
    const std::int64_t S = in.shape[2] * in.shape[3] * in.shape[4];
    for (std::int64_t nc = 0; nc < NC; ++nc) {
        const T f = factor_per_nc[static_cast<std::size_t>(nc)];
        const T* src = in.data.data() + nc * S;
        T* dst = out.data.data() + nc * S;
        for (std::int64_t i = 0; i < S; ++i) dst[i] = src[i] * f;
    }
}

template <typename T>
void concat_channels_forward(const TGrid<T>& a, const TGrid<T>& b, TGrid<T>& out) {
    const std::int64_t N = a.shape[0], Ca = a.shape[1], Cb = b.shape[1];
    const std::int64_t S = a.shape[2] * a.shape[3] * a.shape[4];
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy_n(a.data.data() + n * Ca * S, Ca * S, out.data.data() + n * (Ca + Cb) * S);
        std::copy_n(b.data.data() + n * Cb * S, Cb * S, out.data.data() + n * (Ca + Cb) * S + Ca * S);
    }
}

template <typename T>
void concat_channels_backward(const TGrid<T>& gout, TGrid<T>& ga, TGrid<T>& gb) {
    const std::int64_t N = ga.shape[0], Ca = ga.shape[1], Cb = gb.shape[1];
    const std::int64_t S = ga.shape[2] * ga.shape[3] * ga.shape[4];
    for (std::int64_t n = 0; n < N; ++n) {
        const T* src = gout.data.data() + n * (Ca + Cb) * S;
        T* da = ga.data.data() + n * Ca * S;
        T* db = gb.data.data() + n * Cb * S;
        for (std::int64_t i = 0; i < Ca * S; ++i) da[i] += src[i];
        for (std::int64_t i = 0; i < Cb * S; ++i) db[i] += src[Ca * S + i];
    }
}

template <typename T>
double sum_all(const TGrid<T>& in) {
    double s = 0.0;
    for (std::int64_t i = 0; i < in.numel(); ++i) s += static_cast<double>(in[i]);
    return s;
}

#define GBMSEG_INSTANTIATE_SHARED(T)                                                            \
    template void scale_channels<T>(const TGrid<T>&, const std::vector<T>&, TGrid<T>&);        \
    template void concat_channels_forward<T>(const TGrid<T>&, const TGrid<T>&, TGrid<T>&);     \
    template void concat_channels_backward<T>(const TGrid<T>&, TGrid<T>&, TGrid<T>&);          \
    template double sum_all<T>(const TGrid<T>&);

GBMSEG_INSTANTIATE_SHARED(float)
GBMSEG_INSTANTIATE_SHARED(double)
#undef GBMSEG_INSTANTIATE_SHARED

} // namespace gbmseg::kernels
