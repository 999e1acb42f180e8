// OpenMP kernels. Work is split over independent output elements only, with
// the same per-element accumulation order as the serial reference, so results
// are thread-count independent and agree with kernels::serial to well within
// the 1e-6 contract. Inner loops run along x over contiguous rows.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gbmseg/kernels.hpp"

namespace gbmseg::kernels::par {

template <typename T>
void conv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out, int ksize) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = w.shape[0];
    const int pad = ksize / 2;
    const std::int64_t rows = N * Co * D * H;
#pragma omp parallel
    {
        std::vector<double> acc(static_cast<std::size_t>(W));
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t y = r % H;
            const std::int64_t z = (r / H) % D;
            const std::int64_t co = (r / (H * D)) % Co;
            const std::int64_t n = r / (H * D * Co);
            std::fill(acc.begin(), acc.end(), static_cast<double>(b[co]));
            for (std::int64_t ci = 0; ci < Ci; ++ci)
                for (int kz = 0; kz < ksize; ++kz) {
                    const std::int64_t zi = z + kz - pad;
                    if (zi < 0 || zi >= D) continue;
                    for (int ky = 0; ky < ksize; ++ky) {
                        const std::int64_t yi = y + ky - pad;
                        if (yi < 0 || yi >= H) continue;
                        const T* row = in.data.data() + (((n * Ci + ci) * D + zi) * H + yi) * W;
                        const T* wrow = w.data.data() + (((co * Ci + ci) * ksize + kz) * ksize + ky) * ksize;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const double wc = static_cast<double>(wrow[kx]);
                            const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
                            const std::int64_t x1 = std::min<std::int64_t>(W - 1, W - 1 + pad - kx);
                            const T* src = row + kx - pad;
                            for (std::int64_t x = x0; x <= x1; ++x) acc[x] += wc * static_cast<double>(src[x]);
                        }
                    }
                }
            T* dst = out.data.data() + r * W;
            for (std::int64_t x = 0; x < W; ++x) dst[x] = static_cast<T>(acc[x]);
        }
    }
}

template <typename T>
void conv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin, int ksize) {
    const std::int64_t N = gin.shape[0], Ci = gin.shape[1], D = gin.shape[2], H = gin.shape[3], W = gin.shape[4];
    const std::int64_t Co = gout.shape[1];
    const int pad = ksize / 2;
    const std::int64_t rows = N * Ci * D * H;
#pragma omp parallel
    {
        std::vector<double> acc(static_cast<std::size_t>(W));
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t y = r % H;
            const std::int64_t z = (r / H) % D;
            const std::int64_t ci = (r / (H * D)) % Ci;
            const std::int64_t n = r / (H * D * Ci);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::int64_t co = 0; co < Co; ++co)
                for (int kz = 0; kz < ksize; ++kz) {
                    const std::int64_t zo = z - kz + pad;
                    if (zo < 0 || zo >= D) continue;
                    for (int ky = 0; ky < ksize; ++ky) {
                        const std::int64_t yo = y - ky + pad;
                        if (yo < 0 || yo >= H) continue;
                        const T* row = gout.data.data() + (((n * Co + co) * D + zo) * H + yo) * W;
                        const T* wrow = w.data.data() + (((co * Ci + ci) * ksize + kz) * ksize + ky) * ksize;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const double wc = static_cast<double>(wrow[kx]);
                            const std::int64_t x0 = std::max<std::int64_t>(0, kx - pad);
                            const std::int64_t x1 = std::min<std::int64_t>(W - 1, W - 1 + kx - pad);
                            const T* src = row - kx + pad;
                            for (std::int64_t x = x0; x <= x1; ++x) acc[x] += wc * static_cast<double>(src[x]);
                        }
                    }
                }
            T* dst = gin.data.data() + r * W;
            for (std::int64_t x = 0; x < W; ++x) dst[x] += static_cast<T>(acc[x]);
        }
    }
}

template <typename T>
void conv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb, int ksize) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = gout.shape[1];
    const int pad = ksize / 2;
    const std::int64_t k3 = static_cast<std::int64_t>(ksize) * ksize * ksize;
    const std::int64_t units = Co * Ci * k3;
#pragma omp parallel for schedule(static)
    for (std::int64_t u = 0; u < units; ++u) {
        const int kx = static_cast<int>(u % ksize);
        const int ky = static_cast<int>((u / ksize) % ksize);
        const int kz = static_cast<int>((u / (ksize * ksize)) % ksize);
        const std::int64_t ci = (u / k3) % Ci;
        const std::int64_t co = u / (k3 * Ci);
        const std::int64_t x0 = std::max<std::int64_t>(0, pad - kx);
        const std::int64_t x1 = std::min<std::int64_t>(W - 1, W - 1 + pad - kx);
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t z = 0; z < D; ++z) {
                const std::int64_t zi = z + kz - pad;
                if (zi < 0 || zi >= D) continue;
                for (std::int64_t y = 0; y < H; ++y) {
                    const std::int64_t yi = y + ky - pad;
                    if (yi < 0 || yi >= H) continue;
                    const T* grow = gout.data.data() + (((n * Co + co) * D + z) * H + y) * W;
                    const T* irow = in.data.data() + (((n * Ci + ci) * D + zi) * H + yi) * W + kx - pad;
                    double rowacc = 0.0;
                    for (std::int64_t x = x0; x <= x1; ++x)
                        rowacc += static_cast<double>(grow[x]) * static_cast<double>(irow[x]);
                    acc += rowacc;
                }
            }
        gw[u] += static_cast<T>(acc);
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t co = 0; co < Co; ++co) {
        const std::int64_t S = D * H * W;
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* p = gout.data.data() + (n * Co + co) * S;
            for (std::int64_t i = 0; i < S; ++i) acc += static_cast<double>(p[i]);
        }
        gb[co] += static_cast<T>(acc);
    }
}

template <typename T>
void tconv3d_forward(const TGrid<T>& in, const TGrid<T>& w, const TGrid<T>& b, TGrid<T>& out) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = w.shape[1];
    const std::int64_t Wo = 2 * W;
    const std::int64_t rows = N * Co * (2 * D) * (2 * H);
#pragma omp parallel
    {
        std::vector<double> acc(static_cast<std::size_t>(Wo));
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t Y = r % (2 * H);
            const std::int64_t Z = (r / (2 * H)) % (2 * D);
            const std::int64_t co = (r / (4 * H * D)) % Co;
            const std::int64_t n = r / (4 * H * D * Co);
            const std::int64_t kz = Z % 2, ky = Y % 2;
            std::fill(acc.begin(), acc.end(), static_cast<double>(b[co]));
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const T* row = in.data.data() + (((n * Ci + ci) * D + Z / 2) * H + Y / 2) * W;
                const double w0 = static_cast<double>(w.data[(((ci * Co + co) * 2 + kz) * 2 + ky) * 2 + 0]);
                const double w1 = static_cast<double>(w.data[(((ci * Co + co) * 2 + kz) * 2 + ky) * 2 + 1]);
                for (std::int64_t x = 0; x < W; ++x) {
                    const double v = static_cast<double>(row[x]);
                    acc[2 * x] += v * w0;
                    acc[2 * x + 1] += v * w1;
                }
            }
            T* dst = out.data.data() + r * Wo;
            for (std::int64_t x = 0; x < Wo; ++x) dst[x] = static_cast<T>(acc[x]);
        }
    }
}

template <typename T>
void tconv3d_backward_data(const TGrid<T>& gout, const TGrid<T>& w, TGrid<T>& gin) {
    const std::int64_t N = gin.shape[0], Ci = gin.shape[1], D = gin.shape[2], H = gin.shape[3], W = gin.shape[4];
    const std::int64_t Co = gout.shape[1];
    const std::int64_t rows = N * Ci * D * H;
#pragma omp parallel
    {
        std::vector<double> acc(static_cast<std::size_t>(W));
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t y = r % H;
            const std::int64_t z = (r / H) % D;
            const std::int64_t ci = (r / (H * D)) % Ci;
            const std::int64_t n = r / (H * D * Ci);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::int64_t co = 0; co < Co; ++co)
                for (int kz = 0; kz < 2; ++kz)
                    for (int ky = 0; ky < 2; ++ky) {
                        const T* grow =
                            gout.data.data() + (((n * Co + co) * 2 * D + 2 * z + kz) * 2 * H + 2 * y + ky) * 2 * W;
                        const T* wpair = w.data.data() + (((ci * Co + co) * 2 + kz) * 2 + ky) * 2;
                        const double w0 = static_cast<double>(wpair[0]);
                        const double w1 = static_cast<double>(wpair[1]);
                        for (std::int64_t x = 0; x < W; ++x) {
                            acc[x] += static_cast<double>(grow[2 * x]) * w0;
                            acc[x] += static_cast<double>(grow[2 * x + 1]) * w1;
                        }
                    }
            T* dst = gin.data.data() + r * W;
            for (std::int64_t x = 0; x < W; ++x) dst[x] += static_cast<T>(acc[x]);
        }
    }
}

template <typename T>
void tconv3d_backward_weights(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gw, TGrid<T>& gb) {
    const std::int64_t N = in.shape[0], Ci = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Co = gout.shape[1];
    const std::int64_t units = Ci * Co * 8;
#pragma omp parallel for schedule(static)
    for (std::int64_t u = 0; u < units; ++u) {
        const int kx = static_cast<int>(u % 2);
        const int ky = static_cast<int>((u / 2) % 2);
        const int kz = static_cast<int>((u / 4) % 2);
        const std::int64_t co = (u / 8) % Co;
        const std::int64_t ci = u / (8 * Co);
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y) {
                    const T* irow = in.data.data() + (((n * Ci + ci) * D + z) * H + y) * W;
                    const T* grow =
                        gout.data.data() + (((n * Co + co) * 2 * D + 2 * z + kz) * 2 * H + 2 * y + ky) * 2 * W + kx;
                    double rowacc = 0.0;
                    for (std::int64_t x = 0; x < W; ++x)
                        rowacc += static_cast<double>(irow[x]) * static_cast<double>(grow[2 * x]);
                    acc += rowacc;
                }
        gw[u] += static_cast<T>(acc);
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t co = 0; co < Co; ++co) {
        const std::int64_t S = 8 * D * H * W;
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* p = gout.data.data() + (n * Co + co) * S;
            for (std::int64_t i = 0; i < S; ++i) acc += static_cast<double>(p[i]);
        }
        gb[co] += static_cast<T>(acc);
    }
}

template <typename T>
void maxpool3d_forward(const TGrid<T>& in, TGrid<T>& out, std::vector<std::int64_t>& argmax) {
    const std::int64_t N = in.shape[0], C = in.shape[1], D = in.shape[2], H = in.shape[3], W = in.shape[4];
    const std::int64_t Dh = D / 2, Hh = H / 2, Wh = W / 2;
    argmax.assign(static_cast<std::size_t>(out.numel()), -1);
    const std::int64_t rows = N * C * Dh * Hh;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t y = r % Hh;
        const std::int64_t z = (r / Hh) % Dh;
        const std::int64_t c = (r / (Hh * Dh)) % C;
        const std::int64_t n = r / (Hh * Dh * C);
        for (std::int64_t x = 0; x < Wh; ++x) {
            T best = in.at5(n, c, 2 * z, 2 * y, 2 * x);
            std::int64_t best_idx = (((n * C + c) * D + 2 * z) * H + 2 * y) * W + 2 * x;
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const T v = in.at5(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                        if (v > best) {
                            best = v;
                            best_idx = (((n * C + c) * D + 2 * z + dz) * H + 2 * y + dy) * W + 2 * x + dx;
                        }
                    }
            out[r * Wh + x] = best;
            argmax[static_cast<std::size_t>(r * Wh + x)] = best_idx;
        }
    }
}

template <typename T>
void maxpool3d_backward(const TGrid<T>& gout, const std::vector<std::int64_t>& argmax, TGrid<T>& gin) {
    // 2x2x2 blocks are disjoint, so the scattered writes never collide.
    const std::int64_t M = gout.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t o = 0; o < M; ++o) gin[argmax[static_cast<std::size_t>(o)]] += gout[o];
}

template <typename T>
void bn_stats(const TGrid<T>& in, std::vector<double>& mean, std::vector<double>& var) {
    const std::int64_t N = in.shape[0], C = in.shape[1];
    const std::int64_t S = in.shape[2] * in.shape[3] * in.shape[4];
    const double M = static_cast<double>(N * S);
    mean.assign(static_cast<std::size_t>(C), 0.0);
    var.assign(static_cast<std::size_t>(C), 0.0);
#pragma omp parallel for schedule(static)
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
        var[static_cast<std::size_t>(c)] = sq / M;
    }
}

template <typename T>
void bn_normalize(const TGrid<T>& in, const std::vector<double>& mean, const std::vector<double>& var,
                  const TGrid<T>& gamma, const TGrid<T>& beta, double eps, TGrid<T>& xhat, TGrid<T>& y) {
    const std::int64_t N = in.shape[0], C = in.shape[1];
    const std::int64_t S = in.shape[2] * in.shape[3] * in.shape[4];
    const std::int64_t NC = N * C;
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < NC; ++nc) {
        const std::int64_t c = nc % C;
        const double invstd = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const double mu = mean[static_cast<std::size_t>(c)];
        const double g = static_cast<double>(gamma[c]), bt = static_cast<double>(beta[c]);
        const T* src = in.data.data() + nc * S;
        T* xh = xhat.data.data() + nc * S;
        T* dst = y.data.data() + nc * S;
        for (std::int64_t i = 0; i < S; ++i) {
            const double v = (static_cast<double>(src[i]) - mu) * invstd;
            xh[i] = static_cast<T>(v);
            dst[i] = static_cast<T>(g * v + bt);
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
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        double s1 = 0.0, s2 = 0.0;
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
#pragma omp parallel for schedule(static)
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
    const std::int64_t M = in.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
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
    const std::int64_t M = gout.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
        const double yd = static_cast<double>(y[i]);
        gin[i] += static_cast<T>(static_cast<double>(gout[i]) * yd * (1.0 - yd));
    }
}

template <typename T>
void relu_forward(const TGrid<T>& in, TGrid<T>& out) {
    const std::int64_t M = in.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const TGrid<T>& gout, const TGrid<T>& in, TGrid<T>& gin) {
    const std::int64_t M = gout.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) gin[i] += in[i] > T(0) ? gout[i] : T(0);
}

template <typename T>
DiceParts dice_forward(const TGrid<T>& pred, const TGrid<T>& target, double eps) {
    const std::int64_t N = pred.shape[0], C = pred.shape[1];
    const std::int64_t S = pred.shape[2] * pred.shape[3] * pred.shape[4];
    const std::int64_t NC = N * C;
    DiceParts parts;
    parts.num.assign(static_cast<std::size_t>(NC), 0.0);
    parts.den.assign(static_cast<std::size_t>(NC), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < NC; ++nc) {
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
        parts.num[static_cast<std::size_t>(nc)] = num;
        parts.den[static_cast<std::size_t>(nc)] = psq + gsq + eps;
    }
    double total = 0.0;
    for (std::int64_t nc = 0; nc < NC; ++nc)
        total += 1.0 - 2.0 * parts.num[static_cast<std::size_t>(nc)] / parts.den[static_cast<std::size_t>(nc)];
    parts.loss = total / static_cast<double>(NC);
    return parts;
}

template <typename T>
void dice_backward(const TGrid<T>& pred, const TGrid<T>& target, const DiceParts& parts, double upstream,
                   TGrid<T>& gpred) {
    const std::int64_t N = pred.shape[0], C = pred.shape[1];
    const std::int64_t S = pred.shape[2] * pred.shape[3] * pred.shape[4];
    const std::int64_t NC = N * C;
    const double scale = upstream / static_cast<double>(NC);
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < NC; ++nc) {
        const double num = parts.num[static_cast<std::size_t>(nc)];
        const double den = parts.den[static_cast<std::size_t>(nc)];
        const T* p = pred.data.data() + nc * S;
        const T* g = target.data.data() + nc * S;
        T* gp = gpred.data.data() + nc * S;
        for (std::int64_t i = 0; i < S; ++i) {
            const double pv = static_cast<double>(p[i]);
            const double gv = static_cast<double>(g[i]);
            gp[i] += static_cast<T>(scale * (-2.0 * gv * den + 4.0 * num * pv) / (den * den));
        }
    }
}

template <typename T>
void adam_update(TGrid<T>& param, const TGrid<T>& grad, TGrid<T>& m, TGrid<T>& v, std::int64_t t, double lr,
                 double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const std::int64_t M = param.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
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

} // namespace gbmseg::kernels::par
