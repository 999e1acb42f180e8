#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gbmseg/grid.hpp"
#include "gbmseg/rng.hpp"

namespace gbmseg {

// One value in the differentiation graph: the data grid plus a same-shape
// gradient grid. Leaves that never need gradients (network inputs, targets)
// are created with requires_grad=false so backward skips their data-grad work.
template <typename T>
struct TNode {
    TGrid<T> value;
    TGrid<T> grad;
    bool requires_grad = true;

    explicit TNode(TGrid<T> v, bool req = true)
        : value(std::move(v)), grad(value.shape, T(0)), requires_grad(req) {}
};

template <typename T>
class TDiffGrid {
public:
    TDiffGrid() = default;
    explicit TDiffGrid(TGrid<T> v, bool requires_grad = true)
        : node_(std::make_shared<TNode<T>>(std::move(v), requires_grad)) {}

    const Shape& shape() const { return node_->value.shape; }
    std::int64_t numel() const { return node_->value.numel(); }

    TGrid<T>& value() { return node_->value; }
    const TGrid<T>& value() const { return node_->value; }
    TGrid<T>& grad() { return node_->grad; }
    const TGrid<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }

    void zero_grad() { node_->grad.fill(T(0)); }

    std::shared_ptr<TNode<T>> node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

private:
    std::shared_ptr<TNode<T>> node_;
};

// Recorded operation tape. Ops append one backward step per forward call;
// backward() replays them in reverse, accumulating into leaf grads. A tape is
// single-use: replaying without re-recording is a contract violation.
template <typename T>
class TTape {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    void backward(const TDiffGrid<T>& root) {
        if (!root.valid() || root.numel() != 1) {
            throw ContractViolation("backward: root must be a scalar (one element)");
        }
        if (spent_) {
            throw ContractViolation("backward: tape already consumed, re-record the graph first");
        }
        spent_ = true;
        root.node()->grad[0] += T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    void reset() {
        steps_.clear();
        spent_ = false;
    }

    std::size_t size() const { return steps_.size(); }
    bool spent() const { return spent_; }

private:
    std::vector<std::function<void()>> steps_;
    bool spent_ = false;
};

using DiffGrid = TDiffGrid<float>;
using Tape = TTape<float>;

// Per-channel batch norm state; owned by the model, updated only by train-mode
// forward passes.
template <typename T>
struct TBatchNormState {
    TGrid<T> running_mean;
    TGrid<T> running_var;

    explicit TBatchNormState(std::int64_t channels = 1)
        : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

using BatchNormState = TBatchNormState<float>;

// Layer ops. `tape` may be null for inference-only forward passes.
// Convolutions use zero padding ksize/2, stride 1, so spatial shape is
// preserved; ksize is 3 for the block convolutions and 1 for the output head.
template <typename T>
TDiffGrid<T> conv3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& weight,
                    const TDiffGrid<T>& bias, int ksize = 3);

// Kernel 2, stride 2: doubles every spatial extent. Weight layout Ci x Co x 2x2x2.
template <typename T>
TDiffGrid<T> transposed_conv3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& weight,
                               const TDiffGrid<T>& bias);

// Kernel 2, stride 2; spatial extents must be even. Ties route the gradient to
// the first maximal voxel in row-major block order.
template <typename T>
TDiffGrid<T> maxpool3d(TTape<T>* tape, const TDiffGrid<T>& input);

template <typename T>
TDiffGrid<T> batchnorm3d(TTape<T>* tape, const TDiffGrid<T>& input, const TDiffGrid<T>& gamma,
                         const TDiffGrid<T>& beta, TBatchNormState<T>& state, bool training,
                         double momentum = 0.1, double eps = 1e-5);

template <typename T>
TDiffGrid<T> sigmoid(TTape<T>* tape, const TDiffGrid<T>& input);

template <typename T>
TDiffGrid<T> relu(TTape<T>* tape, const TDiffGrid<T>& input);

// Zeroes whole (n, channel) slabs with probability `rate` in training mode and
// scales survivors by 1/(1-rate); identity in eval mode. Draws N*C uniforms
// from `rng` in row-major (n, c) order.
template <typename T>
TDiffGrid<T> spatial_dropout3d(TTape<T>* tape, const TDiffGrid<T>& input, double rate, RngState& rng,
                               bool training);

template <typename T>
TDiffGrid<T> concat_channels(TTape<T>* tape, const TDiffGrid<T>& a, const TDiffGrid<T>& b);

// Channels [c0, c1) as a new grid.
template <typename T>
TDiffGrid<T> slice_channels(TTape<T>* tape, const TDiffGrid<T>& input, std::int64_t c0, std::int64_t c1);

template <typename T>
TDiffGrid<T> sum_all(TTape<T>* tape, const TDiffGrid<T>& input);

template <typename T>
TDiffGrid<T> mul(TTape<T>* tape, const TDiffGrid<T>& a, const TDiffGrid<T>& b);

template <typename T>
void backward(TTape<T>& tape, const TDiffGrid<T>& root);

} // namespace gbmseg
