#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gbmseg/diffgrid.hpp"

namespace gbmseg {

enum class Activation { Sigmoid, Rectifier };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Encoder/decoder hyperparameters. Channel width is base_channels * 2^k at
// encoder stage k and mirrors back down through the decoder; the output head
// is a 1x1x1 convolution to out_channels followed by a fixed sigmoid.
struct UNetConfig {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    std::int64_t base_channels = 32;
    std::int64_t depth = 4;
    double dropout_rate = 0.2;
    Activation hidden_activation = Activation::Sigmoid;

    void validate() const;
    bool operator==(const UNetConfig&) const = default;
};

// Insertion-ordered named parameter set; canonical order is fixed by
// unet_parameter_shapes and serialization depends on it.
template <typename T>
class TParamStore {
public:
    TDiffGrid<T>& add(const std::string& name, TGrid<T> value) {
        index_.emplace(name, items_.size());
        items_.emplace_back(name, TDiffGrid<T>(std::move(value)));
        return items_.back().second;
    }

    TDiffGrid<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
        return items_[it->second].second;
    }
    const TDiffGrid<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
        return items_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return items_.size(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    void zero_grads() {
        for (auto& [name, p] : items_) p.zero_grad();
    }

private:
    std::vector<std::pair<std::string, TDiffGrid<T>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct TUNetModel {
    UNetConfig config;
    TParamStore<T> params;
    std::vector<std::pair<std::string, TBatchNormState<T>>> bn_states;

    TBatchNormState<T>& bn(const std::string& name) {
        for (auto& [n, s] : bn_states) {
            if (n == name) return s;
        }
        throw ContractViolation("unknown batch norm state: " + name);
    }
};

using UNetModel = TUNetModel<float>;

// Canonical (name, shape) enumeration; build() allocates exactly these, in
// this order.
std::vector<std::pair<std::string, Shape>> unet_parameter_shapes(const UNetConfig& config);

// Sum of parameter element counts over unet_parameter_shapes.
std::int64_t parameter_count(const UNetConfig& config);

// Weights drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] in canonical
// order; biases and beta start at zero, gamma at one.
template <typename T>
TUNetModel<T> build_unet(const UNetConfig& config, RngState& rng);

template <typename T>
TDiffGrid<T> unet_forward(TUNetModel<T>& model, TTape<T>* tape, const TDiffGrid<T>& input, bool training,
                          RngState& rng);

} // namespace gbmseg
