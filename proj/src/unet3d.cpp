#include "gbmseg/unet3d.hpp"

#include <cmath>

namespace gbmseg {

std::string activation_name(Activation a) {
    return a == Activation::Sigmoid ? "sigmoid" : "rectifier";
}

Activation activation_from_name(const std::string& name) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "rectifier") return Activation::Rectifier;
    throw ContractViolation("unknown activation '" + name + "' (expected sigmoid or rectifier)");
}

void UNetConfig::validate() const {
    if (in_channels < 1) throw ContractViolation("UNetConfig: in_channels must be >= 1");
    if (out_channels < 1) throw ContractViolation("UNetConfig: out_channels must be >= 1");
    if (base_channels < 1) throw ContractViolation("UNetConfig: base_channels must be >= 1");
    if (depth < 1) throw ContractViolation("UNetConfig: depth must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ContractViolation("UNetConfig: dropout_rate must be in [0, 1)");
}

namespace {

// channels at encoder stage k (0-based); bottleneck sits at stage `depth`
std::int64_t stage_channels(const UNetConfig& c, std::int64_t k) {
    return c.base_channels << k;
}

void push_conv_block(std::vector<std::pair<std::string, Shape>>& out, const std::string& prefix,
                     std::int64_t cin, std::int64_t cout) {
    out.emplace_back(prefix + ".conv1.weight", Shape{cout, cin, 3, 3, 3});
    out.emplace_back(prefix + ".conv1.bias", Shape{cout});
    out.emplace_back(prefix + ".bn1.gamma", Shape{cout});
    out.emplace_back(prefix + ".bn1.beta", Shape{cout});
    out.emplace_back(prefix + ".conv2.weight", Shape{cout, cout, 3, 3, 3});
    out.emplace_back(prefix + ".conv2.bias", Shape{cout});
    out.emplace_back(prefix + ".bn2.gamma", Shape{cout});
    out.emplace_back(prefix + ".bn2.beta", Shape{cout});
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

std::vector<std::pair<std::string, Shape>> unet_parameter_shapes(const UNetConfig& config) {
    config.validate();
    std::vector<std::pair<std::string, Shape>> shapes;
    for (std::int64_t k = 0; k < config.depth; ++k) {
        const std::int64_t cin = k == 0 ? config.in_channels : stage_channels(config, k - 1);
        push_conv_block(shapes, "down." + std::to_string(k), cin, stage_channels(config, k));
    }
    push_conv_block(shapes, "bottleneck", stage_channels(config, config.depth - 1),
                    stage_channels(config, config.depth));
    for (std::int64_t j = config.depth - 1; j >= 0; --j) {
        const std::string prefix = "up." + std::to_string(j);
        const std::int64_t c_above = stage_channels(config, j + 1);
        const std::int64_t c_here = stage_channels(config, j);
        shapes.emplace_back(prefix + ".upconv.weight", Shape{c_above, c_here, 2, 2, 2});
        shapes.emplace_back(prefix + ".upconv.bias", Shape{c_here});
        push_conv_block(shapes, prefix, 2 * c_here, c_here);
    }
    shapes.emplace_back("head.weight", Shape{config.out_channels, config.base_channels, 1, 1, 1});
    shapes.emplace_back("head.bias", Shape{config.out_channels});
    return shapes;
}

std::int64_t parameter_count(const UNetConfig& config) {
    std::int64_t total = 0;
    for (const auto& [name, shape] : unet_parameter_shapes(config)) total += numel(shape);
    return total;
}

template <typename T>
TUNetModel<T> build_unet(const UNetConfig& config, RngState& rng) {
    TUNetModel<T> model;
    model.config = config;
    for (const auto& [name, shape] : unet_parameter_shapes(config)) {
        TGrid<T> value(shape);
        if (ends_with(name, ".gamma")) {
            value.fill(T(1));
        } else if (ends_with(name, ".weight")) {
            std::int64_t fan_in = 0;
            if (ends_with(name, "upconv.weight")) {
                fan_in = shape[0]; // one tap per input channel reaches each output voxel
            } else {
                fan_in = shape[1] * shape[2] * shape[3] * shape[4];
            }
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : value.data) v = static_cast<T>(rng.uniform(-bound, bound));
        }
        // biases and beta stay zero
        model.params.add(name, std::move(value));
        if (ends_with(name, ".bn1.gamma") || ends_with(name, ".bn2.gamma")) {
            const std::string bn_name = name.substr(0, name.size() - 6);
            model.bn_states.emplace_back(bn_name, TBatchNormState<T>(shape[0]));
        }
    }
    return model;
}

namespace {

template <typename T>
TDiffGrid<T> activate(TTape<T>* tape, const TDiffGrid<T>& x, Activation act) {
    return act == Activation::Sigmoid ? sigmoid(tape, x) : relu(tape, x);
}

template <typename T>
TDiffGrid<T> conv_block(TUNetModel<T>& model, TTape<T>* tape, const std::string& prefix, const TDiffGrid<T>& input,
                        bool training, RngState& rng) {
    const Activation act = model.config.hidden_activation;
    auto x = conv3d(tape, input, model.params.get(prefix + ".conv1.weight"), model.params.get(prefix + ".conv1.bias"));
    x = batchnorm3d(tape, x, model.params.get(prefix + ".bn1.gamma"), model.params.get(prefix + ".bn1.beta"),
                    model.bn(prefix + ".bn1"), training);
    x = activate(tape, x, act);
    x = conv3d(tape, x, model.params.get(prefix + ".conv2.weight"), model.params.get(prefix + ".conv2.bias"));
    x = batchnorm3d(tape, x, model.params.get(prefix + ".bn2.gamma"), model.params.get(prefix + ".bn2.beta"),
                    model.bn(prefix + ".bn2"), training);
    x = activate(tape, x, act);
    return spatial_dropout3d(tape, x, model.config.dropout_rate, rng, training);
}

} // namespace

template <typename T>
TDiffGrid<T> unet_forward(TUNetModel<T>& model, TTape<T>* tape, const TDiffGrid<T>& input, bool training,
                          RngState& rng) {
    const auto& is = input.shape();
    if (is.size() != 5) throw ContractViolation("unet_forward: expected 5-d input");
    if (is[1] != model.config.in_channels) {
        throw ContractViolation("unet_forward: input has " + std::to_string(is[1]) + " channels, config expects " +
                                std::to_string(model.config.in_channels));
    }
    const std::int64_t divisor = std::int64_t(1) << model.config.depth;
    static const char* axis_name[3] = {"D", "H", "W"};
    for (int a = 0; a < 3; ++a) {
        if (is[2 + a] % divisor != 0) {
            throw ContractViolation(std::string("unet_forward: spatial axis ") + axis_name[a] + " extent " +
                                    std::to_string(is[2 + a]) + " is not divisible by 2^depth = " +
                                    std::to_string(divisor));
        }
    }

    std::vector<TDiffGrid<T>> skips;
    skips.reserve(static_cast<std::size_t>(model.config.depth));
    TDiffGrid<T> x = input;
    for (std::int64_t k = 0; k < model.config.depth; ++k) {
        x = conv_block(model, tape, "down." + std::to_string(k), x, training, rng);
        skips.push_back(x);
        x = maxpool3d(tape, x);
    }
    x = conv_block(model, tape, "bottleneck", x, training, rng);
    for (std::int64_t j = model.config.depth - 1; j >= 0; --j) {
        const std::string prefix = "up." + std::to_string(j);
        x = transposed_conv3d(tape, x, model.params.get(prefix + ".upconv.weight"),
                              model.params.get(prefix + ".upconv.bias"));
        x = concat_channels(tape, x, skips[static_cast<std::size_t>(j)]);
        x = conv_block(model, tape, prefix, x, training, rng);
    }
    x = conv3d(tape, x, model.params.get("head.weight"), model.params.get("head.bias"), 1);
    return sigmoid(tape, x);
}

template TUNetModel<float> build_unet<float>(const UNetConfig&, RngState&);
template TUNetModel<double> build_unet<double>(const UNetConfig&, RngState&);
template TDiffGrid<float> unet_forward<float>(TUNetModel<float>&, TTape<float>*, const TDiffGrid<float>&, bool,
                                              RngState&);
template TDiffGrid<double> unet_forward<double>(TUNetModel<double>&, TTape<double>*, const TDiffGrid<double>&,
                                                bool, RngState&);

} // namespace gbmseg
