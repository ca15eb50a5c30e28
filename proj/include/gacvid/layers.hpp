#pragma once

#include <map>
#include <string>
#include <vector>

#include "gacvid/autodiff.hpp"
#include "gacvid/rng.hpp"
#include "gacvid/tensor.hpp"

namespace gacvid {

// Named parameter tensors for one network plus a version tag.
template <typename T>
struct ModelParams {
    std::map<std::string, Tensor<T>> tensors;
    std::string version = "gacvid-net-1";
};

namespace nn {

// Owns the parameter leaves of one network. Iteration order (std::map) is
// the optimizer's deterministic update order.
template <typename T>
struct ParamMap {
    std::map<std::string, ad::Var<T>> params;
    bool trainable = true;
    std::uint64_t init_seed = 0;

    ad::Var<T> get(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown parameter " + name);
        return it->second;
    }

    ad::Var<T> create(const std::string& name, Tensor<T> value) {
        auto var = ad::leaf(std::move(value), trainable);
        auto [it, inserted] = params.emplace(name, var);
        if (!inserted) throw ConfigError("duplicate parameter " + name);
        return it->second;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [name, var] : params) n += var->value.size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, var] : params) var->grad = Tensor<T>();
    }

    ModelParams<T> snapshot() const {
        ModelParams<T> out;
        for (const auto& [name, var] : params) out.tensors[name] = var->value;
        return out;
    }

    // Loads values into existing parameters, validating every shape.
    void load(const ModelParams<T>& saved) {
        for (auto& [name, var] : params) {
            auto it = saved.tensors.find(name);
            if (it == saved.tensors.end())
                throw FormatError("checkpoint missing parameter " + name);
            if (!(it->second.shape() == var->value.shape()))
                throw FormatError("checkpoint shape mismatch for " + name);
            var->value = it->second;
        }
    }
};

// Conv weights drawn from N(0, 0.02), biases zero, norm affine at identity.
// Each tensor gets its own stream derived from the parameter name so the
// initialization does not depend on creation order.
template <typename T>
void add_conv(ParamMap<T>& pm, const std::string& name, int cin, int cout, int k) {
    Rng rng(hash_name(name, pm.init_seed));
    Tensor<T> w({cout, cin, k, k});
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<T>(rng.normal(0.0, 0.02));
    pm.create(name + ".w", std::move(w));
    pm.create(name + ".b", Tensor<T>({cout}));
}

template <typename T>
void add_norm(ParamMap<T>& pm, const std::string& name, int c) {
    pm.create(name + ".gamma", Tensor<T>({c}, T(1)));
    pm.create(name + ".beta", Tensor<T>({c}));
}

template <typename T>
ad::Var<T> conv(const ParamMap<T>& pm, const std::string& name, const ad::Var<T>& x,
                int stride, int pad) {
    return ad::conv2d(x, pm.get(name + ".w"), pm.get(name + ".b"), stride, pad);
}

template <typename T>
ad::Var<T> norm(const ParamMap<T>& pm, const std::string& name, const ad::Var<T>& x) {
    return ad::instance_norm(x, pm.get(name + ".gamma"), pm.get(name + ".beta"));
}

// --- encoder: stride-2 conv stack, n_down stages -------------------------------

template <typename T>
void add_encoder(ParamMap<T>& pm, const std::string& prefix, int in_channels,
                 int base, int n_down) {
    int cin = in_channels;
    for (int i = 0; i < n_down; ++i) {
        const int cout = base << i;
        add_conv(pm, prefix + ".down" + std::to_string(i), cin, cout, 3);
        add_norm(pm, prefix + ".norm" + std::to_string(i), cout);
        cin = cout;
    }
}

template <typename T>
ad::Var<T> encoder_forward(const ParamMap<T>& pm, const std::string& prefix,
                           ad::Var<T> x, int n_down) {
    for (int i = 0; i < n_down; ++i) {
        x = conv(pm, prefix + ".down" + std::to_string(i), x, 2, 1);
        x = norm(pm, prefix + ".norm" + std::to_string(i), x);
        x = ad::relu(x);
    }
    return x;
}

// --- residual blocks ------------------------------------------------------------

template <typename T>
void add_resblocks(ParamMap<T>& pm, const std::string& prefix, int c, int n) {
    for (int i = 0; i < n; ++i) {
        const std::string base = prefix + ".res" + std::to_string(i);
        add_conv(pm, base + ".c1", c, c, 3);
        add_norm(pm, base + ".n1", c);
        add_conv(pm, base + ".c2", c, c, 3);
        add_norm(pm, base + ".n2", c);
    }
}

template <typename T>
ad::Var<T> resblocks_forward(const ParamMap<T>& pm, const std::string& prefix,
                             ad::Var<T> x, int n) {
    for (int i = 0; i < n; ++i) {
        const std::string base = prefix + ".res" + std::to_string(i);
        auto y = conv(pm, base + ".c1", x, 1, 1);
        y = ad::relu(norm(pm, base + ".n1", y));
        y = conv(pm, base + ".c2", y, 1, 1);
        y = norm(pm, base + ".n2", y);
        x = ad::add(x, y);
    }
    return x;
}

// --- decoder: mirrored upsampling + head conv -----------------------------------

inline int decoder_stage_channels(int base, int n_down, int stage) {
    // 4F -> 2F -> F -> F for n_down = 3
    const int c = (base << (n_down - 1)) >> (stage + 1);
    return c < base ? base : c;
}

template <typename T>
void add_decoder(ParamMap<T>& pm, const std::string& prefix, int base, int n_down,
                 int out_channels) {
    int cin = base << (n_down - 1);
    for (int i = 0; i < n_down; ++i) {
        const int cout = decoder_stage_channels(base, n_down, i);
        add_conv(pm, prefix + ".up" + std::to_string(i), cin, cout, 3);
        add_norm(pm, prefix + ".upnorm" + std::to_string(i), cout);
        cin = cout;
    }
    add_conv(pm, prefix + ".head", cin, out_channels, 3);
}

template <typename T>
ad::Var<T> decoder_forward(const ParamMap<T>& pm, const std::string& prefix,
                           ad::Var<T> x, int base, int n_down) {
    for (int i = 0; i < n_down; ++i) {
        x = ad::upsample2(x);
        x = conv(pm, prefix + ".up" + std::to_string(i), x, 1, 1);
        x = norm(pm, prefix + ".upnorm" + std::to_string(i), x);
        x = ad::relu(x);
    }
    return conv(pm, prefix + ".head", x, 1, 1);
}

// --- patch discriminator: 4 conv layers per scale ---------------------------------

template <typename T>
void add_patch_disc(ParamMap<T>& pm, const std::string& prefix, int in_channels,
                    int base) {
    add_conv(pm, prefix + ".c0", in_channels, base, 4);
    add_conv(pm, prefix + ".c1", base, base * 2, 4);
    add_norm(pm, prefix + ".n1", base * 2);
    add_conv(pm, prefix + ".c2", base * 2, base * 4, 4);
    add_norm(pm, prefix + ".n2", base * 4);
    add_conv(pm, prefix + ".c3", base * 4, 1, 4);
}

template <typename T>
struct PatchDiscOut {
    ad::Var<T> logits;
    std::vector<ad::Var<T>> features;
};

template <typename T>
PatchDiscOut<T> patch_disc_forward(const ParamMap<T>& pm, const std::string& prefix,
                                   const ad::Var<T>& input) {
    PatchDiscOut<T> out;
    auto x = ad::leaky_relu(conv(pm, prefix + ".c0", input, 2, 1), T(0.2));
    out.features.push_back(x);
    x = conv(pm, prefix + ".c1", x, 2, 1);
    x = ad::leaky_relu(norm(pm, prefix + ".n1", x), T(0.2));
    out.features.push_back(x);
    x = conv(pm, prefix + ".c2", x, 2, 1);
    x = ad::leaky_relu(norm(pm, prefix + ".n2", x), T(0.2));
    out.features.push_back(x);
    out.logits = conv(pm, prefix + ".c3", x, 1, 1);
    return out;
}

}  // namespace nn
}  // namespace gacvid
