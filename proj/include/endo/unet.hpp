#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "endo/tensor.hpp"

namespace endo {

enum class Head : std::uint8_t { Regression, Classification3 };

/// Classification head channel order.
enum class PixelClass : std::uint8_t { Cell = 0, Gutta = 1, Other = 2 };

struct UNetConfig {
    int levels = 5;
    int base_channels = 16;
    double leaky_slope = 0.1;
    Head head = Head::Regression;
    bool instance_norm = true;
    std::uint64_t seed = 0;

    void validate() const;
    /// Hash of the architecture fields (seed excluded); stored in weight files.
    std::uint64_t architecture_hash() const;
    int output_channels() const { return head == Head::Regression ? 1 : 3; }
    int channels_at(int level) const { return base_channels << level; }
    /// Spatial dims must be multiples of this.
    int size_divisor() const { return 1 << (levels - 1); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<T> value;
    std::vector<T> adam_m;
    std::vector<T> adam_v;
};

template <typename T>
using Gradients = std::vector<std::vector<T>>;

/// Encoder-decoder regressor/classifier. Encoder levels run two
/// [3x3 conv -> instance norm -> leaky ReLU] units then 2x2 max-pooling; the
/// deepest level is a residual block with a 1x1 projection shortcut; each
/// decoder level upsamples with a 2x2 stride-2 transposed convolution,
/// concatenates the matching encoder features and runs two more units. A 1x1
/// convolution produces the output (linear, or softmax over three classes).
///
/// forward() is const and safe to call concurrently; parameter updates need
/// exclusive access.
template <typename T>
class UNet {
public:
    struct Unit {
        int weight = -1;
        int bias = -1;  // only when instance norm is disabled
        int cin = 0, cout = 0;
    };
    struct UnitCache {
        Tensor4<T> input;
        Tensor4<T> pre_act;  // normalized (or raw conv) output before activation
        std::vector<T> inv_std;
    };
    struct Cache {
        std::vector<UnitCache> encoder, decoder;
        UnitCache bottleneck[2];
        std::vector<std::vector<std::uint8_t>> pool_argmax;
        std::vector<std::array<int, 2>> pool_in_hw;
        Tensor4<T> bottleneck_in;
        std::vector<Tensor4<T>> up_in;
        Tensor4<T> head_in;
        Tensor4<T> output;
    };

    explicit UNet(const UNetConfig& config);

    const UNetConfig& config() const noexcept { return config_; }
    std::vector<ParamTensor<T>>& params() noexcept { return params_; }
    const std::vector<ParamTensor<T>>& params() const noexcept { return params_; }
    std::size_t parameter_count() const;
    std::uint64_t adam_steps() const noexcept { return adam_steps_; }
    void set_adam_steps(std::uint64_t t) noexcept { adam_steps_ = t; }

    /// Output channel count of each encoder level, bottleneck last.
    std::vector<int> encoder_widths() const;

    /// Regression: raw values. Classification: per-pixel class probabilities.
    Tensor4<T> forward(const Tensor4<T>& input, Cache* cache = nullptr) const;

    /// grad_head is d(loss)/d(head pre-activation), i.e. w.r.t. the logits for
    /// the classification head. Accumulates into grads (see zero_gradients).
    void backward(const Cache& cache, const Tensor4<T>& grad_head, Gradients<T>& grads) const;
    Gradients<T> zero_gradients() const;

    void adam_update(const Gradients<T>& grads, const AdamConfig& adam);

private:
    int add_param(std::string name, std::vector<int> dims);
    Unit add_unit(const std::string& name, int cin, int cout);
    Tensor4<T> run_unit(const Unit& u, const Tensor4<T>& x, UnitCache* cache) const;
    Tensor4<T> back_unit(const Unit& u, const UnitCache& cache, Tensor4<T> grad, Gradients<T>& grads, bool need_input) const;
    void initialize();

    UNetConfig config_;
    std::vector<ParamTensor<T>> params_;
    std::vector<Unit> encoder_;  // 2 per level
    Unit bottleneck_[2];
    int proj_weight_ = -1, proj_bias_ = -1;
    std::vector<int> up_weight_, up_bias_;
    std::vector<Unit> decoder_;  // 2 per level
    int head_weight_ = -1, head_bias_ = -1;
    std::uint64_t adam_steps_ = 0;
};

/// Mean absolute error; grad (if non-null) receives d(loss)/d(pred).
template <typename T>
T mae_loss(const Tensor4<T>& pred, const Tensor4<T>& target, Tensor4<T>* grad);

/// Mean over pixels of -w[label] * log p[label]; grad (if non-null) receives the
/// gradient w.r.t. the softmax logits. labels hold one PixelClass per pixel,
/// sample-major.
template <typename T>
T weighted_ce_loss(const Tensor4<T>& probs, const std::vector<std::uint8_t>& labels, const std::array<double, 3>& weights,
                   Tensor4<T>* grad);

}  // namespace endo
