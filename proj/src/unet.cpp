#include "endo/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "endo/kernels.hpp"

namespace endo {
namespace k = kernels;

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    Tensor4<T> out(a.n, a.c + b.c, a.h, a.w);
    for (int n = 0; n < a.n; ++n) {
        std::copy(a.plane(n, 0), a.plane(n, 0) + a.plane_size() * a.c, out.plane(n, 0));
        std::copy(b.plane(n, 0), b.plane(n, 0) + b.plane_size() * b.c, out.plane(n, a.c));
    }
    return out;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& x, int first) {
    Tensor4<T> a(x.n, first, x.h, x.w), b(x.n, x.c - first, x.h, x.w);
    for (int n = 0; n < x.n; ++n) {
        std::copy(x.plane(n, 0), x.plane(n, first), a.plane(n, 0));
        std::copy(x.plane(n, first), x.plane(n, 0) + x.plane_size() * x.c, b.plane(n, 0));
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
void add_into(Tensor4<T>& dst, const Tensor4<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
void softmax_channels(Tensor4<T>& x) {
    const std::size_t ps = x.plane_size();
    for (int n = 0; n < x.n; ++n)
        for (std::size_t i = 0; i < ps; ++i) {
            T m = x.plane(n, 0)[i];
            for (int c = 1; c < x.c; ++c) m = std::max(m, x.plane(n, c)[i]);
            T s{};
            for (int c = 0; c < x.c; ++c) {
                T& v = x.plane(n, c)[i];
                v = std::exp(v - m);
                s += v;
            }
            for (int c = 0; c < x.c; ++c) x.plane(n, c)[i] /= s;
        }
}

}  // namespace

void UNetConfig::validate() const {
    if (levels < 2) throw Error(ErrorKind::Invalid, "unet: levels must be >= 2");
    if (levels > 8) throw Error(ErrorKind::Invalid, "unet: levels must be <= 8");
    if (base_channels < 1) throw Error(ErrorKind::Invalid, "unet: base_channels must be >= 1");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw Error(ErrorKind::Invalid, "unet: leaky_slope must be in [0, 1)");
}

std::uint64_t UNetConfig::architecture_hash() const {
    // FNV-1a over the architecture-defining fields.
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    const std::int32_t lv = levels, bc = base_channels;
    const std::uint8_t hd = static_cast<std::uint8_t>(head), nm = instance_norm ? 1 : 0;
    mix(&lv, sizeof lv);
    mix(&bc, sizeof bc);
    mix(&leaky_slope, sizeof leaky_slope);
    mix(&hd, sizeof hd);
    mix(&nm, sizeof nm);
    return h;
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
    config_.validate();
    const int L = config_.levels;
    int cin = 1;
    for (int l = 0; l < L - 1; ++l) {
        const int c = config_.channels_at(l);
        encoder_.push_back(add_unit("enc" + std::to_string(l) + ".conv1", cin, c));
        encoder_.push_back(add_unit("enc" + std::to_string(l) + ".conv2", c, c));
        cin = c;
    }
    const int cb = config_.channels_at(L - 1);
    bottleneck_[0] = add_unit("bottleneck.conv1", cin, cb);
    bottleneck_[1] = add_unit("bottleneck.conv2", cb, cb);
    proj_weight_ = add_param("bottleneck.proj.w", {cb, cin});
    proj_bias_ = add_param("bottleneck.proj.b", {cb});
    up_weight_.assign(static_cast<std::size_t>(L - 1), -1);
    up_bias_.assign(static_cast<std::size_t>(L - 1), -1);
    decoder_.resize(static_cast<std::size_t>(2 * (L - 1)));
    for (int l = L - 2; l >= 0; --l) {
        const int c = config_.channels_at(l), cu = config_.channels_at(l + 1);
        const std::string p = "dec" + std::to_string(l);
        up_weight_[static_cast<std::size_t>(l)] = add_param(p + ".up.w", {cu, c, 2, 2});
        up_bias_[static_cast<std::size_t>(l)] = add_param(p + ".up.b", {c});
        decoder_[static_cast<std::size_t>(2 * l)] = add_unit(p + ".conv1", 2 * c, c);
        decoder_[static_cast<std::size_t>(2 * l + 1)] = add_unit(p + ".conv2", c, c);
    }
    const int c0 = config_.channels_at(0);
    head_weight_ = add_param("head.w", {config_.output_channels(), c0});
    head_bias_ = add_param("head.b", {config_.output_channels()});
    initialize();
}

template <typename T>
int UNet<T>::add_param(std::string name, std::vector<int> dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    ParamTensor<T> p;
    p.name = std::move(name);
    p.dims = std::move(dims);
    p.value.assign(n, T{});
    p.adam_m.assign(n, T{});
    p.adam_v.assign(n, T{});
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size() - 1);
}

template <typename T>
typename UNet<T>::Unit UNet<T>::add_unit(const std::string& name, int cin, int cout) {
    Unit u;
    u.cin = cin;
    u.cout = cout;
    u.weight = add_param(name + ".w", {cout, cin, 3, 3});
    // A bias in front of instance norm is cancelled by the mean subtraction.
    if (!config_.instance_norm) u.bias = add_param(name + ".b", {cout});
    return u;
}

template <typename T>
void UNet<T>::initialize() {
    std::mt19937_64 rng(config_.seed);
    const double slope = config_.leaky_slope;
    auto he = [&](ParamTensor<T>& p, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in)));
        for (auto& v : p.value) v = static_cast<T>(dist(rng));
    };
    for (auto& u : encoder_) he(params_[static_cast<std::size_t>(u.weight)], u.cin * 9);
    for (auto& u : bottleneck_) he(params_[static_cast<std::size_t>(u.weight)], u.cin * 9);
    he(params_[static_cast<std::size_t>(proj_weight_)], params_[static_cast<std::size_t>(proj_weight_)].dims[1]);
    for (std::size_t l = 0; l < up_weight_.size(); ++l) {
        // Bilinear upsampling at factor 2 with a 2x2 kernel replicates each
        // input pixel; input channel i feeds output channel i mod cout.
        auto& p = params_[static_cast<std::size_t>(up_weight_[l])];
        const int cin = p.dims[0], cout = p.dims[1];
        const T share = static_cast<T>(static_cast<double>(cout) / cin);
        for (int ic = 0; ic < cin; ++ic)
            for (int t = 0; t < 4; ++t)
                p.value[(static_cast<std::size_t>(ic) * cout + static_cast<std::size_t>(ic % cout)) * 4 + static_cast<std::size_t>(t)] =
                    share;
    }
    for (auto& u : decoder_) he(params_[static_cast<std::size_t>(u.weight)], u.cin * 9);
    he(params_[static_cast<std::size_t>(head_weight_)], config_.channels_at(0));
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
std::vector<int> UNet<T>::encoder_widths() const {
    std::vector<int> w;
    for (int l = 0; l < config_.levels; ++l) w.push_back(config_.channels_at(l));
    return w;
}

template <typename T>
Tensor4<T> UNet<T>::run_unit(const Unit& u, const Tensor4<T>& x, UnitCache* cache) const {
    static const std::vector<T> none;
    const auto& w = params_[static_cast<std::size_t>(u.weight)].value;
    const auto& b = u.bias >= 0 ? params_[static_cast<std::size_t>(u.bias)].value : none;
    Tensor4<T> y = k::conv3x3_forward(x, w, b, u.cout);
    std::vector<T> inv;
    if (config_.instance_norm) k::instance_norm_forward(y, inv, static_cast<T>(kNormEps));
    if (cache) {
        cache->input = x;
        cache->pre_act = y;
        cache->inv_std = std::move(inv);
    }
    k::leaky_relu_forward(y, static_cast<T>(config_.leaky_slope));
    return y;
}

template <typename T>
Tensor4<T> UNet<T>::back_unit(const Unit& u, const UnitCache& c, Tensor4<T> grad, Gradients<T>& grads, bool need_input) const {
    k::leaky_relu_backward(c.pre_act, grad, static_cast<T>(config_.leaky_slope));
    if (config_.instance_norm) k::instance_norm_backward(c.pre_act, c.inv_std, grad);
    Tensor4<T> gin;
    k::conv3x3_backward(c.input, params_[static_cast<std::size_t>(u.weight)].value, grad, need_input ? &gin : nullptr,
                        grads[static_cast<std::size_t>(u.weight)], u.bias >= 0 ? &grads[static_cast<std::size_t>(u.bias)] : nullptr);
    return gin;
}

template <typename T>
Tensor4<T> UNet<T>::forward(const Tensor4<T>& input, Cache* cache) const {
    const int L = config_.levels;
    const int div = config_.size_divisor();
    if (input.c != 1) throw Error(ErrorKind::Invalid, "unet: expected a single input channel");
    if (input.h % div != 0 || input.w % div != 0)
        throw Error(ErrorKind::Invalid, "unet: input " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                                            " is not divisible by " + std::to_string(div));
    if (cache) {
        cache->encoder.assign(encoder_.size(), {});
        cache->decoder.assign(decoder_.size(), {});
        cache->pool_argmax.assign(static_cast<std::size_t>(L - 1), {});
        cache->pool_in_hw.assign(static_cast<std::size_t>(L - 1), {});
        cache->up_in.assign(static_cast<std::size_t>(L - 1), {});
    }
    auto uc = [&](std::vector<UnitCache>& v, std::size_t i) { return cache ? &v[i] : nullptr; };

    std::vector<Tensor4<T>> skips(static_cast<std::size_t>(L - 1));
    Tensor4<T> x = input;
    for (int l = 0; l < L - 1; ++l) {
        const auto i = static_cast<std::size_t>(2 * l);
        Tensor4<T> a = run_unit(encoder_[i], x, cache ? uc(cache->encoder, i) : nullptr);
        Tensor4<T> s = run_unit(encoder_[i + 1], a, cache ? uc(cache->encoder, i + 1) : nullptr);
        std::vector<std::uint8_t> argmax;
        x = k::maxpool2x2_forward(s, argmax);
        if (cache) {
            cache->pool_argmax[static_cast<std::size_t>(l)] = std::move(argmax);
            cache->pool_in_hw[static_cast<std::size_t>(l)] = {s.h, s.w};
        }
        skips[static_cast<std::size_t>(l)] = std::move(s);
    }

    Tensor4<T> r = run_unit(bottleneck_[0], x, cache ? &cache->bottleneck[0] : nullptr);
    r = run_unit(bottleneck_[1], r, cache ? &cache->bottleneck[1] : nullptr);
    add_into(r, k::conv1x1_forward(x, params_[static_cast<std::size_t>(proj_weight_)].value,
                                   params_[static_cast<std::size_t>(proj_bias_)].value, config_.channels_at(L - 1)));
    if (cache) cache->bottleneck_in = std::move(x);
    x = std::move(r);

    for (int l = L - 2; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        Tensor4<T> u = k::upconv2x2_forward(x, params_[static_cast<std::size_t>(up_weight_[li])].value,
                                            params_[static_cast<std::size_t>(up_bias_[li])].value, config_.channels_at(l));
        if (cache) cache->up_in[li] = std::move(x);
        Tensor4<T> cat = concat_channels(u, skips[li]);
        const auto i = static_cast<std::size_t>(2 * l);
        Tensor4<T> d = run_unit(decoder_[i], cat, cache ? uc(cache->decoder, i) : nullptr);
        x = run_unit(decoder_[i + 1], d, cache ? uc(cache->decoder, i + 1) : nullptr);
    }

    Tensor4<T> out = k::conv1x1_forward(x, params_[static_cast<std::size_t>(head_weight_)].value,
                                        params_[static_cast<std::size_t>(head_bias_)].value, config_.output_channels());
    if (config_.head == Head::Classification3) softmax_channels(out);
    if (cache) {
        cache->head_in = std::move(x);
        cache->output = out;
    }
    return out;
}

template <typename T>
Gradients<T> UNet<T>::zero_gradients() const {
    Gradients<T> g(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) g[i].assign(params_[i].value.size(), T{});
    return g;
}

template <typename T>
void UNet<T>::backward(const Cache& cache, const Tensor4<T>& grad_head, Gradients<T>& grads) const {
    const int L = config_.levels;
    auto P = [](int i) { return static_cast<std::size_t>(i); };

    Tensor4<T> g;
    k::conv1x1_backward(cache.head_in, params_[P(head_weight_)].value, grad_head, &g, grads[P(head_weight_)],
                        &grads[P(head_bias_)]);

    std::vector<Tensor4<T>> skip_grads(static_cast<std::size_t>(L - 1));
    for (int l = 0; l <= L - 2; ++l) {
        const auto i = static_cast<std::size_t>(2 * l);
        const auto li = static_cast<std::size_t>(l);
        g = back_unit(decoder_[i + 1], cache.decoder[i + 1], std::move(g), grads, true);
        g = back_unit(decoder_[i], cache.decoder[i], std::move(g), grads, true);
        auto [gu, gs] = split_channels(g, config_.channels_at(l));
        skip_grads[li] = std::move(gs);
        Tensor4<T> gx;
        k::upconv2x2_backward(cache.up_in[li], params_[P(up_weight_[li])].value, gu, &gx, grads[P(up_weight_[li])],
                              &grads[P(up_bias_[li])]);
        g = std::move(gx);
    }

    Tensor4<T> g_in;
    k::conv1x1_backward(cache.bottleneck_in, params_[P(proj_weight_)].value, g, &g_in, grads[P(proj_weight_)],
                        &grads[P(proj_bias_)]);
    g = back_unit(bottleneck_[1], cache.bottleneck[1], std::move(g), grads, true);
    g = back_unit(bottleneck_[0], cache.bottleneck[0], std::move(g), grads, true);
    add_into(g, g_in);

    for (int l = L - 2; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const auto i = static_cast<std::size_t>(2 * l);
        Tensor4<T> gs = k::maxpool2x2_backward(g, cache.pool_argmax[li], cache.pool_in_hw[li][0], cache.pool_in_hw[li][1]);
        add_into(gs, skip_grads[li]);
        g = back_unit(encoder_[i + 1], cache.encoder[i + 1], std::move(gs), grads, true);
        g = back_unit(encoder_[i], cache.encoder[i], std::move(g), grads, l > 0);
    }
}

template <typename T>
void UNet<T>::adam_update(const Gradients<T>& grads, const AdamConfig& adam) {
    ++adam_steps_;
    const double t = static_cast<double>(adam_steps_);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    const T b1 = static_cast<T>(adam.beta1), b2 = static_cast<T>(adam.beta2);
    const T step = static_cast<T>(adam.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(adam.eps);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        const auto& g = grads[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            p.adam_m[i] = b1 * p.adam_m[i] + (T(1) - b1) * g[i];
            p.adam_v[i] = b2 * p.adam_v[i] + (T(1) - b2) * g[i] * g[i];
            p.value[i] -= step * p.adam_m[i] / (std::sqrt(p.adam_v[i] * inv_c2) + eps);
        }
    }
}

template <typename T>
T mae_loss(const Tensor4<T>& pred, const Tensor4<T>& target, Tensor4<T>* grad) {
    if (!pred.same_shape(target)) throw Error(ErrorKind::Invalid, "mae_loss: shape mismatch");
    const double n = static_cast<double>(pred.size());
    double s = 0.0;
    if (grad) *grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
    const T g = static_cast<T>(1.0 / n);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred.data[i] - target.data[i];
        s += std::abs(static_cast<double>(d));
        if (grad) grad->data[i] = d > T{} ? g : d < T{} ? -g : T{};
    }
    return static_cast<T>(s / n);
}

template <typename T>
T weighted_ce_loss(const Tensor4<T>& probs, const std::vector<std::uint8_t>& labels, const std::array<double, 3>& weights,
                   Tensor4<T>* grad) {
    if (probs.c != 3) throw Error(ErrorKind::Invalid, "weighted_ce_loss: expected 3 channels");
    const std::size_t ps = probs.plane_size();
    if (labels.size() != ps * static_cast<std::size_t>(probs.n)) throw Error(ErrorKind::Invalid, "weighted_ce_loss: label count mismatch");
    const double count = static_cast<double>(labels.size());
    if (grad) *grad = Tensor4<T>(probs.n, probs.c, probs.h, probs.w);
    double s = 0.0;
    for (int n = 0; n < probs.n; ++n)
        for (std::size_t i = 0; i < ps; ++i) {
            const std::uint8_t t = labels[static_cast<std::size_t>(n) * ps + i];
            if (t > 2) throw Error(ErrorKind::Invalid, "weighted_ce_loss: label out of range");
            const double w = weights[t];
            const double p = std::max(static_cast<double>(probs.plane(n, t)[i]), 1e-12);
            s -= w * std::log(p);
            if (grad)
                for (int c = 0; c < 3; ++c)
                    grad->plane(n, c)[i] =
                        static_cast<T>(w / count * (static_cast<double>(probs.plane(n, c)[i]) - (c == t ? 1.0 : 0.0)));
        }
    return static_cast<T>(s / count);
}

template class UNet<float>;
template class UNet<double>;
template float mae_loss(const Tensor4<float>&, const Tensor4<float>&, Tensor4<float>*);
template double mae_loss(const Tensor4<double>&, const Tensor4<double>&, Tensor4<double>*);
template float weighted_ce_loss(const Tensor4<float>&, const std::vector<std::uint8_t>&, const std::array<double, 3>&,
                                Tensor4<float>*);
template double weighted_ce_loss(const Tensor4<double>&, const std::vector<std::uint8_t>&, const std::array<double, 3>&,
                                 Tensor4<double>*);

}  // namespace endo
