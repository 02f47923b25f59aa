#include "endo/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace endo {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw Error(ErrorKind::Invalid, "train: lr must be > 0");
    if (batch_size < 1) throw Error(ErrorKind::Invalid, "train: batch_size must be >= 1");
    if (epochs < 0) throw Error(ErrorKind::Invalid, "train: epochs must be >= 0");
    if (augment_target_count < 1) throw Error(ErrorKind::Invalid, "train: augment_target_count must be >= 1");
    if (!(refresh_prob >= 0.0 && refresh_prob <= 1.0)) throw Error(ErrorKind::Invalid, "train: refresh_prob must be in [0, 1]");
    if (checkpoint_every < 1) throw Error(ErrorKind::Invalid, "train: checkpoint_every must be >= 1");
}

// ---------------------------------------------------------------------------

ContinuousGenerator::ContinuousGenerator(const std::vector<Patch>& dataset, std::size_t target_count, double refresh_prob,
                                         std::uint64_t seed)
    : dataset_(&dataset), target_count_(target_count), refresh_prob_(refresh_prob), rng_(seed) {
    if (dataset.empty()) throw Error(ErrorKind::Invalid, "generator: dataset is empty");
    if (target_count == 0) throw Error(ErrorKind::Invalid, "generator: target_count must be >= 1");
}

ContinuousGenerator::Slot ContinuousGenerator::fresh_slot() {
    std::uniform_int_distribution<std::size_t> src(0, dataset_->size() - 1);
    std::uniform_int_distribution<int> d4(0, kD4Count - 1);
    Slot s;
    s.source = src(rng_);
    s.transform = static_cast<D4>(d4(rng_));
    return s;
}

std::vector<std::vector<std::size_t>> ContinuousGenerator::next_epoch(int batch_size) {
    if (batch_size < 1) throw Error(ErrorKind::Invalid, "generator: batch_size must be >= 1");
    if (pool_.empty()) {
        pool_.reserve(target_count_);
        for (std::size_t i = 0; i < target_count_; ++i) pool_.push_back(fresh_slot());
        regenerated_ = target_count_;
    } else {
        regenerated_ = 0;
        std::bernoulli_distribution refresh(refresh_prob_);
        for (auto& s : pool_)
            if (refresh(rng_)) {
                s = fresh_slot();
                ++regenerated_;
            }
    }
    std::vector<std::size_t> order(pool_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size))
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(batch_size))));
    return batches;
}

Patch ContinuousGenerator::materialize(std::size_t slot) const {
    const auto& s = pool_.at(slot);
    return apply_d4((*dataset_)[s.source], s.transform);
}

// ---------------------------------------------------------------------------

Batch make_batch(const std::vector<Patch>& patches, Head head) {
    if (patches.empty()) throw Error(ErrorKind::Invalid, "make_batch: empty batch");
    const int h = patches.front().image.height(), w = patches.front().image.width();
    const int n = static_cast<int>(patches.size());
    Batch b;
    b.input = Tensor4<float>(n, 1, h, w);
    if (head == Head::Regression)
        b.target = Tensor4<float>(n, 1, h, w);
    else
        b.labels.resize(static_cast<std::size_t>(n) * h * w);
    for (int i = 0; i < n; ++i) {
        const auto& p = patches[static_cast<std::size_t>(i)];
        if (p.image.height() != h || p.image.width() != w) throw Error(ErrorKind::Invalid, "make_batch: mixed patch sizes");
        if (!p.target) throw Error(ErrorKind::Invalid, "make_batch: patch has no target");
        const auto norm = normalize(p.image);
        std::copy(norm.pixels.values().begin(), norm.pixels.values().end(), b.input.plane(i, 0));
        const auto& t = p.target->values();
        if (head == Head::Regression) {
            std::copy(t.begin(), t.end(), b.target.plane(i, 0));
        } else {
            auto* lab = b.labels.data() + static_cast<std::size_t>(i) * h * w;
            for (std::size_t k = 0; k < t.size(); ++k)
                lab[k] = static_cast<std::uint8_t>(t[k] > 0 ? PixelClass::Cell : t[k] < 0 ? PixelClass::Gutta : PixelClass::Other);
        }
    }
    return b;
}

std::array<double, 3> class_weights(const std::vector<Patch>& patches) {
    std::array<double, 3> count{1.0, 1.0, 1.0};  // +1 keeps absent classes finite
    for (const auto& p : patches) {
        if (!p.target) continue;
        for (float v : p.target->values()) count[v > 0 ? 0 : v < 0 ? 1 : 2] += 1.0;
    }
    std::array<double, 3> w{};
    double mean = 0.0;
    for (int c = 0; c < 3; ++c) {
        w[static_cast<std::size_t>(c)] = 1.0 / count[static_cast<std::size_t>(c)];
        mean += w[static_cast<std::size_t>(c)] / 3.0;
    }
    for (auto& v : w) v /= mean;
    return w;
}

template <typename T>
T batch_loss(const UNet<T>& model, const Tensor4<T>& output, const Tensor4<T>& target, const std::vector<std::uint8_t>& labels,
             const std::array<double, 3>& weights, Tensor4<T>* grad) {
    if (model.config().head == Head::Regression) return mae_loss(output, target, grad);
    return weighted_ce_loss(output, labels, weights, grad);
}

template float batch_loss(const UNet<float>&, const Tensor4<float>&, const Tensor4<float>&, const std::vector<std::uint8_t>&,
                          const std::array<double, 3>&, Tensor4<float>*);
template double batch_loss(const UNet<double>&, const Tensor4<double>&, const Tensor4<double>&, const std::vector<std::uint8_t>&,
                           const std::array<double, 3>&, Tensor4<double>*);

float backward_and_step(UNet<float>& model, const std::vector<Patch>& batch, const TrainConfig& train,
                        const std::array<double, 3>& weights) {
    const bool regression = model.config().head == Head::Regression;
    if (regression != (train.loss == LossKind::MAE))
        throw Error(ErrorKind::Invalid, "train: loss does not match the model head");
    const Batch b = make_batch(batch, model.config().head);
    UNet<float>::Cache cache;
    const auto out = model.forward(b.input, &cache);
    Tensor4<float> grad;
    const float loss = batch_loss(model, out, b.target, b.labels, weights, &grad);
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss " << loss << " at Adam step " << model.adam_steps() + 1 << " (batch of " << batch.size()
            << " patches)";
        throw Error(ErrorKind::Numeric, msg.str());
    }
    auto grads = model.zero_gradients();
    model.backward(cache, grad, grads);
    AdamConfig adam;
    adam.lr = train.lr;
    model.adam_update(grads, adam);
    return loss;
}

std::vector<double> train_model(UNet<float>& model, const std::vector<Patch>& dataset, const TrainConfig& train,
                                const TrainCallbacks& callbacks, std::ostream* log) {
    train.validate();
    std::vector<double> epoch_losses;
    if (train.epochs == 0) return epoch_losses;
    const auto weights = model.config().head == Head::Regression ? std::array<double, 3>{1.0, 1.0, 1.0} : class_weights(dataset);
    ContinuousGenerator gen(dataset, static_cast<std::size_t>(train.augment_target_count), train.refresh_prob, train.seed);
    const auto t0 = std::chrono::steady_clock::now();
    long long step = 0;
    if (log) *log << "epoch,step,loss,wall_ms\n";
    for (int epoch = 1; epoch <= train.epochs; ++epoch) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& idx : gen.next_epoch(train.batch_size)) {
            std::vector<Patch> patches;
            patches.reserve(idx.size());
            for (auto i : idx) patches.push_back(gen.materialize(i));
            const float loss = backward_and_step(model, patches, train, weights);
            ++step;
            sum += loss;
            ++count;
            if (log) {
                const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
                *log << epoch << ',' << step << ',' << loss << ',' << ms << '\n';
            }
        }
        epoch_losses.push_back(sum / static_cast<double>(count));
        if (callbacks.on_epoch) callbacks.on_epoch(epoch, epoch_losses.back());
        if (callbacks.on_checkpoint && epoch % train.checkpoint_every == 0) callbacks.on_checkpoint(epoch, model);
    }
    return epoch_losses;
}

// ---------------------------------------------------------------------------

namespace {

int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

}  // namespace

Tensor4<float> predict_full(const UNet<float>& model, const GrayImage& image) {
    image.validate();
    const int div = model.config().size_divisor();
    if (image.width() < div || image.height() < div)
        throw Error(ErrorKind::Invalid, "infer: image smaller than " + std::to_string(div) + " px on a side");
    const int pw = (image.width() + div - 1) / div * div;
    const int ph = (image.height() + div - 1) / div * div;
    const GrayImage norm = normalize(image);
    Tensor4<float> in(1, 1, ph, pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) in.at(0, 0, y, x) = norm(reflect(x, image.width()), reflect(y, image.height()));
    const auto out = model.forward(in);
    Tensor4<float> cropped(1, out.c, image.height(), image.width());
    for (int c = 0; c < out.c; ++c)
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < image.width(); ++x) cropped.at(0, c, y, x) = out.at(0, c, y, x);
    return cropped;
}

SignedDistMap infer_full(const UNet<float>& model, const GrayImage& image) {
    if (model.config().head != Head::Regression) throw Error(ErrorKind::Invalid, "infer_full: model is not a regression model");
    const auto out = predict_full(model, image);
    SignedDistMap map(image.width(), image.height());
    std::copy(out.plane(0, 0), out.plane(0, 0) + out.plane_size(), map.data());
    return map;
}

Grid<std::uint8_t> infer_classes(const UNet<float>& model, const GrayImage& image) {
    if (model.config().head != Head::Classification3)
        throw Error(ErrorKind::Invalid, "infer_classes: model is not a classification model");
    const auto out = predict_full(model, image);
    Grid<std::uint8_t> cls(image.width(), image.height());
    for (std::size_t i = 0; i < cls.size(); ++i) {
        std::uint8_t best = 0;
        for (std::uint8_t c = 1; c < 3; ++c)
            if (out.plane(0, c)[i] > out.plane(0, best)[i]) best = c;
        cls[i] = best;
    }
    return cls;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

void put_u32(std::ostream& o, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    o.write(b, 4);
}
void put_u64(std::ostream& o, std::uint64_t v) {
    put_u32(o, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
    put_u32(o, static_cast<std::uint32_t>(v >> 32));
}
std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Error(ErrorKind::Format, "weights: truncated file");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 | static_cast<std::uint32_t>(b[2]) << 16 |
           static_cast<std::uint32_t>(b[3]) << 24;
}
std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    return lo | static_cast<std::uint64_t>(get_u32(in)) << 32;
}

struct NamedTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

}  // namespace

void save_weights(const UNet<float>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const auto& params = model.params();
    auto write_tensor = [&](const std::string& name, const std::vector<int>& dims, const std::vector<float>& data) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(dims.size()));
        for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    };
    out.write("ENDO", 4);
    put_u32(out, kWeightsVersion);
    put_u64(out, model.config().architecture_hash());
    put_u32(out, static_cast<std::uint32_t>(3 * params.size() + 1));
    for (const auto& p : params) write_tensor(p.name, p.dims, p.value);
    for (const auto& p : params) write_tensor("adam.m." + p.name, p.dims, p.adam_m);
    for (const auto& p : params) write_tensor("adam.v." + p.name, p.dims, p.adam_v);
    write_tensor("adam.step", {1}, {static_cast<float>(model.adam_steps())});
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

void load_weights(UNet<float>& model, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open weights " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ENDO", 4) != 0) throw Error(ErrorKind::Format, "weights: bad magic in " + path.string());
    const auto version = get_u32(in);
    if (version != kWeightsVersion) throw Error(ErrorKind::Format, "weights: unsupported version " + std::to_string(version));
    const auto hash = get_u64(in);
    if (hash != model.config().architecture_hash())
        throw Error(ErrorKind::Format, "weights: architecture does not match the configured model");
    const auto count = get_u32(in);
    std::map<std::string, NamedTensor> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto len = get_u32(in);
        if (len > 4096) throw Error(ErrorKind::Format, "weights: tensor name too long");
        std::string name(len, '\0');
        in.read(name.data(), len);
        NamedTensor nt;
        const auto rank = get_u32(in);
        if (rank > 8) throw Error(ErrorKind::Format, "weights: tensor rank too large");
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            nt.dims.push_back(get_u32(in));
            n *= nt.dims.back();
        }
        if (n > (1u << 28)) throw Error(ErrorKind::Format, "weights: tensor too large");
        nt.data.resize(n);
        for (auto& v : nt.data) v = std::bit_cast<float>(get_u32(in));
        tensors.emplace(std::move(name), std::move(nt));
    }
    auto take = [&](const std::string& name, const std::vector<int>& dims, std::vector<float>& dst) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error(ErrorKind::Format, "weights: missing tensor " + name);
        if (it->second.dims.size() != dims.size() ||
            !std::equal(dims.begin(), dims.end(), it->second.dims.begin(), [](int a, std::uint32_t b) { return static_cast<std::uint32_t>(a) == b; }))
            throw Error(ErrorKind::Format, "weights: shape mismatch for " + name);
        dst = it->second.data;
    };
    // Decode into a copy so a failed load leaves the model untouched.
    auto params = model.params();
    for (auto& p : params) {
        take(p.name, p.dims, p.value);
        take("adam.m." + p.name, p.dims, p.adam_m);
        take("adam.v." + p.name, p.dims, p.adam_v);
    }
    std::vector<float> step;
    take("adam.step", {1}, step);
    model.params() = std::move(params);
    model.set_adam_steps(static_cast<std::uint64_t>(step[0]));
}

}  // namespace endo
