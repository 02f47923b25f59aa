#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "endo/image.hpp"
#include "endo/image_io.hpp"
#include "endo/unet.hpp"

namespace endo {

enum class LossKind : std::uint8_t { MAE, WeightedCrossEntropy };

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 100;
    int batch_size = 8;
    LossKind loss = LossKind::MAE;
    int augment_target_count = 2048;
    double refresh_prob = 0.25;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;

    void validate() const;
};

/// Pool of augmented training patches. A slot names a source patch and the D4
/// transform applied to it; slots are materialized when a batch is built.
class ContinuousGenerator {
public:
    struct Slot {
        std::size_t source = 0;
        D4 transform = D4::Identity;
        friend bool operator==(const Slot&, const Slot&) = default;
    };

    ContinuousGenerator(const std::vector<Patch>& dataset, std::size_t target_count, double refresh_prob, std::uint64_t seed);

    /// First call fills the pool; later calls regenerate each slot with
    /// probability refresh_prob. Returns the epoch's batches as slot indices in
    /// shuffled order.
    std::vector<std::vector<std::size_t>> next_epoch(int batch_size);

    const std::vector<Slot>& pool() const noexcept { return pool_; }
    std::size_t regenerated_last_epoch() const noexcept { return regenerated_; }
    Patch materialize(std::size_t slot) const;

private:
    Slot fresh_slot();

    const std::vector<Patch>* dataset_;
    std::size_t target_count_;
    double refresh_prob_;
    std::mt19937_64 rng_;
    std::vector<Slot> pool_;
    std::size_t regenerated_ = 0;
};

/// Training pair in tensor form. Regression targets fill `target`;
/// classification targets fill `labels` (PixelClass per pixel).
struct Batch {
    Tensor4<float> input;
    Tensor4<float> target;
    std::vector<std::uint8_t> labels;
};

/// Inputs are normalized per patch; labels derive from the target's sign.
Batch make_batch(const std::vector<Patch>& patches, Head head);

/// Inverse class-pixel frequency over the patches' targets, scaled to mean 1.
std::array<double, 3> class_weights(const std::vector<Patch>& patches);

/// Loss of the batch and d(loss)/d(head pre-activation).
template <typename T>
T batch_loss(const UNet<T>& model, const Tensor4<T>& output, const Tensor4<T>& target, const std::vector<std::uint8_t>& labels,
             const std::array<double, 3>& weights, Tensor4<T>* grad);

/// One forward/backward pass and one Adam step. Throws Error(Numeric) on a
/// non-finite loss.
float backward_and_step(UNet<float>& model, const std::vector<Patch>& batch, const TrainConfig& train,
                        const std::array<double, 3>& weights = {1.0, 1.0, 1.0});

struct TrainCallbacks {
    std::function<void(int epoch, double mean_loss)> on_epoch;
    /// Called after every checkpoint_every epochs.
    std::function<void(int epoch, const UNet<float>& model)> on_checkpoint;
};

/// Runs train.epochs epochs over a continuous generator. Writes
/// "epoch,step,loss,wall_ms" rows to log when non-null. Returns per-epoch mean loss.
std::vector<double> train_model(UNet<float>& model, const std::vector<Patch>& dataset, const TrainConfig& train,
                                const TrainCallbacks& callbacks = {}, std::ostream* log = nullptr);

/// Reflect-pads to the next multiple of the model's size divisor, normalizes,
/// runs the network, crops back. Returns 1 x C x H x W.
Tensor4<float> predict_full(const UNet<float>& model, const GrayImage& image);
/// Regression model output as a signed distance map (raw prediction).
SignedDistMap infer_full(const UNet<float>& model, const GrayImage& image);
/// Classification model output as per-pixel argmax PixelClass.
Grid<std::uint8_t> infer_classes(const UNet<float>& model, const GrayImage& image);

/// Little-endian weight file: "ENDO", u32 version, u64 architecture hash,
/// u32 tensor count, then per tensor {u32 name length, name, u32 rank, u32 dims,
/// f32 data}. Adam moments and step count are stored as extra tensors.
void save_weights(const UNet<float>& model, const std::filesystem::path& path);
/// Throws Error(Format) on bad magic/version or architecture mismatch.
void load_weights(UNet<float>& model, const std::filesystem::path& path);

}  // namespace endo
