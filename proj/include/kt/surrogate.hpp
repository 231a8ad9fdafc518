#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kt/fem.hpp"
#include "kt/rng.hpp"
#include "kt/slice.hpp"
#include "kt/surface.hpp"

namespace kt {

// From-scratch convolutional encoder-decoder mapping a binary surface mask
// patch to its K_t field. Strided 3x3 convolutions halve the spatial size at
// every encoder layer down to a bottleneck; mirrored transposed convolutions
// double it back. ReLU on all hidden layers, identity output. No skip
// connections: everything must pass through the bottleneck.
//
// Weights are held as doubles but snapped to f32 after initialization and
// after every optimizer step, so the f32 model file round-trips bitwise while
// gradients and finite-difference checks run in full double precision.

struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0) {}
    double& at(int ci, int y, int x) { return v[(size_t(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(size_t(ci) * h + y) * w + x]; }
    const double* plane(int ci) const { return v.data() + size_t(ci) * h * w; }
    double* plane(int ci) { return v.data() + size_t(ci) * h * w; }
};

struct Architecture {
    int patch_size = 128;
    // 2 = mask plane plus signed-distance plane (both derived from the mask).
    // A mask-only net cannot tell apart pixels whose local neighborhoods repeat
    // even though their true K_t differs, so the distance plane is the default.
    int input_channels = 2;
    std::vector<int> encoder_channels = {8, 16, 32, 64, 64, 64, 64};

    int depth() const { return int(encoder_channels.size()); }
    int bottleneck_size() const { return patch_size >> depth(); }
    // patch_size = 2^depth * bottleneck with integer bottleneck >= 1.
    void validate() const;
    // patch_size, then the spatial size after each encoder layer.
    std::vector<int> spatial_sizes() const;

    bool operator==(const Architecture&) const = default;
};

// One strided conv (encoder) or transposed-conv (decoder) layer, kernel 3x3,
// stride 2, pad 1; transposed layers produce exactly 2x the spatial size.
// Weight layout: conv [oc][ic][3][3], transposed [ic][oc][3][3].
struct ConvLayer {
    bool transposed = false;
    int in_c = 0, out_c = 0;
    bool relu = true;
    std::vector<double> w;
    std::vector<double> b;

    int64_t w_count() const { return int64_t(in_c) * out_c * 9; }
};

struct Normalization {
    double in_scale = 2.0, in_shift = -1.0;  // mask {0,1} -> {-1,+1}
    double out_mean = 0.0, out_std = 1.0;    // K_t = raw * out_std + out_mean
    double pixel_pitch_um = 3.0;             // training resolution
};

struct TrainingMeta {
    std::string dataset_hash;
    uint64_t seed = 0;
    int epochs = 0;
    int best_epoch = 0;
    double initial_val_loss = 0.0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double best_val_loss = 0.0;
};

struct SurrogateModel {
    Architecture arch;
    std::vector<ConvLayer> layers;  // encoder layers then decoder layers
    Normalization norm;
    TrainingMeta meta;
};

// Fan-in-scaled uniform init, U(-1/sqrt(in_c*9), +1/sqrt(in_c*9)), f32-snapped.
SurrogateModel make_model(const Architecture& arch, Rng& rng);

// Input tensor: channel 0 = mask * in_scale + in_shift; optional channel 1 =
// signed city-block distance to the surface in pixels / patch_size.
Tensor model_input(const SurrogateModel& model, const MaskGrid& mask);

// Raw network output (normalized units), deterministic.
Tensor forward(const SurrogateModel& model, const Tensor& input);

// forward + de-normalization; values on void pixels are unspecified and
// meant to be masked by the caller.
Grid<double> predict_patch(const SurrogateModel& model, const MaskGrid& mask);

struct Sample {
    std::string id;
    MaskGrid mask;
    Grid<double> kt;    // NaN on void
    std::string split;  // "train" | "val" | "test"
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<int> train_idx, val_idx, test_idx;
    double pixel_pitch_um = 3.0;
    double r_inner_um = 0.0;
    std::string manifest_hash;
};

// out_mean/out_std over material pixels of the train split.
Normalization compute_normalization(const Dataset& ds);

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int batch_size = 16;
    int epochs = 60;
    // lr multiplies by lr_decay when training passes these epoch fractions
    double lr_decay = 0.3;
    double decay_at1 = 0.6, decay_at2 = 0.85;
    double split_train = 0.8, split_val = 0.1, split_test = 0.1;
    uint64_t seed = 0;
    bool verbose = false;

    void validate() const;
};

struct LayerGrads {
    std::vector<double> w, b;
};

struct BatchGrads {
    std::vector<LayerGrads> layers;
    double loss = 0.0;      // masked MSE over the batch
    int64_t n_mask = 0;
};

// Masked MSE over material pixels (targets normalized via model.norm).
double masked_loss(const SurrogateModel& model, const std::vector<Sample>& samples,
                   const std::vector<int>& idxs);

// Gradients of masked MSE w.r.t. every weight and bias. Altering targets on
// void pixels changes nothing. Deterministic for a fixed thread count.
BatchGrads backward(const SurrogateModel& model, const std::vector<Sample>& samples,
                    const std::vector<int>& idxs);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};
using TrainLog = std::vector<EpochStats>;

// Adam + best-validation checkpointing; deterministic for fixed seed and
// thread count. Empty val split falls back to tracking train loss.
SurrogateModel train(const Dataset& ds, const Architecture& arch, const TrainConfig& config,
                     TrainLog* log = nullptr);

// Tiled inference: 128-px tiles, 32-px overlap, interior center-crop stitching
// (margins kept only at slice borders). Slices smaller than a patch are
// reflect-padded; dimensions below patch_size/2 are an error. sigma_nominal of
// the result is 0 (unknown to the surrogate).
KtField predict_large(const SurrogateModel& model, const SurfaceSlice& slice);

// Model file: magic "KTSM", u32 version = 1, u32 JSON header length, JSON
// (arch + normalization + meta + layer table), then per layer kernel and bias
// as little-endian f32 blobs.
void save_model(const std::filesystem::path& path, const SurrogateModel& model);
SurrogateModel load_model(const std::filesystem::path& path);

struct RoughnessRanges {
    double rms_um_lo = 2.0, rms_um_hi = 20.0;
    double corr_um_lo = 20.0, corr_um_hi = 60.0;
    double offset_um_lo = 75.0, offset_um_hi = 105.0;
};

struct DatasetSpec {
    int n_samples = 550;
    RoughnessRanges ranges;
    int patch_size = 128;   // saved patch, cropped from the solved slice centre
    int gen_rows = 256;     // solved slice height; crop kills loaded-face effects
    double pixel_pitch_um = 3.0;
    double r_inner_um = 500.0;
    Material material;
    SolveConfig fem;        // bc_value/mode/tolerances for the labeling solves
    double split_train = 0.8, split_val = 0.1, split_test = 0.1;
    uint64_t seed = 0;

    void validate() const;
};

struct DatasetBuildResult {
    int generated = 0;
    int reused = 0;
    int failed = 0;
    std::filesystem::path manifest;
};

// Paired <id>.pgm / <id>.pfm patches plus manifest.json. Resumable: existing
// complete pairs are kept, only missing samples are solved. FE failures are
// logged in the manifest and skipped, never fatal.
DatasetBuildResult make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace kt
