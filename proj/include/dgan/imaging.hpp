#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgan/tensor.hpp"

namespace dgan {

// Nonnegative amplitude grid straight from (or standing in for) a SAR sensor.
struct AmplitudeImage {
    enum class Sensor { kInputLike, kTargetLike };

    int width = 0, height = 0;
    std::vector<float> values;  // row-major, >= 0
    Sensor sensor_tag = Sensor::kInputLike;

    float& at(int r, int c) { return values[std::size_t(r) * width + c]; }
    float at(int r, int c) const { return values[std::size_t(r) * width + c]; }
    std::int64_t pixel_count() const { return std::int64_t(width) * height; }
};

// 8-bit quantized counterpart.
struct QuantImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> values;

    QuantImage() = default;
    QuantImage(int w, int h) : width(w), height(h), values(std::size_t(w) * h, 0) {}

    std::uint8_t& at(int r, int c) { return values[std::size_t(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return values[std::size_t(r) * width + c]; }
    std::int64_t pixel_count() const { return std::int64_t(width) * height; }
    bool operator==(const QuantImage&) const = default;
};

// Regular tiling of a source image. Origins are (row, col), row-major.
struct PatchGrid {
    int patch_size = 128;
    int stride = 64;
    int src_width = 0, src_height = 0;
    int rows = 0, cols = 0;
    std::vector<std::pair<int, int>> origins;
};

struct PairSample {
    QuantImage x;  // input-like patch
    QuantImage y;  // target-like patch
    int grid_index = 0;
};

enum class Split { kTrain, kTest };

// One split's worth of co-registered patch pairs.
struct PairSet {
    Split split = Split::kTrain;
    std::vector<PairSample> pairs;
};

// q = floor(255 * min(v, vmax) / vmax), clamped to [0,255].
QuantImage quantize(const AmplitudeImage& img, double vmax);

// Smallest value v such that at least `coverage` of the pixels are <= v.
double choose_vmax(const AmplitudeImage& img, double coverage = 0.98);

std::pair<std::vector<QuantImage>, PatchGrid> tile(const QuantImage& img, int patch_size = 128,
                                                   int stride = 64);

// Recompose; overlapping pixels are averaged (mean, rounded half-up).
QuantImage compose(const std::vector<QuantImage>& patches, const PatchGrid& grid);

struct SceneParams {
    int width = 256;
    int height = 256;
    int n_lines = 24;
    double looks_input = 5.0;  // gamma speckle shape; mean is always 1
    int blur_factor = 2;       // box blur size and down/up-sampling factor
    bool speckle = true;
    double background = 40.0;
    double amp_lo = 250.0, amp_hi = 780.0;
};

// Synthetic co-registered pair: the target is a dark background with bright
// axis-aligned segments/rectangles; the input is the target box-blurred,
// decimated/nearest-upsampled and multiplied with unit-mean gamma speckle.
std::pair<AmplitudeImage, AmplitudeImage> synth_pair(std::uint64_t seed,
                                                     const SceneParams& params);

// Fixed 8-bit ranges used when quantizing synthetic scenes.
inline constexpr double kVmaxInput = 800.0;
inline constexpr double kVmaxTarget = 570.0;

// Split by hash of the grid index (independent of the scene seed).
Split split_of_index(int grid_index, double train_ratio = 0.89);

// Convenience: `count` independent single-patch pairs, already quantized.
std::vector<PairSample> synth_patch_pairs(std::uint64_t seed, int count,
                                          const SceneParams& base);

// --- file formats ---------------------------------------------------------

// Binary PGM, written exactly as "P5\n<w> <h>\n255\n" + raw bytes.
void store_pgm(const std::string& path, const QuantImage& img);
QuantImage load_pgm(const std::string& path);

// Raw little-endian f32 + JSON sidecar ("<name>.f32" -> "<name>.json").
void store_f32(const std::string& path, const AmplitudeImage& img);
AmplitudeImage load_f32(const std::string& path);

struct PairDataset {
    PairSet train{Split::kTrain, {}};
    PairSet test{Split::kTest, {}};
    std::string manifest_json;  // grid/seed/parameters snapshot
};

// Directory layout: <dir>/manifest.json, <dir>/<split>/<index>_x.pgm, _y.pgm.
void save_pairs(const std::string& dir, const PairDataset& ds);
PairDataset load_pairs(const std::string& dir);

// Full synthetic dataset: scene pair -> quantize (98% coverage) -> tile -> split.
PairDataset make_synthetic_dataset(std::uint64_t seed, const SceneParams& params,
                                   double train_ratio = 0.89);

// --- tensor bridging ------------------------------------------------------

// (1,1,H,W) float tensor with values in [0,1].
Tensor4 to_tensor01(const QuantImage& img);
// Batch of patches stacked along n.
Tensor4 to_tensor01(const std::vector<const QuantImage*>& imgs);
// round(clamp(v,0,1)*255)
QuantImage from_tensor01(const Tensor4& t, int batch_index = 0);

}  // namespace dgan
