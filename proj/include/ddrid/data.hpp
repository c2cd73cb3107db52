#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddrid/common.hpp"

namespace ddrid::data {

// Image as parsed from the source binary formats: channel-major uint8,
// class label attached. 1x28x28 for MNIST records, 3x32x32 for CIFAR-10.
struct RawImage {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<uint8_t> pixels;  // channels x height x width
    int class_id = -1;
};

// Canonical float image: channel-major, spatial size exactly 32x32.
struct Image {
    int channels = 0;
    std::vector<float> pixels;  // channels x 32 x 32

    int64_t numel() const { return static_cast<int64_t>(pixels.size()); }
};

inline constexpr int kCanonicalSize = 32;

struct ImageDataset {
    std::vector<Image> images;
    std::vector<int> class_ids;
    std::vector<uint8_t> normal_flags;  // set for test splits; 1 = normal

    size_t size() const { return images.size(); }
    void validate() const;
};

struct SplitConfig {
    double train_fraction = 0.9;
    uint64_t seed = 0;
};

// Reads a whole file; transparently inflates gzip input (0x1F 0x8B prefix).
std::vector<uint8_t> read_file_maybe_gzip(const std::filesystem::path& path);

// MNIST IDX pair: big-endian headers, magic 0x00000803 (images) and
// 0x00000801 (labels).
std::vector<RawImage> load_mnist(const std::filesystem::path& images_path,
                                 const std::filesystem::path& labels_path);

// CIFAR-10 binary batches: 3073-byte records, label byte then 3072 pixel
// bytes in channel-major R,G,B order.
std::vector<RawImage> load_cifar10(const std::vector<std::filesystem::path>& batch_paths);

// Zero-pads 1x28x28 to 1x32x32 (2-pixel border); 32x32 inputs pass through.
Image canonicalize(const RawImage& raw);

// x -> scale * (x - mean) / max(eps, mean absolute deviation), over all
// pixels of the image jointly.
Image global_contrast_normalize(const Image& image, double scale = 1.0, double eps = 1e-8);

// Per-image min-max rescale to [0,1]; constant images map to all zeros.
Image minmax_scale_image(const Image& image);
ImageDataset minmax_scale(const ImageDataset& dataset);

// canonicalize -> GCN -> min-max.
Image preprocess(const RawImage& raw);

struct Splits {
    ImageDataset train;
    ImageDataset val;
    ImageDataset test;
};

// One-vs-rest protocol: train/val hold only normal-class training images
// (seeded shuffle, train_fraction split); test holds every test image with
// normal_flags = (class_id == normal_class). All images fully preprocessed.
Splits one_vs_rest_split(const std::vector<RawImage>& all_train,
                         const std::vector<RawImage>& all_test, int normal_class,
                         const SplitConfig& cfg);

// Preprocessed-dataset cache (.ddrds), little-endian.
void save_dataset(const ImageDataset& ds, const std::filesystem::path& path);
ImageDataset load_dataset(const std::filesystem::path& path);

}  // namespace ddrid::data
