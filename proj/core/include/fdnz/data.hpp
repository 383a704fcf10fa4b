#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fdnz/tensor.hpp"

namespace fdnz {

inline constexpr int kImageSide = 28;
inline constexpr int kNumClasses = 10;

// Grayscale digit images in [0,1] with integer labels.
struct LabeledImageSet {
    Tensor images;           // [n, side, side]
    std::vector<int> labels; // n entries in [0, num_classes)
    int num_classes = kNumClasses;

    std::size_t size() const { return labels.size(); }
    int side() const { return images.ndim() == 3 ? static_cast<int>(images.dim(1)) : 0; }

    // enforces the type invariants; throws on violation
    void validate() const;

    LabeledImageSet subset(const std::vector<std::size_t>& indices) const;
};

struct DataSplit {
    LabeledImageSet train;
    LabeledImageSet validation;
    LabeledImageSet test;
    std::uint64_t seed = 0;
};

struct SynthSpec {
    int samples_per_class = 500;
    double jitter_translate_px = 2.0; // max |dx|, |dy| in pixels
    double jitter_rotate_deg = 15.0;  // max |angle|
    double pixel_noise_sigma = 0.3;
    std::uint64_t seed = 0;
};

// IDX (MNIST-compatible) reader. Big-endian u32 header words, u8 payload.
// Magic 0x00000803 for images, 0x00000801 for labels. Images must be 28x28;
// other sizes are rejected, never resampled. Pixels are scaled to [0,1] by
// division by 255.
LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path);

// The ten 28x28 binary stroke masks backing the synthetic generator,
// embedded at build time from assets/digit_templates.txt.
const std::array<Tensor, 10>& digit_templates();

// Parses the template asset format: 10 blocks of 28 lines of 28 '0'/'1'
// characters, blocks separated by blank lines.
std::array<Tensor, 10> parse_templates(std::string_view text);

// Renders 10 * samples_per_class images: per image the class template is
// rotated/translated by jitter drawn uniformly, bilinearly sampled, Gaussian
// pixel noise added, then clamped to [0,1]. Deterministic in spec.seed.
LabeledImageSet generate_synthetic(const SynthSpec& spec);

// Seeded per-class Fisher-Yates shuffle, then largest-remainder partitioning
// into train/validation/test. Every class needs at least 3 samples.
DataSplit stratified_split(const LabeledImageSet& set, const std::array<double, 3>& ratios,
                           std::uint64_t seed);

// d x n matrix (d = side*side); column j is image j flattened row-major.
Eigen::MatrixXd vectorize(const LabeledImageSet& set);

} // namespace fdnz
