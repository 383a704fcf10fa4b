#include "fdnz/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fdnz/error.hpp"
#include "fdnz/rng.hpp"

namespace fdnz {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803u;
constexpr std::uint32_t kLabelsMagic = 0x00000801u;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        raise(ErrorKind::TruncatedFile,
              path + ": expected 4 header bytes at offset " + std::to_string(offset));
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<std::uint8_t> read_payload(std::ifstream& in, const std::string& path,
                                       std::size_t offset, std::size_t count) {
    std::vector<std::uint8_t> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got != count) {
        raise(ErrorKind::TruncatedFile, path + ": payload ends at offset " +
                                            std::to_string(offset + got) + ", expected " +
                                            std::to_string(offset + count) + " bytes");
    }
    return bytes;
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::IoError, "cannot open " + path);
    return in;
}

char hex_digit(std::uint32_t v) { return "0123456789abcdef"[v & 0xF]; }

std::string hex32(std::uint32_t v) {
    std::string s = "0x";
    for (int shift = 28; shift >= 0; shift -= 4) s += hex_digit(v >> shift);
    return s;
}

} // namespace

void LabeledImageSet::validate() const {
    if (images.ndim() != 3 || images.dim(1) != images.dim(2)) {
        raise(ErrorKind::ShapeMismatch, "image tensor must be [n, side, side], got " +
                                            images.shape_string());
    }
    if (images.dim(0) != labels.size()) {
        raise(ErrorKind::CountMismatch, "have " + std::to_string(images.dim(0)) +
                                            " images but " + std::to_string(labels.size()) +
                                            " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            raise(ErrorKind::LabelOutOfRange, "label " + std::to_string(labels[i]) +
                                                  " at index " + std::to_string(i));
        }
    }
    for (const double v : images.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            raise(ErrorKind::InvalidValue, "pixel value " + std::to_string(v) +
                                               " outside [0,1]");
        }
    }
}

LabeledImageSet LabeledImageSet::subset(const std::vector<std::size_t>& indices) const {
    const std::size_t side_px = images.dim(1);
    const std::size_t stride = side_px * side_px;
    LabeledImageSet out;
    out.num_classes = num_classes;
    out.images = Tensor({indices.size(), side_px, side_px});
    out.labels.reserve(indices.size());
    for (std::size_t row = 0; row < indices.size(); ++row) {
        const std::size_t src = indices[row];
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                    out.images.data.begin() + static_cast<std::ptrdiff_t>(row * stride));
        out.labels.push_back(labels[src]);
    }
    return out;
}

LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img = open_binary(images_path);
    const std::uint32_t img_magic = read_be_u32(img, images_path, 0);
    if (img_magic != kImagesMagic) {
        raise(ErrorKind::MagicMismatch, images_path + ": magic " + hex32(img_magic) +
                                            " at offset 0, expected " + hex32(kImagesMagic));
    }
    const std::uint32_t n_images = read_be_u32(img, images_path, 4);
    const std::uint32_t rows = read_be_u32(img, images_path, 8);
    const std::uint32_t cols = read_be_u32(img, images_path, 12);
    if (rows != kImageSide || cols != kImageSide) {
        raise(ErrorKind::ShapeMismatch, images_path + ": image size " + std::to_string(rows) +
                                            "x" + std::to_string(cols) +
                                            " unsupported, expected 28x28");
    }

    std::ifstream lab = open_binary(labels_path);
    const std::uint32_t lab_magic = read_be_u32(lab, labels_path, 0);
    if (lab_magic != kLabelsMagic) {
        raise(ErrorKind::MagicMismatch, labels_path + ": magic " + hex32(lab_magic) +
                                            " at offset 0, expected " + hex32(kLabelsMagic));
    }
    const std::uint32_t n_labels = read_be_u32(lab, labels_path, 4);
    if (n_images != n_labels) {
        raise(ErrorKind::CountMismatch, images_path + " holds " + std::to_string(n_images) +
                                            " images but " + labels_path + " holds " +
                                            std::to_string(n_labels) + " labels");
    }

    const std::size_t pixels = std::size_t(n_images) * kImageSide * kImageSide;
    const std::vector<std::uint8_t> img_bytes = read_payload(img, images_path, 16, pixels);
    const std::vector<std::uint8_t> lab_bytes = read_payload(lab, labels_path, 8, n_images);

    LabeledImageSet set;
    set.images = Tensor({n_images, kImageSide, kImageSide});
    for (std::size_t i = 0; i < pixels; ++i) set.images.data[i] = img_bytes[i] / 255.0;
    set.labels.assign(lab_bytes.begin(), lab_bytes.end());
    set.validate();
    return set;
}

std::array<Tensor, 10> parse_templates(std::string_view text) {
    std::array<Tensor, 10> out;
    std::size_t digit = 0;
    std::size_t row = 0;
    Tensor current({kImageSide, kImageSide});
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        const std::string_view line =
            text.substr(pos, (eol == std::string_view::npos ? text.size() : eol) - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        if (line.empty()) continue;
        if (digit >= 10 || line.size() != kImageSide) {
            raise(ErrorKind::ParseError, "template asset: bad line length " +
                                             std::to_string(line.size()) + " in block " +
                                             std::to_string(digit));
        }
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (line[c] != '0' && line[c] != '1') {
                raise(ErrorKind::ParseError, "template asset: character '" +
                                                 std::string(1, line[c]) + "' in block " +
                                                 std::to_string(digit));
            }
            current.data[row * kImageSide + c] = line[c] == '1' ? 1.0 : 0.0;
        }
        if (++row == kImageSide) {
            out[digit++] = current;
            current = Tensor({kImageSide, kImageSide});
            row = 0;
        }
    }
    if (digit != 10 || row != 0) {
        raise(ErrorKind::ParseError, "template asset: expected 10 blocks of 28 lines, got " +
                                         std::to_string(digit) + " blocks");
    }
    return out;
}

namespace {

// inverse-mapped bilinear sampling of `tpl` rotated by `deg` around the image
// center and shifted by (dx, dy); coordinates outside the template read 0
void render_jittered(const Tensor& tpl, double deg, double dx, double dy, double* out) {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double center = (kImageSide - 1) / 2.0;
    for (int r = 0; r < kImageSide; ++r) {
        for (int c = 0; c < kImageSide; ++c) {
            // undo translation, then rotation
            const double yr = r - dy - center;
            const double xr = c - dx - center;
            const double sy = -sn * xr + cs * yr + center;
            const double sx = cs * xr + sn * yr + center;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0;
            const double fx = sx - x0;
            auto at = [&](int y, int x) -> double {
                if (y < 0 || y >= kImageSide || x < 0 || x >= kImageSide) return 0.0;
                return tpl.data[static_cast<std::size_t>(y) * kImageSide + x];
            };
            out[r * kImageSide + c] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                                      fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
}

} // namespace

LabeledImageSet generate_synthetic(const SynthSpec& spec) {
    if (spec.samples_per_class < 1) {
        raise(ErrorKind::InvalidValue, "samples_per_class must be >= 1, got " +
                                           std::to_string(spec.samples_per_class));
    }
    if (spec.pixel_noise_sigma < 0.0) {
        raise(ErrorKind::InvalidValue, "pixel_noise_sigma must be >= 0");
    }
    const auto& templates = digit_templates();
    const std::size_t n = std::size_t(10) * spec.samples_per_class;
    LabeledImageSet set;
    set.images = Tensor({n, kImageSide, kImageSide});
    set.labels.resize(n);

    SplitMix64 rng = substream(spec.seed, "synthetic");
    std::size_t row = 0;
    for (int digit = 0; digit < 10; ++digit) {
        for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
            const double deg =
                rng.uniform(-spec.jitter_rotate_deg, spec.jitter_rotate_deg);
            const double dx =
                rng.uniform(-spec.jitter_translate_px, spec.jitter_translate_px);
            const double dy =
                rng.uniform(-spec.jitter_translate_px, spec.jitter_translate_px);
            double* out = set.images.data.data() + row * kImageSide * kImageSide;
            render_jittered(templates[digit], deg, dx, dy, out);
            if (spec.pixel_noise_sigma > 0.0) {
                for (int p = 0; p < kImageSide * kImageSide; ++p) {
                    out[p] = std::clamp(out[p] + spec.pixel_noise_sigma * rng.normal(), 0.0, 1.0);
                }
            }
            set.labels[row] = digit;
        }
    }
    return set;
}

DataSplit stratified_split(const LabeledImageSet& set, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
    double sum = 0.0;
    for (const double r : ratios) {
        if (r <= 0.0) raise(ErrorKind::InvalidValue, "split ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        raise(ErrorKind::InvalidValue, "split ratios sum to " + std::to_string(sum) +
                                           ", expected 1");
    }
    set.validate();

    std::vector<std::vector<std::size_t>> per_class(set.num_classes);
    for (std::size_t i = 0; i < set.labels.size(); ++i) per_class[set.labels[i]].push_back(i);
    for (int c = 0; c < set.num_classes; ++c) {
        if (per_class[c].size() < 3) {
            raise(ErrorKind::InsufficientClassSamples,
                  "class " + std::to_string(c) + " has " + std::to_string(per_class[c].size()) +
                      " samples, need >= 3");
        }
    }

    std::array<std::vector<std::size_t>, 3> buckets;
    for (int c = 0; c < set.num_classes; ++c) {
        auto& indices = per_class[c];
        SplitMix64 rng = substream(seed, "split", static_cast<std::uint64_t>(c));
        rng.shuffle(indices);

        // largest-remainder apportionment of this class across the subsets
        const double n_c = static_cast<double>(indices.size());
        std::array<std::size_t, 3> counts;
        std::array<std::pair<double, int>, 3> remainders;
        std::size_t assigned = 0;
        for (int b = 0; b < 3; ++b) {
            const double target = ratios[b] * n_c;
            counts[b] = static_cast<std::size_t>(std::floor(target));
            remainders[b] = {target - std::floor(target), b};
            assigned += counts[b];
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t leftover = indices.size() - assigned, i = 0; i < leftover; ++i) {
            ++counts[remainders[i % 3].second];
        }

        std::size_t cursor = 0;
        for (int b = 0; b < 3; ++b) {
            for (std::size_t i = 0; i < counts[b]; ++i) buckets[b].push_back(indices[cursor++]);
        }
    }

    DataSplit split;
    split.seed = seed;
    split.train = set.subset(buckets[0]);
    split.validation = set.subset(buckets[1]);
    split.test = set.subset(buckets[2]);
    return split;
}

Eigen::MatrixXd vectorize(const LabeledImageSet& set) {
    set.validate();
    const std::size_t n = set.size();
    const std::size_t d = std::size_t(set.side()) * set.side();
    Eigen::MatrixXd out(d, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < d; ++p) out(p, j) = set.images.data[j * d + p];
    }
    return out;
}

} // namespace fdnz
