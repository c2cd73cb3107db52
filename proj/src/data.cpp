#include "ddrid/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ddrid/rng.hpp"

namespace ddrid::data {
namespace {

std::vector<uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on " + path.string());
    return bytes;
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& in, const std::string& name) {
    z_stream zs{};
    if (inflateInit2(&zs, 32 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed");
    std::vector<uint8_t> out;
    out.reserve(in.size() * 4);
    std::vector<uint8_t> buf(1 << 16);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("corrupt gzip stream in " + name);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

uint32_t read_u32_be(const std::vector<uint8_t>& b, size_t off) {
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
           (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

void write_u32_le(std::ofstream& out, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::ifstream& in, const std::string& name) {
    uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated dataset cache " + name);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

constexpr uint32_t kMnistImagesMagic = 0x00000803;
constexpr uint32_t kMnistLabelsMagic = 0x00000801;
constexpr size_t kCifarRecord = 3073;

}  // namespace

void ImageDataset::validate() const {
    if (images.size() != class_ids.size() || images.size() != normal_flags.size())
        throw ConsistencyError("dataset field lengths differ");
    for (const auto& im : images) {
        if (im.channels != images.front().channels || im.numel() != images.front().numel())
            throw ShapeError("dataset images have mixed shapes");
    }
}

std::vector<uint8_t> read_file_maybe_gzip(const std::filesystem::path& path) {
    auto bytes = read_all(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B)
        return gunzip(bytes, path.string());
    return bytes;
}

std::vector<RawImage> load_mnist(const std::filesystem::path& images_path,
                                 const std::filesystem::path& labels_path) {
    const auto img = read_file_maybe_gzip(images_path);
    const auto lab = read_file_maybe_gzip(labels_path);
    if (img.size() < 16) throw IoError("truncated IDX image file " + images_path.string());
    if (lab.size() < 8) throw IoError("truncated IDX label file " + labels_path.string());

    if (read_u32_be(img, 0) != kMnistImagesMagic)
        throw FormatError("bad IDX magic in " + images_path.string());
    if (read_u32_be(lab, 0) != kMnistLabelsMagic)
        throw FormatError("bad IDX magic in " + labels_path.string());

    const uint32_t n_img = read_u32_be(img, 4);
    const uint32_t rows = read_u32_be(img, 8);
    const uint32_t cols = read_u32_be(img, 12);
    const uint32_t n_lab = read_u32_be(lab, 4);
    if (n_img != n_lab)
        throw ConsistencyError("image count " + std::to_string(n_img) + " != label count " +
                               std::to_string(n_lab));
    const size_t record = size_t(rows) * cols;
    const size_t need = 16 + size_t(n_img) * record;
    if (img.size() < need) throw IoError("truncated IDX image payload in " + images_path.string());
    if (img.size() != need)
        throw FormatError("IDX image payload has trailing bytes in " + images_path.string());
    if (lab.size() < 8 + size_t(n_lab))
        throw IoError("truncated IDX label payload in " + labels_path.string());
    if (lab.size() != 8 + size_t(n_lab))
        throw FormatError("IDX label payload has trailing bytes in " + labels_path.string());

    std::vector<RawImage> out(n_img);
    for (uint32_t i = 0; i < n_img; ++i) {
        RawImage& r = out[i];
        r.channels = 1;
        r.height = static_cast<int>(rows);
        r.width = static_cast<int>(cols);
        r.pixels.assign(img.begin() + 16 + i * record, img.begin() + 16 + (i + 1) * record);
        r.class_id = lab[8 + i];
    }
    return out;
}

std::vector<RawImage> load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
    std::vector<RawImage> out;
    for (const auto& path : batch_paths) {
        const auto bytes = read_file_maybe_gzip(path);
        if (bytes.size() % kCifarRecord != 0)
            throw FormatError("file length " + std::to_string(bytes.size()) +
                              " is not a multiple of 3073 in " + path.string());
        const size_t n = bytes.size() / kCifarRecord;
        out.reserve(out.size() + n);
        for (size_t i = 0; i < n; ++i) {
            const uint8_t* rec = bytes.data() + i * kCifarRecord;
            if (rec[0] > 9)
                throw FormatError("label byte " + std::to_string(int(rec[0])) + " > 9 in " +
                                  path.string());
            RawImage r;
            r.channels = 3;
            r.height = kCanonicalSize;
            r.width = kCanonicalSize;
            r.class_id = rec[0];
            r.pixels.assign(rec + 1, rec + kCifarRecord);
            out.push_back(std::move(r));
        }
    }
    return out;
}

Image canonicalize(const RawImage& raw) {
    if (raw.channels != 1 && raw.channels != 3)
        throw ShapeError("unsupported channel count " + std::to_string(raw.channels));
    if (raw.pixels.size() != size_t(raw.channels) * raw.height * raw.width)
        throw ShapeError("pixel buffer does not match declared shape");

    Image img;
    img.channels = raw.channels;
    img.pixels.assign(size_t(raw.channels) * kCanonicalSize * kCanonicalSize, 0.0f);
    if (raw.height == kCanonicalSize && raw.width == kCanonicalSize) {
        for (size_t i = 0; i < raw.pixels.size(); ++i) img.pixels[i] = raw.pixels[i];
        return img;
    }
    if (raw.channels == 1 && raw.height == 28 && raw.width == 28) {
        constexpr int pad = 2;
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x)
                img.pixels[size_t(y + pad) * kCanonicalSize + (x + pad)] =
                    raw.pixels[size_t(y) * 28 + x];
        return img;
    }
    throw ShapeError("unsupported input shape " + std::to_string(raw.channels) + "x" +
                     std::to_string(raw.height) + "x" + std::to_string(raw.width));
}

Image global_contrast_normalize(const Image& image, double scale, double eps) {
    if (eps <= 0.0) throw ArgumentError("gcn eps must be > 0");
    if (scale <= 0.0) throw ArgumentError("gcn scale must be > 0");
    const double n = static_cast<double>(image.numel());
    double mean = 0.0;
    for (float v : image.pixels) mean += v;
    mean /= n;
    double mad = 0.0;
    for (float v : image.pixels) mad += std::abs(v - mean);
    mad /= n;
    const double denom = std::max(eps, mad);

    Image out;
    out.channels = image.channels;
    out.pixels.resize(image.pixels.size());
    for (size_t i = 0; i < image.pixels.size(); ++i)
        out.pixels[i] = static_cast<float>(scale * (image.pixels[i] - mean) / denom);
    return out;
}

Image minmax_scale_image(const Image& image) {
    const auto [mn_it, mx_it] = std::minmax_element(image.pixels.begin(), image.pixels.end());
    const float mn = *mn_it, mx = *mx_it;
    Image out;
    out.channels = image.channels;
    out.pixels.resize(image.pixels.size());
    if (mx <= mn) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
        return out;
    }
    // Division keeps the endpoints exact: (mx-mn)/(mx-mn) == 1.
    const float range = mx - mn;
    for (size_t i = 0; i < image.pixels.size(); ++i)
        out.pixels[i] = (image.pixels[i] - mn) / range;
    return out;
}

ImageDataset minmax_scale(const ImageDataset& dataset) {
    if (dataset.images.empty()) throw ArgumentError("minmax_scale on empty dataset");
    ImageDataset out = dataset;
    for (auto& im : out.images) im = minmax_scale_image(im);
    return out;
}

Image preprocess(const RawImage& raw) {
    return minmax_scale_image(global_contrast_normalize(canonicalize(raw)));
}

Splits one_vs_rest_split(const std::vector<RawImage>& all_train,
                         const std::vector<RawImage>& all_test, int normal_class,
                         const SplitConfig& cfg) {
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw ArgumentError("train_fraction must lie in (0,1)");
    std::vector<size_t> normal_idx;
    for (size_t i = 0; i < all_train.size(); ++i)
        if (all_train[i].class_id == normal_class) normal_idx.push_back(i);
    if (normal_idx.empty())
        throw ArgumentError("normal_class " + std::to_string(normal_class) +
                            " absent from training labels");

    Rng rng(cfg.seed);
    rng.shuffle(normal_idx);
    const size_t n = normal_idx.size();
    size_t n_train = static_cast<size_t>(std::llround(cfg.train_fraction * double(n)));
    n_train = std::clamp<size_t>(n_train, 1, n >= 2 ? n - 1 : 1);

    Splits s;
    auto push = [](ImageDataset& ds, const RawImage& raw, uint8_t flag) {
        ds.images.push_back(preprocess(raw));
        ds.class_ids.push_back(raw.class_id);
        ds.normal_flags.push_back(flag);
    };
    for (size_t k = 0; k < n; ++k) {
        const RawImage& raw = all_train[normal_idx[k]];
        push(k < n_train ? s.train : s.val, raw, 1);
    }
    for (const RawImage& raw : all_test)
        push(s.test, raw, raw.class_id == normal_class ? 1 : 0);
    return s;
}

void save_dataset(const ImageDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("DDRIDDS1", 8);
    write_u32_le(out, 1);  // version
    write_u32_le(out, static_cast<uint32_t>(ds.size()));
    const int channels = ds.images.empty() ? 0 : ds.images.front().channels;
    write_u32_le(out, static_cast<uint32_t>(channels));
    write_u32_le(out, kCanonicalSize);
    write_u32_le(out, kCanonicalSize);
    for (int id : ds.class_ids) write_u32_le(out, static_cast<uint32_t>(id));
    out.write(reinterpret_cast<const char*>(ds.normal_flags.data()),
              static_cast<std::streamsize>(ds.normal_flags.size()));
    static_assert(sizeof(float) == 4);
    for (const auto& im : ds.images) {
        out.write(reinterpret_cast<const char*>(im.pixels.data()),
                  static_cast<std::streamsize>(im.pixels.size() * 4));
    }
    if (!out) throw IoError("write failure on " + path.string());
}

ImageDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "DDRIDDS1", 8) != 0)
        throw FormatError("not a dataset cache: " + path.string());
    const uint32_t version = read_u32_le(in, path.string());
    if (version != 1) throw FormatError("unsupported dataset cache version");
    const uint32_t count = read_u32_le(in, path.string());
    const uint32_t channels = read_u32_le(in, path.string());
    const uint32_t h = read_u32_le(in, path.string());
    const uint32_t w = read_u32_le(in, path.string());
    if (h != kCanonicalSize || w != kCanonicalSize)
        throw FormatError("dataset cache is not 32x32");

    ImageDataset ds;
    ds.class_ids.resize(count);
    for (auto& id : ds.class_ids) id = static_cast<int>(read_u32_le(in, path.string()));
    ds.normal_flags.resize(count);
    if (count > 0 && !in.read(reinterpret_cast<char*>(ds.normal_flags.data()), count))
        throw IoError("truncated dataset cache " + path.string());
    ds.images.resize(count);
    const size_t px = size_t(channels) * h * w;
    for (auto& im : ds.images) {
        im.channels = static_cast<int>(channels);
        im.pixels.resize(px);
        if (!in.read(reinterpret_cast<char*>(im.pixels.data()),
                     static_cast<std::streamsize>(px * 4)))
            throw IoError("truncated dataset cache " + path.string());
    }
    ds.validate();
    return ds;
}

}  // namespace ddrid::data
