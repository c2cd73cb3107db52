#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "ddrid/data.hpp"
#include "ddrid/rng.hpp"

using namespace ddrid;
using namespace ddrid::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "ddrid_data_test";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_u32_be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

// Builds an IDX image/label pair in the official byte layout.
std::pair<std::vector<uint8_t>, std::vector<uint8_t>> make_idx(
    const std::vector<std::vector<uint8_t>>& images, const std::vector<uint8_t>& labels,
    int rows = 28, int cols = 28) {
    std::vector<uint8_t> img, lab;
    push_u32_be(img, 0x00000803);
    push_u32_be(img, static_cast<uint32_t>(images.size()));
    push_u32_be(img, static_cast<uint32_t>(rows));
    push_u32_be(img, static_cast<uint32_t>(cols));
    for (const auto& im : images) img.insert(img.end(), im.begin(), im.end());
    push_u32_be(lab, 0x00000801);
    push_u32_be(lab, static_cast<uint32_t>(labels.size()));
    lab.insert(lab.end(), labels.begin(), labels.end());
    return {img, lab};
}

std::vector<uint8_t> gzip_bytes(const std::vector<uint8_t>& in) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                         Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<uint8_t> out(compressBound(static_cast<uLong>(in.size())) + 64);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

Image make_image(std::vector<float> px, int channels = 1) {
    Image im;
    im.channels = channels;
    im.pixels = std::move(px);
    return im;
}

}  // namespace

TEST_CASE("load_mnist parses official-layout files, counts round-trip") {
    auto dir = temp_dir();
    Rng rng(11);
    const int n = 300;
    std::vector<std::vector<uint8_t>> imgs(n, std::vector<uint8_t>(28 * 28));
    std::vector<uint8_t> labels(n);
    for (int i = 0; i < n; ++i) {
        for (auto& p : imgs[i]) p = static_cast<uint8_t>(rng.next_below(256));
        labels[i] = static_cast<uint8_t>(i % 10);
    }
    auto [img_bytes, lab_bytes] = make_idx(imgs, labels);
    write_file(dir / "imgs", img_bytes);
    write_file(dir / "labs", lab_bytes);

    auto raws = load_mnist(dir / "imgs", dir / "labs");
    REQUIRE(raws.size() == size_t(n));
    // record-count round trip: images * record size == payload length
    CHECK(raws.size() * 28 * 28 == img_bytes.size() - 16);
    for (int i = 0; i < n; ++i) {
        CHECK(raws[i].channels == 1);
        CHECK(raws[i].height == 28);
        CHECK(raws[i].width == 28);
        CHECK(raws[i].class_id == i % 10);
        CHECK(raws[i].pixels == imgs[i]);
    }
}

TEST_CASE("load_mnist accepts gzip-compressed inputs") {
    auto dir = temp_dir();
    std::vector<std::vector<uint8_t>> imgs(3, std::vector<uint8_t>(28 * 28, 7));
    auto [img_bytes, lab_bytes] = make_idx(imgs, {0, 1, 2});
    write_file(dir / "imgs.gz", gzip_bytes(img_bytes));
    write_file(dir / "labs.gz", gzip_bytes(lab_bytes));
    auto raws = load_mnist(dir / "imgs.gz", dir / "labs.gz");
    REQUIRE(raws.size() == 3);
    CHECK(raws[2].class_id == 2);
    CHECK(raws[0].pixels == imgs[0]);
}

TEST_CASE("load_mnist error paths") {
    auto dir = temp_dir();
    std::vector<std::vector<uint8_t>> imgs(10, std::vector<uint8_t>(28 * 28, 1));
    std::vector<uint8_t> labels(10, 0);
    auto [img_bytes, lab_bytes] = make_idx(imgs, labels);

    SUBCASE("zero magic is a format error") {
        auto broken = img_bytes;
        broken[0] = broken[1] = broken[2] = broken[3] = 0x00;
        write_file(dir / "bad_magic", broken);
        write_file(dir / "labs", lab_bytes);
        CHECK_THROWS_AS(load_mnist(dir / "bad_magic", dir / "labs"), FormatError);
    }
    SUBCASE("10 images with 9 labels is a consistency error") {
        auto [img10, lab9] = make_idx(imgs, std::vector<uint8_t>(9, 0));
        write_file(dir / "imgs10", img10);
        write_file(dir / "labs9", lab9);
        CHECK_THROWS_AS(load_mnist(dir / "imgs10", dir / "labs9"), ConsistencyError);
    }
    SUBCASE("truncated payload is an io error") {
        auto cut = img_bytes;
        cut.resize(cut.size() - 100);
        write_file(dir / "cut", cut);
        write_file(dir / "labs", lab_bytes);
        CHECK_THROWS_AS(load_mnist(dir / "cut", dir / "labs"), IoError);
    }
    SUBCASE("missing file is an io error") {
        CHECK_THROWS_AS(load_mnist(dir / "nope", dir / "nope2"), IoError);
    }
}

TEST_CASE("load_cifar10 record arithmetic and errors") {
    auto dir = temp_dir();
    SUBCASE("official-size batch parses to 10000 images of 3x32x32") {
        Rng rng(5);
        std::vector<uint8_t> bytes(10000 * 3073);
        for (size_t i = 0; i < 10000; ++i) {
            bytes[i * 3073] = static_cast<uint8_t>(i % 10);
            for (size_t j = 1; j < 3073; ++j)
                bytes[i * 3073 + j] = static_cast<uint8_t>(rng.next_below(256));
        }
        write_file(dir / "batch.bin", bytes);
        auto raws = load_cifar10({dir / "batch.bin"});
        REQUIRE(raws.size() == 10000);
        CHECK(raws.size() * 3073 == bytes.size());
        CHECK(raws[0].channels == 3);
        CHECK(raws[0].height == 32);
        CHECK(raws[0].width == 32);
        CHECK(raws[123].class_id == 3);
        CHECK(raws[9999].pixels.size() == 3072);
    }
    SUBCASE("length 3073 gives exactly one image") {
        std::vector<uint8_t> one(3073, 0);
        one[0] = 9;
        write_file(dir / "one.bin", one);
        auto raws = load_cifar10({dir / "one.bin"});
        REQUIRE(raws.size() == 1);
        CHECK(raws[0].class_id == 9);
    }
    SUBCASE("length 3072 is a format error") {
        write_file(dir / "short.bin", std::vector<uint8_t>(3072, 0));
        CHECK_THROWS_AS(load_cifar10({dir / "short.bin"}), FormatError);
    }
    SUBCASE("label byte > 9 is a format error") {
        std::vector<uint8_t> bad(3073, 0);
        bad[0] = 10;
        write_file(dir / "bad.bin", bad);
        CHECK_THROWS_AS(load_cifar10({dir / "bad.bin"}), FormatError);
    }
}

TEST_CASE("canonicalize pads MNIST and passes CIFAR through") {
    SUBCASE("28x28 centered with 2-pixel zero border") {
        RawImage raw;
        raw.channels = 1;
        raw.height = raw.width = 28;
        raw.pixels.assign(28 * 28, 0);
        raw.pixels[0] = 50;              // (0,0)
        raw.pixels[27 * 28 + 27] = 200;  // (27,27)
        auto img = canonicalize(raw);
        REQUIRE(img.pixels.size() == 32 * 32);
        CHECK(img.pixels[2 * 32 + 2] == 50.0f);
        CHECK(img.pixels[29 * 32 + 29] == 200.0f);
        for (int x = 0; x < 32; ++x) {
            CHECK(img.pixels[x] == 0.0f);            // top border
            CHECK(img.pixels[31 * 32 + x] == 0.0f);  // bottom border
            CHECK(img.pixels[x * 32 + 0] == 0.0f);   // left
            CHECK(img.pixels[x * 32 + 31] == 0.0f);  // right
        }
    }
    SUBCASE("3x32x32 passes through unchanged") {
        RawImage raw;
        raw.channels = 3;
        raw.height = raw.width = 32;
        raw.pixels.resize(3 * 32 * 32);
        for (size_t i = 0; i < raw.pixels.size(); ++i) raw.pixels[i] = uint8_t(i % 251);
        auto img = canonicalize(raw);
        REQUIRE(img.pixels.size() == raw.pixels.size());
        for (size_t i = 0; i < raw.pixels.size(); ++i)
            CHECK(img.pixels[i] == float(raw.pixels[i]));
    }
    SUBCASE("1x27x27 is a shape error") {
        RawImage raw;
        raw.channels = 1;
        raw.height = raw.width = 27;
        raw.pixels.assign(27 * 27, 0);
        CHECK_THROWS_AS(canonicalize(raw), ShapeError);
    }
}

TEST_CASE("global contrast normalization matches scalar arithmetic oracle") {
    SUBCASE("[1,2,3] -> [-1.5, 0, 1.5]") {
        auto out = global_contrast_normalize(make_image({1, 2, 3}));
        CHECK(out.pixels[0] == doctest::Approx(-1.5).epsilon(1e-7));
        CHECK(out.pixels[1] == doctest::Approx(0.0).epsilon(1e-7));
        CHECK(out.pixels[2] == doctest::Approx(1.5).epsilon(1e-7));
    }
    SUBCASE("[0,4] -> [-1, 1]") {
        auto out = global_contrast_normalize(make_image({0, 4}));
        CHECK(out.pixels[0] == doctest::Approx(-1.0).epsilon(1e-7));
        CHECK(out.pixels[1] == doctest::Approx(1.0).epsilon(1e-7));
    }
    SUBCASE("constant image maps to all zeros") {
        auto out = global_contrast_normalize(make_image(std::vector<float>(1024, 3.25f)));
        for (float v : out.pixels) CHECK(v == 0.0f);
    }
    SUBCASE("random images: mean within 1e-6 of 0, MAD within 1e-6 of scale") {
        Rng rng(404);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<float> px(1024);
            for (auto& p : px) p = static_cast<float>(rng.next_below(256));
            const double scale = rep % 2 == 0 ? 1.0 : 2.5;
            auto out = global_contrast_normalize(make_image(px), scale);
            double mean = 0.0;
            for (float v : out.pixels) mean += v;
            mean /= 1024.0;
            double mad = 0.0;
            for (float v : out.pixels) mad += std::abs(v - mean);
            mad /= 1024.0;
            CHECK(std::abs(mean) < 1e-6);
            CHECK(std::abs(mad - scale) < 1e-6);
        }
    }
}

TEST_CASE("minmax scaling") {
    SUBCASE("[2,4,6] -> [0, 0.5, 1]") {
        auto out = minmax_scale_image(make_image({2, 4, 6}));
        CHECK(out.pixels[0] == 0.0f);
        CHECK(out.pixels[1] == 0.5f);
        CHECK(out.pixels[2] == 1.0f);
    }
    SUBCASE("constant image -> zeros") {
        auto out = minmax_scale_image(make_image({5, 5, 5, 5}));
        for (float v : out.pixels) CHECK(v == 0.0f);
    }
    SUBCASE("{0,1}-valued image spanning both is unchanged") {
        auto out = minmax_scale_image(make_image({0, 1, 1, 0, 1}));
        CHECK(out.pixels == std::vector<float>({0, 1, 1, 0, 1}));
    }
    SUBCASE("random non-constant images hit [0,1] with exact endpoints") {
        Rng rng(902);
        for (int rep = 0; rep < 30; ++rep) {
            std::vector<float> px(257);
            for (auto& p : px) p = static_cast<float>(rng.next_double() * 17.0 - 4.0);
            auto out = minmax_scale_image(make_image(px));
            float mn = 2.0f, mx = -1.0f;
            for (float v : out.pixels) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            CHECK(mn == 0.0f);
            CHECK(mx == 1.0f);
        }
    }
    SUBCASE("empty dataset is an argument error") {
        CHECK_THROWS_AS(minmax_scale(ImageDataset{}), ArgumentError);
    }
}

namespace {

// Raw image whose identity survives preprocessing: single bright pixel at a
// distinct position.
RawImage tagged_raw(int tag, int class_id) {
    RawImage r;
    r.channels = 1;
    r.height = r.width = 28;
    r.pixels.assign(28 * 28, 0);
    r.pixels[static_cast<size_t>(tag) % (28 * 28)] = 255;
    r.class_id = class_id;
    return r;
}

size_t bright_pixel_28(const Image& im) {
    size_t best = 0;
    for (size_t i = 0; i < im.pixels.size(); ++i)
        if (im.pixels[i] > im.pixels[best]) best = i;
    // undo the 2-pixel padding
    const size_t y = best / 32 - 2, x = best % 32 - 2;
    return y * 28 + x;
}

}  // namespace

TEST_CASE("one_vs_rest_split: partition, determinism, flags") {
    std::vector<RawImage> all_train, all_test;
    for (int i = 0; i < 137; ++i) all_train.push_back(tagged_raw(i, 4));       // normal
    for (int i = 0; i < 61; ++i) all_train.push_back(tagged_raw(200 + i, 7));  // other class
    for (int i = 0; i < 50; ++i) all_test.push_back(tagged_raw(400 + i, i % 10));

    SplitConfig cfg{0.9, 1234};
    auto s = one_vs_rest_split(all_train, all_test, 4, cfg);

    // round(0.9*137) = 123 train, 14 val
    CHECK(s.train.size() == 123);
    CHECK(s.val.size() == 14);
    CHECK(s.test.size() == 50);
    for (int id : s.train.class_ids) CHECK(id == 4);
    for (int id : s.val.class_ids) CHECK(id == 4);
    for (size_t i = 0; i < s.test.size(); ++i)
        CHECK(int(s.test.normal_flags[i]) == (s.test.class_ids[i] == 4 ? 1 : 0));

    // partition: union of train and val equals the normal subset exactly
    std::set<size_t> seen;
    for (const auto& im : s.train.images) seen.insert(bright_pixel_28(im));
    for (const auto& im : s.val.images) seen.insert(bright_pixel_28(im));
    REQUIRE(seen.size() == 137);
    for (int i = 0; i < 137; ++i) CHECK(seen.count(static_cast<size_t>(i) % (28 * 28)) == 1);

    // determinism: same seed -> identical splits, bitwise
    auto s2 = one_vs_rest_split(all_train, all_test, 4, cfg);
    REQUIRE(s2.train.size() == s.train.size());
    for (size_t i = 0; i < s.train.size(); ++i)
        CHECK(s2.train.images[i].pixels == s.train.images[i].pixels);
    for (size_t i = 0; i < s.val.size(); ++i)
        CHECK(s2.val.images[i].pixels == s.val.images[i].pixels);

    // different seed -> different order (with overwhelming probability)
    auto s3 = one_vs_rest_split(all_train, all_test, 4, SplitConfig{0.9, 999});
    bool any_diff = false;
    for (size_t i = 0; i < s.train.size() && !any_diff; ++i)
        any_diff = s3.train.images[i].pixels != s.train.images[i].pixels;
    CHECK(any_diff);
}

TEST_CASE("one_vs_rest_split: 10 normal images at fraction 0.9 -> 9 train, 1 val") {
    std::vector<RawImage> all_train, all_test;
    for (int i = 0; i < 10; ++i) all_train.push_back(tagged_raw(i, 0));
    all_test.push_back(tagged_raw(50, 0));
    auto s = one_vs_rest_split(all_train, all_test, 0, SplitConfig{0.9, 7});
    CHECK(s.train.size() == 9);
    CHECK(s.val.size() == 1);
}

TEST_CASE("one_vs_rest_split: absent class is an argument error") {
    std::vector<RawImage> all_train{tagged_raw(0, 1)}, all_test{tagged_raw(1, 1)};
    CHECK_THROWS_AS(one_vs_rest_split(all_train, all_test, 3, SplitConfig{}), ArgumentError);
}

TEST_CASE("split output is fully preprocessed: values in [0,1]") {
    std::vector<RawImage> all_train, all_test;
    Rng rng(66);
    for (int i = 0; i < 12; ++i) {
        auto r = tagged_raw(i, 2);
        for (auto& p : r.pixels) p = static_cast<uint8_t>(rng.next_below(256));
        all_train.push_back(r);
    }
    all_test.push_back(all_train[0]);
    auto s = one_vs_rest_split(all_train, all_test, 2, SplitConfig{0.9, 3});
    for (const auto& im : s.train.images)
        for (float v : im.pixels) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
}

TEST_CASE("dataset cache round-trips bit-exactly") {
    auto dir = temp_dir();
    ImageDataset ds;
    Rng rng(19);
    for (int i = 0; i < 17; ++i) {
        Image im;
        im.channels = 3;
        im.pixels.resize(3 * 32 * 32);
        for (auto& p : im.pixels) p = static_cast<float>(rng.next_double());
        ds.images.push_back(std::move(im));
        ds.class_ids.push_back(i % 10);
        ds.normal_flags.push_back(i % 2);
    }
    save_dataset(ds, dir / "cache.ddrds");
    auto back = load_dataset(dir / "cache.ddrds");
    REQUIRE(back.size() == ds.size());
    CHECK(back.class_ids == ds.class_ids);
    CHECK(back.normal_flags == ds.normal_flags);
    for (size_t i = 0; i < ds.size(); ++i) CHECK(back.images[i].pixels == ds.images[i].pixels);

    SUBCASE("corrupt magic is a format error") {
        std::ofstream out(dir / "junk.ddrds", std::ios::binary);
        out << "NOTADATASETXXXXXXXXXXXXXXXXXXX";
        out.close();
        CHECK_THROWS_AS(load_dataset(dir / "junk.ddrds"), FormatError);
    }
}
