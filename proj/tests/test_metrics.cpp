#include "lsplat/metrics.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "lsplat/rng.hpp"

using namespace lsplat;

namespace {

Image<double> random_image(int w, int h, int c, std::uint64_t seed) {
    Image<double> img(w, h, c);
    Rng rng(seed);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
    auto a = random_image(16, 16, 3, 1);
    EXPECT_DOUBLE_EQ(psnr(a, a), 60.0);
}

TEST(Psnr, ConstantOffsetGivesTwenty) {
    auto a = random_image(16, 16, 3, 2);
    for (auto& v : a.data) v *= 0.5;  // keep headroom for the +0.1 shift
    auto b = a;
    for (auto& v : b.data) v += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, ShapeMismatchThrows) {
    auto a = random_image(8, 8, 3, 3);
    auto b = random_image(8, 9, 3, 3);
    EXPECT_THROW(psnr(a, b), std::invalid_argument);
}

TEST(Ssim, IdenticalImagesGiveOne) {
    auto a = random_image(24, 24, 3, 4);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, SymmetricAndBoundedOnRandomPairs) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto a = random_image(20, 20, 3, seed * 2 + 10);
        auto b = random_image(20, 20, 3, seed * 2 + 11);
        const double s_ab = ssim(a, b), s_ba = ssim(b, a);
        EXPECT_NEAR(s_ab, s_ba, 1e-12);
        EXPECT_LE(s_ab, 1.0);
        EXPECT_GE(s_ab, -1.0);
    }
}

TEST(Ssim, DegradedImageScoresLower) {
    auto a = random_image(24, 24, 3, 20);
    auto noisy = a;
    Rng rng(21);
    for (auto& v : noisy.data) v = std::min(1.0, std::max(0.0, v + rng.normal(0, 0.2)));
    EXPECT_LT(ssim(a, noisy), ssim(a, a));
}

TEST(ImageIo, LsimgRoundTripIsExactForFloats) {
    Image<float> img(7, 5, 3);
    Rng rng(31);
    for (auto& v : img.data) v = static_cast<float>(rng.normal());
    const std::string path = std::filesystem::temp_directory_path() / "lsplat_io_test.bin";
    write_lsimg(path, img);
    auto back = read_lsimg<float>(path);
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    ASSERT_EQ(back.channels, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(back.data[i], img.data[i]);
    std::remove(path.c_str());
}

TEST(ImageIo, LsimgRejectsBadMagic) {
    const std::string path = std::filesystem::temp_directory_path() / "lsplat_io_bad.bin";
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("NOTMAGI", 1, 7, f);
    std::fclose(f);
    EXPECT_THROW(read_lsimg<float>(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST(ImageIo, PngRoundTripWithinQuantization) {
    auto img = random_image(12, 9, 3, 40);
    const std::string path = std::filesystem::temp_directory_path() / "lsplat_io_test.png";
    write_png(path, img);
    auto back = read_png<double>(path);
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-9);
}
