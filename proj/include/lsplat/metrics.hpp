#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lsplat/image_io.hpp"

namespace lsplat {

inline constexpr double kPsnrCap = 60.0;

// PSNR on [0,1] images: -10*log10(MSE), capped at 60 (identical images).
template <typename R>
double psnr(const Image<R>& a, const Image<R>& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("psnr: image shapes differ");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace detail {

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        // 11x11 Gaussian, sigma 1.5, normalized.
        std::vector<double> win(121);
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            for (int j = 0; j < 11; ++j) {
                const double dy = i - 5, dx = j - 5;
                win[i * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
                sum += win[i * 11 + j];
            }
        }
        for (auto& v : win) v /= sum;
        return win;
    }();
    return w;
}

}  // namespace detail

// Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5) and constants
// C1=(0.01)^2, C2=(0.03)^2 on the [0,1] range, averaged over channels and all
// window positions that fit entirely inside the image.
template <typename R>
double ssim(const Image<R>& a, const Image<R>& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("ssim: image shapes differ");
    if (a.width < 11 || a.height < 11)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto& win = detail::ssim_window();
    double total = 0;
    long count = 0;
    for (int ch = 0; ch < a.channels; ++ch) {
        for (int y = 0; y + 11 <= a.height; ++y) {
            for (int x = 0; x + 11 <= a.width; ++x) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        const double w = win[i * 11 + j];
                        const double va = a.at(y + i, x + j, ch);
                        const double vb = b.at(y + i, x + j, ch);
                        mu_a += w * va;
                        mu_b += w * vb;
                        aa += w * va * va;
                        bb += w * vb * vb;
                        ab += w * va * vb;
                    }
                }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                const double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += s;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace lsplat
