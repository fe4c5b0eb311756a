#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcl/tensor.hpp"

namespace lcl {

// RGB raster with unit-interval values, interleaved row-major (h, w, c).
struct ImageF {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * 3

    ImageF() = default;
    ImageF(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    void clamp01();

    // [3,H,W] tensor for model input.
    Tensor to_chw() const;
    static ImageF from_chw(const Tensor& t);
};

// Boundary conversion: float = byte/255, byte = round(clamp(float)*255).
std::vector<std::uint8_t> to_bytes(const ImageF& img);
ImageF from_bytes(const std::uint8_t* rgb, int height, int width);

// 8-bit RGB PNG and binary PPM (P6); format chosen by file extension.
void write_image(const std::string& path, const ImageF& img);
ImageF read_image(const std::string& path);

void write_png(const std::string& path, const ImageF& img);
ImageF read_png(const std::string& path);
void write_ppm(const std::string& path, const ImageF& img);
ImageF read_ppm(const std::string& path);

}  // namespace lcl
