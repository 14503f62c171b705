#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmattack {

/// Image geometry: height x width x channels, stored row-major as (h, w, c).
struct Shape {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(height) * width * channels;
    }
    std::size_t index(std::uint32_t h, std::uint32_t w, std::uint32_t c) const noexcept {
        return (static_cast<std::size_t>(h) * width + w) * channels + c;
    }
    bool degenerate() const noexcept { return height == 0 || width == 0 || channels == 0; }

    bool operator==(const Shape&) const = default;
};

/// H x W x C array of reals. Used for pixel data in [0, 255] and for perturbations.
class ImageTensor {
public:
    ImageTensor() = default;
    explicit ImageTensor(Shape shape, double fill = 0.0) : shape_(shape), values_(shape.size(), fill) {}
    ImageTensor(Shape shape, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(std::uint32_t h, std::uint32_t w, std::uint32_t c) { return values_[shape_.index(h, w, c)]; }
    double at(std::uint32_t h, std::uint32_t w, std::uint32_t c) const { return values_[shape_.index(h, w, c)]; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const std::vector<double>& raw() const noexcept { return values_; }

    bool operator==(const ImageTensor&) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

/// Clamp every pixel to the valid intensity range [0, 255].
void clamp_pixels(ImageTensor& img);

/// clamp(img + perturbation, 0, 255)
ImageTensor add_clamped(const ImageTensor& img, std::span<const double> perturbation);

}  // namespace mmattack
