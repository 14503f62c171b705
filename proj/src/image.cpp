#include "mmattack/image.hpp"

#include <algorithm>
#include <string>

#include "mmattack/errors.hpp"

namespace mmattack {

ImageTensor::ImageTensor(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw InvalidArgument("ImageTensor: " + std::to_string(values_.size()) +
                              " values for shape of size " + std::to_string(shape_.size()));
    }
}

void clamp_pixels(ImageTensor& img) {
    for (auto& v : img.values()) v = std::clamp(v, 0.0, 255.0);
}

ImageTensor add_clamped(const ImageTensor& img, std::span<const double> perturbation) {
    if (perturbation.size() != img.size()) throw InvalidArgument("add_clamped: shape mismatch");
    ImageTensor out = img;
    auto values = out.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::clamp(values[i] + perturbation[i], 0.0, 255.0);
    }
    return out;
}

}  // namespace mmattack
