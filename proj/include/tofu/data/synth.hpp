#pragma once

#include "tofu/data/dataset.hpp"

namespace tofu::data {

// Class-conditional unit-variance Gaussians in `dim` dimensions with class c
// centered at separation * e_c (the vertices of a scaled simplex). Samples
// cycle through the classes; ids are 0..N-1. Requires dim >= num_classes.
LabeledDataset synth_gaussian(std::size_t num_classes, std::size_t per_class, std::size_t dim, Real separation,
                              std::uint64_t seed);

// Images (C, H, W) in (0, 1) with spatially smooth class prototypes: each
// class draws a 3x3 grid per channel from N(0, separation^2), bilinearly
// upsampled to H x W. A sample is its prototype plus N(0, 1) pixel noise,
// passed through the logistic function. Small shifts and blurs keep the
// class recognizable. Samples cycle through the classes; ids are 0..N-1.
LabeledDataset synth_images(std::size_t num_classes, std::size_t per_class, const Shape& image_shape, Real separation,
                            std::uint64_t seed);

// Maps every feature through the logistic function into (0, 1) and views
// each sample as a (C, H, W) image so image transforms apply.
LabeledDataset squash_to_images(const LabeledDataset& ds, const Shape& image_shape);

}  // namespace tofu::data
