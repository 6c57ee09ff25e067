#pragma once

#include "tae/image.hpp"
#include "tae/rng.hpp"

namespace tae {

/// Synthesizes a textured scene (gradient background, value-noise texture,
/// overlapping filled shapes, sensor noise). Stands in for a photo corpus
/// when none is available; every pixel is a function of the rng state.
Image procedural_image(Rng& rng, int width, int height);

}  // namespace tae
