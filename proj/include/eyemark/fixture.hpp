#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eyemark {

// Procedurally drawn faces with exactly known eye geometry: an elliptical
// head, two elliptical eyes with pupils, and a standard 68-point annotation
// whose slots 37-48 (1-based) carry the 12 exact contour points. Each
// sample gets an image, a pts file, and a face-box sidecar, so a generated
// directory feeds the ingestion pipeline like a miniature labeled corpus.
// Returns the generated stems in order.
std::vector<std::string> generate_fixture(const std::string& dir, int count, int image_size,
                                          uint64_t seed);

}  // namespace eyemark
