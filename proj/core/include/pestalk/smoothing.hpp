#pragma once

#include "pestalk/mat.hpp"

namespace pestalk::signal {

// Linear time interpolation of an F x d feature matrix onto T rows.
// Endpoints are preserved exactly; F = 1 broadcasts the single row.
Mat align_frames(const Mat& features, int T);

// Per-column Savitzky-Golay filter with mirror-padded edges.
// Reproduces polynomials of degree <= order exactly on interior frames.
Mat savgol_smooth(const Mat& track, int window = 5, int order = 2);

// The symmetric smoothing coefficients, exposed for the per-window
// least-squares oracle in tests.
Vec savgol_coefficients(int window, int order);

}  // namespace pestalk::signal
