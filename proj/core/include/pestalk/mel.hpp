#pragma once

#include <vector>

#include "pestalk/audio.hpp"
#include "pestalk/mat.hpp"

namespace pestalk::signal {

struct MelSpectrogram {
  Mat frames;   // F x n_mels, log(1 + energy)
  int hop = 160;
  int n_mels = 80;
  int window = 400;
  int sample_rate = 16000;
};

// Triangular filter center frequencies in Hz (n_mels values, excluding the
// 0 Hz and Nyquist edge points). Exposed so tests can place probe tones.
std::vector<double> mel_band_centers_hz(int n_mels, int sample_rate);

// Log-compressed mel filter-bank energies. Frames start at multiples of hop
// and are zero-padded past the signal end, so F = ceil(len / hop).
// Filters are triangular with unit peak, covering 0 .. sample_rate/2.
MelSpectrogram mel_spectrogram(const AudioClip& clip, int n_mels = 80,
                               int window = 400, int hop = 160);

}  // namespace pestalk::signal
