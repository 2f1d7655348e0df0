#pragma once

#include <string>
#include <vector>

#include "pestalk/errors.hpp"

namespace pestalk::signal {

// Mono PCM waveform partitioned into 30 fps visual frames. Each frame owns
// D = round(sample_rate / frame_rate) samples; the last frame is implicitly
// zero-padded so T matches the blendshape label length.
struct AudioClip {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate = 16000;
  int frame_rate = 30;

  int samples_per_frame() const {
    return static_cast<int>(static_cast<double>(sample_rate) / frame_rate + 0.5);
  }
  // frame count; ceil(len / D)
  int frame_count() const {
    const int d = samples_per_frame();
    return static_cast<int>((samples.size() + d - 1) / d);
  }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // samples of frame t, zero-padded to D
  std::vector<double> frame(int t) const;
};

// 16-bit PCM mono WAV
AudioClip load_wav(const std::string& path);
void save_wav(const AudioClip& clip, const std::string& path);

// Band-limited (windowed-sinc) resampling. Equal rates return the input
// unchanged. Duration is preserved within one sample period.
AudioClip resample_audio(const AudioClip& clip, int target_rate);

}  // namespace pestalk::signal
