#include "pestalk/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace pestalk::signal {

std::vector<double> AudioClip::frame(int t) const {
  const int d = samples_per_frame();
  std::vector<double> out(d, 0.0);
  const std::size_t begin = static_cast<std::size_t>(t) * d;
  for (int i = 0; i < d; ++i) {
    const std::size_t idx = begin + i;
    if (idx < samples.size()) out[i] = samples[idx];
  }
  return out;
}

namespace {

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError(path + ": not a RIFF file");
  read_le<std::uint32_t>(in);  // riff size
  in.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError(path + ": not a WAVE file");

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  std::vector<double> samples;
  bool got_fmt = false, got_data = false;

  while (in.read(tag, 4)) {
    const auto size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const auto fmt = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      sample_rate = static_cast<int>(read_le<std::uint32_t>(in));
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      if (fmt != 1) throw FormatError(path + ": only PCM supported");
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw FormatError(path + ": data chunk before fmt");
      if (bits != 16) throw FormatError(path + ": only 16-bit PCM supported");
      if (channels != 1) throw FormatError(path + ": only mono supported");
      const std::size_t n = size / 2;
      samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        samples[i] = static_cast<double>(read_le<std::int16_t>(in)) / 32768.0;
      }
      got_data = true;
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!got_data) throw FormatError(path + ": missing data chunk");

  AudioClip clip;
  clip.samples = std::move(samples);
  clip.sample_rate = sample_rate;
  return clip;
}

void save_wav(const AudioClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");

  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 1);  // PCM
  write_le<std::uint16_t>(out, 1);  // mono
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_size);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  if (!out) throw IoError("short write to " + path);
}

AudioClip resample_audio(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw BadDims("target_rate must be positive");
  if (clip.samples.empty()) throw EmptyInput("cannot resample an empty waveform");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const std::size_t out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) * ratio));

  // Blackman-windowed sinc. When downsampling the kernel is widened by 1/ratio
  // so the cutoff sits at the target Nyquist.
  const double cutoff = 0.5 * std::min(1.0, ratio);  // cycles per source sample
  const int half_taps = 48;
  const double half_width = half_taps / (2.0 * cutoff);

  AudioClip out;
  out.sample_rate = target_rate;
  out.frame_rate = clip.frame_rate;
  out.samples.resize(out_len);

  const auto& x = clip.samples;
  const auto n = static_cast<long long>(x.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const long long k0 = std::max(0LL, static_cast<long long>(std::ceil(center - half_width)));
    const long long k1 = std::min(n - 1, static_cast<long long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long long k = k0; k <= k1; ++k) {
      const double t = center - static_cast<double>(k);
      const double a = 2.0 * cutoff * t;
      const double sinc = (std::abs(a) < 1e-12)
                              ? 1.0
                              : std::sin(M_PI * a) / (M_PI * a);
      const double w_arg = 0.5 * (t / half_width + 1.0);  // in [0,1]
      const double window = 0.42 - 0.5 * std::cos(2.0 * M_PI * w_arg) +
                            0.08 * std::cos(4.0 * M_PI * w_arg);
      acc += x[static_cast<std::size_t>(k)] * 2.0 * cutoff * sinc * window;
    }
    out.samples[i] = acc;
  }
  return out;
}

}  // namespace pestalk::signal
