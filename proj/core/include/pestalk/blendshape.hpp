#pragma once

#include <array>
#include <string>
#include <vector>

#include "pestalk/mat.hpp"

namespace pestalk::bs {

inline constexpr int kNumChannels = 52;
inline constexpr int kNumLower = 32;
inline constexpr int kNumUpper = 20;

// The standard ARKit channel order.
const std::array<std::string, kNumChannels>& channel_names();

int channel_index(const std::string& name);  // -1 if unknown

// Disjoint lower/upper channel index sets covering all 52 channels.
struct Partition {
  std::vector<int> lower;  // 32 channels driven by content
  std::vector<int> upper;  // 20 channels driven by emotion

  void validate() const;  // throws BadPartition
};

// Default split: upper = 5 brow + 14 eye + cheekPuff; lower = everything else
// (2 cheekSquint + 2 noseSneer + 4 jaw + 23 mouth + tongueOut).
Partition default_partition();

struct BlendshapeSequence {
  Mat coeffs;  // T x 52, clamped to [0,1]

  int frames() const { return static_cast<int>(coeffs.rows()); }
};

// Comma-separated text with a header row of the 52 channel names.
BlendshapeSequence read_blendshape_csv(const std::string& path);
void write_blendshape_csv(const BlendshapeSequence& seq, const std::string& path);

// Channel subsets of the default name list, used by metrics defaults.
std::vector<int> mouth_channels();          // 23 mouth*
std::vector<int> jaw_channels();            // 4 jaw*

}  // namespace pestalk::bs
