#include "pestalk/blendshape.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "pestalk/errors.hpp"

namespace pestalk::bs {

const std::array<std::string, kNumChannels>& channel_names() {
  static const std::array<std::string, kNumChannels> names = {
      "eyeBlinkLeft",       "eyeLookDownLeft",   "eyeLookInLeft",
      "eyeLookOutLeft",     "eyeLookUpLeft",     "eyeSquintLeft",
      "eyeWideLeft",        "eyeBlinkRight",     "eyeLookDownRight",
      "eyeLookInRight",     "eyeLookOutRight",   "eyeLookUpRight",
      "eyeSquintRight",     "eyeWideRight",      "jawForward",
      "jawLeft",            "jawRight",          "jawOpen",
      "mouthClose",         "mouthFunnel",       "mouthPucker",
      "mouthLeft",          "mouthRight",        "mouthSmileLeft",
      "mouthSmileRight",    "mouthFrownLeft",    "mouthFrownRight",
      "mouthDimpleLeft",    "mouthDimpleRight",  "mouthStretchLeft",
      "mouthStretchRight",  "mouthRollLower",    "mouthRollUpper",
      "mouthShrugLower",    "mouthShrugUpper",   "mouthPressLeft",
      "mouthPressRight",    "mouthLowerDownLeft","mouthLowerDownRight",
      "mouthUpperUpLeft",   "mouthUpperUpRight", "browDownLeft",
      "browDownRight",      "browInnerUp",       "browOuterUpLeft",
      "browOuterUpRight",   "cheekPuff",         "cheekSquintLeft",
      "cheekSquintRight",   "noseSneerLeft",     "noseSneerRight",
      "tongueOut"};
  return names;
}

int channel_index(const std::string& name) {
  static const auto lut = [] {
    std::unordered_map<std::string, int> m;
    const auto& names = channel_names();
    for (int i = 0; i < kNumChannels; ++i) m[names[i]] = i;
    return m;
  }();
  const auto it = lut.find(name);
  return it == lut.end() ? -1 : it->second;
}

void Partition::validate() const {
  if (lower.size() != kNumLower || upper.size() != kNumUpper) {
    throw BadPartition("expected 32 lower + 20 upper channels");
  }
  std::vector<bool> seen(kNumChannels, false);
  for (const auto* set : {&lower, &upper}) {
    for (int c : *set) {
      if (c < 0 || c >= kNumChannels) throw BadPartition("channel index out of range");
      if (seen[c]) throw BadPartition("overlapping partition at channel " + std::to_string(c));
      seen[c] = true;
    }
  }
}

Partition default_partition() {
  Partition p;
  const auto& names = channel_names();
  for (int i = 0; i < kNumChannels; ++i) {
    const auto& n = names[i];
    const bool upper = n.rfind("brow", 0) == 0 || n.rfind("eye", 0) == 0 || n == "cheekPuff";
    (upper ? p.upper : p.lower).push_back(i);
  }
  p.validate();
  return p;
}

BlendshapeSequence read_blendshape_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  {
    std::stringstream header(line);
    std::string name;
    int col = 0;
    while (std::getline(header, name, ',')) {
      if (col >= kNumChannels || name != channel_names()[col]) {
        throw FormatError(path + ": bad header at column " + std::to_string(col));
      }
      ++col;
    }
    if (col != kNumChannels) throw FormatError(path + ": expected 52 columns");
  }

  std::vector<std::array<double, kNumChannels>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::array<double, kNumChannels> row{};
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= kNumChannels) throw FormatError(path + ": too many columns");
      row[col++] = std::stod(cell);
    }
    if (col != kNumChannels) throw FormatError(path + ": short row");
    rows.push_back(row);
  }

  BlendshapeSequence seq;
  seq.coeffs.resize(static_cast<int>(rows.size()), kNumChannels);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < kNumChannels; ++c) seq.coeffs(static_cast<int>(r), c) = rows[r][c];
  }
  return seq;
}

void write_blendshape_csv(const BlendshapeSequence& seq, const std::string& path) {
  if (seq.coeffs.cols() != kNumChannels) throw BadDims("sequence must have 52 channels");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");

  const auto& names = channel_names();
  for (int c = 0; c < kNumChannels; ++c) {
    out << names[c] << (c + 1 < kNumChannels ? "," : "\n");
  }
  char buf[32];
  for (int t = 0; t < seq.frames(); ++t) {
    for (int c = 0; c < kNumChannels; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", seq.coeffs(t, c));
      out << buf << (c + 1 < kNumChannels ? "," : "\n");
    }
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<int> mouth_channels() {
  std::vector<int> out;
  const auto& names = channel_names();
  for (int i = 0; i < kNumChannels; ++i) {
    if (names[i].rfind("mouth", 0) == 0) out.push_back(i);
  }
  return out;
}

std::vector<int> jaw_channels() {
  std::vector<int> out;
  const auto& names = channel_names();
  for (int i = 0; i < kNumChannels; ++i) {
    if (names[i].rfind("jaw", 0) == 0) out.push_back(i);
  }
  return out;
}

}  // namespace pestalk::bs
