#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pestalk/audio.hpp"
#include "pestalk/blendshape.hpp"

namespace pestalk::synthdata {

// Procedural stand-in corpus. Audio carries three separable factors:
// speaker (fundamental + formant shift + style seed), emotion (spectral tilt
// + amplitude-modulation rate), content (token-driven gestures). Ground-truth
// blendshapes articulate the same tokens on lower-face channels and the
// (emotion, speaker-style) pair on upper-face channels.
struct CorpusSpec {
  int speakers = 2;            // K
  int emotions = 8;            // C; first C-1 of the non-neutral list + neutral
  int clips_per_emotion = 2;   // X
  int content_vocab = 16;
  int min_frames = 18;         // clip length range at 30 fps
  int max_frames = 90;
  std::uint64_t seed = 1;
  bool style_offsets = true;   // per-speaker upper-face offsets/asymmetries
  int sample_rate = 16000;
  int frame_rate = 30;
};

// C emotion categories in the fixed corpus order; neutral is always last.
std::vector<std::string> emotion_names(int emotions);

struct ManifestRecord {
  std::string clip_id;
  std::string speaker_id;
  int emotion_id = 0;
  std::vector<int> content_token_ids;
  std::string wav_path;         // relative to the manifest directory
  std::string blendshape_path;  // relative to the manifest directory
  int frames = 0;               // T
};

struct Manifest {
  std::string root_dir;
  std::vector<std::string> emotion_names;
  CorpusSpec spec;  // generator constants, echoed for reproducibility
  std::vector<ManifestRecord> records;

  int neutral_id() const { return static_cast<int>(emotion_names.size()) - 1; }
  std::string wav_file(const ManifestRecord& r) const;
  std::string blendshape_file(const ManifestRecord& r) const;
};

// Writes wav/, bs/ and manifest.jsonl under out_dir. Deterministic given the
// seed: rerunning produces byte-identical files.
Manifest generate_corpus(const CorpusSpec& spec, const std::string& out_dir);

Manifest load_manifest(const std::string& path);

// Content-matched neutral/emotional clip pairs (indices into records).
struct PairRecord {
  int neutral = 0;
  int emotional = 0;
};
struct PairSet {
  std::vector<PairRecord> pairs;
  int warnings = 0;  // non-neutral clips with no content-matched partner
};
PairSet iterate_pairs(const Manifest& manifest);

// max |savgol(track) - track| bound guaranteed by generation
inline constexpr double kSmoothnessResidualBound = 0.12;

}  // namespace pestalk::synthdata
