#pragma once

#include <map>
#include <string>
#include <vector>

#include "pestalk/mat.hpp"

namespace pestalk::esmm {

inline constexpr int kBaseDim = 512;     // per-speaker voiceprint mean R
inline constexpr int kEmotionDim = 256;  // pooled emotion feature
inline constexpr int kStyleDim = 768;    // entry P = [R || mean E]

struct StyleKey {
  std::string speaker;
  int emotion = 0;
  auto operator<=>(const StyleKey&) const = default;
};

struct StyleEntry {
  Vec P;            // 768; first 512 components equal the speaker's R exactly
  long count = 0;   // running sample count
};

// Voiceprint mean per speaker, R_i = (1/N) sum_j V_ij.
std::map<std::string, Vec> build_base_styles(
    const std::map<std::string, std::vector<Vec>>& clips_by_speaker);

// D_cos(u, v) = 1 - u.v / (|u||v|), in [0, 2].
double cosine_distance(const Vec& u, const Vec& v);

// Two-dimensional speaker x emotion table of personalized styles. Entries
// hold the speaker base style concatenated with the running mean of pooled
// emotion features; incremental adds are exactly equivalent to batch builds.
class StyleLibrary {
public:
  int version = 1;
  std::vector<std::string> emotion_names;

  void set_base_style(const std::string& speaker, Vec r);
  const Vec* base_style(const std::string& speaker) const;

  // running-mean update of the emotion half of (speaker, emotion)
  void add_sample(const std::string& speaker, int emotion, const Vec& pooled_e);

  const std::map<StyleKey, StyleEntry>& entries() const { return entries_; }
  const std::map<std::string, Vec>& base_styles() const { return base_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  // Exhaustive cosine-distance argmin over all entries in the canonical
  // R-first layout; ties resolve to the lowest (speaker, emotion) key.
  const std::pair<const StyleKey, StyleEntry>& retrieve(const Vec& query768) const;

  void clear_entries() { entries_.clear(); }
  void set_entry_count(const StyleKey& key, long count) { entries_.at(key).count = count; }

private:
  std::map<std::string, Vec> base_;
  std::map<StyleKey, StyleEntry> entries_;
};

// Batch construction from clip-level pooled emotion features.
struct ClipFeature {
  std::string speaker;
  int emotion = 0;
  Vec pooled_e;  // 256
};
StyleLibrary build_style_library(const std::vector<ClipFeature>& features,
                                 const std::map<std::string, Vec>& base,
                                 std::vector<std::string> emotion_names);

struct StyleVector {
  Vec S;          // 768, a library entry
  Vec projected;  // d_s after the learned linear projection (empty if none)
  StyleKey key;
  double distance = 0.0;
};

// Retrieval: the query arrives as (E_pooled, R) and is compared in the
// canonical [R || E] layout. proj_w (768 x d_s) / proj_b (d_s) are optional.
StyleVector retrieve_style(const Vec& e_pooled, const Vec& r,
                           const StyleLibrary& library,
                           const Mat* proj_w = nullptr, const Vec* proj_b = nullptr);

// JSON persistence with full round-trip float precision.
void persist_library(const StyleLibrary& library, const std::string& path);
StyleLibrary load_library(const std::string& path);

}  // namespace pestalk::esmm
