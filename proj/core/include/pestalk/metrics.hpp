#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pestalk/audio.hpp"
#include "pestalk/blendshape.hpp"
#include "pestalk/mat.hpp"

namespace pestalk::metrics {

struct RegionConfig {
  std::vector<int> lip_channels;            // blendshape indices
  std::vector<int> pronunciation_channels;  // mouth + jaw
  std::vector<int> lip_vertices;
  std::vector<int> eye_forehead_vertices;
  std::vector<int> upper_face_vertices;
  double ba_sigma = 0.1;  // seconds

  // lip = the 23 mouth* channels; pronunciation = mouth* + jaw*; vertex masks
  // empty (supplied by the evaluation mesh or a regions file).
  static RegionConfig defaults();
  static RegionConfig from_json_file(const std::string& path);
};

struct BlendshapeMetrics {
  double lbe = 0.0;  // mean over frames of |lip-channel error|_2
  double pbe = 0.0;  // same over pronunciation channels
  double mbe = 0.0;  // mean over frames of max abs channel error
};

BlendshapeMetrics blendshape_metrics(const bs::BlendshapeSequence& pred,
                                     const bs::BlendshapeSequence& gt,
                                     const RegionConfig& regions);

// Audio beats: local maxima of the mel spectral-flux onset envelope.
// Motion beats: local minima of the lip-channel velocity magnitude.
// BA = mean over audio beats of exp(-min_j (t_a - t_m)^2 / (2 sigma^2)).
// No audio beats -> nullopt.
std::optional<double> beat_alignment(const signal::AudioClip& clip,
                                     const bs::BlendshapeSequence& motion,
                                     const RegionConfig& regions);

// exposed for tests and the CLI: beat times in seconds
std::vector<double> audio_beat_times(const signal::AudioClip& clip);
std::vector<double> motion_beat_times(const bs::BlendshapeSequence& motion,
                                      const std::vector<int>& lip_channels,
                                      int frame_rate = 30);

struct VertexMetrics {
  double lve = 0.0;  // mean over frames of max lip-vertex L2 error
  double eve = 0.0;  // same over the eye/forehead set
  double fdd = 0.0;  // mean over upper-face vertices of std(pred) - std(gt)
  double fdd_abs = 0.0;
};

VertexMetrics vertex_metrics(const std::vector<Mat>& pred_vertices,
                             const std::vector<Mat>& gt_vertices,
                             const RegionConfig& regions);

struct ClipReport {
  std::string clip_id;
  BlendshapeMetrics blendshape;
  std::optional<double> ba;
  std::optional<VertexMetrics> vertex;
};

// report.json: per-clip records plus corpus means; report.csv: one row per
// clip and a final mean row.
void write_reports(const std::vector<ClipReport>& clips,
                   const std::string& json_path, const std::string& csv_path);

}  // namespace pestalk::metrics
