#include "pestalk/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pestalk/errors.hpp"
#include "pestalk/mel.hpp"

namespace pestalk::metrics {

using nlohmann::json;

RegionConfig RegionConfig::defaults() {
  RegionConfig r;
  r.lip_channels = bs::mouth_channels();
  r.pronunciation_channels = bs::mouth_channels();
  const auto jaw = bs::jaw_channels();
  r.pronunciation_channels.insert(r.pronunciation_channels.end(), jaw.begin(), jaw.end());
  return r;
}

RegionConfig RegionConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": parse error at byte " + std::to_string(e.byte));
  }
  RegionConfig r = defaults();
  auto names_to_channels = [&](const json& arr) {
    std::vector<int> out;
    for (const auto& v : arr) {
      if (v.is_string()) {
        const int idx = bs::channel_index(v.get<std::string>());
        if (idx < 0) throw FormatError(path + ": unknown channel " + v.get<std::string>());
        out.push_back(idx);
      } else {
        out.push_back(v.get<int>());
      }
    }
    return out;
  };
  if (j.contains("lip_channels")) r.lip_channels = names_to_channels(j["lip_channels"]);
  if (j.contains("pronunciation_channels")) {
    r.pronunciation_channels = names_to_channels(j["pronunciation_channels"]);
  }
  if (j.contains("lip_vertices")) r.lip_vertices = j["lip_vertices"].get<std::vector<int>>();
  if (j.contains("eye_forehead_vertices")) {
    r.eye_forehead_vertices = j["eye_forehead_vertices"].get<std::vector<int>>();
  }
  if (j.contains("upper_face_vertices")) {
    r.upper_face_vertices = j["upper_face_vertices"].get<std::vector<int>>();
  }
  r.ba_sigma = j.value("ba_sigma", r.ba_sigma);
  return r;
}

namespace {

void check_channels(const std::vector<int>& idx, int limit, const char* what) {
  if (idx.empty()) throw BadMask(std::string(what) + " region is empty");
  for (int c : idx) {
    if (c < 0 || c >= limit) throw BadMask(std::string(what) + " index out of range");
  }
}

}  // namespace

BlendshapeMetrics blendshape_metrics(const bs::BlendshapeSequence& pred,
                                     const bs::BlendshapeSequence& gt,
                                     const RegionConfig& regions) {
  if (pred.coeffs.rows() != gt.coeffs.rows() || pred.coeffs.cols() != gt.coeffs.cols()) {
    throw BadDims("prediction and ground truth shapes differ");
  }
  check_channels(regions.lip_channels, static_cast<int>(pred.coeffs.cols()), "lip");
  check_channels(regions.pronunciation_channels, static_cast<int>(pred.coeffs.cols()),
                 "pronunciation");

  const Mat err = pred.coeffs - gt.coeffs;
  const int T = static_cast<int>(err.rows());
  BlendshapeMetrics out;
  for (int t = 0; t < T; ++t) {
    double lip2 = 0.0, pron2 = 0.0;
    for (int c : regions.lip_channels) lip2 += err(t, c) * err(t, c);
    for (int c : regions.pronunciation_channels) pron2 += err(t, c) * err(t, c);
    out.lbe += std::sqrt(lip2);
    out.pbe += std::sqrt(pron2);
    out.mbe += err.row(t).cwiseAbs().maxCoeff();
  }
  out.lbe /= T;
  out.pbe /= T;
  out.mbe /= T;
  return out;
}

std::vector<double> audio_beat_times(const signal::AudioClip& clip) {
  const auto mel = signal::mel_spectrogram(clip);
  const int F = static_cast<int>(mel.frames.rows());
  Vec onset = Vec::Zero(F);
  for (int f = 1; f < F; ++f) {
    onset(f) = (mel.frames.row(f) - mel.frames.row(f - 1)).cwiseMax(0.0).sum();
  }
  const double threshold = 0.1 * onset.maxCoeff();
  std::vector<double> beats;
  if (threshold <= 0.0) return beats;
  for (int f = 1; f + 1 < F; ++f) {
    if (onset(f) > onset(f - 1) && onset(f) >= onset(f + 1) && onset(f) > threshold) {
      beats.push_back(static_cast<double>(f) * mel.hop / clip.sample_rate);
    }
  }
  return beats;
}

std::vector<double> motion_beat_times(const bs::BlendshapeSequence& motion,
                                      const std::vector<int>& lip_channels,
                                      int frame_rate) {
  const int T = motion.frames();
  std::vector<double> beats;
  if (T < 3) return beats;
  Vec vel = Vec::Zero(T);
  auto lip_row = [&](int t) {
    Vec v(static_cast<int>(lip_channels.size()));
    for (std::size_t c = 0; c < lip_channels.size(); ++c) {
      v(static_cast<int>(c)) = motion.coeffs(t, lip_channels[c]);
    }
    return v;
  };
  for (int t = 1; t + 1 < T; ++t) {
    vel(t) = 0.5 * (lip_row(t + 1) - lip_row(t - 1)).norm();
  }
  vel(0) = (lip_row(1) - lip_row(0)).norm();
  vel(T - 1) = (lip_row(T - 1) - lip_row(T - 2)).norm();
  for (int t = 1; t + 1 < T; ++t) {
    if (vel(t) < vel(t - 1) && vel(t) < vel(t + 1)) {
      beats.push_back(static_cast<double>(t) / frame_rate);
    }
  }
  return beats;
}

std::optional<double> beat_alignment(const signal::AudioClip& clip,
                                     const bs::BlendshapeSequence& motion,
                                     const RegionConfig& regions) {
  check_channels(regions.lip_channels, static_cast<int>(motion.coeffs.cols()), "lip");
  const auto audio = audio_beat_times(clip);
  if (audio.empty()) return std::nullopt;
  const auto mbeats = motion_beat_times(motion, regions.lip_channels, clip.frame_rate);

  const double two_sigma2 = 2.0 * regions.ba_sigma * regions.ba_sigma;
  double acc = 0.0;
  for (double ta : audio) {
    double best = std::numeric_limits<double>::infinity();
    for (double tm : mbeats) best = std::min(best, (ta - tm) * (ta - tm));
    acc += mbeats.empty() ? 0.0 : std::exp(-best / two_sigma2);
  }
  return acc / static_cast<double>(audio.size());
}

VertexMetrics vertex_metrics(const std::vector<Mat>& pred_vertices,
                             const std::vector<Mat>& gt_vertices,
                             const RegionConfig& regions) {
  if (pred_vertices.size() != gt_vertices.size() || pred_vertices.empty()) {
    throw BadDims("vertex trajectories differ in length or are empty");
  }
  const int T = static_cast<int>(pred_vertices.size());
  const int V = static_cast<int>(pred_vertices[0].rows());
  for (int t = 0; t < T; ++t) {
    if (pred_vertices[t].rows() != V || gt_vertices[t].rows() != V ||
        pred_vertices[t].cols() != 3 || gt_vertices[t].cols() != 3) {
      throw BadDims("vertex frames must all be V x 3");
    }
  }
  check_channels(regions.lip_vertices, V, "lip vertex");
  check_channels(regions.eye_forehead_vertices, V, "eye/forehead vertex");
  check_channels(regions.upper_face_vertices, V, "upper-face vertex");

  VertexMetrics out;
  for (int t = 0; t < T; ++t) {
    double lip_max = 0.0, eye_max = 0.0;
    for (int v : regions.lip_vertices) {
      lip_max = std::max(lip_max,
                         (pred_vertices[t].row(v) - gt_vertices[t].row(v)).norm());
    }
    for (int v : regions.eye_forehead_vertices) {
      eye_max = std::max(eye_max,
                         (pred_vertices[t].row(v) - gt_vertices[t].row(v)).norm());
    }
    out.lve += lip_max;
    out.eve += eye_max;
  }
  out.lve /= T;
  out.eve /= T;

  // per-vertex dynamic deviation: std over time of |v_t - v_mean|
  auto motion_std = [T](const std::vector<Mat>& traj, int v) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int t = 0; t < T; ++t) mean += traj[t].row(v);
    mean /= T;
    Vec mag(T);
    for (int t = 0; t < T; ++t) mag(t) = (traj[t].row(v) - mean).norm();
    const double mu = mag.mean();
    return std::sqrt((mag.array() - mu).square().mean());
  };
  for (int v : regions.upper_face_vertices) {
    out.fdd += motion_std(pred_vertices, v) - motion_std(gt_vertices, v);
  }
  out.fdd /= static_cast<double>(regions.upper_face_vertices.size());
  out.fdd_abs = std::abs(out.fdd);
  return out;
}

void write_reports(const std::vector<ClipReport>& clips, const std::string& json_path,
                   const std::string& csv_path) {
  json per_clip = json::array();
  double lbe = 0, pbe = 0, mbe = 0, ba = 0, lve = 0, eve = 0, fdd = 0;
  int ba_n = 0, vm_n = 0;
  for (const auto& c : clips) {
    json j;
    j["clip_id"] = c.clip_id;
    j["lbe"] = c.blendshape.lbe;
    j["pbe"] = c.blendshape.pbe;
    j["mbe"] = c.blendshape.mbe;
    if (c.ba) j["ba"] = *c.ba;
    if (c.vertex) {
      j["lve"] = c.vertex->lve;
      j["eve"] = c.vertex->eve;
      j["fdd"] = c.vertex->fdd;
      j["fdd_abs"] = c.vertex->fdd_abs;
    }
    per_clip.push_back(std::move(j));
    lbe += c.blendshape.lbe;
    pbe += c.blendshape.pbe;
    mbe += c.blendshape.mbe;
    if (c.ba) {
      ba += *c.ba;
      ++ba_n;
    }
    if (c.vertex) {
      lve += c.vertex->lve;
      eve += c.vertex->eve;
      fdd += c.vertex->fdd;
      ++vm_n;
    }
  }
  const double n = static_cast<double>(clips.size());
  json root;
  root["clips"] = std::move(per_clip);
  root["mean"] = {{"lbe", lbe / n}, {"pbe", pbe / n}, {"mbe", mbe / n}};
  if (ba_n > 0) root["mean"]["ba"] = ba / ba_n;
  if (vm_n > 0) {
    root["mean"]["lve"] = lve / vm_n;
    root["mean"]["eve"] = eve / vm_n;
    root["mean"]["fdd"] = fdd / vm_n;
  }
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot open " + json_path + " for writing");
  out << root.dump(1) << "\n";

  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path + " for writing");
  csv << "clip_id,lbe,pbe,mbe,ba,lve,eve,fdd\n";
  char buf[64];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& c : clips) {
    csv << c.clip_id << "," << cell(c.blendshape.lbe) << "," << cell(c.blendshape.pbe)
        << "," << cell(c.blendshape.mbe) << "," << (c.ba ? cell(*c.ba) : "")
        << "," << (c.vertex ? cell(c.vertex->lve) : "")
        << "," << (c.vertex ? cell(c.vertex->eve) : "")
        << "," << (c.vertex ? cell(c.vertex->fdd) : "") << "\n";
  }
  csv << "mean," << cell(lbe / n) << "," << cell(pbe / n) << "," << cell(mbe / n) << ","
      << (ba_n ? cell(ba / ba_n) : "") << "," << (vm_n ? cell(lve / vm_n) : "") << ","
      << (vm_n ? cell(eve / vm_n) : "") << "," << (vm_n ? cell(fdd / vm_n) : "") << "\n";
  if (!csv) throw IoError("short write to " + csv_path);
}

}  // namespace pestalk::metrics
