#include "pestalk/style_library.hpp"

#include <fstream>

#include <json.hpp>

#include "pestalk/errors.hpp"

namespace pestalk::esmm {

using nlohmann::json;

std::map<std::string, Vec> build_base_styles(
    const std::map<std::string, std::vector<Vec>>& clips_by_speaker) {
  std::map<std::string, Vec> out;
  for (const auto& [speaker, clips] : clips_by_speaker) {
    if (clips.empty()) throw EmptySpeaker(speaker + " has no clips");
    Vec acc = Vec::Zero(clips.front().size());
    for (const auto& v : clips) {
      if (v.size() != acc.size()) throw BadDims("inconsistent voiceprint dims");
      acc += v;
    }
    out[speaker] = acc / static_cast<double>(clips.size());
  }
  return out;
}

double cosine_distance(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) throw BadDims("cosine_distance: dim mismatch");
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw ZeroVector("cosine_distance of zero vector");
  return 1.0 - u.dot(v) / (nu * nv);
}

void StyleLibrary::set_base_style(const std::string& speaker, Vec r) {
  if (r.size() != kBaseDim) throw BadDims("base style must be 512-dim");
  base_[speaker] = std::move(r);
}

const Vec* StyleLibrary::base_style(const std::string& speaker) const {
  const auto it = base_.find(speaker);
  return it == base_.end() ? nullptr : &it->second;
}

void StyleLibrary::add_sample(const std::string& speaker, int emotion,
                              const Vec& pooled_e) {
  if (pooled_e.size() != kEmotionDim) throw BadDims("pooled emotion must be 256-dim");
  const auto* r = base_style(speaker);
  if (!r) throw MissingBase("no base style for speaker " + speaker);

  const StyleKey key{speaker, emotion};
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    StyleEntry e;
    e.P.resize(kStyleDim);
    e.P.head(kBaseDim) = *r;
    e.P.tail(kEmotionDim) = pooled_e;
    e.count = 1;
    entries_[key] = std::move(e);
    return;
  }
  StyleEntry& e = it->second;
  e.count += 1;
  e.P.tail(kEmotionDim) +=
      (pooled_e - e.P.tail(kEmotionDim)) / static_cast<double>(e.count);
}

const std::pair<const StyleKey, StyleEntry>& StyleLibrary::retrieve(
    const Vec& query768) const {
  if (entries_.empty()) throw EmptyLibrary("style library has no entries");
  if (query768.size() != kStyleDim) throw BadDims("query must be 768-dim");

  const std::pair<const StyleKey, StyleEntry>* best = nullptr;
  double best_d = 0.0;
  for (const auto& kv : entries_) {
    const double d = cosine_distance(query768, kv.second.P);
    if (!best || d < best_d) {  // map order breaks ties toward the lowest key
      best = &kv;
      best_d = d;
    }
  }
  return *best;
}

StyleLibrary build_style_library(const std::vector<ClipFeature>& features,
                                 const std::map<std::string, Vec>& base,
                                 std::vector<std::string> emotion_names) {
  StyleLibrary lib;
  lib.emotion_names = std::move(emotion_names);
  for (const auto& [speaker, r] : base) lib.set_base_style(speaker, r);
  for (const auto& f : features) lib.add_sample(f.speaker, f.emotion, f.pooled_e);
  return lib;
}

StyleVector retrieve_style(const Vec& e_pooled, const Vec& r,
                           const StyleLibrary& library, const Mat* proj_w,
                           const Vec* proj_b) {
  if (e_pooled.size() != kEmotionDim || r.size() != kBaseDim) {
    throw BadDims("retrieve_style: expected 256-dim emotion and 512-dim voiceprint");
  }
  Vec query(kStyleDim);  // canonical R-first layout
  query.head(kBaseDim) = r;
  query.tail(kEmotionDim) = e_pooled;

  const auto& [key, entry] = library.retrieve(query);
  StyleVector out;
  out.S = entry.P;
  out.key = key;
  out.distance = cosine_distance(query, entry.P);
  if (proj_w) {
    if (proj_w->rows() != kStyleDim) throw BadDims("style projection must be 768 x d_s");
    out.projected = proj_w->transpose() * out.S;
    if (proj_b) out.projected += *proj_b;
  }
  return out;
}

void persist_library(const StyleLibrary& library, const std::string& path) {
  json speakers = json::object();
  for (const auto& [speaker, r] : library.base_styles()) {
    json s;
    s["R"] = std::vector<double>(r.data(), r.data() + r.size());
    s["entries"] = json::object();
    speakers[speaker] = std::move(s);
  }
  for (const auto& [key, entry] : library.entries()) {
    json e;
    e["P"] = std::vector<double>(entry.P.data(), entry.P.data() + entry.P.size());
    e["count"] = entry.count;
    const std::string emo =
        key.emotion < static_cast<int>(library.emotion_names.size())
            ? library.emotion_names[key.emotion]
            : std::to_string(key.emotion);
    speakers[key.speaker]["entries"][emo] = std::move(e);
  }
  json root;
  root["version"] = library.version;
  root["emotion_names"] = library.emotion_names;
  root["speakers"] = std::move(speakers);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << root.dump(1) << "\n";
  if (!out) throw IoError("short write to " + path);
}

StyleLibrary load_library(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": parse error at byte " + std::to_string(e.byte) +
                      " (" + e.what() + ")");
  }

  StyleLibrary lib;
  try {
    const int version = root.at("version").get<int>();
    if (version != lib.version) {
      throw FormatError(path + ": version " + std::to_string(version) +
                        ", expected " + std::to_string(lib.version));
    }
    lib.emotion_names = root.at("emotion_names").get<std::vector<std::string>>();
    for (const auto& [speaker, s] : root.at("speakers").items()) {
      const auto rv = s.at("R").get<std::vector<double>>();
      if (rv.size() != kBaseDim) throw FormatError(path + ": R dim != 512");
      lib.set_base_style(speaker,
                         Eigen::Map<const Vec>(rv.data(), static_cast<long>(rv.size())));
      for (const auto& [emo, e] : s.at("entries").items()) {
        int emotion = -1;
        for (std::size_t i = 0; i < lib.emotion_names.size(); ++i) {
          if (lib.emotion_names[i] == emo) emotion = static_cast<int>(i);
        }
        if (emotion < 0) throw FormatError(path + ": unknown emotion " + emo);
        const auto pv = e.at("P").get<std::vector<double>>();
        if (pv.size() != kStyleDim) throw FormatError(path + ": entry dim != 768");
        lib.add_sample(speaker, emotion,
                       Eigen::Map<const Vec>(pv.data() + kBaseDim, kEmotionDim));
        lib.set_entry_count({speaker, emotion}, e.at("count").get<long>());
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + std::string(e.what()));
  }
  return lib;
}

}  // namespace pestalk::esmm
