#include "pestalk/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "pestalk/errors.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/smoothing.hpp"

namespace pestalk::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTokenSeconds = 0.15;  // one lip gesture per token

const std::vector<std::string>& full_emotion_list() {
  static const std::vector<std::string> names = {
      "angry", "disgust", "contempt", "fear", "happy", "sad", "surprise", "neutral"};
  return names;
}

struct EmotionParams {
  double tilt;      // harmonic decay exponent; low = bright
  double am_rate;   // tremor Hz
  double am_depth;
};

EmotionParams emotion_params(const std::string& name) {
  // tilt/rate pairs spread so every emotion subset stays separable
  static const std::map<std::string, EmotionParams> table = {
      {"angry", {0.6, 7.5, 0.40}},    {"disgust", {2.6, 3.5, 0.22}},
      {"contempt", {1.3, 1.0, 0.15}}, {"fear", {1.0, 9.0, 0.35}},
      {"happy", {0.8, 5.0, 0.28}},    {"sad", {3.0, 1.8, 0.12}},
      {"surprise", {1.6, 6.5, 0.30}}, {"neutral", {2.0, 2.5, 0.10}}};
  return table.at(name);
}

struct TokenPattern {
  std::vector<std::pair<int, double>> channels;  // lower-face channel, weight
  double formant_hz;
};

struct SpeakerParams {
  double f0;
  double formant_scale;
  std::vector<double> phase;       // per harmonic
  std::vector<double> upper_gain;  // per upper channel (asymmetry)
  std::vector<double> upper_phase; // per upper channel
};

struct GeneratorTables {
  std::vector<TokenPattern> tokens;
  std::vector<SpeakerParams> speakers;
  // per emotion, per upper channel base offset
  std::vector<std::vector<double>> emo_base;
  // per clip index x: frame count and token ids (shared across speakers and
  // emotions so neutral/emotional pairs have matched content)
  std::vector<int> frames;
  std::vector<std::vector<int>> token_ids;
};

GeneratorTables build_tables(const CorpusSpec& spec,
                             const std::vector<std::string>& emotions) {
  GeneratorTables tab;
  const auto lower = bs::default_partition().lower;
  const int jaw_open = bs::channel_index("jawOpen");

  Rng corpus_rng(mix_seed(spec.seed, 0xC0));
  for (int v = 0; v < spec.content_vocab; ++v) {
    TokenPattern p;
    p.channels.emplace_back(jaw_open, 0.30 + 0.25 * corpus_rng.uniform());
    for (int n = 0; n < 3; ++n) {
      const int ch = lower[corpus_rng.uniform_int(lower.size())];
      p.channels.emplace_back(ch, 0.35 + 0.5 * corpus_rng.uniform());
    }
    p.formant_hz = 500.0 + 130.0 * static_cast<double>(v % 13);
    tab.tokens.push_back(std::move(p));
  }

  const int n_upper = bs::kNumUpper;
  for (std::size_t e = 0; e < emotions.size(); ++e) {
    Rng erng(mix_seed(spec.seed, 0xE0 + e));
    std::vector<double> base(n_upper, 0.0);
    if (emotions[e] != "neutral") {
      for (int c = 0; c < n_upper; ++c) {
        base[c] = erng.uniform() < 0.5 ? 0.0 : 0.15 + 0.45 * erng.uniform();
      }
    } else {
      for (int c = 0; c < n_upper; ++c) base[c] = 0.05 * erng.uniform();
    }
    tab.emo_base.push_back(std::move(base));
  }

  for (int i = 0; i < spec.speakers; ++i) {
    Rng srng(mix_seed(spec.seed, 0x50 + i));
    SpeakerParams sp;
    sp.f0 = 105.0 * std::pow(2.0, static_cast<double>(i) /
                                      std::max(4.0, static_cast<double>(spec.speakers)));
    sp.formant_scale = 0.9 + 0.05 * (i % 5);
    for (int h = 0; h < 64; ++h) sp.phase.push_back(srng.uniform(0.0, 2.0 * M_PI));
    for (int c = 0; c < n_upper; ++c) {
      sp.upper_gain.push_back(spec.style_offsets ? srng.uniform(0.7, 1.3) : 1.0);
      sp.upper_phase.push_back(spec.style_offsets ? srng.uniform(0.0, 2.0 * M_PI) : 0.0);
    }
    tab.speakers.push_back(std::move(sp));
  }

  Rng xrng(mix_seed(spec.seed, 0xA0));
  for (int x = 0; x < spec.clips_per_emotion; ++x) {
    const int T = spec.min_frames +
                  static_cast<int>(xrng.uniform_int(
                      static_cast<std::uint64_t>(spec.max_frames - spec.min_frames + 1)));
    tab.frames.push_back(T);
    const double dur = static_cast<double>(T) / spec.frame_rate;
    const int n_tok = std::max(1, static_cast<int>(std::ceil(dur / kTokenSeconds)));
    std::vector<int> ids(n_tok);
    for (int k = 0; k < n_tok; ++k) {
      ids[k] = static_cast<int>(xrng.uniform_int(spec.content_vocab));
    }
    tab.token_ids.push_back(std::move(ids));
  }
  return tab;
}

signal::AudioClip synth_audio(const CorpusSpec& spec, const GeneratorTables& tab,
                              int speaker, const std::string& emotion, int x) {
  const auto& sp = tab.speakers[speaker];
  const auto ep = emotion_params(emotion);
  const auto& tokens = tab.token_ids[x];
  const int T = tab.frames[x];
  const int d = static_cast<int>(static_cast<double>(spec.sample_rate) / spec.frame_rate + 0.5);

  signal::AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.frame_rate = spec.frame_rate;
  clip.samples.resize(static_cast<std::size_t>(T) * d);

  const double nyq_guard = 0.45 * spec.sample_rate;
  double peak = 0.0;
  for (std::size_t s = 0; s < clip.samples.size(); ++s) {
    const double t = static_cast<double>(s) / spec.sample_rate;
    const int k = std::min<int>(static_cast<int>(tokens.size()) - 1,
                                static_cast<int>(t / kTokenSeconds));
    const double u = (t - k * kTokenSeconds) / kTokenSeconds;
    const double env = 0.2 + 0.8 * std::pow(std::sin(M_PI * u), 2);
    const double am = 1.0 + ep.am_depth * std::sin(2.0 * M_PI * ep.am_rate * t);
    const double f_tok = tab.tokens[tokens[k]].formant_hz * sp.formant_scale;

    double acc = 0.0;
    for (int h = 1; h <= 64; ++h) {
      const double f = h * sp.f0;
      if (f > nyq_guard) break;
      const double formant = 1.0 + 2.0 * std::exp(-std::pow(f - f_tok, 2) / (2.0 * 250.0 * 250.0));
      acc += std::pow(static_cast<double>(h), -ep.tilt) * formant *
             std::sin(2.0 * M_PI * f * t + sp.phase[h - 1]);
    }
    const double v = env * am * acc;
    clip.samples[s] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0) {
    for (auto& v : clip.samples) v *= 0.65 / peak;
  }
  return clip;
}

bs::BlendshapeSequence synth_blendshapes(const CorpusSpec& spec,
                                         const GeneratorTables& tab, int speaker,
                                         int emotion_id, int x) {
  const auto& sp = tab.speakers[speaker];
  const auto& tokens = tab.token_ids[x];
  const auto partition = bs::default_partition();
  const int T = tab.frames[x];

  Mat coeffs = Mat::Zero(T, bs::kNumChannels);
  for (int t = 0; t < T; ++t) {
    const double tt = static_cast<double>(t) / spec.frame_rate;
    const int k = std::min<int>(static_cast<int>(tokens.size()) - 1,
                                static_cast<int>(tt / kTokenSeconds));
    const double u = (tt - k * kTokenSeconds) / kTokenSeconds;
    const double g = std::pow(std::sin(M_PI * u), 2);
    for (const auto& [ch, w] : tab.tokens[tokens[k]].channels) {
      coeffs(t, ch) = std::min(0.95, coeffs(t, ch) + w * g);
    }
    for (int c = 0; c < bs::kNumUpper; ++c) {
      const double osc =
          0.08 * std::sin(2.0 * M_PI * 0.5 * tt + sp.upper_phase[c]) * sp.upper_gain[c];
      const double v = tab.emo_base[emotion_id][c] * sp.upper_gain[c] + 0.1 + osc;
      coeffs(t, partition.upper[c]) = std::clamp(v, 0.0, 0.95);
    }
  }
  bs::BlendshapeSequence seq;
  seq.coeffs = signal::savgol_smooth(coeffs, 5, 2).cwiseMax(0.0).cwiseMin(1.0);

  const double residual =
      (signal::savgol_smooth(seq.coeffs, 5, 2) - seq.coeffs).cwiseAbs().maxCoeff();
  if (residual > kSmoothnessResidualBound) {
    throw NumericalError("generated track exceeds the smoothness residual bound");
  }
  return seq;
}

json spec_to_json(const CorpusSpec& s) {
  return json{{"speakers", s.speakers},
              {"emotions", s.emotions},
              {"clips_per_emotion", s.clips_per_emotion},
              {"content_vocab", s.content_vocab},
              {"min_frames", s.min_frames},
              {"max_frames", s.max_frames},
              {"seed", s.seed},
              {"style_offsets", s.style_offsets},
              {"sample_rate", s.sample_rate},
              {"frame_rate", s.frame_rate},
              {"token_seconds", kTokenSeconds},
              {"smoothness_residual_bound", kSmoothnessResidualBound}};
}

CorpusSpec spec_from_json(const json& j) {
  CorpusSpec s;
  s.speakers = j.value("speakers", s.speakers);
  s.emotions = j.value("emotions", s.emotions);
  s.clips_per_emotion = j.value("clips_per_emotion", s.clips_per_emotion);
  s.content_vocab = j.value("content_vocab", s.content_vocab);
  s.min_frames = j.value("min_frames", s.min_frames);
  s.max_frames = j.value("max_frames", s.max_frames);
  s.seed = j.value("seed", s.seed);
  s.style_offsets = j.value("style_offsets", s.style_offsets);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.frame_rate = j.value("frame_rate", s.frame_rate);
  return s;
}

}  // namespace

std::vector<std::string> emotion_names(int emotions) {
  const auto& all = full_emotion_list();
  if (emotions < 1 || emotions > static_cast<int>(all.size())) {
    throw BadDims("emotion count must be in 1..8");
  }
  std::vector<std::string> out(all.begin(), all.begin() + (emotions - 1));
  out.push_back("neutral");
  return out;
}

std::string Manifest::wav_file(const ManifestRecord& r) const {
  return (fs::path(root_dir) / r.wav_path).string();
}
std::string Manifest::blendshape_file(const ManifestRecord& r) const {
  return (fs::path(root_dir) / r.blendshape_path).string();
}

Manifest generate_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  if (spec.speakers < 1 || spec.clips_per_emotion < 1) {
    throw BadDims("corpus spec counts must be >= 1");
  }
  if (spec.min_frames < 5 || spec.max_frames < spec.min_frames) {
    throw BadDims("frame range must allow the length-5 smoothing window");
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  fs::create_directories(fs::path(out_dir) / "bs", ec);
  if (ec) throw IoError("cannot create " + out_dir);

  Manifest m;
  m.root_dir = out_dir;
  m.spec = spec;
  m.emotion_names = emotion_names(spec.emotions);
  const auto tab = build_tables(spec, m.emotion_names);

  std::ofstream jsonl(fs::path(out_dir) / "manifest.jsonl");
  if (!jsonl) throw IoError("cannot open manifest.jsonl in " + out_dir);
  json meta;
  meta["meta"] = spec_to_json(spec);
  meta["meta"]["emotion_names"] = m.emotion_names;
  jsonl << meta.dump() << "\n";

  char idbuf[64];
  for (int i = 0; i < spec.speakers; ++i) {
    for (int e = 0; e < spec.emotions; ++e) {
      for (int x = 0; x < spec.clips_per_emotion; ++x) {
        std::snprintf(idbuf, sizeof idbuf, "spk%02d_%s_%03d", i,
                      m.emotion_names[e].c_str(), x);
        ManifestRecord rec;
        rec.clip_id = idbuf;
        rec.speaker_id = "spk" + std::string(idbuf + 3, idbuf + 5);
        rec.emotion_id = e;
        rec.content_token_ids = tab.token_ids[x];
        rec.frames = tab.frames[x];
        rec.wav_path = "wav/" + rec.clip_id + ".wav";
        rec.blendshape_path = "bs/" + rec.clip_id + ".csv";

        const auto clip = synth_audio(spec, tab, i, m.emotion_names[e], x);
        signal::save_wav(clip, m.wav_file(rec));
        const auto track = synth_blendshapes(spec, tab, i, e, x);
        bs::write_blendshape_csv(track, m.blendshape_file(rec));

        json rj;
        rj["clip_id"] = rec.clip_id;
        rj["speaker_id"] = rec.speaker_id;
        rj["emotion_id"] = rec.emotion_id;
        rj["content_token_ids"] = rec.content_token_ids;
        rj["wav_path"] = rec.wav_path;
        rj["blendshape_path"] = rec.blendshape_path;
        rj["T"] = rec.frames;
        jsonl << rj.dump() << "\n";
        m.records.push_back(std::move(rec));
      }
    }
  }
  if (!jsonl) throw IoError("short write to manifest.jsonl");
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  Manifest m;
  m.root_dir = fs::path(path).parent_path().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": parse error at byte " +
                        std::to_string(e.byte));
    }
    if (j.contains("meta")) {
      m.spec = spec_from_json(j["meta"]);
      m.emotion_names = j["meta"].value("emotion_names", std::vector<std::string>{});
      continue;
    }
    ManifestRecord rec;
    rec.clip_id = j.at("clip_id").get<std::string>();
    rec.speaker_id = j.at("speaker_id").get<std::string>();
    rec.emotion_id = j.at("emotion_id").get<int>();
    rec.content_token_ids = j.at("content_token_ids").get<std::vector<int>>();
    rec.wav_path = j.at("wav_path").get<std::string>();
    rec.blendshape_path = j.at("blendshape_path").get<std::string>();
    rec.frames = j.at("T").get<int>();
    if (!fs::exists(m.wav_file(rec)) || !fs::exists(m.blendshape_file(rec))) {
      throw IoError(path + ": missing files for clip " + rec.clip_id);
    }
    m.records.push_back(std::move(rec));
  }
  if (m.emotion_names.empty()) m.emotion_names = emotion_names(m.spec.emotions);
  return m;
}

PairSet iterate_pairs(const Manifest& manifest) {
  PairSet out;
  const int neutral = manifest.neutral_id();
  // index neutral clips by (speaker, tokens)
  std::map<std::pair<std::string, std::vector<int>>, int> neutral_by_content;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.emotion_id == neutral) {
      neutral_by_content[{r.speaker_id, r.content_token_ids}] = static_cast<int>(i);
    }
  }
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.emotion_id == neutral) continue;
    const auto it = neutral_by_content.find({r.speaker_id, r.content_token_ids});
    if (it == neutral_by_content.end()) {
      ++out.warnings;
      continue;
    }
    out.pairs.push_back({it->second, static_cast<int>(i)});
  }
  return out;
}

}  // namespace pestalk::synthdata
