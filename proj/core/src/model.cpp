#include "pestalk/model.hpp"

#include <fstream>

#include <json.hpp>

#include "pestalk/errors.hpp"

namespace pestalk::model {

using nlohmann::json;

void ModelConfig::validate() const {
  if (width < 2 || width % heads != 0) throw BadDims("width must divide by heads");
  if (n_mels < 1 || mel_hop < 1 || mel_window < mel_hop) throw BadDims("bad mel params");
  if (kan_grid < 2 || kan_order < 1 || kan_order > 7) throw BadDims("bad KAN grid");
  if (emotion_classes < 1) throw BadDims("emotion_classes must be >= 1");
  if (style_dim < 1 || ppe_period < 1) throw BadDims("bad decoder params");
}

std::string ModelConfig::to_json_string() const {
  json j;
  j["sample_rate"] = sample_rate;
  j["frame_rate"] = frame_rate;
  j["n_mels"] = n_mels;
  j["mel_window"] = mel_window;
  j["mel_hop"] = mel_hop;
  j["width"] = width;
  j["heads"] = heads;
  j["temporal_blocks"] = temporal_blocks;
  j["conformer_blocks"] = conformer_blocks;
  j["content_blocks"] = content_blocks;
  j["voice_blocks"] = voice_blocks;
  j["decoder_blocks"] = decoder_blocks;
  j["tcn_channels"] = tcn_channels;
  j["kan_grid"] = kan_grid;
  j["kan_order"] = kan_order;
  j["kan_hidden"] = kan_hidden;
  j["conformer_kernel"] = conformer_kernel;
  j["ppe_period"] = ppe_period;
  j["style_dim"] = style_dim;
  j["emotion_classes"] = emotion_classes;
  j["init_seed"] = init_seed;
  return j.dump(1);
}

ModelConfig ModelConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model config: parse error at byte ") +
                      std::to_string(e.byte));
  }
  ModelConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.frame_rate = j.value("frame_rate", c.frame_rate);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.mel_window = j.value("mel_window", c.mel_window);
  c.mel_hop = j.value("mel_hop", c.mel_hop);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.temporal_blocks = j.value("temporal_blocks", c.temporal_blocks);
  c.conformer_blocks = j.value("conformer_blocks", c.conformer_blocks);
  c.content_blocks = j.value("content_blocks", c.content_blocks);
  c.voice_blocks = j.value("voice_blocks", c.voice_blocks);
  c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
  c.tcn_channels = j.value("tcn_channels", c.tcn_channels);
  c.kan_grid = j.value("kan_grid", c.kan_grid);
  c.kan_order = j.value("kan_order", c.kan_order);
  c.kan_hidden = j.value("kan_hidden", c.kan_hidden);
  c.conformer_kernel = j.value("conformer_kernel", c.conformer_kernel);
  c.ppe_period = j.value("ppe_period", c.ppe_period);
  c.style_dim = j.value("style_dim", c.style_dim);
  c.emotion_classes = j.value("emotion_classes", c.emotion_classes);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

namespace {

ModelConfig validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

Model::Model(const ModelConfig& config)
    : cfg(validated(config)),
      init_rng(cfg.init_seed),
      emotion(store, cfg, init_rng),
      content(store, cfg, init_rng),
      voiceprint(store, cfg, init_rng),
      style_proj(store, "style.proj", esmm::kStyleDim, cfg.style_dim, init_rng),
      lower(store, "decoder.lower", cfg, kContentDim, bs::kNumLower, init_rng),
      upper(store, "decoder.upper", cfg, kEmotionDim, bs::kNumUpper, init_rng),
      delta(store.add("loss.delta", Mat::Constant(1, 1, 1.0))) {}

void Model::save(const std::string& path) const {
  store.save(path);
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot open " + path + ".json for writing");
  json j;
  j["format_version"] = 1;
  j["model_config"] = json::parse(cfg.to_json_string());
  side << j.dump(1) << "\n";
  if (!side) throw IoError("short write to " + path + ".json");
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw IncompatibleCheckpoint("missing sidecar " + path + ".json");
  json j;
  try {
    j = json::parse(side);
  } catch (const json::parse_error& e) {
    throw IncompatibleCheckpoint(path + ".json: parse error at byte " +
                                 std::to_string(e.byte));
  }
  if (j.value("format_version", 0) != 1) {
    throw IncompatibleCheckpoint(path + ".json: format_version " +
                                 std::to_string(j.value("format_version", 0)) +
                                 ", expected 1");
  }
  const auto cfg = ModelConfig::from_json_string(j.at("model_config").dump());
  auto model = std::make_unique<Model>(cfg);
  model->store.load(path);
  return model;
}

Vec Model::project_style(const Vec& s768) const {
  Vec out = style_proj.w->value.transpose() * s768;
  out += style_proj.b->value.row(0).transpose();
  return out;
}

esmm::StyleVector Model::retrieve(const Vec& e_pooled, const Vec& r,
                                  const esmm::StyleLibrary& library) const {
  const Vec b = style_proj.b->value.row(0).transpose();
  return esmm::retrieve_style(e_pooled, r, library, &style_proj.w->value, &b);
}

}  // namespace pestalk::model
