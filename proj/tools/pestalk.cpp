#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "pestalk/audio.hpp"
#include "pestalk/errors.hpp"
#include "pestalk/mesh.hpp"
#include "pestalk/metrics.hpp"
#include "pestalk/model.hpp"
#include "pestalk/smoothing.hpp"
#include "pestalk/synthdata.hpp"
#include "pestalk/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pestalk;

namespace {

synthdata::CorpusSpec corpus_spec_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": parse error at byte " + std::to_string(e.byte));
  }
  synthdata::CorpusSpec s;
  s.speakers = j.value("speakers", s.speakers);
  s.emotions = j.value("emotions", s.emotions);
  s.clips_per_emotion = j.value("clips_per_emotion", s.clips_per_emotion);
  s.content_vocab = j.value("content_vocab", s.content_vocab);
  s.min_frames = j.value("min_frames", s.min_frames);
  s.max_frames = j.value("max_frames", s.max_frames);
  s.seed = j.value("seed", s.seed);
  s.style_offsets = j.value("style_offsets", s.style_offsets);
  return s;
}

int run_synth_data(const std::string& spec_path, const std::string& out_dir,
                   std::int64_t seed_override) {
  auto spec = corpus_spec_from_file(spec_path);
  if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
  const auto manifest = synthdata::generate_corpus(spec, out_dir);
  std::cout << "wrote " << manifest.records.size() << " clips under " << out_dir
            << "\n";
  return 0;
}

int run_train(const std::string& manifest_path, const std::string& config_path,
              const std::string& out_dir, std::int64_t seed_override,
              const std::string& dis_orientation) {
  auto manifest = synthdata::load_manifest(manifest_path);
  auto config = training::TrainConfig::from_json_file(config_path);
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  if (!dis_orientation.empty()) {
    config.dis_orientation = dis_orientation == "literal"
                                 ? losses::DisOrientation::literal
                                 : losses::DisOrientation::corrected;
  }
  config.model.emotion_classes = static_cast<int>(manifest.emotion_names.size());
  config.model.init_seed = config.seed;

  model::Model net(config.model);
  const auto result = training::train(manifest, config, out_dir, net);
  std::cout << "trained " << result.history.size() << " steps; checkpoint at "
            << result.checkpoint_path << "\n";
  if (!result.history.empty()) {
    std::cout << "L_total first " << result.history.front().total << " last "
              << result.history.back().total << "\n";
  }
  return 0;
}

int run_build_library(const std::string& manifest_path, const std::string& ckpt_path,
                      const std::string& out_path) {
  auto manifest = synthdata::load_manifest(manifest_path);
  auto net = model::Model::load(ckpt_path);
  auto library = training::build_library(manifest, *net);
  esmm::persist_library(library, out_path);
  std::cout << "library with " << library.size() << " entries at " << out_path << "\n";
  return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& library_path,
              const std::string& wav_path, const std::string& out_csv, bool smooth) {
  auto net = model::Model::load(ckpt_path);
  auto library = esmm::load_library(library_path);
  auto clip = signal::load_wav(wav_path);
  if (clip.sample_rate != net->cfg.sample_rate) {
    clip = signal::resample_audio(clip, net->cfg.sample_rate);
  }
  clip.frame_rate = net->cfg.frame_rate;

  training::InferOptions opts;
  opts.smooth = smooth;
  const auto result = training::infer(clip, *net, library, opts);
  bs::write_blendshape_csv(result.sequence, out_csv);

  const auto partition = bs::default_partition();
  json side;
  side["fps"] = net->cfg.frame_rate;
  side["model_version"] = 1;
  side["partition"] = {{"lower", partition.lower}, {"upper", partition.upper}};
  side["style_key"] = {{"speaker", result.style_key.speaker},
                       {"emotion", result.style_key.emotion},
                       {"distance", result.style_distance}};
  std::ofstream sf(out_csv + ".json");
  sf << side.dump(1) << "\n";
  if (!sf) throw IoError("short write to " + out_csv + ".json");
  std::cout << result.sequence.frames() << " frames -> " << out_csv << "\n";
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& regions_path, const std::string& out_base,
             const std::string& basis_dir) {
  if (!fs::is_directory(pred_dir)) throw IoError("missing directory " + pred_dir);
  if (!fs::is_directory(gt_dir)) throw IoError("missing directory " + gt_dir);
  auto regions = regions_path.empty()
                     ? metrics::RegionConfig::defaults()
                     : metrics::RegionConfig::from_json_file(regions_path);

  std::unique_ptr<mesh::BlendshapeBasis> basis;
  if (!basis_dir.empty()) {
    basis = std::make_unique<mesh::BlendshapeBasis>(mesh::load_basis_dir(basis_dir));
    if (regions.lip_vertices.empty()) {
      regions.lip_vertices = basis->neutral.region_masks.at("lip");
      regions.eye_forehead_vertices = basis->neutral.region_masks.at("eye_forehead");
      regions.upper_face_vertices = basis->neutral.region_masks.at("upper_face");
    }
  }

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() == ".csv") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw IoError("no .csv predictions in " + pred_dir);

  std::vector<metrics::ClipReport> clips;
  for (const auto& stem : stems) {
    const auto gt_csv = fs::path(gt_dir) / (stem + ".csv");
    if (!fs::exists(gt_csv)) throw IoError("missing ground truth " + gt_csv.string());
    auto pred = bs::read_blendshape_csv((fs::path(pred_dir) / (stem + ".csv")).string());
    auto gt = bs::read_blendshape_csv(gt_csv.string());

    metrics::ClipReport report;
    report.clip_id = stem;
    report.blendshape = metrics::blendshape_metrics(pred, gt, regions);
    // audio next to the ground truth, or in a sibling wav/ directory
    // (the corpus layout)
    fs::path wav = fs::path(gt_dir) / (stem + ".wav");
    if (!fs::exists(wav)) {
      wav = fs::path(gt_dir).parent_path() / "wav" / (stem + ".wav");
    }
    if (fs::exists(wav)) {
      report.ba = metrics::beat_alignment(signal::load_wav(wav.string()), pred, regions);
    }
    if (basis) {
      report.vertex = metrics::vertex_metrics(mesh::apply_blendshapes(*basis, pred),
                                              mesh::apply_blendshapes(*basis, gt),
                                              regions);
    }
    clips.push_back(std::move(report));
  }
  metrics::write_reports(clips, out_base + ".json", out_base + ".csv");
  std::cout << clips.size() << " clips -> " << out_base << ".json\n";
  return 0;
}

int run_convert_mesh(const std::string& basis_dir, const std::string& coeffs_csv,
                     const std::string& out_dir) {
  const auto basis = mesh::load_basis_dir(basis_dir);
  const auto coeffs = bs::read_blendshape_csv(coeffs_csv);
  const auto traj = mesh::apply_blendshapes(basis, coeffs);
  fs::create_directories(out_dir);
  char name[32];
  for (std::size_t t = 0; t < traj.size(); ++t) {
    mesh::TriangleMesh frame;
    frame.vertices = traj[t];
    frame.triangles = basis.neutral.triangles;
    std::snprintf(name, sizeof name, "frame_%05zu.obj", t);
    mesh::save_obj(frame, (fs::path(out_dir) / name).string());
  }
  std::cout << traj.size() << " frames -> " << out_dir << "\n";
  return 0;
}

int run_transfer(const std::string& src_basis_dir, const std::string& tgt_neutral_path,
                 const std::string& corr_path, const std::string& out_basis_dir) {
  const auto src = mesh::load_basis_dir(src_basis_dir);
  auto tgt = mesh::load_obj(tgt_neutral_path);
  tgt.region_masks = src.neutral.region_masks;
  const auto corr = corr_path == "identity"
                        ? mesh::identity_correspondence(tgt.triangle_count())
                        : mesh::load_correspondence(corr_path);
  const auto out = mesh::build_templates(src, tgt, corr);
  mesh::save_basis_dir(out, out_basis_dir);
  std::cout << "52 templates -> " << out_basis_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PESTalk: speech to 3D facial blendshape animation"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, manifest_path, config_path, ckpt_path, library_path,
      wav_path, out_csv, pred_dir, gt_dir, regions_path, out_base = "report",
      basis_dir, coeffs_csv, tgt_path, corr_path, dis_orientation;
  std::int64_t seed = -1;
  bool smooth = false;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
  synth->add_option("spec", spec_path, "corpus spec JSON")->required();
  synth->add_option("out", out_dir, "output directory")->required();
  synth->add_option("--seed", seed, "override the spec seed");

  std::string config_override;
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  train->add_option("manifest", manifest_path, "manifest.jsonl")->required();
  train->add_option("config_json", config_path, "train config JSON")->required();
  train->add_option("out", out_dir, "output directory")->required();
  train->add_option("--config", config_override, "replace the positional config path");
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--dis-orientation", dis_orientation, "corrected|literal")
      ->check(CLI::IsMember({"corrected", "literal", ""}));

  auto* buildlib = app.add_subcommand("build-library", "build a style library");
  buildlib->add_option("manifest", manifest_path, "manifest.jsonl")->required();
  buildlib->add_option("checkpoint", ckpt_path, "checkpoint.bin")->required();
  buildlib->add_option("--out", library_path, "library output path");

  auto* infer = app.add_subcommand("infer", "blendshapes from a wav");
  infer->add_option("checkpoint", ckpt_path, "checkpoint.bin")->required();
  infer->add_option("library", library_path, "library.json")->required();
  infer->add_option("wav", wav_path, "input wav")->required();
  infer->add_option("out", out_csv, "output csv")->required();
  infer->add_flag("--smooth", smooth, "Savitzky-Golay(5,2) on the output");

  auto* eval = app.add_subcommand("eval", "metric report over prediction/gt dirs");
  eval->add_option("pred", pred_dir, "prediction csv directory")->required();
  eval->add_option("gt", gt_dir, "ground truth csv/wav directory")->required();
  eval->add_option("--regions", regions_path, "regions JSON");
  eval->add_option("--out", out_base, "report basename (default: report)");
  eval->add_option("--basis", basis_dir, "blendshape basis dir for vertex metrics");

  auto* convert = app.add_subcommand("convert-mesh", "blendshape csv to obj frames");
  convert->add_option("basis", basis_dir, "basis directory")->required();
  convert->add_option("coeffs", coeffs_csv, "blendshape csv")->required();
  convert->add_option("out", out_dir, "output directory")->required();

  auto* transfer = app.add_subcommand("transfer", "deformation-transfer a basis");
  transfer->add_option("src_basis", basis_dir, "source basis directory")->required();
  transfer->add_option("tgt_neutral", tgt_path, "target neutral obj")->required();
  transfer->add_option("corr", corr_path, "correspondence JSON or 'identity'")->required();
  transfer->add_option("out_basis", out_dir, "output basis directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth_data(spec_path, out_dir, seed);
    if (train->parsed()) {
      return run_train(manifest_path,
                       config_override.empty() ? config_path : config_override, out_dir,
                       seed, dis_orientation);
    }
    if (buildlib->parsed()) {
      if (library_path.empty()) {
        library_path = (fs::path(ckpt_path).parent_path() / "library.json").string();
      }
      return run_build_library(manifest_path, ckpt_path, library_path);
    }
    if (infer->parsed()) {
      return run_infer(ckpt_path, library_path, wav_path, out_csv, smooth);
    }
    if (eval->parsed()) {
      return run_eval(pred_dir, gt_dir, regions_path, out_base, basis_dir);
    }
    if (convert->parsed()) return run_convert_mesh(basis_dir, coeffs_csv, out_dir);
    if (transfer->parsed()) return run_transfer(basis_dir, tgt_path, corr_path, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
