#include <benchmark/benchmark.h>

#include <cmath>

#include "pestalk/blocks.hpp"
#include "pestalk/decoder.hpp"
#include "pestalk/mel.hpp"
#include "pestalk/mesh.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/smoothing.hpp"
#include "pestalk/style_library.hpp"

using namespace pestalk;

namespace {

signal::AudioClip sine_clip(double seconds) {
  signal::AudioClip clip;
  const auto n = static_cast<std::size_t>(seconds * clip.sample_rate);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / clip.sample_rate);
  }
  return clip;
}

esmm::StyleLibrary random_library(int speakers, Rng& rng) {
  esmm::StyleLibrary lib;
  for (int e = 0; e < 8; ++e) lib.emotion_names.push_back("e" + std::to_string(e));
  for (int s = 0; s < speakers; ++s) {
    Vec r(esmm::kBaseDim);
    for (int i = 0; i < r.size(); ++i) r(i) = rng.normal();
    const std::string id = "spk" + std::to_string(s);
    lib.set_base_style(id, r);
    for (int e = 0; e < 8; ++e) {
      Vec f(esmm::kEmotionDim);
      for (int i = 0; i < f.size(); ++i) f(i) = rng.normal();
      lib.add_sample(id, e, f);
    }
  }
  return lib;
}

}  // namespace

static void BM_MelSpectrogram(benchmark::State& state) {
  const auto clip = sine_clip(static_cast<double>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(signal::mel_spectrogram(clip));
  }
}
BENCHMARK(BM_MelSpectrogram)->Arg(1)->Arg(3);

static void BM_StyleRetrieval(benchmark::State& state) {
  Rng rng(1);
  const auto lib = random_library(static_cast<int>(state.range(0)), rng);
  Vec e(esmm::kEmotionDim), r(esmm::kBaseDim);
  for (int i = 0; i < e.size(); ++i) e(i) = rng.normal();
  for (int i = 0; i < r.size(); ++i) r(i) = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(esmm::retrieve_style(e, r, lib));
  }
  state.SetItemsProcessed(state.iterations() * lib.size());
}
BENCHMARK(BM_StyleRetrieval)->Arg(8)->Arg(64)->Arg(512);

static void BM_ConformerForward(benchmark::State& state) {
  const int width = 64, T = static_cast<int>(state.range(0));
  nn::ParamStore store;
  Rng rng(2);
  nn::KanGrid grid;
  nn::ConformerBlock block(store, "cb", width, 4, width, grid, 7, rng);
  const auto bias = nn::build_attention_bias(T, 4);
  Mat x(T, width);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = 0.1 * rng.normal();
  for (auto _ : state) {
    nn::Tape t(nn::Tape::Grad::off);
    benchmark::DoNotOptimize(t.val(block.forward(t, t.constant(x), bias)));
  }
}
BENCHMARK(BM_ConformerForward)->Arg(30)->Arg(90);

static void BM_DeformationTransfer(benchmark::State& state) {
  const int lat = static_cast<int>(state.range(0));
  auto src = mesh::make_test_head(lat, lat + 4);
  auto basis = mesh::make_synthetic_basis(src);
  auto tgt = src;
  tgt.vertices *= 1.2;
  const auto corr = mesh::identity_correspondence(tgt.triangle_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mesh::deformation_transfer(src, basis.templates[10], tgt, corr));
  }
  state.SetLabel(std::to_string(src.vertex_count()) + " vertices");
}
BENCHMARK(BM_DeformationTransfer)->Arg(8)->Arg(16)->Arg(24);

static void BM_SavgolSmooth(benchmark::State& state) {
  Rng rng(3);
  Mat track(static_cast<int>(state.range(0)), 52);
  for (int i = 0; i < track.size(); ++i) track.data()[i] = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(signal::savgol_smooth(track, 5, 2));
  }
}
BENCHMARK(BM_SavgolSmooth)->Arg(90)->Arg(900);

BENCHMARK_MAIN();
