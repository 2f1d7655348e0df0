#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pestalk/errors.hpp"
#include "pestalk/rng.hpp"
#include "pestalk/style_library.hpp"

using namespace pestalk;
using namespace pestalk::esmm;

namespace {

Vec random_vec(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

StyleLibrary random_library(int speakers, int emotions, Rng& rng) {
  StyleLibrary lib;
  for (int e = 0; e < emotions; ++e) lib.emotion_names.push_back("emo" + std::to_string(e));
  for (int s = 0; s < speakers; ++s) {
    const std::string id = "spk" + std::to_string(100 + s);
    lib.set_base_style(id, random_vec(kBaseDim, rng));
    for (int e = 0; e < emotions; ++e) {
      lib.add_sample(id, e, random_vec(kEmotionDim, rng));
    }
  }
  return lib;
}

// independent brute-force scan in the canonical layout
StyleKey brute_force_argmin(const Vec& e_pooled, const Vec& r, const StyleLibrary& lib) {
  Vec q(kStyleDim);
  q << r, e_pooled;
  bool first = true;
  double best = 0.0;
  StyleKey best_key;
  for (const auto& [key, entry] : lib.entries()) {
    const double dot = q.dot(entry.P);
    const double d = 1.0 - dot / (q.norm() * entry.P.norm());
    if (first || d < best || (d == best && key < best_key)) {
      best = d;
      best_key = key;
      first = false;
    }
  }
  return best_key;
}

}  // namespace

TEST_CASE("base styles: single clip, exact mean, summation oracle") {
  Vec v1 = Vec::Zero(kBaseDim);
  v1(0) = 1.0;
  Vec v2 = Vec::Zero(kBaseDim);
  v2(1) = 1.0;

  auto single = build_base_styles({{"a", {v1}}});
  CHECK((single.at("a") - v1).cwiseAbs().maxCoeff() == 0.0);

  auto mean = build_base_styles({{"a", {v1, v2}}});
  CHECK(mean.at("a")(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mean.at("a")(1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mean.at("a").tail(kBaseDim - 2).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(3);
  std::vector<Vec> vs;
  for (int i = 0; i < 7; ++i) vs.push_back(random_vec(kBaseDim, rng));
  auto got = build_base_styles({{"a", vs}});
  Vec acc = Vec::Zero(kBaseDim);
  for (const auto& v : vs) acc += v;
  CHECK((got.at("a") - acc / 7.0).cwiseAbs().maxCoeff() < 1e-7);

  CHECK_THROWS_AS(build_base_styles({{"a", {}}}), EmptySpeaker);
}

TEST_CASE("style library: one clip per key stores [R || E]") {
  Rng rng(5);
  Vec r = random_vec(kBaseDim, rng);
  Vec e = random_vec(kEmotionDim, rng);
  auto lib = build_style_library({{"a", 0, e}}, {{"a", r}}, {"neutral"});
  const auto& entry = lib.entries().at({"a", 0});
  CHECK((entry.P.head(kBaseDim) - r).cwiseAbs().maxCoeff() == 0.0);
  CHECK((entry.P.tail(kEmotionDim) - e).cwiseAbs().maxCoeff() == 0.0);
  CHECK(entry.count == 1);
}

TEST_CASE("style library: incremental adds equal the batch build") {
  Rng rng(7);
  Vec r = random_vec(kBaseDim, rng);
  Vec e1 = random_vec(kEmotionDim, rng);
  Vec e2 = random_vec(kEmotionDim, rng);
  Vec e3 = random_vec(kEmotionDim, rng);

  auto batch = build_style_library({{"a", 1, e1}, {"a", 1, e2}, {"a", 1, e3}},
                                   {{"a", r}}, {"x", "y"});

  StyleLibrary inc;
  inc.emotion_names = {"x", "y"};
  inc.set_base_style("a", r);
  inc.add_sample("a", 1, e1);
  inc.add_sample("a", 1, e2);
  inc.add_sample("a", 1, e3);

  const Vec& pb = batch.entries().at({"a", 1}).P;
  const Vec& pi = inc.entries().at({"a", 1}).P;
  CHECK((pb - pi).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(inc.entries().at({"a", 1}).count == 3);
}

TEST_CASE("style library: cardinality and missing-base error") {
  Rng rng(9);
  auto lib = random_library(2, 3, rng);
  CHECK(lib.size() == 6);
  for (const auto& [key, entry] : lib.entries()) {
    CHECK(entry.P.size() == kStyleDim);
    // first 512 components equal the speaker base exactly
    CHECK((entry.P.head(kBaseDim) - *lib.base_style(key.speaker)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  StyleLibrary empty_base;
  CHECK_THROWS_AS(empty_base.add_sample("ghost", 0, Vec::Zero(kEmotionDim)),
                  MissingBase);
}

TEST_CASE("cosine distance: identical, orthogonal, antiparallel, zero") {
  Vec u(2), v(2);
  u << 1, 0;
  v << 1, 0;
  CHECK(cosine_distance(u, v) == doctest::Approx(0.0).epsilon(1e-15));
  v << 0, 1;
  CHECK(cosine_distance(u, v) == doctest::Approx(1.0).epsilon(1e-15));
  v << -1, 0;
  CHECK(cosine_distance(u, v) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_distance(u, Vec::Zero(2)), ZeroVector);
}

TEST_CASE("retrieve: exact entry match comes back with distance 0") {
  Rng rng(11);
  auto lib = random_library(3, 2, rng);
  const auto& [key, entry] = *lib.entries().begin();
  auto got = retrieve_style(entry.P.tail(kEmotionDim), entry.P.head(kBaseDim), lib);
  CHECK(got.key == key);
  CHECK(got.distance < 1e-12);
}

TEST_CASE("retrieve: equals an independent brute-force scan") {
  Rng rng(13);
  auto lib = random_library(25, 2, rng);  // 50 entries
  for (int trial = 0; trial < 40; ++trial) {
    Vec e = random_vec(kEmotionDim, rng);
    Vec r = random_vec(kBaseDim, rng);
    auto got = retrieve_style(e, r, lib);
    CHECK(got.key == brute_force_argmin(e, r, lib));
  }
}

TEST_CASE("retrieve: invariant under positive scaling of the query") {
  Rng rng(17);
  auto lib = random_library(4, 3, rng);
  Vec e = random_vec(kEmotionDim, rng);
  Vec r = random_vec(kBaseDim, rng);
  auto a = retrieve_style(e, r, lib);
  auto b = retrieve_style(3.7 * e, 3.7 * r, lib);
  CHECK(a.key == b.key);

  // a query equal to a positive multiple of an entry returns that entry
  const auto& [key, entry] = *std::next(lib.entries().begin(), 2);
  auto c = retrieve_style(2.5 * entry.P.tail(kEmotionDim),
                          2.5 * entry.P.head(kBaseDim), lib);
  CHECK(c.key == key);
}

TEST_CASE("retrieve: exact ties resolve to the lowest key") {
  Rng rng(15);
  StyleLibrary lib;
  lib.emotion_names = {"angry", "neutral"};
  Vec r = random_vec(kBaseDim, rng);
  Vec e = random_vec(kEmotionDim, rng);
  lib.set_base_style("spkB", r);
  lib.set_base_style("spkA", r);
  // identical entries under four keys
  for (const char* s : {"spkA", "spkB"}) {
    lib.add_sample(s, 1, e);
    lib.add_sample(s, 0, e);
  }
  auto got = retrieve_style(random_vec(kEmotionDim, rng), random_vec(kBaseDim, rng), lib);
  CHECK(got.key.speaker == "spkA");
  CHECK(got.key.emotion == 0);
}

TEST_CASE("retrieve: matches the scan on a 10^4-entry library") {
  Rng rng(16);
  auto lib = random_library(1250, 8, rng);  // 10'000 entries
  REQUIRE(lib.size() == 10000);
  for (int trial = 0; trial < 3; ++trial) {
    Vec e = random_vec(kEmotionDim, rng);
    Vec r = random_vec(kBaseDim, rng);
    CHECK(retrieve_style(e, r, lib).key == brute_force_argmin(e, r, lib));
  }
}

TEST_CASE("retrieve: empty library throws") {
  StyleLibrary lib;
  CHECK_THROWS_AS(retrieve_style(Vec::Ones(kEmotionDim), Vec::Ones(kBaseDim), lib),
                  EmptyLibrary);
}

TEST_CASE("retrieve: projection applies the learned linear map") {
  Rng rng(19);
  auto lib = random_library(2, 2, rng);
  Mat w = Mat::Zero(kStyleDim, 4);
  w(0, 0) = 1.0;  // projected(0) = S(0)
  Vec b = Vec::Zero(4);
  b(1) = 2.0;
  Vec e = random_vec(kEmotionDim, rng);
  Vec r = random_vec(kBaseDim, rng);
  auto got = retrieve_style(e, r, lib, &w, &b);
  REQUIRE(got.projected.size() == 4);
  CHECK(got.projected(0) == doctest::Approx(got.S(0)).epsilon(1e-15));
  CHECK(got.projected(1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("persist/load: bit-exact round trip on a 2 x 3 library") {
  Rng rng(23);
  auto lib = random_library(2, 3, rng);
  const auto path = std::filesystem::temp_directory_path() / "pestalk_lib.json";
  persist_library(lib, path.string());
  auto back = load_library(path.string());

  REQUIRE(back.size() == lib.size());
  CHECK(back.emotion_names == lib.emotion_names);
  for (const auto& [key, entry] : lib.entries()) {
    const auto& b = back.entries().at(key);
    CHECK(b.count == entry.count);
    for (int i = 0; i < kStyleDim; ++i) CHECK(b.P(i) == entry.P(i));
  }
  std::filesystem::remove(path);
}

TEST_CASE("load: truncated file and version mismatch give FormatError") {
  Rng rng(29);
  auto lib = random_library(1, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "pestalk_corrupt.json";
  persist_library(lib, path.string());

  // truncate
  {
    std::ifstream in(path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
  }
  CHECK_THROWS_AS(load_library(path.string()), FormatError);

  // version mismatch names both versions
  persist_library(lib, path.string());
  {
    std::ifstream in(path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const auto pos = bytes.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 12, "\"version\": 9");
    std::ofstream out(path);
    out << bytes;
  }
  try {
    load_library(path.string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
  }
  std::filesystem::remove(path);
}
