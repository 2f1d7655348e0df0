#include "pestalk/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pestalk/errors.hpp"
#include "pestalk/rng.hpp"

namespace pestalk::mesh {

using nlohmann::json;

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Eigen::RowVector3i> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Eigen::RowVector3d v;
      ss >> v(0) >> v(1) >> v(2);
      verts.push_back(v);
    } else if (tag == "f") {
      Eigen::RowVector3i f;
      for (int i = 0; i < 3; ++i) {
        std::string token;
        ss >> token;
        f(i) = std::stoi(token.substr(0, token.find('/'))) - 1;
      }
      tris.push_back(f);
    }
  }
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = verts[i];
  mesh.triangles.resize(static_cast<int>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      if (tris[i](c) < 0 || tris[i](c) >= mesh.vertex_count()) {
        throw FormatError(path + ": face index out of range");
      }
    }
    mesh.triangles.row(static_cast<int>(i)) = tris[i];
  }
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[96];
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", mesh.vertices(v, 0),
                  mesh.vertices(v, 1), mesh.vertices(v, 2));
    out << buf;
  }
  for (int f = 0; f < mesh.triangle_count(); ++f) {
    out << "f " << mesh.triangles(f, 0) + 1 << " " << mesh.triangles(f, 1) + 1
        << " " << mesh.triangles(f, 2) + 1 << "\n";
  }
  if (!out) throw IoError("short write to " + path);
}

void BlendshapeBasis::validate() const {
  if (static_cast<int>(templates.size()) != bs::kNumChannels) {
    throw BadBasis("expected 52 templates, got " + std::to_string(templates.size()));
  }
  for (const auto& t : templates) {
    if (t.vertex_count() != neutral.vertex_count() ||
        t.triangle_count() != neutral.triangle_count()) {
      throw BadBasis("template topology differs from neutral");
    }
  }
}

BlendshapeBasis load_basis_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  BlendshapeBasis basis;
  basis.neutral = load_obj((fs::path(dir) / "neutral.obj").string());
  char name[16];
  for (int k = 0; k < bs::kNumChannels; ++k) {
    std::snprintf(name, sizeof name, "bs_%03d.obj", k);
    basis.templates.push_back(load_obj((fs::path(dir) / name).string()));
  }
  const auto meta_path = fs::path(dir) / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    json meta = json::parse(in, nullptr, /*allow_exceptions=*/true);
    if (meta.contains("region_masks")) {
      for (const auto& [name_, idx] : meta["region_masks"].items()) {
        basis.neutral.region_masks[name_] = idx.get<std::vector<int>>();
      }
    }
  }
  basis.validate();
  return basis;
}

void save_basis_dir(const BlendshapeBasis& basis, const std::string& dir) {
  namespace fs = std::filesystem;
  basis.validate();
  fs::create_directories(dir);
  save_obj(basis.neutral, (fs::path(dir) / "neutral.obj").string());
  char name[16];
  for (int k = 0; k < bs::kNumChannels; ++k) {
    std::snprintf(name, sizeof name, "bs_%03d.obj", k);
    save_obj(basis.templates[k], (fs::path(dir) / name).string());
  }
  json meta;
  meta["channels"] = std::vector<std::string>(bs::channel_names().begin(),
                                              bs::channel_names().end());
  meta["region_masks"] = json::object();
  for (const auto& [name_, idx] : basis.neutral.region_masks) {
    meta["region_masks"][name_] = idx;
  }
  std::ofstream out(fs::path(dir) / "meta.json");
  out << meta.dump(1) << "\n";
  if (!out) throw IoError("short write to meta.json in " + dir);
}

std::vector<Mat> apply_blendshapes(const BlendshapeBasis& basis,
                                   const bs::BlendshapeSequence& coeffs) {
  basis.validate();
  if (coeffs.coeffs.cols() != bs::kNumChannels) {
    throw BadDims("expected 52 coefficients per frame");
  }
  const int V = basis.neutral.vertex_count();
  // precompute deltas
  std::vector<Mat> delta(bs::kNumChannels);
  for (int k = 0; k < bs::kNumChannels; ++k) {
    delta[k] = basis.templates[k].vertices - basis.neutral.vertices;
  }
  std::vector<Mat> out;
  out.reserve(coeffs.frames());
  for (int t = 0; t < coeffs.frames(); ++t) {
    Mat v = basis.neutral.vertices;
    for (int k = 0; k < bs::kNumChannels; ++k) {
      const double b = coeffs.coeffs(t, k);
      if (b != 0.0) v += b * delta[k];
    }
    out.push_back(std::move(v));
    (void)V;
  }
  return out;
}

namespace {

// [e1, e2, n] with n = e1 x e2 / sqrt(|e1 x e2|)
Eigen::Matrix3d tri_frame(const TriangleMesh& mesh, int tri) {
  const auto f = mesh.triangles.row(tri);
  const Eigen::Vector3d v1 = mesh.vertices.row(f(0));
  const Eigen::Vector3d e1 = mesh.vertices.row(f(1)).transpose() - v1;
  const Eigen::Vector3d e2 = mesh.vertices.row(f(2)).transpose() - v1;
  const Eigen::Vector3d cross = e1.cross(e2);
  const double len = cross.norm();
  if (len < 1e-14) {
    throw DegenerateTriangle("triangle " + std::to_string(tri) + " has zero area");
  }
  Eigen::Matrix3d frame;
  frame.col(0) = e1;
  frame.col(1) = e2;
  frame.col(2) = cross / std::sqrt(len);
  return frame;
}

// Prefactored least-squares system for one target mesh; reusable across all
// 52 template transfers.
class TransferSystem {
public:
  explicit TransferSystem(const TriangleMesh& tgt) : tgt_(tgt) {
    const int V = tgt.vertex_count();
    const int F = tgt.triangle_count();
    if (V < 1 || F < 1) throw BadDims("empty target mesh");
    n_unknowns_ = (V - 1) + F;  // vertex 0 anchored; one fourth vertex per tri

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(F) * 12);
    anchor_coeff_ = Vec::Zero(3 * F);
    inv_frames_.resize(F);
    for (int j = 0; j < F; ++j) {
      const Eigen::Matrix3d B = tri_frame(tgt, j).inverse();
      inv_frames_[j] = B;
      const auto f = tgt.triangles.row(j);
      for (int c = 0; c < 3; ++c) {
        const int row = 3 * j + c;
        const double w1 = -(B(0, c) + B(1, c) + B(2, c));
        add_coeff(trips, row, f(0), w1);
        add_coeff(trips, row, f(1), B(0, c));
        add_coeff(trips, row, f(2), B(1, c));
        trips.emplace_back(row, (V - 1) + j, B(2, c));  // fourth vertex
      }
    }
    A_.resize(3 * F, n_unknowns_);
    A_.setFromTriplets(trips.begin(), trips.end());
    const Eigen::SparseMatrix<double> ata = Eigen::SparseMatrix<double>(A_.transpose()) * A_;
    ldlt_.compute(ata);
    if (ldlt_.info() != Eigen::Success) {
      throw SingularSystem("target transfer system is not positive definite");
    }
    // rank deficiency (e.g. a target component detached from the anchor)
    // shows up as vanishing pivots
    const Vec d = ldlt_.vectorD();
    if (d.minCoeff() < 1e-10 * d.maxCoeff()) {
      throw SingularSystem("target transfer system is rank deficient");
    }
  }

  // rhs: per-axis stacked rows S_corr(j)(axis, c); returns the deformed target
  TriangleMesh solve(const std::vector<Eigen::Matrix3d>& source_transforms,
                     const std::vector<int>& corr) const {
    const int V = tgt_.vertex_count();
    const int F = tgt_.triangle_count();
    TriangleMesh out = tgt_;
    for (int axis = 0; axis < 3; ++axis) {
      Vec b(3 * F);
      for (int j = 0; j < F; ++j) {
        const Eigen::Matrix3d& s = source_transforms[corr[j]];
        for (int c = 0; c < 3; ++c) {
          b(3 * j + c) = s(axis, c) - anchor_coeff_(3 * j + c) * tgt_.vertices(0, axis);
        }
      }
      const Vec x = ldlt_.solve(A_.transpose() * b);
      if (ldlt_.info() != Eigen::Success || !x.allFinite()) {
        throw SingularSystem("transfer system solve failed (disconnected target?)");
      }
      for (int v = 1; v < V; ++v) out.vertices(v, axis) = x(v - 1);
    }
    return out;
  }

private:
  void add_coeff(std::vector<Eigen::Triplet<double>>& trips, int row, int vertex,
                 double w) {
    if (vertex == 0) {
      anchor_coeff_(row) += w;  // anchored: moves to the rhs
    } else {
      trips.emplace_back(row, vertex - 1, w);
    }
  }

  const TriangleMesh& tgt_;
  int n_unknowns_ = 0;
  Eigen::SparseMatrix<double> A_;
  Vec anchor_coeff_;
  std::vector<Eigen::Matrix3d> inv_frames_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

std::vector<Eigen::Matrix3d> source_transforms(const TriangleMesh& src_neutral,
                                               const TriangleMesh& src_deformed) {
  if (src_neutral.triangle_count() != src_deformed.triangle_count() ||
      src_neutral.vertex_count() != src_deformed.vertex_count()) {
    throw BadDims("source pair topology mismatch");
  }
  std::vector<Eigen::Matrix3d> out(src_neutral.triangle_count());
  for (int j = 0; j < src_neutral.triangle_count(); ++j) {
    out[j] = tri_frame(src_deformed, j) * tri_frame(src_neutral, j).inverse();
  }
  return out;
}

void check_correspondence(const std::vector<int>& corr, int tgt_tris, int src_tris) {
  if (static_cast<int>(corr.size()) != tgt_tris) {
    throw BadDims("correspondence must cover every target triangle");
  }
  for (int s : corr) {
    if (s < 0 || s >= src_tris) throw BadDims("correspondence index out of range");
  }
}

}  // namespace

TriangleMesh deformation_transfer(const TriangleMesh& src_neutral,
                                  const TriangleMesh& src_deformed,
                                  const TriangleMesh& tgt_neutral,
                                  const std::vector<int>& correspondence) {
  check_correspondence(correspondence, tgt_neutral.triangle_count(),
                       src_neutral.triangle_count());
  const auto transforms = source_transforms(src_neutral, src_deformed);
  TransferSystem system(tgt_neutral);
  return system.solve(transforms, correspondence);
}

BlendshapeBasis build_templates(const BlendshapeBasis& src_basis,
                                const TriangleMesh& tgt_neutral,
                                const std::vector<int>& correspondence) {
  src_basis.validate();
  check_correspondence(correspondence, tgt_neutral.triangle_count(),
                       src_basis.neutral.triangle_count());
  TransferSystem system(tgt_neutral);
  BlendshapeBasis out;
  out.neutral = tgt_neutral;
  out.templates.reserve(bs::kNumChannels);
  for (int k = 0; k < bs::kNumChannels; ++k) {
    const auto transforms = source_transforms(src_basis.neutral, src_basis.templates[k]);
    out.templates.push_back(system.solve(transforms, correspondence));
  }
  return out;
}

std::vector<int> identity_correspondence(int triangle_count) {
  std::vector<int> out(triangle_count);
  for (int i = 0; i < triangle_count; ++i) out[i] = i;
  return out;
}

std::vector<int> load_correspondence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": parse error at byte " + std::to_string(e.byte));
  }
  if (root.is_object() && root.contains("map")) return root["map"].get<std::vector<int>>();
  if (root.is_array()) return root.get<std::vector<int>>();
  throw FormatError(path + ": expected {\"map\": [...]} or a plain array");
}

// ---------------------------------------------------------------------------
// fixtures

TriangleMesh make_cube() {
  TriangleMesh m;
  m.vertices.resize(8, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1;
  m.triangles.resize(12, 3);
  m.triangles << 0, 2, 1, 0, 3, 2,  // bottom (z=0)
      4, 5, 6, 4, 6, 7,             // top (z=1)
      0, 1, 5, 0, 5, 4,             // front (y=0)
      3, 6, 2, 3, 7, 6,             // back (y=1)
      0, 4, 7, 0, 7, 3,             // left (x=0)
      1, 2, 6, 1, 6, 5;             // right (x=1)
  return m;
}

TriangleMesh make_test_head(int lat, int lon) {
  // UV sphere, y up, unit radius; front is z > 0.
  TriangleMesh m;
  const int rings = lat - 1;  // interior rings
  const int V = rings * lon + 2;
  m.vertices.resize(V, 3);
  int idx = 0;
  for (int i = 1; i < lat; ++i) {
    const double theta = M_PI * i / lat;  // from +y pole
    for (int j = 0; j < lon; ++j) {
      const double phi = 2.0 * M_PI * j / lon;
      m.vertices(idx, 0) = std::sin(theta) * std::sin(phi);
      m.vertices(idx, 1) = std::cos(theta);
      m.vertices(idx, 2) = std::sin(theta) * std::cos(phi);
      ++idx;
    }
  }
  const int top = idx++;
  const int bottom = idx++;
  m.vertices.row(top) << 0, 1, 0;
  m.vertices.row(bottom) << 0, -1, 0;

  std::vector<Eigen::RowVector3i> tris;
  auto ring = [&](int i, int j) { return i * lon + (j % lon); };
  for (int j = 0; j < lon; ++j) {
    tris.push_back({top, ring(0, j), ring(0, j + 1)});
    tris.push_back({bottom, ring(rings - 1, j + 1), ring(rings - 1, j)});
  }
  for (int i = 0; i + 1 < rings; ++i) {
    for (int j = 0; j < lon; ++j) {
      tris.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      tris.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  m.triangles.resize(static_cast<int>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) m.triangles.row(static_cast<int>(i)) = tris[i];

  auto& masks = m.region_masks;
  for (int v = 0; v < V; ++v) {
    const double y = m.vertices(v, 1), z = m.vertices(v, 2);
    if (y > -0.55 && y < -0.2 && z > 0.3) masks["lip"].push_back(v);
    if (y > 0.15 && y < 0.75 && z > 0.2) masks["eye_forehead"].push_back(v);
    if (y > 0.1) masks["upper_face"].push_back(v);
  }
  if (masks["lip"].empty() || masks["eye_forehead"].empty() || masks["upper_face"].empty()) {
    throw BadMask("test head resolution too low for region masks");
  }
  return m;
}

BlendshapeBasis make_synthetic_basis(const TriangleMesh& head, double amplitude) {
  BlendshapeBasis basis;
  basis.neutral = head;
  const auto& names = bs::channel_names();

  auto mask_center = [&](const std::string& mask) {
    Eigen::RowVector3d c = Eigen::RowVector3d::Zero();
    const auto& idx = head.region_masks.at(mask);
    for (int v : idx) c += head.vertices.row(v);
    return Eigen::RowVector3d(c / static_cast<double>(idx.size()));
  };
  const Eigen::RowVector3d lip_c = mask_center("lip");
  const Eigen::RowVector3d eye_c = mask_center("eye_forehead");

  for (int k = 0; k < bs::kNumChannels; ++k) {
    const std::string& n = names[k];
    const bool upper = n.rfind("brow", 0) == 0 || n.rfind("eye", 0) == 0 || n == "cheekPuff";
    Eigen::RowVector3d center = upper ? eye_c : lip_c;
    // deterministic per-channel offset spreads the bumps around the region
    Rng rng(mix_seed(0x9e77, static_cast<std::uint64_t>(k)));
    center(0) += 0.35 * (rng.uniform() - 0.5);
    center(1) += 0.25 * (rng.uniform() - 0.5);
    center.normalize();

    TriangleMesh tmpl = head;
    for (int v = 0; v < head.vertex_count(); ++v) {
      const Eigen::RowVector3d p = head.vertices.row(v);
      const double d2 = (p.normalized() - center).squaredNorm();
      const double falloff = std::exp(-d2 / 0.08);
      tmpl.vertices.row(v) += amplitude * falloff * p.normalized();
    }
    basis.templates.push_back(std::move(tmpl));
  }
  basis.validate();
  return basis;
}

}  // namespace pestalk::mesh
