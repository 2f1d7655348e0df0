#pragma once

#include <map>
#include <string>
#include <vector>

#include "pestalk/blendshape.hpp"
#include "pestalk/mat.hpp"

namespace pestalk::mesh {

struct TriangleMesh {
  Mat vertices;               // V x 3
  Eigen::MatrixXi triangles;  // F x 3, zero-based
  std::map<std::string, std::vector<int>> region_masks;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int triangle_count() const { return static_cast<int>(triangles.rows()); }
};

// Wavefront OBJ, v/f records only.
TriangleMesh load_obj(const std::string& path);
void save_obj(const TriangleMesh& mesh, const std::string& path);

// Neutral plus 52 templates sharing its topology.
struct BlendshapeBasis {
  TriangleMesh neutral;
  std::vector<TriangleMesh> templates;  // kNumChannels meshes

  void validate() const;  // throws BadBasis on topology mismatch
};

// Directory layout: neutral.obj, bs_000.obj .. bs_051.obj, meta.json
// (channel names + the neutral's region masks).
BlendshapeBasis load_basis_dir(const std::string& dir);
void save_basis_dir(const BlendshapeBasis& basis, const std::string& dir);

// Delta blendshape model: V_t = neutral + sum_k b_tk (T_k - neutral).
std::vector<Mat> apply_blendshapes(const BlendshapeBasis& basis,
                                   const bs::BlendshapeSequence& coeffs);

// Sumner-Popovic deformation transfer. correspondence maps every target
// triangle to a source triangle. Translation is gauged by anchoring target
// vertex 0 to its tgt_neutral position.
TriangleMesh deformation_transfer(const TriangleMesh& src_neutral,
                                  const TriangleMesh& src_deformed,
                                  const TriangleMesh& tgt_neutral,
                                  const std::vector<int>& correspondence);

// One transfer per source template, sharing the factorized target system.
BlendshapeBasis build_templates(const BlendshapeBasis& src_basis,
                                const TriangleMesh& tgt_neutral,
                                const std::vector<int>& correspondence);

std::vector<int> identity_correspondence(int triangle_count);

// correspondence file: {"map": [src triangle per tgt triangle]}
std::vector<int> load_correspondence(const std::string& path);

// ---------------------------------------------------------------------------
// Procedural fixtures (unit cube; a small UV-sphere "head" with lip /
// eye_forehead / upper_face masks; a 52-template basis of localized bumps).

TriangleMesh make_cube();
TriangleMesh make_test_head(int lat = 12, int lon = 16);
BlendshapeBasis make_synthetic_basis(const TriangleMesh& head, double amplitude = 0.08);

}  // namespace pestalk::mesh
