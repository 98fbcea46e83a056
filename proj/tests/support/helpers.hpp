#pragma once

#include <functional>
#include <string>
#include <vector>

#include "leap/occupancy.hpp"
#include "leap/synthetic.hpp"

namespace leap::test {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

Mat random_mat(Rng& rng, Index rows, Index cols, double scale = 1.0);

// Central-difference audit of the gradients a scalar-valued tape graph
// assigns to its leaf inputs. Every entry of every input is perturbed.
// Returns the worst relative error, with max(|fd|, |an|, floor) as the
// denominator.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double max_grad_error(const LossFn& f, const std::vector<Mat>& inputs, double h = 1e-6,
                      double floor = 1e-6);

// Generalized winding number: the summed signed solid angle of all faces
// around p over 4 pi. Greater than one half means inside for watertight,
// outward-oriented, non-self-intersecting meshes.
double winding_number(const TriMesh& mesh, const Vec3& p);

// Small bodies and field dims that keep unit tests fast.
BodyModel tiny_body(std::uint64_t seed = 7);
ModelConfig tiny_model_config();

// Full-pipeline finite-difference audit on a small model: stratified entries
// of every parameter tensor plus all query-point coordinates, through an
// occupancy query in training mode.
struct FdAudit {
  long checked = 0;
  long bad = 0;
  long pt_checked = 0;
  long pt_bad = 0;
  double worst = 0.0;
};
FdAudit fd_audit_model(std::uint64_t seed, int per_tensor = 4, Index points = 6, double h = 1e-4,
                       double tol = 1e-4);

}  // namespace leap::test
