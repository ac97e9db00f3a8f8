#pragma once

#include "mechreg/kernel.hpp"
#include "mechreg/rng.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace mechreg {

using Permutation = std::vector<int>;

/// Finite group acting on an H×W periodic grid by pixel permutations.
///
/// Element g acts on a single-channel image by (g·x)[k] = x[perm_g[k]] and on
/// multi-channel images channel by channel (layout: c·H·W + pixel).
/// Group axioms are checked at construction.
class GroupSpec {
 public:
  GroupSpec(int height, int width, std::vector<Permutation> elements);
  /// Periodic translations by offsets that are multiples of the stride.
  static GroupSpec translations(int height, int width, int stride_y = 1, int stride_x = 1);
  static GroupSpec trivial(int height, int width);

  int height() const { return h_; }
  int width() const { return w_; }
  int pixels() const { return h_ * w_; }
  std::size_t size() const { return elements_.size(); }
  const Permutation& element(std::size_t g) const { return elements_[g]; }
  const std::vector<Permutation>& elements() const { return elements_; }
  std::size_t identity() const { return identity_; }
  std::size_t inverse(std::size_t g) const { return inverse_[g]; }
  /// Index of the element a∘b, i.e. acting first with b then with a.
  std::size_t compose(std::size_t a, std::size_t b) const { return table_[a * size() + b]; }

  /// Translation offsets, present only for translation groups.
  bool is_translation() const { return !offsets_.empty(); }
  std::pair<int, int> offset(std::size_t g) const { return offsets_.at(g); }
  std::pair<int, int> stride() const { return stride_; }
  /// Translations by multiples of `stride`; requires a translation group.
  GroupSpec subgroup(int stride_y, int stride_x) const;

  /// g·x for an image with `channels` channels.
  Vector act(std::size_t g, const Eigen::Ref<const Vector>& x, int channels = 1) const;
  /// Permutation matrix of g on `channels` channels.
  Matrix matrix(std::size_t g, int channels = 1) const;

 private:
  void build_tables();

  int h_, w_;
  std::vector<Permutation> elements_;
  std::vector<std::pair<int, int>> offsets_;
  std::pair<int, int> stride_{1, 1};
  std::vector<std::size_t> table_;
  std::vector<std::size_t> inverse_;
  std::size_t identity_ = 0;
};

/// Reduced equivariant multichannel kernel C(x,x') = E_{G²}[gᵀ R K(Pgx, Pg'x') R g'].
///
/// `patch` and `range` are pixel index sets; P extends over the c₁ input
/// channels and R over the c₂ output channels. Masks are packed: the base
/// kernel sees only the c₁·|P| patch entries.
struct RemSpec {
  GroupSpec group;
  std::vector<int> patch;
  std::vector<int> range;
  int in_channels = 1;
  int out_channels = 1;
  KernelSpec base;
  bool monte_carlo = false;
  std::size_t mc_samples = 0;
  std::uint64_t mc_seed = 0;

  RemSpec(GroupSpec g, std::vector<int> patch_mask, std::vector<int> range_mask, KernelSpec base_kernel,
          int c_in = 1, int c_out = 1);

  Eigen::Index input_dim() const { return in_channels * group.pixels(); }
  Eigen::Index output_dim() const { return out_channels * group.pixels(); }
  Eigen::Index patch_dim() const { return in_channels * static_cast<Eigen::Index>(patch.size()); }
  Eigen::Index range_dim() const { return out_channels * static_cast<Eigen::Index>(range.size()); }

  /// Packed P·g·x.
  Vector project_patch(std::size_t g, const Eigen::Ref<const Vector>& x) const;
};

/// Rectangular pixel mask [y0, y0+hh) × [x0, x0+ww), wrapped periodically.
std::vector<int> rect_mask(const GroupSpec& g, int y0, int x0, int hh, int ww);

/// C(x,x') as a dense (c₂HW)×(c₂HW) block. Averages exactly over G², or over
/// `mc_samples` random pairs when the spec asks for Monte-Carlo.
Matrix rem_kernel_eval(const RemSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp);

/// Monte-Carlo estimate together with entrywise standard errors.
struct RemMonteCarlo {
  Matrix mean;
  Matrix standard_error;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< sampled (g, g')
};
RemMonteCarlo rem_kernel_monte_carlo(const RemSpec& spec, const Eigen::Ref<const Vector>& x,
                                     const Eigen::Ref<const Vector>& xp, std::size_t samples, std::uint64_t seed);

/// REM feature map Ψᵀ(x)w = E_G[gᵀ(w·φ̄(Pgx))] with φ̄(u) = (a(u), 1).
/// w has shape (c₂|R|) × (c₁|P| + 1).
Vector rem_feature_apply(const RemSpec& spec, const Activation& a, const Matrix& w, const Eigen::Ref<const Vector>& x);

/// Identification of the subgroup-translated range masks with a coarse grid.
struct DownsampleMap {
  int coarse_height = 0;
  int coarse_width = 0;
  int range_size = 0;
  /// fine_index[(cy·coarse_width + cx)·range_size + t] = fine pixel index.
  std::vector<int> fine_index;

  /// Gather a single-channel fine image onto the coarse grid.
  Vector gather(const Eigen::Ref<const Vector>& fine) const;
};

/// Requires a translation group whose stride divides the grid.
DownsampleMap downsample_range(const GroupSpec& group, const std::vector<int>& range);
DownsampleMap downsample_range(const RemSpec& spec);

}  // namespace mechreg
