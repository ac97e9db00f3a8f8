#include "mechreg/rem.hpp"

#include "kernel_detail.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mechreg {

GroupSpec::GroupSpec(int height, int width, std::vector<Permutation> elements)
    : h_(height), w_(width), elements_(std::move(elements)) {
  require(h_ > 0 && w_ > 0, ErrorCode::invalid_argument, "grid dimensions must be positive");
  require(!elements_.empty(), ErrorCode::invalid_argument, "a group needs at least one element");
  for (const auto& perm : elements_) {
    require(static_cast<int>(perm.size()) == pixels(), ErrorCode::dimension_mismatch,
            "group element size differs from grid size");
    std::vector<char> seen(perm.size(), 0);
    for (int v : perm) {
      require(v >= 0 && v < pixels() && !seen[v], ErrorCode::invalid_argument,
              "group element is not a permutation of the grid");
      seen[v] = 1;
    }
  }
  build_tables();
}

void GroupSpec::build_tables() {
  const std::size_t n = elements_.size();
  std::map<Permutation, std::size_t> index;
  for (std::size_t g = 0; g < n; ++g) {
    auto [it, inserted] = index.emplace(elements_[g], g);
    require(inserted, ErrorCode::invalid_argument, "group elements must be distinct");
  }
  Permutation id(pixels());
  std::iota(id.begin(), id.end(), 0);
  auto idit = index.find(id);
  require(idit != index.end(), ErrorCode::invalid_argument, "group must contain the identity");
  identity_ = idit->second;

  table_.assign(n * n, 0);
  Permutation c(pixels());
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      // (a·(b·x))[k] = x[perm_b[perm_a[k]]]
      for (int k = 0; k < pixels(); ++k) c[k] = elements_[b][elements_[a][k]];
      auto it = index.find(c);
      require(it != index.end(), ErrorCode::invalid_argument, "group is not closed under composition");
      table_[a * n + b] = it->second;
    }
  inverse_.assign(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (table_[a * n + b] == identity_) inverse_[a] = b;
  for (std::size_t a = 0; a < n; ++a)
    require(inverse_[a] < n, ErrorCode::invalid_argument, "group element without inverse");
}

GroupSpec GroupSpec::translations(int height, int width, int stride_y, int stride_x) {
  require(height > 0 && width > 0, ErrorCode::invalid_argument, "grid dimensions must be positive");
  require(stride_y > 0 && stride_x > 0 && height % stride_y == 0 && width % stride_x == 0,
          ErrorCode::invalid_argument,
          "stride (" + std::to_string(stride_y) + "," + std::to_string(stride_x) + ") does not divide grid " +
              std::to_string(height) + "x" + std::to_string(width));
  std::vector<Permutation> els;
  std::vector<std::pair<int, int>> offs;
  for (int dy = 0; dy < height; dy += stride_y)
    for (int dx = 0; dx < width; dx += stride_x) {
      Permutation p(height * width);
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) p[i * width + j] = ((i + dy) % height) * width + (j + dx) % width;
      els.push_back(std::move(p));
      offs.emplace_back(dy, dx);
    }
  GroupSpec g(height, width, std::move(els));
  g.offsets_ = std::move(offs);
  g.stride_ = {stride_y, stride_x};
  return g;
}

GroupSpec GroupSpec::trivial(int height, int width) {
  Permutation id(height * width);
  std::iota(id.begin(), id.end(), 0);
  GroupSpec g(height, width, {id});
  g.offsets_ = {{0, 0}};
  g.stride_ = {height, width};
  return g;
}

GroupSpec GroupSpec::subgroup(int stride_y, int stride_x) const {
  require(is_translation(), ErrorCode::invalid_argument, "subgroup by stride needs a translation group");
  require(stride_y % stride_.first == 0 && stride_x % stride_.second == 0, ErrorCode::invalid_argument,
          "subgroup stride must be a multiple of the group stride");
  return translations(h_, w_, stride_y, stride_x);
}

Vector GroupSpec::act(std::size_t g, const Eigen::Ref<const Vector>& x, int channels) const {
  require(x.size() == static_cast<Eigen::Index>(channels) * pixels(), ErrorCode::dimension_mismatch,
          "image size differs from grid size times channels");
  const auto& perm = elements_.at(g);
  Vector out(x.size());
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < pixels(); ++k) out(c * pixels() + k) = x(c * pixels() + perm[k]);
  return out;
}

Matrix GroupSpec::matrix(std::size_t g, int channels) const {
  const auto& perm = elements_.at(g);
  const int n = channels * pixels();
  Matrix M = Matrix::Zero(n, n);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < pixels(); ++k) M(c * pixels() + k, c * pixels() + perm[k]) = 1.0;
  return M;
}

namespace {

void check_mask(const GroupSpec& g, const std::vector<int>& mask, const char* what) {
  require(!mask.empty(), ErrorCode::invalid_argument, std::string(what) + " mask is empty");
  std::vector<char> seen(g.pixels(), 0);
  for (int v : mask) {
    require(v >= 0 && v < g.pixels(), ErrorCode::invalid_argument, std::string(what) + " mask index out of grid");
    require(!seen[v], ErrorCode::invalid_argument, std::string(what) + " mask has a repeated pixel");
    seen[v] = 1;
  }
}

}  // namespace

RemSpec::RemSpec(GroupSpec g, std::vector<int> patch_mask, std::vector<int> range_mask, KernelSpec base_kernel,
                 int c_in, int c_out)
    : group(std::move(g)),
      patch(std::move(patch_mask)),
      range(std::move(range_mask)),
      in_channels(c_in),
      out_channels(c_out),
      base(std::move(base_kernel)) {
  require(c_in > 0 && c_out > 0, ErrorCode::invalid_argument, "channel counts must be positive");
  check_mask(group, patch, "patch");
  check_mask(group, range, "range");
  require(!base.is_rem(), ErrorCode::invalid_argument, "REM base kernel must be a scalar family");
  require(base.nugget() == 0.0, ErrorCode::invalid_argument,
          "REM base kernel must not carry a nugget; set it on the REM kernel instead");
  if (auto* f = std::get_if<FeatureKernel>(&base.family()))
    require(f->map->input_dim() == patch_dim(), ErrorCode::dimension_mismatch,
            "REM base feature map must take c_in·|P| inputs");
}

Vector RemSpec::project_patch(std::size_t g, const Eigen::Ref<const Vector>& x) const {
  require(x.size() == input_dim(), ErrorCode::dimension_mismatch, "REM input has wrong size");
  const auto& perm = group.element(g);
  const int hw = group.pixels();
  const auto np = static_cast<int>(patch.size());
  Vector u(patch_dim());
  for (int c = 0; c < in_channels; ++c)
    for (int t = 0; t < np; ++t) u(c * np + t) = x(c * hw + perm[patch[t]]);
  return u;
}

std::vector<int> rect_mask(const GroupSpec& g, int y0, int x0, int hh, int ww) {
  require(hh > 0 && ww > 0 && hh <= g.height() && ww <= g.width(), ErrorCode::invalid_argument,
          "mask rectangle does not fit the grid");
  std::vector<int> m;
  for (int i = 0; i < hh; ++i)
    for (int j = 0; j < ww; ++j) {
      int y = ((y0 + i) % g.height() + g.height()) % g.height();
      int x = ((x0 + j) % g.width() + g.width()) % g.width();
      m.push_back(y * g.width() + x);
    }
  return m;
}

namespace {

Points as_row(const Eigen::Ref<const Vector>& x) { return x.transpose(); }

}  // namespace

Matrix rem_kernel_eval(const RemSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp) {
  require(x.size() == spec.input_dim() && xp.size() == spec.input_dim(), ErrorCode::dimension_mismatch,
          "REM kernel inputs have wrong size");
  require_finite(x, "REM input");
  require_finite(xp, "REM input");
  if (spec.monte_carlo) return rem_kernel_monte_carlo(spec, x, xp, spec.mc_samples, spec.mc_seed).mean;
  auto lift = detail::make_rem_lifting(spec);
  Matrix K = detail::base_cross(spec.base.family(), lift->lift_points(as_row(x)), lift->lift_points(as_row(xp)));
  return detail::rem_block_gram(spec, K, 1, 1);
}

RemMonteCarlo rem_kernel_monte_carlo(const RemSpec& spec, const Eigen::Ref<const Vector>& x,
                                     const Eigen::Ref<const Vector>& xp, std::size_t samples,
                                     std::uint64_t seed) {
  require(samples >= 2, ErrorCode::invalid_argument, "Monte-Carlo averaging needs at least two samples");
  require(x.size() == spec.input_dim() && xp.size() == spec.input_dim(), ErrorCode::dimension_mismatch,
          "REM kernel inputs have wrong size");
  const auto& G = spec.group;
  const int hw = G.pixels();
  const auto nr = static_cast<int>(spec.range.size());
  const Eigen::Index d = spec.output_dim();
  auto lift = detail::make_rem_lifting(spec);
  Matrix K = detail::base_cross(spec.base.family(), lift->lift_points(as_row(x)), lift->lift_points(as_row(xp)));

  Rng rng(seed);
  Matrix sum = Matrix::Zero(d, d), sumsq = Matrix::Zero(d, d);
  RemMonteCarlo out;
  out.pairs.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t ga = rng.index(G.size()), gb = rng.index(G.size());
    out.pairs.emplace_back(ga, gb);
    const double k = K(ga, gb);
    const auto& pa = G.element(ga);
    const auto& pb = G.element(gb);
    for (int c = 0; c < spec.out_channels; ++c)
      for (int t = 0; t < nr; ++t) {
        auto i = c * hw + pa[spec.range[t]], j = c * hw + pb[spec.range[t]];
        sum(i, j) += k;
        sumsq(i, j) += k * k;
      }
  }
  const double n = static_cast<double>(samples);
  out.mean = sum / n;
  Matrix var = (sumsq / n - out.mean.cwiseProduct(out.mean)) * (n / (n - 1.0));
  out.standard_error = (var.cwiseMax(0.0) / n).cwiseSqrt();
  return out;
}

Vector rem_feature_apply(const RemSpec& spec, const Activation& a, const Matrix& w, const Eigen::Ref<const Vector>& x) {
  require(w.rows() == spec.range_dim() && w.cols() == spec.patch_dim() + 1, ErrorCode::dimension_mismatch,
          "REM weight must be (c_out·|R|) x (c_in·|P| + 1)");
  require(x.size() == spec.input_dim(), ErrorCode::dimension_mismatch, "REM input has wrong size");
  const auto& G = spec.group;
  const int hw = G.pixels();
  const auto nr = static_cast<int>(spec.range.size());
  const double scale = 1.0 / static_cast<double>(G.size());
  Vector out = Vector::Zero(spec.output_dim());
  Vector phi(spec.patch_dim() + 1);
  for (std::size_t g = 0; g < G.size(); ++g) {
    Vector u = spec.project_patch(g, x);
    for (Eigen::Index k = 0; k < u.size(); ++k) phi(k) = a.value(u(k));
    phi(u.size()) = 1.0;
    Vector y = w * phi;
    const auto& perm = G.element(g);
    for (int c = 0; c < spec.out_channels; ++c)
      for (int t = 0; t < nr; ++t) out(c * hw + perm[spec.range[t]]) += scale * y(c * nr + t);
  }
  return out;
}

Vector DownsampleMap::gather(const Eigen::Ref<const Vector>& fine) const {
  Vector out(static_cast<Eigen::Index>(fine_index.size()));
  for (std::size_t k = 0; k < fine_index.size(); ++k) {
    require(fine_index[k] < fine.size(), ErrorCode::dimension_mismatch, "fine image too small");
    out(static_cast<Eigen::Index>(k)) = fine(fine_index[k]);
  }
  return out;
}

DownsampleMap downsample_range(const GroupSpec& group, const std::vector<int>& range) {
  require(group.is_translation(), ErrorCode::invalid_argument, "downsampling needs a translation subgroup");
  auto [sy, sx] = group.stride();
  require(group.height() % sy == 0 && group.width() % sx == 0, ErrorCode::invalid_argument,
          "stride does not divide the grid");
  check_mask(group, range, "range");
  DownsampleMap m;
  m.coarse_height = group.height() / sy;
  m.coarse_width = group.width() / sx;
  m.range_size = static_cast<int>(range.size());
  m.fine_index.assign(static_cast<std::size_t>(m.coarse_height * m.coarse_width * m.range_size), -1);
  std::vector<char> used(group.pixels(), 0);
  for (std::size_t g = 0; g < group.size(); ++g) {
    auto [dy, dx] = group.offset(g);
    int cell = (dy / sy) * m.coarse_width + dx / sx;
    const auto& perm = group.element(g);
    for (int t = 0; t < m.range_size; ++t) {
      int fine = perm[range[t]];
      require(!used[fine], ErrorCode::invalid_argument,
              "translated range masks overlap; the stride is too small for this range");
      used[fine] = 1;
      m.fine_index[static_cast<std::size_t>(cell * m.range_size + t)] = fine;
    }
  }
  return m;
}

DownsampleMap downsample_range(const RemSpec& spec) { return downsample_range(spec.group, spec.range); }

}  // namespace mechreg
