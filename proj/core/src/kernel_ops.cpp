#include "mechreg/kernel_ops.hpp"

#include "kernel_detail.hpp"
#include "mechreg/rem.hpp"

namespace mechreg {

namespace detail {

namespace {

Matrix squared_distances(const Points& A, const Points& B) {
  Matrix D(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) D.col(j) = (A.rowwise() - B.row(j)).rowwise().squaredNorm();
  return D;
}

class GaussianAt final : public BaseAt {
 public:
  GaussianAt(double s, const Points& U) : U_(U), beta_(2.0 / (s * s)) {
    K_ = (-squared_distances(U, U) / (s * s)).array().exp().matrix();
  }

  Points grad_weighted(const Matrix& omega) const override {
    Matrix C = omega.cwiseProduct(K_);
    Vector rowsum = C.rowwise().sum();
    return -beta_ * (rowsum.asDiagonal() * U_ - C * U_);
  }

  Matrix directional(const Points& nu) const override {
    Matrix UN = U_ * nu.transpose();
    Vector d = UN.diagonal();
    Matrix T = -UN - UN.transpose();
    T.colwise() += d;
    T.rowwise() += d.transpose();
    return -beta_ * K_.cwiseProduct(T);
  }

  Points hess_weighted(const Matrix& omega, const Points& nu) const override {
    Matrix KO = K_.cwiseProduct(omega);
    Matrix KOt = K_.cwiseProduct(omega.transpose());
    Points part1 = KO.rowwise().sum().asDiagonal() * nu - KOt * nu;
    Matrix UN = U_ * nu.transpose();
    Vector d = UN.diagonal();
    // c_ab = k_ab [Ω_ab (d_a − UN_ba) − Ω_ba (UN_ab − d_b)]
    Matrix left = (-UN.transpose()).colwise() + d;
    Matrix right = UN.rowwise() - d.transpose();
    Matrix C = KO.cwiseProduct(left) - KOt.cwiseProduct(right);
    Points part2 = C.rowwise().sum().asDiagonal() * U_ - C * U_;
    return -beta_ * part1 + beta_ * beta_ * part2;
  }

 private:
  const Points& U_;
  double beta_;
};

// k(a,b) = σ(Wa+b)ᵀσ(Wb+b) (+1 with a constant feature).
class FeatureAt final : public BaseAt {
 public:
  FeatureAt(const FeatureMap& fm, const Points& U, bool derivatives) : fm_(fm) {
    Phi_ = fm.apply_rows(U);
    K_ = Phi_ * Phi_.transpose();
    if (derivatives) {
      Matrix Z = fm.preactivation(U);
      const auto& a = fm.activation();
      D1_ = Z.unaryExpr([&a](double z) { return a.derivative(z); });
      D2_ = Z.unaryExpr([&a](double z) { return a.second_derivative(z); });
    }
  }

  Points grad_weighted(const Matrix& omega) const override {
    Matrix OP = omega * sigma_part();
    return D1_.cwiseProduct(OP) * fm_.weights();
  }

  Matrix directional(const Points& nu) const override {
    Matrix E = D1_.cwiseProduct(nu * fm_.weights().transpose());
    Matrix S = E * sigma_part().transpose();
    return S + S.transpose();
  }

  Points hess_weighted(const Matrix& omega, const Points& nu) const override {
    Matrix NW = nu * fm_.weights().transpose();
    Matrix E = D1_.cwiseProduct(NW);
    Matrix first = D2_.cwiseProduct(omega * sigma_part()).cwiseProduct(NW);
    Matrix second = D1_.cwiseProduct(omega.transpose() * E);
    return (first + second) * fm_.weights();
  }

 private:
  Eigen::Ref<const Matrix> sigma_part() const { return Phi_.leftCols(fm_.weights().rows()); }

  const FeatureMap& fm_;
  Matrix Phi_, D1_, D2_;
};

// Holds a feature map built for ActivationKernel / LinearKernel on the fly.
class OwnedFeatureAt final : public BaseAt {
 public:
  OwnedFeatureAt(FeatureMap fm, const Points& U, bool derivatives)
      : fm_(std::move(fm)), inner_(fm_, U, derivatives) {
    K_ = inner_.gram();
  }
  Points grad_weighted(const Matrix& o) const override { return inner_.grad_weighted(o); }
  Matrix directional(const Points& nu) const override { return inner_.directional(nu); }
  Points hess_weighted(const Matrix& o, const Points& nu) const override { return inner_.hess_weighted(o, nu); }

 private:
  FeatureMap fm_;
  FeatureAt inner_;
};

FeatureMap linear_map(Eigen::Index d) {
  return FeatureMap::from_weights(Matrix::Identity(d, d), Vector::Zero(d), Activation::identity(), false,
                                  FeatureMap::Kind::custom);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::unique_ptr<BaseAt> make_base(const ScalarFamily& family, const Points& U, bool derivatives) {
  return std::visit(
      overloaded{
          [&](const GaussianKernel& g) -> std::unique_ptr<BaseAt> {
            return std::make_unique<GaussianAt>(g.bandwidth, U);
          },
          [&](const ActivationKernel& a) -> std::unique_ptr<BaseAt> {
            return std::make_unique<OwnedFeatureAt>(FeatureMap::activation_identity(a.activation, U.cols()), U,
                                                    derivatives);
          },
          [&](const LinearKernel&) -> std::unique_ptr<BaseAt> {
            return std::make_unique<OwnedFeatureAt>(linear_map(U.cols()), U, derivatives);
          },
          [&](const FeatureKernel& f) -> std::unique_ptr<BaseAt> {
            return std::make_unique<FeatureAt>(*f.map, U, derivatives);
          },
      },
      family);
}

Matrix base_cross(const ScalarFamily& family, const Points& A, const Points& B) {
  return std::visit(overloaded{
                        [&](const GaussianKernel& g) -> Matrix {
                          double s2 = g.bandwidth * g.bandwidth;
                          return (-squared_distances(A, B) / s2).array().exp().matrix();
                        },
                        [&](const ActivationKernel& a) -> Matrix {
                          auto fm = FeatureMap::activation_identity(a.activation, A.cols());
                          return fm.apply_rows(A) * fm.apply_rows(B).transpose();
                        },
                        [&](const LinearKernel&) -> Matrix { return A * B.transpose(); },
                        [&](const FeatureKernel& f) -> Matrix {
                          return f.map->apply_rows(A) * f.map->apply_rows(B).transpose();
                        },
                    },
                    family);
}

Eigen::Index base_input_dim(const ScalarFamily& family) {
  if (auto* f = std::get_if<FeatureKernel>(&family)) return f->map->input_dim();
  return 0;
}

namespace {

class IdentityLifting final : public Lifting {
 public:
  Points lift_points(const Points& q) const override { return q; }
  Points pull_points(const Points& g, Eigen::Index) const override { return g; }
  Points lift_covectors(const Points& p) const override { return p; }
  Points pull_covectors(const Points& pi, Eigen::Index) const override { return pi; }
};

class RemLifting final : public Lifting {
 public:
  explicit RemLifting(const RemSpec& spec) : spec_(spec) {}

  Points lift_points(const Points& q) const override {
    const auto& G = spec_.group;
    const Eigen::Index n = q.rows(), gs = G.size(), hw = G.pixels();
    const auto np = static_cast<Eigen::Index>(spec_.patch.size());
    Points U(n * gs, spec_.patch_dim());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index g = 0; g < gs; ++g) {
        const auto& perm = G.element(g);
        for (Eigen::Index c = 0; c < spec_.in_channels; ++c)
          for (Eigen::Index t = 0; t < np; ++t) U(i * gs + g, c * np + t) = q(i, c * hw + perm[spec_.patch[t]]);
      }
    return U;
  }

  Points pull_points(const Points& u, Eigen::Index n) const override {
    const auto& G = spec_.group;
    const Eigen::Index gs = G.size(), hw = G.pixels();
    const auto np = static_cast<Eigen::Index>(spec_.patch.size());
    Points out = Points::Zero(n, spec_.input_dim());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index g = 0; g < gs; ++g) {
        const auto& perm = G.element(g);
        for (Eigen::Index c = 0; c < spec_.in_channels; ++c)
          for (Eigen::Index t = 0; t < np; ++t) out(i, c * hw + perm[spec_.patch[t]]) += u(i * gs + g, c * np + t);
      }
    return out;
  }

  Points lift_covectors(const Points& p) const override {
    const auto& G = spec_.group;
    const Eigen::Index n = p.rows(), gs = G.size(), hw = G.pixels();
    const auto nr = static_cast<Eigen::Index>(spec_.range.size());
    const double w = 1.0 / static_cast<double>(gs);
    Points P(n * gs, spec_.range_dim());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index g = 0; g < gs; ++g) {
        const auto& perm = G.element(g);
        for (Eigen::Index c = 0; c < spec_.out_channels; ++c)
          for (Eigen::Index t = 0; t < nr; ++t) P(i * gs + g, c * nr + t) = w * p(i, c * hw + perm[spec_.range[t]]);
      }
    return P;
  }

  Points pull_covectors(const Points& pi, Eigen::Index n) const override {
    const auto& G = spec_.group;
    const Eigen::Index gs = G.size(), hw = G.pixels();
    const auto nr = static_cast<Eigen::Index>(spec_.range.size());
    const double w = 1.0 / static_cast<double>(gs);
    Points out = Points::Zero(n, spec_.output_dim());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index g = 0; g < gs; ++g) {
        const auto& perm = G.element(g);
        for (Eigen::Index c = 0; c < spec_.out_channels; ++c)
          for (Eigen::Index t = 0; t < nr; ++t)
            out(i, c * hw + perm[spec_.range[t]]) += w * pi(i * gs + g, c * nr + t);
      }
    return out;
  }

 private:
  const RemSpec& spec_;
};

}  // namespace

std::unique_ptr<Lifting> make_lifting(const KernelSpec& kernel) {
  if (kernel.is_rem()) return std::make_unique<RemLifting>(*kernel.rem_spec());
  return std::make_unique<IdentityLifting>();
}

std::unique_ptr<Lifting> make_rem_lifting(const RemSpec& spec) { return std::make_unique<RemLifting>(spec); }

Matrix rem_block_gram(const RemSpec& spec, const Matrix& lifted, Eigen::Index rows, Eigen::Index cols) {
  const auto& G = spec.group;
  const Eigen::Index gs = G.size(), hw = G.pixels(), d = spec.output_dim();
  const auto nr = static_cast<Eigen::Index>(spec.range.size());
  const double w2 = 1.0 / static_cast<double>(gs * gs);
  Matrix C = Matrix::Zero(rows * d, cols * d);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index gb = 0; gb < gs; ++gb) {
      const auto& pb = G.element(gb);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index ga = 0; ga < gs; ++ga) {
          const double k = w2 * lifted(i * gs + ga, j * gs + gb);
          if (k == 0.0) continue;
          const auto& pa = G.element(ga);
          for (Eigen::Index c = 0; c < spec.out_channels; ++c)
            for (Eigen::Index t = 0; t < nr; ++t)
              C(i * d + c * hw + pa[spec.range[t]], j * d + c * hw + pb[spec.range[t]]) += k;
        }
    }
  return C;
}

}  // namespace detail

namespace {

void check_points(const KernelSpec& kernel, const Points& q, const char* what) {
  require_finite(q, what);
  if (kernel.is_rem()) {
    require(q.cols() == kernel.rem_spec()->input_dim(), ErrorCode::dimension_mismatch,
            std::string(what) + ": REM kernel expects " + std::to_string(kernel.rem_spec()->input_dim()) +
                " entries per point");
    return;
  }
  Eigen::Index d = detail::base_input_dim(kernel.family());
  require(d == 0 || q.cols() == d, ErrorCode::dimension_mismatch,
          std::string(what) + ": kernel expects points of dimension " + std::to_string(d));
  require(q.cols() > 0, ErrorCode::dimension_mismatch, std::string(what) + ": empty point dimension");
}

}  // namespace

KernelAt::KernelAt(const KernelSpec& kernel, const Points& q, bool derivatives)
    : kernel_(kernel), q_(q), lift_(detail::make_lifting(kernel)), derivatives_(derivatives) {
  check_points(kernel, q, "kernel points");
  Points U = lift_->lift_points(q_);
  lifted_ = std::make_unique<Points>(std::move(U));
  base_ = detail::make_base(kernel.family(), *lifted_, derivatives && kernel.differentiable());
}

KernelAt::~KernelAt() = default;
KernelAt::KernelAt(KernelAt&&) noexcept = default;
KernelAt& KernelAt::operator=(KernelAt&&) noexcept = default;

Eigen::Index KernelAt::covector_dim(const Points& p) const {
  require(p.rows() == q_.rows(), ErrorCode::dimension_mismatch,
          "covector count " + std::to_string(p.rows()) + " differs from point count " + std::to_string(q_.rows()));
  Eigen::Index want = kernel_.is_rem() ? kernel_.rem_spec()->output_dim() : kernel_.output_dim();
  require(want == 0 || p.cols() == want, ErrorCode::dimension_mismatch,
          "covector dimension " + std::to_string(p.cols()) + " differs from kernel output dimension " +
              std::to_string(want));
  require_finite(p, "covectors");
  return p.cols();
}

Points KernelAt::apply(const Points& p, bool nugget) const {
  covector_dim(p);
  Points out = lift_->pull_covectors(base_->gram() * lift_->lift_covectors(p), size());
  if (nugget && kernel_.nugget() > 0) out += kernel_.nugget() * p;
  return out;
}

Points KernelAt::pair_grad(const Points& a, const Points& b) const {
  kernel_.require_differentiable("pair_grad");
  require(derivatives_, ErrorCode::invalid_argument, "KernelAt built without derivative data");
  covector_dim(a);
  covector_dim(b);
  Points A = lift_->lift_covectors(a), B = lift_->lift_covectors(b);
  Matrix omega = A * B.transpose();
  omega += omega.transpose().eval();
  return lift_->pull_points(base_->grad_weighted(omega), size());
}

Points KernelAt::pair_dir(const Points& p, const Points& v) const {
  kernel_.require_differentiable("pair_dir");
  require(derivatives_, ErrorCode::invalid_argument, "KernelAt built without derivative data");
  covector_dim(p);
  require(v.rows() == q_.rows() && v.cols() == q_.cols(), ErrorCode::dimension_mismatch,
          "direction must have the shape of the points");
  Matrix S = base_->directional(lift_->lift_points(v));
  return lift_->pull_covectors(S * lift_->lift_covectors(p), size());
}

Points KernelAt::pair_hess(const Points& a, const Points& b, const Points& v) const {
  kernel_.require_differentiable("pair_hess");
  require(derivatives_, ErrorCode::invalid_argument, "KernelAt built without derivative data");
  covector_dim(a);
  covector_dim(b);
  require(v.rows() == q_.rows() && v.cols() == q_.cols(), ErrorCode::dimension_mismatch,
          "direction must have the shape of the points");
  Points A = lift_->lift_covectors(a), B = lift_->lift_covectors(b);
  Matrix omega = A * B.transpose();
  omega += omega.transpose().eval();
  return lift_->pull_points(base_->hess_weighted(omega, lift_->lift_points(v)), size());
}

Gram KernelAt::gram(bool nugget) const {
  Gram g;
  if (kernel_.is_rem()) {
    g.values = detail::rem_block_gram(*kernel_.rem_spec(), base_->gram(), size(), size());
    g.block = kernel_.rem_spec()->output_dim();
    g.scalar = false;
  } else {
    g.values = base_->gram();
    g.block = kernel_.output_dim() > 0 ? kernel_.output_dim() : 1;
    g.scalar = true;
  }
  if (nugget && kernel_.nugget() > 0) g.add_identity(kernel_.nugget());
  return g;
}

Points cross_apply(const KernelSpec& kernel, const Points& x, const Points& q, const Points& p) {
  check_points(kernel, x, "test points");
  check_points(kernel, q, "kernel points");
  require(x.cols() == q.cols(), ErrorCode::dimension_mismatch, "test and kernel points differ in dimension");
  require(p.rows() == q.rows(), ErrorCode::dimension_mismatch, "one covector per kernel point is required");
  auto lift = detail::make_lifting(kernel);
  Matrix K = detail::base_cross(kernel.family(), lift->lift_points(x), lift->lift_points(q));
  return lift->pull_covectors(K * lift->lift_covectors(p), x.rows());
}

Points gram_quadratic_grad(const KernelSpec& kernel, const Points& q, const Points& p) {
  return KernelAt(kernel, q).pair_grad(p, p);
}

Gram gram(const KernelSpec& kernel, const Points& A) { return KernelAt(kernel, A).gram(true); }

Gram gram(const KernelSpec& kernel, const Points& A, const Points& B) {
  if (A.rows() == B.rows() && A.cols() == B.cols() && (A.array() == B.array()).all()) return gram(kernel, A);
  return cross_gram(kernel, A, B);
}

Gram cross_gram(const KernelSpec& kernel, const Points& A, const Points& B) {
  check_points(kernel, A, "gram rows");
  check_points(kernel, B, "gram columns");
  require(A.cols() == B.cols(), ErrorCode::dimension_mismatch, "gram point sets differ in dimension");
  auto lift = detail::make_lifting(kernel);
  Matrix K = detail::base_cross(kernel.family(), lift->lift_points(A), lift->lift_points(B));
  Gram g;
  if (kernel.is_rem()) {
    g.values = detail::rem_block_gram(*kernel.rem_spec(), K, A.rows(), B.rows());
    g.block = kernel.rem_spec()->output_dim();
    g.scalar = false;
  } else {
    g.values = std::move(K);
    g.block = kernel.output_dim() > 0 ? kernel.output_dim() : 1;
  }
  return g;
}

}  // namespace mechreg
