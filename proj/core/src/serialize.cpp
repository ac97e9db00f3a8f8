#include "mechreg/serialize.hpp"

#include "mechreg/rem.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace mechreg {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

// "key value..." lines; the key must match what the reader expects.
std::istringstream expect(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw Error(ErrorCode::io, "model file: expected '" + key + "', found '" + k + "'");
    return ls;
  }
  throw Error(ErrorCode::io, "model file: unexpected end of input, expected '" + key + "'");
}

template <class T>
T read_value(std::istream& in, const std::string& key) {
  auto ls = expect(in, key);
  T v{};
  if (!(ls >> v)) throw Error(ErrorCode::io, "model file: bad value for '" + key + "'");
  return v;
}

double read_double(std::istream& in, const std::string& key) {
  auto ls = expect(in, key);
  std::string tok;
  ls >> tok;
  double v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw Error(ErrorCode::io, "model file: bad number for '" + key + "'");
  return v;
}

std::string read_word(std::istream& in, const std::string& key) { return read_value<std::string>(in, key); }

void write_ints(std::ostream& out, const std::string& key, const std::vector<int>& v) {
  out << key << ' ' << v.size();
  for (int x : v) out << ' ' << x;
  out << '\n';
}

std::vector<int> read_ints(std::istream& in, const std::string& key) {
  auto ls = expect(in, key);
  std::size_t n = 0;
  ls >> n;
  std::vector<int> v(n);
  for (auto& x : v)
    if (!(ls >> x)) throw Error(ErrorCode::io, "model file: short list for '" + key + "'");
  return v;
}

void write_activation(std::ostream& out, const std::string& prefix, const Activation& a) {
  out << prefix << ".activation " << a.name() << '\n';
  out << prefix << ".epsilon " << format_double(a.epsilon()) << '\n';
}

Activation read_activation(std::istream& in, const std::string& prefix) {
  std::string name = read_word(in, prefix + ".activation");
  double eps = read_double(in, prefix + ".epsilon");
  return Activation::parse(name, eps > 0 ? eps : Activation::default_softplus_epsilon);
}

std::string map_kind(FeatureMap::Kind k) {
  switch (k) {
    case FeatureMap::Kind::activation_identity: return "activation_identity";
    case FeatureMap::Kind::random_features: return "random_features";
    case FeatureMap::Kind::custom: return "custom";
  }
  return "custom";
}

FeatureMap::Kind parse_map_kind(const std::string& s) {
  if (s == "activation_identity") return FeatureMap::Kind::activation_identity;
  if (s == "random_features") return FeatureMap::Kind::random_features;
  if (s == "custom") return FeatureMap::Kind::custom;
  throw Error(ErrorCode::io, "model file: unknown feature map kind '" + s + "'");
}

void write_feature_map(std::ostream& out, const std::string& prefix, const FeatureMap& fm) {
  out << prefix << ".kind " << map_kind(fm.kind()) << '\n';
  write_activation(out, prefix, fm.activation());
  out << prefix << ".constant " << (fm.constant_feature() ? 1 : 0) << '\n';
  write_matrix(out, prefix + ".W", fm.weights());
  write_matrix(out, prefix + ".b", fm.biases());
}

FeatureMap read_feature_map(std::istream& in, const std::string& prefix) {
  auto kind = parse_map_kind(read_word(in, prefix + ".kind"));
  Activation a = read_activation(in, prefix);
  bool constant = read_value<int>(in, prefix + ".constant") != 0;
  Matrix W = read_matrix(in, prefix + ".W");
  Matrix b = read_matrix(in, prefix + ".b");
  require(b.cols() == 1, ErrorCode::io, "model file: bias must be a column");
  return FeatureMap::from_weights(std::move(W), b.col(0), a, constant, kind);
}

}  // namespace

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& name) {
  auto ls = expect(in, "matrix");
  std::string got;
  Eigen::Index rows = -1, cols = -1;
  ls >> got >> rows >> cols;
  if (got != name || rows < 0 || cols < 0)
    throw Error(ErrorCode::io, "model file: expected matrix '" + name + "', found '" + got + "'");
  Matrix m(rows, cols);
  std::string line, tok;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::io, "model file: truncated matrix '" + name + "'");
    std::istringstream rs(line);
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(rs >> tok)) throw Error(ErrorCode::io, "model file: short row in matrix '" + name + "'");
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), m(i, j));
      if (res.ec != std::errc()) throw Error(ErrorCode::io, "model file: bad number in matrix '" + name + "'");
    }
  }
  return m;
}

void write_kernel(std::ostream& out, const std::string& prefix, const KernelSpec& k) {
  out << prefix << ".family " << k.family_name() << '\n';
  out << prefix << ".nugget " << format_double(k.nugget()) << '\n';
  out << prefix << ".output_dim " << k.output_dim() << '\n';
  if (k.is_rem()) {
    const RemSpec& s = *k.rem_spec();
    const GroupSpec& g = s.group;
    out << prefix << ".grid " << g.height() << ' ' << g.width() << '\n';
    if (g.is_translation()) {
      out << prefix << ".group translations " << g.stride().first << ' ' << g.stride().second << '\n';
    } else {
      out << prefix << ".group explicit " << g.size() << '\n';
      for (std::size_t e = 0; e < g.size(); ++e) write_ints(out, prefix + ".element", g.element(e));
    }
    write_ints(out, prefix + ".patch", s.patch);
    write_ints(out, prefix + ".range", s.range);
    out << prefix << ".channels " << s.in_channels << ' ' << s.out_channels << '\n';
    write_kernel(out, prefix + ".base", s.base);
    return;
  }
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussianKernel>) {
          out << prefix << ".bandwidth " << format_double(f.bandwidth) << '\n';
        } else if constexpr (std::is_same_v<T, ActivationKernel>) {
          write_activation(out, prefix, f.activation);
        } else if constexpr (std::is_same_v<T, FeatureKernel>) {
          write_feature_map(out, prefix + ".map", *f.map);
        }
      },
      k.family());
}

KernelSpec read_kernel(std::istream& in, const std::string& prefix) {
  const std::string family = read_word(in, prefix + ".family");
  const double nugget = read_double(in, prefix + ".nugget");
  const auto out_dim = read_value<Eigen::Index>(in, prefix + ".output_dim");
  if (family == "gaussian") return KernelSpec::gaussian(read_double(in, prefix + ".bandwidth"), nugget, out_dim);
  if (family == "activation") return KernelSpec::activation(read_activation(in, prefix), nugget, out_dim);
  if (family == "linear") return KernelSpec::linear(nugget, out_dim);
  if (family == "feature")
    return KernelSpec::feature(std::make_shared<const FeatureMap>(read_feature_map(in, prefix + ".map")), nugget,
                               out_dim);
  if (family == "rem") {
    auto grid = expect(in, prefix + ".grid");
    int H = 0, W = 0;
    grid >> H >> W;
    auto gl = expect(in, prefix + ".group");
    std::string how;
    gl >> how;
    std::optional<GroupSpec> group;
    if (how == "translations") {
      int sy = 1, sx = 1;
      gl >> sy >> sx;
      group = GroupSpec::translations(H, W, sy, sx);
    } else if (how == "explicit") {
      std::size_t n = 0;
      gl >> n;
      std::vector<Permutation> elems;
      for (std::size_t e = 0; e < n; ++e) elems.push_back(read_ints(in, prefix + ".element"));
      group = GroupSpec(H, W, std::move(elems));
    } else {
      throw Error(ErrorCode::io, "model file: unknown group encoding '" + how + "'");
    }
    auto patch = read_ints(in, prefix + ".patch");
    auto range = read_ints(in, prefix + ".range");
    auto ch = expect(in, prefix + ".channels");
    int c1 = 1, c2 = 1;
    ch >> c1 >> c2;
    KernelSpec base = read_kernel(in, prefix + ".base");
    auto spec = std::make_shared<const RemSpec>(std::move(*group), std::move(patch), std::move(range),
                                                std::move(base), c1, c2);
    return KernelSpec::rem(spec, nugget);
  }
  throw Error(ErrorCode::io, "model file: unknown kernel family '" + family + "'");
}

namespace {

void write_header(std::ostream& out, const std::string& type) {
  out << "mechreg-model " << version_string << '\n';
  out << "format " << model_format_version << '\n';
  out << "type " << type << '\n';
}

void read_header(std::istream& in, const std::string& type) {
  read_word(in, "mechreg-model");
  const int fmt = read_value<int>(in, "format");
  if (fmt != model_format_version)
    throw Error(ErrorCode::io, "model file: unsupported format version " + std::to_string(fmt));
  const std::string got = read_word(in, "type");
  if (got != type) throw Error(ErrorCode::io, "model file: expected a " + type + " model, found " + got);
}

std::string loss_name(const LossSpec& l) { return l.kind == LossSpec::Kind::squared ? "squared" : "hinge"; }

}  // namespace

void save_model(std::ostream& out, const ShootingModel& m) {
  write_header(out, "shooting");
  write_kernel(out, "gamma", m.gamma);
  write_kernel(out, "k_out", m.k_out);
  const ShootingHyper& h = m.hyper;
  out << "nu " << format_double(h.nu) << '\n';
  out << "lambda " << format_double(h.lambda) << '\n';
  out << "refit_lambda " << format_double(h.refit_lambda.value_or(h.lambda)) << '\n';
  out << "h " << format_double(h.h) << '\n';
  out << "steps " << h.steps << '\n';
  out << "loss " << loss_name(h.loss) << ' ' << h.loss.num_classes << '\n';
  out << "scheme " << to_string(h.integrator.scheme) << '\n';
  out << "hinge_tol " << format_double(h.hinge_tol) << '\n';
  out << "objective " << format_double(m.objective) << '\n';
  write_matrix(out, "X", m.X);
  write_matrix(out, "Y", m.Y);
  write_matrix(out, "p0", m.p0);
  // The path is stored so a reader can check it against a re-integration.
  out << "path " << m.trajectory.states.size() << '\n';
  for (std::size_t s = 0; s < m.trajectory.states.size(); ++s)
    write_matrix(out, "q" + std::to_string(s), m.trajectory.states[s].q);
  write_matrix(out, "readout", m.readout.coefficients);
}

ShootingModel load_shooting_model(std::istream& in) {
  read_header(in, "shooting");
  KernelSpec gamma = read_kernel(in, "gamma");
  KernelSpec k_out = read_kernel(in, "k_out");
  ShootingHyper h;
  h.nu = read_double(in, "nu");
  h.lambda = read_double(in, "lambda");
  h.refit_lambda = read_double(in, "refit_lambda");
  h.h = read_double(in, "h");
  h.steps = read_value<std::size_t>(in, "steps");
  {
    auto ls = expect(in, "loss");
    std::string kind;
    int classes = 0;
    ls >> kind >> classes;
    h.loss = kind == "hinge" ? LossSpec::hinge(classes) : LossSpec::squared();
  }
  h.integrator.scheme = parse_leapfrog_scheme(read_word(in, "scheme"));
  h.hinge_tol = read_double(in, "hinge_tol");
  read_double(in, "objective");
  Points X = read_matrix(in, "X");
  Points Y = read_matrix(in, "Y");
  Points p0 = read_matrix(in, "p0");
  const auto n = read_value<std::size_t>(in, "path");
  std::vector<Points> path;
  for (std::size_t s = 0; s < n; ++s) path.push_back(read_matrix(in, "q" + std::to_string(s)));
  Matrix readout = read_matrix(in, "readout");
  ShootingModel m = assemble_model(gamma, k_out, X, Y, h, p0);
  for (std::size_t s = 0; s < n && s < m.trajectory.states.size(); ++s) {
    const double diff = (m.trajectory.states[s].q - path[s]).cwiseAbs().maxCoeff();
    if (!(diff <= 1e-9 * std::max(1.0, path[s].cwiseAbs().maxCoeff())))
      throw Error(ErrorCode::io, "model file: stored path does not match re-integration");
  }
  m.readout.coefficients = readout;
  return m;
}

void save_model(std::ostream& out, const ResNetModel& m) {
  write_header(out, "resnet");
  const ResNetHyper& h = m.hyper;
  out << "r " << format_double(h.r) << '\n';
  out << "rho " << format_double(h.rho) << '\n';
  out << "objective " << format_double(m.objective) << '\n';
  out << "groups " << m.groups.size() << '\n';
  for (std::size_t g = 0; g < m.groups.size(); ++g) {
    const std::string p = "group" + std::to_string(g);
    const GroupHyper& gh = h.groups[g];
    const ResNetGroup& G = m.groups[g];
    out << p << ".nu " << format_double(gh.nu) << '\n';
    out << p << ".lambda " << format_double(gh.lambda) << '\n';
    out << p << ".output_dim " << gh.output_dim << '\n';
    write_feature_map(out, p + ".layer_map", G.layer_map);
    write_feature_map(out, p + ".readout_map", G.readout_map);
    out << p << ".layers " << G.w.size() << '\n';
    for (std::size_t s = 0; s < G.w.size(); ++s) write_matrix(out, p + ".w" + std::to_string(s), G.w[s]);
    write_matrix(out, p + ".readout", G.readout);
  }
}

ResNetModel load_resnet_model(std::istream& in) {
  read_header(in, "resnet");
  ResNetModel m;
  m.hyper.r = read_double(in, "r");
  m.hyper.rho = read_double(in, "rho");
  m.objective = read_double(in, "objective");
  const auto D = read_value<std::size_t>(in, "groups");
  for (std::size_t g = 0; g < D; ++g) {
    const std::string p = "group" + std::to_string(g);
    GroupHyper gh;
    gh.nu = read_double(in, p + ".nu");
    gh.lambda = read_double(in, p + ".lambda");
    gh.output_dim = read_value<Eigen::Index>(in, p + ".output_dim");
    FeatureMap lm = read_feature_map(in, p + ".layer_map");
    FeatureMap rm = read_feature_map(in, p + ".readout_map");
    const auto L = read_value<std::size_t>(in, p + ".layers");
    gh.layers = L;
    std::vector<Matrix> w;
    for (std::size_t s = 0; s < L; ++s) w.push_back(read_matrix(in, p + ".w" + std::to_string(s)));
    Matrix readout = read_matrix(in, p + ".readout");
    m.hyper.groups.push_back(gh);
    m.groups.push_back(ResNetGroup{std::move(lm), std::move(rm), std::move(w), std::move(readout), {}, Points()});
  }
  return m;
}

}  // namespace mechreg
