#include "grid_csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mechreg::cli {

namespace {

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t\r");
    const auto e = item.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse(const std::string& s, const std::string& where) {
  T v{};
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != e) throw Error(ErrorCode::config, where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

GridImages read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open image file '" + path + "'");
  GridImages g;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = fields(line);
    if (!have_header) {
      if (f.size() != 3) throw Error(ErrorCode::config, where + ": expected header 'H,W,channels'");
      g.height = parse<int>(f[0], where);
      g.width = parse<int>(f[1], where);
      g.channels = parse<int>(f[2], where);
      if (g.height < 1 || g.width < 1 || g.channels < 1)
        throw Error(ErrorCode::config, where + ": H, W and channels must be positive");
      have_header = true;
      continue;
    }
    const std::size_t n = static_cast<std::size_t>(g.height * g.width * g.channels);
    if (f.size() != n + 1)
      throw Error(ErrorCode::config, where + ": expected label plus " + std::to_string(n) + " values, got " +
                                         std::to_string(f.size()) + " fields");
    g.labels.push_back(parse<int>(f[0], where));
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = parse<double>(f[k + 1], where);
    rows.push_back(std::move(v));
  }
  if (!have_header || rows.empty()) throw Error(ErrorCode::config, path + ": no images");
  g.images.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      g.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  require_finite(g.images, path);
  return g;
}

}  // namespace mechreg::cli
