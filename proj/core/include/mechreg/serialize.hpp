#pragma once

#include "mechreg/kernel.hpp"
#include "mechreg/resnet.hpp"
#include "mechreg/shooting.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace mechreg {

inline constexpr const char* version_string = "0.1.0";
inline constexpr int model_format_version = 1;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);

void write_kernel(std::ostream& out, const std::string& prefix, const KernelSpec& k);
KernelSpec read_kernel(std::istream& in, const std::string& prefix);

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m);
Matrix read_matrix(std::istream& in, const std::string& name);

void save_model(std::ostream& out, const ShootingModel& model);
ShootingModel load_shooting_model(std::istream& in);

void save_model(std::ostream& out, const ResNetModel& model);
ResNetModel load_resnet_model(std::istream& in);

}  // namespace mechreg
