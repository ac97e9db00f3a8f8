#include "output.hpp"

#include <mechreg/common.hpp>
#include <mechreg/rng.hpp>
#include <mechreg/serialize.hpp>

#include <filesystem>
#include <system_error>

namespace mechreg::cli {

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

std::string header_block(const RunContext& ctx) {
  std::string s;
  s += std::string("# mechreg ") + version_string + "\n";
  s += "# command " + ctx.command + "\n";
  s += "# config_hash " + hex(ctx.config_hash) + "\n";
  s += "# seed " + std::to_string(ctx.seed) + "\n";
  s += std::string("# rng ") + Rng::name() + "\n";
  return s;
}

std::string num(double v) { return format_double(v); }
std::string num(long long v) { return std::to_string(v); }

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory '" + dir + "': " + ec.message());
}

CsvWriter::CsvWriter(const RunContext& ctx, const std::string& file_name, std::vector<std::string> columns)
    : path_((std::filesystem::path(ctx.output_dir) / file_name).string()), width_(columns.size()) {
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::io, "cannot open '" + path_ + "' for writing");
  out_ << header_block(ctx);
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == width_, ErrorCode::invalid_argument, path_ + ": row width does not match the header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw Error(ErrorCode::io, "failed writing '" + path_ + "'");
}

}  // namespace mechreg::cli
