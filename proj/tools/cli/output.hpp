#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace mechreg::cli {

/// What every artifact of one run shares.
struct RunContext {
  std::string command;
  std::string output_dir;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// `# key value` lines written at the top of every output file.
std::string header_block(const RunContext& ctx);

std::string hex(std::uint64_t v);

/// CSV writer: header block, column line, then rows. Cells are strings so
/// callers choose formatting; use num() for doubles.
class CsvWriter {
 public:
  CsvWriter(const RunContext& ctx, const std::string& file_name, std::vector<std::string> columns);

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t width_;
};

std::string num(double v);
std::string num(long long v);
inline std::string num(int v) { return num(static_cast<long long>(v)); }
inline std::string num(long v) { return num(static_cast<long long>(v)); }
inline std::string num(std::size_t v) { return num(static_cast<long long>(v)); }

/// Creates the output directory (and parents).
void ensure_directory(const std::string& dir);

}  // namespace mechreg::cli
