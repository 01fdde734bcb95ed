#pragma once

#include "dhm/mesh.h"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dhm {

constexpr std::size_t kReportedViolations = 10;

struct Violation {
  int line = 0; // 1-based; 0 when the problem concerns the whole file
  std::string message;
};

struct ValidationReport {
  std::string path;
  std::string kind; // mesh, map or config
  std::vector<Violation> violations; // the first kReportedViolations
  std::size_t total = 0;
  bool ok() const { return total == 0; }
};

// Mesh files may carry the optional weight sections written by write_weights.
ValidationReport validate_mesh(std::istream& in);
// With a mesh, value and generator counts are checked against it.
ValidationReport validate_map(std::istream& in, const Triangulation* mesh = nullptr);
ValidationReport validate_config(std::istream& in);
// Kind from the "# dhm mesh v1" / "# dhm map v1" banner, else the extension, else config.
ValidationReport validate_file(const std::filesystem::path& path, const Triangulation* mesh = nullptr);
std::vector<std::string> format_report(const ValidationReport& report);

// Writes to a sibling temporary file and renames it over path.
void write_atomic(const std::filesystem::path& path, const std::string& content);

// Exclusive advisory lock on <dir>/.dhm.lock, held for the object's lifetime.
class DirectoryLock {
public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
  int fd_ = -1;
};

// Exit status: 0 success, 1 domain or validation error (including failed hard
// study checks), 2 numeric error, CLI11's code for usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dhm
