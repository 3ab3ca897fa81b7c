#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hst {

struct DatasetEntry {
  std::string rel_path;  // forward-slash relative path under the root
  int width = 0;
  int height = 0;
  int channels = 0;
};

/// Sorted index of the PNG images under a directory tree. Ordering is
/// byte-lexicographic on the relative paths, so the same tree indexes
/// identically on every platform.
struct DatasetIndex {
  std::string root;
  std::vector<DatasetEntry> entries;

  /// Recursively discovers *.png files and records their geometry. A file
  /// that is not a readable supported PNG fails the scan with its path named;
  /// a missing or non-directory root is an error.
  static DatasetIndex scan(const std::string& root);

  size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::string abs_path(size_t i) const;
};

}  // namespace hst
