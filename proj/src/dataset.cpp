#include "hst/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "hst/png_io.hpp"

namespace fs = std::filesystem;

namespace hst {

DatasetIndex DatasetIndex::scan(const std::string& root) {
  fs::path base(root);
  if (!fs::is_directory(base))
    throw std::runtime_error("dataset: " + root + " is not a directory");

  DatasetIndex index;
  index.root = root;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(base)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    PngHeader hdr = read_png_header(e.path().string());
    index.entries.push_back({e.path().lexically_relative(base).generic_string(),
                             hdr.width, hdr.height, hdr.channels});
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) {
              return a.rel_path < b.rel_path;
            });
  return index;
}

std::string DatasetIndex::abs_path(size_t i) const {
  return (fs::path(root) / fs::path(entries[i].rel_path)).string();
}

}  // namespace hst
