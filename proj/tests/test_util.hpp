#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "widthlab/linalg.hpp"
#include "widthlab/rng.hpp"

namespace testutil {

// Fresh scratch directory under the build tree, wiped on construction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / "widthlab_tests" / name;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  std::string str() const { return path.string(); }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline widthlab::Matrix random_symmetric(std::uint64_t seed, int n) {
  widthlab::Rng rng(seed);
  widthlab::Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = rng.next_gaussian();
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

inline widthlab::Matrix random_psd(std::uint64_t seed, int n) {
  widthlab::Rng rng(seed);
  widthlab::Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.next_gaussian();
  return a * a.transpose() / n;
}

}  // namespace testutil
