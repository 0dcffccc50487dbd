#pragma once

#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "unir/linalg.hpp"

namespace unir::test {

inline std::filesystem::path data_dir() { return UNIR_TEST_DATA; }

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("unir-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Vector random_vector(std::mt19937_64& rng, std::size_t dim, bool unit = true) {
  std::normal_distribution<float> g;
  Vector v(dim);
  for (auto& x : v) x = g(rng);
  if (unit) {
    const double n = norm(v);
    for (auto& x : v) x = static_cast<float>(x / n);
  }
  return v;
}

}  // namespace unir::test
