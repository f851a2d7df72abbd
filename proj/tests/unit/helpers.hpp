#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rankprompt/matrix.hpp"
#include "rankprompt/rng.hpp"

namespace rptest {

inline rankprompt::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                        double stddev = 1.0) {
  rankprompt::Engine rng(seed);
  return rankprompt::gaussian_matrix(rows, cols, stddev, rng);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("rankprompt_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace rptest
