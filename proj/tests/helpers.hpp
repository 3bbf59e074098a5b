#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "attrenh/config.hpp"
#include "attrenh/rng.hpp"
#include "attrenh/tensor.hpp"

namespace testutil {

/// Smallest image size the config accepts, narrow networks, tiny splits.
inline attrenh::RunConfig tiny_config() {
  attrenh::RunConfig c = attrenh::RunConfig::desk();
  c.data.height = 80;
  c.data.width = 16;
  c.data.train_count = 16;
  c.data.test_count = 8;
  c.classifier.channels = {4, 8};
  c.classifier.epochs = 1;
  c.classifier.batch = 4;
  c.classifier.lr = 0.01;
  c.gan.batch = 4;
  for (auto* e : {&c.reconstruction, &c.sr}) {
    e->width_divisor = 32;
    e->epochs = 1;
    e->pool = 2;
  }
  return c;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("attrenh_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

 private:
  std::filesystem::path path_;
};

template <typename T>
attrenh::Tensor<T> random_tensor(attrenh::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  attrenh::Rng rng(seed);
  attrenh::Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace testutil
