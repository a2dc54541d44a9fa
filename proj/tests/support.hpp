#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "agw/error.hpp"
#include "agw/raster.hpp"
#include "oracles.hpp"

// Checks that `expr` throws agw::Error carrying `error_code`.
#define CHECK_ERROR(expr, error_code)                                  \
  do {                                                                 \
    bool agw_thrown_ = false;                                          \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const agw::Error& agw_e_) {                               \
      agw_thrown_ = true;                                              \
      CHECK_MESSAGE(agw_e_.code() == (error_code), agw_e_.what());     \
    }                                                                  \
    CHECK_MESSAGE(agw_thrown_, "expected " #error_code " from " #expr); \
  } while (0)

namespace agw::test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("agw_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace agw::test
