#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bevocc/tensor.hpp"
#include "support/helpers.hpp"

using namespace bevocc;
using namespace bevocc::testsupport;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("construction and shape bookkeeping") {
  Tensor t{{2, 3, 4}, 1.5};
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(2) == 4);
  CHECK(t(1, 2, 3) == 1.5);
  t(1, 2, 3) = -7.0;
  CHECK(t.at({1, 2, 3}) == -7.0);
  CHECK_THROWS_AS((void)t.at({2, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("zero-sized channel dims are allowed") {
  Tensor t{{0, 4, 4}};
  CHECK(t.size() == 0);
}

TEST_CASE("finiteness guard") {
  Tensor t{{2, 2}};
  CHECK(t.all_finite());
  t(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("test"), std::runtime_error);
}

TEST_CASE("occt round trip preserves f64 bits") {
  SplitMix64 rng{7};
  const Tensor t = random_tensor(rng, {3, 5, 2}, -100.0, 100.0);
  const std::string path = temp_path("bevocc_rt.occt");
  save_occt(path, t, OcctDtype::f64);
  OcctDtype dtype;
  const Tensor back = load_occt(path, &dtype);
  CHECK(dtype == OcctDtype::f64);
  CHECK(back.dims() == t.dims());
  CHECK(bit_equal(back, t));
  std::remove(path.c_str());
}

TEST_CASE("occt f32 and i64 modes convert through the file boundary") {
  const std::string path = temp_path("bevocc_dtype.occt");
  {
    const Tensor t = Tensor::from_data({3}, {0.5, -1.25, 1024.0});
    save_occt(path, t, OcctDtype::f32);
    const Tensor back = load_occt(path);
    CHECK(back(0) == 0.5);  // exactly representable in f32
    CHECK(back(1) == -1.25);
    CHECK(back(2) == 1024.0);
  }
  {
    const Tensor labels = Tensor::from_data({4}, {0.0, 3.0, 17.0, 2.0});
    save_occt(path, labels, OcctDtype::i64);
    OcctDtype dtype;
    const Tensor back = load_occt(path, &dtype);
    CHECK(dtype == OcctDtype::i64);
    CHECK(bit_equal(back, labels));
  }
  std::remove(path.c_str());
}

TEST_CASE("occt rejects unknown magic and version") {
  const std::string path = temp_path("bevocc_bad.occt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << '\x01' << '\x01' << '\x00';
  }
  CHECK_THROWS_AS(load_occt(path), std::runtime_error);
  {
    std::ofstream os(path, std::ios::binary);
    os << "OCCT" << '\x02' << '\x01' << '\x00';
  }
  CHECK_THROWS_AS(load_occt(path), std::runtime_error);
  {
    // dtype byte 0x07 is not defined
    std::ofstream os(path, std::ios::binary);
    os << "OCCT" << '\x01' << '\x07' << '\x00';
  }
  CHECK_THROWS_AS(load_occt(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("occt rejects truncated payloads") {
  const std::string path = temp_path("bevocc_trunc.occt");
  const Tensor t{{4, 4}, 1.0};
  save_occt(path, t, OcctDtype::f64);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 9);
  CHECK_THROWS_AS(load_occt(path), std::runtime_error);
  std::remove(path.c_str());
}
