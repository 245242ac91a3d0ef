#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xcap/tensor.hpp"
#include "xcap/tensor_io.hpp"

using namespace xcap;

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({2}).value(), DimensionError);
  CHECK(Tensor::scalar(3.5).value() == 3.5);
}

TEST_CASE("finiteness is an error state") {
  Tensor t({2}, {1.0, std::nan("")});
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("test"), NumericError);
}

TEST_CASE("reshape preserves data") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  CHECK(r.at2(2, 1) == 6.0);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("tensor binary format round trip") {
  auto dir = std::filesystem::temp_directory_path() / "xcap_tensor_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "t.xtsr").string();

  Tensor t({2, 2, 3});
  for (int i = 0; i < t.numel(); ++i) t[i] = 0.125 * i - 0.7;
  save_tensor(path, t);
  Tensor back = load_tensor(path);
  CHECK(back.shape() == t.shape());
  for (int i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

  // Header layout: magic, u32 rank, u64 extents, then f64 payload.
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "XTSR");
  uint32_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 4);
  CHECK(rank == 3);
  uint64_t e0 = 0;
  is.read(reinterpret_cast<char*>(&e0), 8);
  CHECK(e0 == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("named tensor table round trip") {
  auto dir = std::filesystem::temp_directory_path() / "xcap_table_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "params.xckp").string();

  std::map<std::string, Tensor> table;
  table["w"] = Tensor({2, 2}, {1, 2, 3, 4});
  table["b"] = Tensor({2}, {-1, 1});
  save_tensor_table(path, table);
  auto back = load_tensor_table(path);
  REQUIRE(back.size() == 2);
  CHECK(back.at("w").at2(1, 0) == 3.0);
  CHECK(back.at("b")[0] == -1.0);
  std::filesystem::remove_all(dir);
}
