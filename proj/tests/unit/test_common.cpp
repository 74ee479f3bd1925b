#include <set>
#include <stdexcept>

#include "common/binary_io.hpp"
#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/random.hpp"
#include "common/text.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace nodulekit;

TEST_CASE("sha256 and base64 known vectors") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string man = "Man";
  const std::vector<unsigned char> bytes(man.begin(), man.end());
  CHECK(base64_encode(bytes) == "TWFu");
  const std::vector<unsigned char> two = {'M', 'a'};
  CHECK(base64_encode(two) == "TWE=");
  CHECK(base64_decode("TWE=") == two);

  Rng rng(5);
  std::vector<unsigned char> blob(1001);
  for (auto& b : blob) b = static_cast<unsigned char>(uniform_index(rng, 256));
  CHECK(base64_decode(base64_encode(blob)) == blob);
}

TEST_CASE("byte reader and writer are little endian and bounds checked") {
  ByteWriter w;
  w.put<std::uint32_t>(0x01020304u);
  w.put<std::uint8_t>(7);
  CHECK(w.bytes() == std::vector<unsigned char>{4, 3, 2, 1, 7});
  ByteReader r(w.bytes(), ErrorCode::kCorruptArchive);
  CHECK(r.get<std::uint32_t>() == 0x01020304u);
  CHECK(r.get<std::uint8_t>() == 7);
  NK_CHECK_ERROR(r.get<std::uint8_t>(), kCorruptArchive);
}

TEST_CASE("derived seeds are distinct and random helpers stay in range") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 10000);
  CHECK(derive_seed(42, 3) == derive_seed(42, 3));

  Rng rng(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = uniform_index(rng, 7);
    REQUIRE(k < 7);
    ++hits[k];
  }
  for (int h : hits) CHECK(h > 800);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }

  Rng a(9), b(9);
  std::vector<int> x(50), y(50);
  for (int i = 0; i < 50; ++i) x[i] = y[i] = i;
  shuffle(x, a);
  shuffle(y, b);
  CHECK(x == y);
  std::sort(x.begin(), x.end());
  for (int i = 0; i < 50; ++i) CHECK(x[i] == i);
}

TEST_CASE("parallel_for fills per-index slots and rethrows") {
  std::vector<int> out(1000, 0);
  parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = static_cast<int>(i * i % 97); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i % 97));
  CHECK_THROWS_AS(parallel_for(100, 4, [](std::size_t i) {
                    if (i == 57) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("text helpers") {
  CHECK(trim("  a b \t\r") == "a b");
  CHECK(split("a,,b", ',').size() == 3);
  CHECK(split_whitespace("  1  2\t3 ").size() == 3);
  CHECK(parse_double("1e-3") == 1e-3);
  CHECK_FALSE(parse_double("1.0x").has_value());
  CHECK(parse_int("-12") == -12);
  CHECK_FALSE(parse_int("1.5").has_value());
  for (double v : {0.1, -187.1999969482422, 1.0 / 3.0, 6.02e23, 0.703125}) {
    CHECK(*parse_double(format_number(v)) == v);
  }
  CHECK(error_code_name(ErrorCode::kBadMagic) == "BadMagic");
  CHECK(error_code_name(ErrorCode::kVersionMismatch) == "VersionMismatch");
}
