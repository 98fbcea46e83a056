#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "leap/container.hpp"

using namespace leap;
using leap::test::TempDir;

TEST_CASE("array container round trips every type bitwise") {
  TempDir dir;
  Rng rng(1);
  Mat m = leap::test::random_mat(rng, 7, 5);
  Vec v = leap::test::random_mat(rng, 9, 1).col(0);

  ArrayFile f;
  f.put_matrix("m", m);
  f.put_vector("v", v);
  f.put_scalar("pi", 3.14159);
  f.put_int("count", -42);
  f.put_ints("idx", {0, -1, 1 << 20});
  f.put_string("tag", "hello world");
  f.put_bytes("blob", {0, 255, 7});
  f.save(dir.file("a.bin"));

  ArrayFile g = ArrayFile::load(dir.file("a.bin"));
  CHECK(g.get_matrix("m") == m);
  CHECK(g.get_vector("v") == v);
  CHECK(g.get_scalar("pi") == 3.14159);
  CHECK(g.get_int("count") == -42);
  CHECK(g.get_ints("idx") == std::vector<std::int64_t>{0, -1, 1 << 20});
  CHECK(g.get_string("tag") == "hello world");
  CHECK(g.get_bytes("blob") == std::vector<std::uint8_t>{0, 255, 7});
  CHECK(g.has("m"));
  CHECK(!g.has("nope"));
  CHECK(g.names().size() == 7);
}

TEST_CASE("missing entries and type mismatches are reported by name") {
  ArrayFile f;
  f.put_scalar("x", 1.0);
  CHECK_THROWS_WITH_AS(f.get("y"), doctest::Contains("y"), std::exception);
  CHECK_THROWS(f.get_ints("x"));
}

TEST_CASE("corrupt files are rejected") {
  TempDir dir;
  ArrayFile f;
  f.put_matrix("m", Mat::Ones(20, 20));
  f.save(dir.file("a.bin"));

  SUBCASE("truncation") {
    std::ifstream in(dir.file("a.bin"), std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir.file("b.bin"), std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size() / 2));
    out.close();
    CHECK_THROWS(ArrayFile::load(dir.file("b.bin")));
  }
  SUBCASE("bad magic") {
    std::fstream io(dir.file("a.bin"), std::ios::in | std::ios::out | std::ios::binary);
    io.write("XXXX", 4);
    io.close();
    CHECK_THROWS(ArrayFile::load(dir.file("a.bin")));
  }
  SUBCASE("missing file") { CHECK_THROWS(ArrayFile::load(dir.file("nope.bin"))); }
}

TEST_CASE("overwrite guard") {
  TempDir dir;
  std::string path = dir.file("out.bin");
  CHECK_NOTHROW(check_overwrite(path, false));
  std::ofstream(path) << "x";
  CHECK_THROWS_WITH_AS(check_overwrite(path, false), doctest::Contains("out.bin"), std::exception);
  CHECK_NOTHROW(check_overwrite(path, true));
}
