#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "xcap/vocab.hpp"

using namespace xcap;

TEST_CASE("vocabulary build and thresholds") {
  std::vector<std::vector<std::string>> caps = {
      {"a", "red", "square"}, {"a", "blue", "square"}, {"a", "rare"}};
  SUBCASE("min_count=1 keeps all tokens") {
    Vocabulary v = Vocabulary::build(caps, 1);
    CHECK(v.size() == 3 + 5);  // specials + a, red, blue, square, rare
    CHECK(v.contains("rare"));
  }
  SUBCASE("tokens below the threshold map to unk") {
    Vocabulary v = Vocabulary::build(caps, 3);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("rare"));
    CHECK(v.id("rare") == v.unk_id());
    CHECK(v.id("red") == v.unk_id());
  }
  SUBCASE("fixture vocabulary size by hand count") {
    // counts: a=3, square=2, red=1, blue=1, rare=1 -> threshold 2 keeps 2.
    Vocabulary v = Vocabulary::build(caps, 2);
    CHECK(v.size() == 3 + 2);
    CHECK(v.count_of("red") == 1);  // counts keep sub-threshold tokens
  }
}

TEST_CASE("ids are dense and round trip") {
  std::vector<std::vector<std::string>> caps = {{"b", "c", "a"}, {"c", "b"}};
  Vocabulary v = Vocabulary::build(caps, 1);
  for (int i = 0; i < v.size(); ++i) {
    CHECK(v.id(v.token(i)) == i);
  }
  std::vector<std::string> words = {"a", "b", "c"};
  CHECK(v.decode(v.encode(words)) == words);
  CHECK(v.start_id() == 0);
  CHECK(v.end_id() == 1);
  CHECK(v.unk_id() == 2);
  CHECK_THROWS_AS(v.token(v.size()), std::out_of_range);
}

TEST_CASE("save and load round trip") {
  std::vector<std::vector<std::string>> caps = {{"x", "y"}, {"x"}};
  Vocabulary v = Vocabulary::build(caps, 1);
  auto dir = std::filesystem::temp_directory_path() / "xcap_vocab_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "vocab.txt").string();
  v.save(path);
  Vocabulary w = Vocabulary::load(path);
  CHECK(w.size() == v.size());
  CHECK(w.id("x") == v.id("x"));
  CHECK(w.count_of("x") == 2);
  std::filesystem::remove_all(dir);
}
