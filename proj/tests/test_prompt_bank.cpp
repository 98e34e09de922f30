#include <doctest.h>

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

#include "test_helpers.hpp"
#include "tthf/prompt_bank.hpp"

using namespace tthf;
using namespace tthf::prompts;

TEST_SUITE_BEGIN("prompt_bank");

TEST_CASE("general prompts are the fixed anomaly/normal pair") {
  const auto& bank = general_prompts();
  REQUIRE(bank.size() == 2);
  CHECK(bank[0].index == 1);
  CHECK(bank[0].text == "A traffic anomaly occurred in the scene.");
  CHECK(bank[1].index == 2);
  CHECK(bank[1].text == "The traffic in this scenario is normal.");
}

TEST_CASE("fine-grained prompts follow the fixed ordering") {
  const auto& bank = fine_grained_prompts();
  REQUIRE(bank.size() == 11);
  CHECK(bank[0].text == "The ego vehicle collision with another vehicle.");
  CHECK(bank[3].text == "The non-ego vehicle collision with another vehicle.");
  CHECK(bank[6].text == "The ego vehicle out-of-control and leaving the roadway.");
  CHECK(bank[10].text == "The vehicle is running normally on the road.");
  for (int i = 0; i < 11; ++i) {
    CHECK(bank[i].index == i + 1);
    CHECK(bank[i].tier == Tier::fine_grained);
    CHECK(bank[i].text.back() == '.');
  }
  std::set<std::string> unique;
  for (const auto& e : bank) unique.insert(e.text);
  CHECK(unique.size() == 11);
}

TEST_CASE("map_category anchors") {
  CHECK(map_category(Category::OC, true) == std::pair<int, int>{1, 1});
  CHECK(map_category(Category::OO, true) == std::pair<int, int>{7, 1});
  CHECK(map_category(Category::NORMAL, false) == std::pair<int, int>{11, 2});
  CHECK(map_category(Category::NORMAL, true) == std::pair<int, int>{11, 2});  // flag ignored
}

TEST_CASE("map_category full table") {
  using C = Category;
  struct Row {
    C cat;
    int ego_slot;
    int non_ego_slot;
  };
  const Row rows[] = {
      {C::ST, 1, 4}, {C::AH, 1, 4}, {C::LA, 1, 4}, {C::OC, 1, 4}, {C::TC, 1, 4},
      {C::VP, 2, 5}, {C::VO, 3, 6}, {C::OO, 7, 8}, {C::UK, 9, 10},
  };
  for (const auto& row : rows) {
    CHECK(map_category(row.cat, true) == std::pair<int, int>{row.ego_slot, 1});
    CHECK(map_category(row.cat, false) == std::pair<int, int>{row.non_ego_slot, 1});
  }
}

TEST_CASE("map_category is total and surjective onto 1..11") {
  std::set<int> fine_seen;
  for (Category cat : {Category::ST, Category::AH, Category::LA, Category::OC, Category::TC,
                       Category::VP, Category::VO, Category::OO, Category::UK}) {
    for (bool ego : {true, false}) {
      auto [fine, general] = map_category(cat, ego);
      CHECK(general == 1);
      CHECK(fine >= 1);
      CHECK(fine <= 10);
      fine_seen.insert(fine);
    }
  }
  auto [fine, general] = map_category(Category::NORMAL, false);
  fine_seen.insert(fine);
  CHECK(general == 2);
  CHECK(fine_seen.size() == 11);
}

TEST_CASE("category string round trip rejects unknown names") {
  for (const char* name : {"ST", "AH", "LA", "OC", "TC", "VP", "VO", "OO", "UK", "NORMAL"}) {
    CHECK(to_string(category_from_string(name)) == name);
  }
  CHECK_THROWS_AS(category_from_string("XX"), ValidationError);
}

TEST_CASE("export writes the whole bank as JSON") {
  tthf_test::ScratchDir scratch("prompts");
  const auto path = scratch.path() / "prompts.json";
  export_prompts(path);
  std::ifstream in(path);
  nlohmann::json doc = nlohmann::json::parse(in);
  REQUIRE(doc.at("general").size() == 2);
  REQUIRE(doc.at("fine_grained").size() == 11);
  CHECK(doc["fine_grained"][10]["text"] == "The vehicle is running normally on the road.");
}

TEST_SUITE_END();
