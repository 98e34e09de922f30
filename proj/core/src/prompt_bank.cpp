#include "tthf/prompt_bank.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace tthf {

std::string to_string(Category c) {
  switch (c) {
    case Category::ST: return "ST";
    case Category::AH: return "AH";
    case Category::LA: return "LA";
    case Category::OC: return "OC";
    case Category::TC: return "TC";
    case Category::VP: return "VP";
    case Category::VO: return "VO";
    case Category::OO: return "OO";
    case Category::UK: return "UK";
    case Category::NORMAL: return "NORMAL";
  }
  throw ValidationError("unknown category value");
}

Category category_from_string(const std::string& s) {
  if (s == "ST") return Category::ST;
  if (s == "AH") return Category::AH;
  if (s == "LA") return Category::LA;
  if (s == "OC") return Category::OC;
  if (s == "TC") return Category::TC;
  if (s == "VP") return Category::VP;
  if (s == "VO") return Category::VO;
  if (s == "OO") return Category::OO;
  if (s == "UK") return Category::UK;
  if (s == "NORMAL") return Category::NORMAL;
  throw ValidationError("unknown category: '" + s + "'");
}

}  // namespace tthf

namespace tthf::prompts {

const std::vector<PromptEntry>& general_prompts() {
  static const std::vector<PromptEntry> bank = {
      {1, Tier::general, "A traffic anomaly occurred in the scene."},
      {2, Tier::general, "The traffic in this scenario is normal."},
  };
  return bank;
}

const std::vector<PromptEntry>& fine_grained_prompts() {
  static const std::vector<PromptEntry> bank = {
      {1, Tier::fine_grained, "The ego vehicle collision with another vehicle."},
      {2, Tier::fine_grained, "The ego vehicle collision with another pedestrian."},
      {3, Tier::fine_grained, "The ego vehicle collision with another obstacle."},
      {4, Tier::fine_grained, "The non-ego vehicle collision with another vehicle."},
      {5, Tier::fine_grained, "The non-ego vehicle collision with another pedestrian."},
      {6, Tier::fine_grained, "The non-ego vehicle collision with another obstacle."},
      {7, Tier::fine_grained, "The ego vehicle out-of-control and leaving the roadway."},
      {8, Tier::fine_grained, "The non-ego vehicle out-of-control and leaving the roadway."},
      {9, Tier::fine_grained, "The ego vehicle has an unknown accident."},
      {10, Tier::fine_grained, "The non-ego vehicle has an unknown accident."},
      {11, Tier::fine_grained, "The vehicle is running normally on the road."},
  };
  return bank;
}

std::pair<int, int> map_category(Category category, bool ego_involved) {
  if (category == Category::NORMAL) {
    return {kFineNormalIndex, kGeneralNormalIndex};
  }
  int slot;  // 1-based slot within the ego block
  switch (category) {
    case Category::ST:
    case Category::AH:
    case Category::LA:
    case Category::OC:
    case Category::TC:
      slot = 1;  // collision with another vehicle
      break;
    case Category::VP:
      slot = 2;  // collision with a pedestrian
      break;
    case Category::VO:
      slot = 3;  // collision with an obstacle
      break;
    case Category::OO:
      return {ego_involved ? 7 : 8, kGeneralAnomalyIndex};
    case Category::UK:
      return {ego_involved ? 9 : 10, kGeneralAnomalyIndex};
    default:
      throw ValidationError("map_category: unknown category");
  }
  return {ego_involved ? slot : slot + 3, kGeneralAnomalyIndex};
}

void export_prompts(const std::filesystem::path& out_file) {
  nlohmann::json doc;
  auto dump_tier = [](const std::vector<PromptEntry>& entries, const char* tier_name) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
      arr.push_back({{"index", e.index}, {"tier", tier_name}, {"text", e.text}});
    }
    return arr;
  };
  doc["general"] = dump_tier(general_prompts(), "general");
  doc["fine_grained"] = dump_tier(fine_grained_prompts(), "fine_grained");
  std::ofstream out(out_file);
  if (!out) throw IoError("cannot write prompts file: " + out_file.string());
  out << doc.dump(2) << "\n";
}

}  // namespace tthf::prompts
