#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tthf/category.hpp"

// The fixed two-tier prompt bank. Indices are 1-based everywhere in this
// module, matching how clips carry them: general 1..2, fine-grained 1..11.
namespace tthf::prompts {

enum class Tier { general, fine_grained };

struct PromptEntry {
  int index;  // 1-based within its tier
  Tier tier;
  std::string text;
};

inline constexpr int kGeneralCount = 2;
inline constexpr int kFineGrainedCount = 11;
inline constexpr int kGeneralAnomalyIndex = 1;
inline constexpr int kGeneralNormalIndex = 2;
inline constexpr int kFineNormalIndex = 11;

/// Index 1 = anomaly, index 2 = normal.
const std::vector<PromptEntry>& general_prompts();

/// Indices 1-3 ego collision with {vehicle, pedestrian, obstacle}, 4-6 the
/// non-ego variants, 7/8 ego/non-ego out-of-control, 9/10 ego/non-ego unknown,
/// 11 normal.
const std::vector<PromptEntry>& fine_grained_prompts();

/// Map (category, ego flag) to (fine-grained index, general index). NORMAL
/// ignores the ego flag.
std::pair<int, int> map_category(Category category, bool ego_involved);

/// Write the whole bank as JSON for audit.
void export_prompts(const std::filesystem::path& out_file);

}  // namespace tthf::prompts
