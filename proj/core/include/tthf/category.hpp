#pragma once

#include <string>

#include "tthf/common.hpp"

namespace tthf {

/// DoTA-style anomaly taxonomy plus NORMAL for videos without an anomaly.
enum class Category {
  ST,  // collision with a starting/stopping/stationary vehicle
  AH,  // collision with a vehicle moving ahead or waiting
  LA,  // collision with a vehicle moving laterally, same direction
  OC,  // collision with an oncoming vehicle
  TC,  // collision with a vehicle turning into or crossing the road
  VP,  // collision between vehicle and pedestrian
  VO,  // collision with an obstacle in the roadway
  OO,  // out-of-control, leaving the roadway
  UK,  // unknown
  NORMAL,
};

inline constexpr int kNumCategories = 10;

std::string to_string(Category c);
Category category_from_string(const std::string& s);

inline bool is_anomalous(Category c) { return c != Category::NORMAL; }

}  // namespace tthf
