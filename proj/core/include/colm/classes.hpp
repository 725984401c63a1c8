#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "colm/core.hpp"

namespace colm {

/// Internal class ids 0..6 are the static classes kept in the compact map.
/// Every other semantic class is assigned an id >= kNumStaticClasses.
inline constexpr std::array<std::string_view, 7> kStaticClassNames = {
    "sidewalk", "building", "fence", "vegetation", "trunk", "pole", "traffic-sign"};

inline constexpr std::size_t kNumStaticClasses = kStaticClassNames.size();

inline constexpr ClassId kSidewalk = 0;
inline constexpr ClassId kBuilding = 1;
inline constexpr ClassId kFence = 2;
inline constexpr ClassId kVegetation = 3;
inline constexpr ClassId kTrunk = 4;
inline constexpr ClassId kPole = 5;
inline constexpr ClassId kTrafficSign = 6;

}  // namespace colm
