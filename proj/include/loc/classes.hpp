#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace loc {

/// Semantic class id. Semantic ids are < kNumSemanticClasses; the two reserved
/// ids below never denote a semantic class.
using ClassId = int;

inline constexpr int kNumSemanticClasses = 17;  // K_total
inline constexpr ClassId kFree = 17;
inline constexpr ClassId kUnknown = 255;
inline constexpr ClassId kOccupied = 254;  // occupied, no semantics yet

// Occ3D-nuScenes ordering; index == class id.
inline constexpr std::array<std::string_view, kNumSemanticClasses> kClassNames = {
    "others",       "barrier",          "bicycle",    "bus",       "car",
    "construction vehicle",             "motorcycle", "pedestrian", "traffic cone",
    "trailer",      "truck",            "drivable surface",        "other flat",
    "sidewalk",     "terrain",          "manmade",    "vegetation"};

inline std::optional<ClassId> class_id_of(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == name) return static_cast<ClassId>(i);
  if (name == "free") return kFree;
  return std::nullopt;
}

inline std::string class_name_of(ClassId id) {
  if (id >= 0 && id < kNumSemanticClasses) return std::string(kClassNames[id]);
  if (id == kFree) return "free";
  if (id == kUnknown) return "unknown";
  if (id == kOccupied) return "occupied";
  return "class_" + std::to_string(id);
}

inline bool is_semantic(ClassId id) { return id >= 0 && id < kNumSemanticClasses; }

}  // namespace loc
