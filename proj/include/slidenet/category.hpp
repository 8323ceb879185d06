#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "slidenet/errors.hpp"

namespace slidenet {

/// Frame-volume categories, in network output order.
enum class Category : std::size_t { Unchanged = 0, Switch = 1, Transition = 2 };

inline constexpr std::array<Category, 3> kAllCategories = {Category::Unchanged, Category::Switch,
                                                           Category::Transition};

inline constexpr std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Unchanged: return "unchanged";
    case Category::Switch: return "switch";
    case Category::Transition: return "transition";
  }
  return "?";
}

inline Category category_from_string(std::string_view s) {
  if (s == "unchanged") return Category::Unchanged;
  if (s == "switch") return Category::Switch;
  if (s == "transition") return Category::Transition;
  throw FormatError("unknown category '" + std::string(s) + "'");
}

inline Category category_from_index(std::size_t i) {
  if (i >= 3) throw FormatError("category index " + std::to_string(i) + " out of range");
  return static_cast<Category>(i);
}

/// Ground-truth event kinds carried in events files.
enum class EventKind { Transition, Switch };

inline std::string_view to_string(EventKind k) { return k == EventKind::Transition ? "transition" : "switch"; }

inline EventKind event_kind_from_string(std::string_view s) {
  if (s == "transition") return EventKind::Transition;
  if (s == "switch") return EventKind::Switch;
  throw FormatError("unknown event kind '" + std::string(s) + "'");
}

struct EventLabel {
  std::size_t frame_index = 0;
  EventKind kind = EventKind::Transition;
  friend bool operator==(const EventLabel&, const EventLabel&) = default;
};

/// A detected slide transition. run_start/run_end give the frame span the
/// detection was gathered from.
struct TransitionEvent {
  std::size_t frame_index = 0;
  double confidence = 1.0;
  std::size_t run_start = 0;
  std::size_t run_end = 0;
  friend bool operator==(const TransitionEvent&, const TransitionEvent&) = default;
};

}  // namespace slidenet
