#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace teamprod {

// Timed outcome measured on every run. Riding is the complement of start.
enum class Dimension { start, riding, finish };

// Production tasks a two-person team performs within one run.
enum class Task { start, riding };

std::string_view to_string(Dimension d);
std::string_view to_string(Task t);
std::optional<Dimension> parse_dimension(std::string_view text);
std::optional<Task> parse_task(std::string_view text);

inline Dimension dimension_of(Task t) {
  return t == Task::start ? Dimension::start : Dimension::riding;
}

// One (task, attempt) estimation slice.
struct Slice {
  Task task = Task::start;
  int attempt = 1;

  auto operator<=>(const Slice&) const = default;
};

// "start_1", "riding_2", ...
std::string slice_label(const Slice& s);

}  // namespace teamprod
