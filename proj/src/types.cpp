#include "teamprod/types.hpp"

namespace teamprod {

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::start: return "start";
    case Dimension::riding: return "riding";
    case Dimension::finish: return "finish";
  }
  return "?";
}

std::string_view to_string(Task t) { return t == Task::start ? "start" : "riding"; }

std::optional<Dimension> parse_dimension(std::string_view text) {
  if (text == "start") return Dimension::start;
  if (text == "riding") return Dimension::riding;
  if (text == "finish") return Dimension::finish;
  return std::nullopt;
}

std::optional<Task> parse_task(std::string_view text) {
  if (text == "start") return Task::start;
  if (text == "riding") return Task::riding;
  return std::nullopt;
}

std::string slice_label(const Slice& s) {
  return std::string(to_string(s.task)) + "_" + std::to_string(s.attempt);
}

}  // namespace teamprod
