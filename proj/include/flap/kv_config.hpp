#pragma once

// Plain-text key-value documents: "key = value" lines, '#' comments, and
// optional "[section]" headers that prefix later keys with "section.".

#include <string>
#include <string_view>
#include <vector>

namespace flap {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValue> parse_kv(std::string_view text);

}  // namespace flap
