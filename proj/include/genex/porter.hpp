#pragma once

#include <string>
#include <string_view>

namespace genex {

// The published 1980 Porter suffix-stripping algorithm (no later
// extensions, no short-word shortcut). Input is a lowercase ASCII word.
std::string porter_stem(std::string_view word);

}  // namespace genex
