#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ibowimg {

// Lowercase, trim, collapse runs of whitespace to one space and strip
// trailing ASCII punctuation. Non-ASCII bytes pass through untouched.
std::string normalize_answer(std::string_view answer);

// Lowercase; bytes outside [a-z0-9'] become separators; empty tokens dropped.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace ibowimg
