#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtseg::unicode {

// Canonical composition (NFC). Invalid UTF-8 is passed through unchanged.
std::string nfc(std::string_view text);

// Splits into code points, each returned as its UTF-8 encoding.
std::vector<std::string> code_points(std::string_view text);

std::size_t length(std::string_view text);

// True if any code point has general category Ll.
bool has_lowercase(std::string_view text);

bool has_whitespace(std::string_view text);

// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace mtseg::unicode
