#include "mtseg/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace mtseg::unicode {
namespace {

template <typename F>
void for_each_code_point(std::string_view text, F&& f) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (!f(c, start, i)) return;
  }
}

}  // namespace

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) return std::string(text);
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (norm->isNormalized(src, status) && U_SUCCESS(status)) return std::string(text);
  status = U_ZERO_ERROR;
  const icu::UnicodeString out = norm->normalize(src, status);
  if (U_FAILURE(status)) return std::string(text);
  std::string result;
  out.toUTF8String(result);
  return result;
}

std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  for_each_code_point(text, [&](UChar32, int32_t begin, int32_t end) {
    out.emplace_back(text.substr(begin, end - begin));
    return true;
  });
  return out;
}

std::size_t length(std::string_view text) {
  std::size_t n = 0;
  for_each_code_point(text, [&](UChar32, int32_t, int32_t) {
    ++n;
    return true;
  });
  return n;
}

bool has_lowercase(std::string_view text) {
  bool found = false;
  for_each_code_point(text, [&](UChar32 c, int32_t, int32_t) {
    found = c >= 0 && u_islower(c);
    return !found;
  });
  return found;
}

bool has_whitespace(std::string_view text) {
  bool found = false;
  for_each_code_point(text, [&](UChar32 c, int32_t, int32_t) {
    found = c >= 0 && u_isUWhiteSpace(c);
    return !found;
  });
  return found;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  int32_t token_start = -1;
  for_each_code_point(text, [&](UChar32 c, int32_t begin, int32_t) {
    const bool ws = c >= 0 && u_isUWhiteSpace(c);
    if (ws && token_start >= 0) {
      out.emplace_back(text.substr(token_start, begin - token_start));
      token_start = -1;
    } else if (!ws && token_start < 0) {
      token_start = begin;
    }
    return true;
  });
  if (token_start >= 0) out.emplace_back(text.substr(token_start));
  return out;
}

}  // namespace mtseg::unicode
