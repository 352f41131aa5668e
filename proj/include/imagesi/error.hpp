#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace imagesi {

enum class Errc {
  invalid_argument,
  parse_error,
  not_found,
  conflict,
  degenerate,
  numerical,
};

/// Library-wide exception. `details` carries per-item diagnostics
/// (one entry per offending row or moved point) when there are several.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::vector<std::string> details = {})
      : std::runtime_error(what), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  Errc code_;
  std::vector<std::string> details_;
};

const char* errc_name(Errc code) noexcept;

}  // namespace imagesi
