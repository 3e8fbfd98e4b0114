#pragma once

#include <stdexcept>
#include <string>

namespace riskdid {

enum class errc {
  io,
  parse,
  config,
  missing_data,
  duplicate_row,
  bad_exposure,
  domain,
  name,
  empty_design,
  degenerate,
  group_overlap,
  split,
  truncated_horizon,
  unsupported,
  internal,
};

// Single exception type carrying a machine-readable code; the C API maps
// codes onto rsd_status values.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace riskdid
