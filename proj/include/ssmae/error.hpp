#pragma once

#include <stdexcept>
#include <string>

namespace ssmae {

/// Failure categories. Each maps one-to-one onto a C API status code.
enum class Errc {
  dimension = 1,
  parameter,
  contract,
  invalid_mask,
  label,
  accumulation,
  determinism,
  format,
  io,
  sample,
  divergence,
  metric,
  config,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace ssmae
