#pragma once

#include <stdexcept>
#include <string>

namespace lobsim {

class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside the domain of a function (price outside the interval,
// rate above a curve's maximum, volume past the integrand blow-up).
class domain_error : public error {
 public:
  explicit domain_error(const std::string& what) : error(what) {}
};

class argument_error : public error {
 public:
  explicit argument_error(const std::string& what) : error(what) {}
};

// A model assumption (A1)..(A6) does not hold. `assumption()` names it.
class assumption_error : public error {
 public:
  assumption_error(std::string assumption, const std::string& what)
      : error("assumption " + assumption + " violated: " + what),
        assumption_(std::move(assumption)) {}
  const std::string& assumption() const noexcept { return assumption_; }

 private:
  std::string assumption_;
};

class degenerate_measure_error : public error {
 public:
  explicit degenerate_measure_error(const std::string& what) : error(what) {}
};

class insufficient_data_error : public error {
 public:
  explicit insufficient_data_error(const std::string& what) : error(what) {}
};

class invalid_map_error : public error {
 public:
  explicit invalid_map_error(const std::string& what) : error(what) {}
};

class singular_coefficient_error : public error {
 public:
  singular_coefficient_error(double where, const std::string& what)
      : error(what), where_(where) {}
  double where() const noexcept { return where_; }

 private:
  double where_;
};

class bound_vacuous_error : public error {
 public:
  explicit bound_vacuous_error(const std::string& what) : error(what) {}
};

class empty_support_error : public error {
 public:
  explicit empty_support_error(const std::string& what) : error(what) {}
};

class config_error : public error {
 public:
  explicit config_error(const std::string& what) : error(what) {}
};

}  // namespace lobsim
