#pragma once

#include <stdexcept>
#include <string>

namespace dynmech {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class SchemaError : public Error { using Error::Error; };
class SupportError : public Error { using Error::Error; };
class DegenerateError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class MemoryError : public Error { using Error::Error; };
class AssumptionError : public Error { using Error::Error; };
class NotThresholdError : public Error { using Error::Error; };
class BudgetError : public Error { using Error::Error; };
class DerivativeError : public Error { using Error::Error; };
class NonFiniteError : public Error { using Error::Error; };

}  // namespace dynmech
