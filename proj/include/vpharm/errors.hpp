#pragma once

#include <stdexcept>
#include <string>

namespace vpharm {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSample : public Error { using Error::Error; };
class NonConvergence : public Error { using Error::Error; };
class InvalidExponent : public Error { using Error::Error; };
class OutsideDomain : public Error { using Error::Error; };
class OutsidePoint : public Error { using Error::Error; };
class UnsupportedDimension : public Error { using Error::Error; };
class GridMismatch : public Error { using Error::Error; };
class VanishingGradient : public Error { using Error::Error; };
class ZeroRadius : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class NoExteriorSphere : public Error { using Error::Error; };
class UnsupportedP : public Error { using Error::Error; };
class PreconditionFailed : public Error { using Error::Error; };

}  // namespace vpharm
