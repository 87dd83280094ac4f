#ifndef EEGEMO_ERRORS_HPP
#define EEGEMO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace eegemo {

// Base for all typed errors. CLI exit-code mapping:
//   IoError -> 1, validation/format errors -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error { using Error::Error; };

struct FormatError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct InvalidArg : Error { using Error::Error; };
struct InvalidLabel : Error { using Error::Error; };
struct UnsupportedDtype : Error { using Error::Error; };
struct UnsupportedLayout : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };

struct NumericError : Error { using Error::Error; };

}  // namespace eegemo

#endif
