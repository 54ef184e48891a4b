#pragma once

#include <stdexcept>
#include <string>

namespace spark {

// Input or file problems. The CLI maps these to exit code 2.
struct DataError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct ConfigError : DataError
{
  using DataError::DataError;
};

struct FormatError : DataError
{
  using DataError::DataError;
};

struct CorruptFileError : DataError
{
  using DataError::DataError;
};

// Numerical failures. The CLI maps these to exit code 3.
struct NumericalError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct DegenerateGeometryError : NumericalError
{
  using NumericalError::NumericalError;
};

struct DivergenceError : NumericalError
{
  using NumericalError::NumericalError;
};

} // namespace spark
