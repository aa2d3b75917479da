#pragma once

#include <stdexcept>
#include <string>

namespace marginlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroVectorError : Error {
  ZeroVectorError() : Error("cannot normalize a (near-)zero vector") {}
};

struct DimensionMismatchError : Error {
  using Error::Error;
};

struct InvalidHeadConfigError : Error {
  using Error::Error;
};

struct InvalidHeadStateError : Error {
  using Error::Error;
};

struct InvalidSpecError : Error {
  using Error::Error;
};

struct InsufficientDistractorsError : Error {
  using Error::Error;
};

struct InsufficientHoldoutError : Error {
  using Error::Error;
};

struct EmptyPairsError : Error {
  EmptyPairsError() : Error("verification needs at least one genuine and one impostor pair") {}
};

struct LedgerMissingError : Error {
  LedgerMissingError() : Error("metrics log was produced without a noise ledger attached") {}
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace marginlab
