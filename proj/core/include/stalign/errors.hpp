#pragma once

#include <stdexcept>
#include <string>

namespace stalign {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rigid fit is unidentifiable (too few points, or all source points coincide).
struct DegenerateInput : Error {
  using Error::Error;
};

/// A configuration value violates its documented range.
struct InvalidConfig : Error {
  using Error::Error;
};

/// File could not be opened, read, or written.
struct IoError : Error {
  using Error::Error;
};

/// A record in an input file failed to parse; carries the line number.
struct MalformedRecord : Error {
  MalformedRecord(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

/// A detection frame with zero boxes cannot become a graph.
struct EmptyFrame : Error {
  using Error::Error;
};

/// Correspondence indices fall outside either graph.
struct BadCorrespondence : Error {
  using Error::Error;
};

/// Parameter or tensor shapes are mutually inconsistent.
struct ShapeMismatch : Error {
  using Error::Error;
};

/// Two edge-feature vectors of different length were compared.
struct DimensionMismatch : Error {
  using Error::Error;
};

/// Contrastive loss called with both matched and unmatched sets empty.
struct EmptySets : Error {
  using Error::Error;
};

/// Training loss became non-finite.
struct DivergenceDetected : Error {
  using Error::Error;
};

/// Frame pushed into a graph buffer out of temporal order.
struct OutOfOrderFrame : Error {
  using Error::Error;
};

/// Every sampled minimal set was near-coincident; no pose can be fit.
struct DegenerateGeometry : Error {
  using Error::Error;
};

/// Exhaustive subgraph enumeration requested beyond its size cap.
struct TooLarge : Error {
  using Error::Error;
};

}  // namespace stalign
