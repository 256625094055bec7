#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace keepsake {

// Every failure the engine reports maps to one of these codes. The CLI and
// HTTP layer translate them to exit statuses and response codes.
enum class ErrorCode {
  EmptySamples,
  DimensionMismatch,
  DuplicateOwner,
  DegenerateCentroid,
  UnsortedInput,
  UnknownCluster,
  UnknownSpeaker,
  EmptyReference,
  UnenrolledOwner,
  EmptyDocument,
  UnknownMarker,
  InvalidEvent,
  EmptyQuestion,
  PermissionDenied,
  UnknownSession,
  NoSuchMetric,
  AnchorNotFound,
  NoReadingInWindow,
  EmptyWindow,
  InvalidFeature,
  MalformedPayload,
  UnsortedHistory,
  InvalidRule,
  EmptyQuery,
  ClientFailure,
  OutOfOrderTurn,
  CorruptRecord,
  ParseError,
  UnorderedScenario,
  PortInUse,
  InvalidConfig,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace keepsake
