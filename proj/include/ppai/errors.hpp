#pragma once

#include <stdexcept>
#include <string>

namespace ppai {

enum class Errc {
  EmptyQuery,
  DimensionMismatch,
  DegenerateProjection,
  NonPositiveTopScores,
  LabelDimensionMismatch,
  EmptyTrainingSet,
  ZeroVector,
  EmptyBatch,
  FanoutTooLarge,
  NoLiveAgents,
  InstanceTooLarge,
  NoEquilibriumFound,
  ConfigInvalid,
  FileNotFound,
  IoError,
  ParseError,
  SpecInvalid,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DegenerateProjection: return "DegenerateProjection";
    case Errc::NonPositiveTopScores: return "NonPositiveTopScores";
    case Errc::LabelDimensionMismatch: return "LabelDimensionMismatch";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::FanoutTooLarge: return "FanoutTooLarge";
    case Errc::NoLiveAgents: return "NoLiveAgents";
    case Errc::InstanceTooLarge: return "InstanceTooLarge";
    case Errc::NoEquilibriumFound: return "NoEquilibriumFound";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
    case Errc::SpecInvalid: return "SpecInvalid";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace ppai
