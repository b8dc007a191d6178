#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace treexplain {

enum class ErrorCode {
  UnbalancedBrackets,
  EmptyTree,
  LeafWithChildren,
  UnknownLabel,
  UnknownNodeId,
  EmptyNodeSet,
  MalformedRecord,
  DimensionMismatch,
  NonFiniteValue,
  MissingNodeVector,
  MissingTeacherLabel,
  EmptyDataset,
  MissingLabels,
  EmptyPlayerSet,
  GraphTooSmall,
  InvalidConfig,
  EmptyList,
  SubgraphOutsideGraph,
  AmbiguousCluster,
  DisconnectedGraph,
  TooFewRecords,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedBrackets: return "UnbalancedBrackets";
    case ErrorCode::EmptyTree: return "EmptyTree";
    case ErrorCode::LeafWithChildren: return "LeafWithChildren";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownNodeId: return "UnknownNodeId";
    case ErrorCode::EmptyNodeSet: return "EmptyNodeSet";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingNodeVector: return "MissingNodeVector";
    case ErrorCode::MissingTeacherLabel: return "MissingTeacherLabel";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::EmptyPlayerSet: return "EmptyPlayerSet";
    case ErrorCode::GraphTooSmall: return "GraphTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::SubgraphOutsideGraph: return "SubgraphOutsideGraph";
    case ErrorCode::AmbiguousCluster: return "AmbiguousCluster";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace treexplain
