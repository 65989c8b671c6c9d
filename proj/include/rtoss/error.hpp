#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rtoss {

enum class ErrorKind {
  missing_file,
  manifest_parse,
  shape_mismatch,
  dangling_parent,
  cycle_detected,
  non_finite_weight,
  io_error,
  invalid_entry_count,
  dict_size_too_large,
  empty_dictionary,
  wrong_kernel_shape,
  unknown_layer,
  missing_assignment,
  inconsistent_inputs,
  invalid_argument,
  unsupported,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::missing_file: return "MissingFile";
  case ErrorKind::manifest_parse: return "ManifestParseError";
  case ErrorKind::shape_mismatch: return "ShapeMismatch";
  case ErrorKind::dangling_parent: return "DanglingParent";
  case ErrorKind::cycle_detected: return "CycleDetected";
  case ErrorKind::non_finite_weight: return "NonFiniteWeight";
  case ErrorKind::io_error: return "IoError";
  case ErrorKind::invalid_entry_count: return "InvalidEntryCount";
  case ErrorKind::dict_size_too_large: return "DictSizeTooLarge";
  case ErrorKind::empty_dictionary: return "EmptyDictionary";
  case ErrorKind::wrong_kernel_shape: return "WrongKernelShape";
  case ErrorKind::unknown_layer: return "UnknownLayer";
  case ErrorKind::missing_assignment: return "MissingAssignment";
  case ErrorKind::inconsistent_inputs: return "InconsistentInputs";
  case ErrorKind::invalid_argument: return "InvalidArgument";
  case ErrorKind::unsupported: return "Unsupported";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace rtoss
