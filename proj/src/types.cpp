#include "unir/types.hpp"

#include <algorithm>

#include "unir/error.hpp"

namespace unir {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MALFORMED_RECORD";
    case ErrorCode::DuplicateId: return "DUPLICATE_ID";
    case ErrorCode::DanglingReference: return "DANGLING_REF";
    case ErrorCode::ModalityMismatch: return "MODALITY_MISMATCH";
    case ErrorCode::MissingFeature: return "MISSING_FEATURE";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::ModeMismatch: return "MODE_MISMATCH";
    case ErrorCode::TooFewRows: return "TOO_FEW_ROWS";
    case ErrorCode::BadMagic: return "BAD_MAGIC";
    case ErrorCode::ChecksumMismatch: return "CHECKSUM_MISMATCH";
    case ErrorCode::NonSquare: return "NON_SQUARE";
    case ErrorCode::NonPositiveTemperature: return "NON_POSITIVE_TEMPERATURE";
    case ErrorCode::EmptyCorpus: return "EMPTY_CORPUS";
    case ErrorCode::BatchTooSmall: return "BATCH_TOO_SMALL";
    case ErrorCode::UnknownFormat: return "UNKNOWN_FORMAT";
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::EmptyHeldOut: return "EMPTY_HELD_OUT";
    case ErrorCode::NothingHeldIn: return "NOTHING_HELD_IN";
    case ErrorCode::Io: return "IO";
  }
  return "UNKNOWN";
}

bool is_data_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonSquare:
    case ErrorCode::NonPositiveTemperature:
      return false;
    default:
      return true;
  }
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::ImageText: return "image,text";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  if (s == "image,text" || s == "text,image") return Modality::ImageText;
  throw Error(ErrorCode::MalformedRecord, "unknown modality '" + std::string(s) + "'");
}

Modality query_modality(TaskKind t) {
  switch (t) {
    case TaskKind::T2I:
    case TaskKind::T2T:
    case TaskKind::T2IT:
      return Modality::Text;
    case TaskKind::I2T:
    case TaskKind::I2I:
      return Modality::Image;
    case TaskKind::IT2T:
    case TaskKind::IT2I:
    case TaskKind::IT2IT:
      return Modality::ImageText;
  }
  return Modality::Text;
}

Modality target_modality(TaskKind t) {
  switch (t) {
    case TaskKind::T2I:
    case TaskKind::I2I:
    case TaskKind::IT2I:
      return Modality::Image;
    case TaskKind::T2T:
    case TaskKind::I2T:
    case TaskKind::IT2T:
      return Modality::Text;
    case TaskKind::T2IT:
    case TaskKind::IT2IT:
      return Modality::ImageText;
  }
  return Modality::Text;
}

int task_number(TaskKind t) { return static_cast<int>(t); }

TaskKind task_from_number(int n) {
  if (n < 1 || n > 8)
    throw Error(ErrorCode::MalformedRecord, "task number out of range: " + std::to_string(n));
  return static_cast<TaskKind>(n);
}

std::string_view task_name(TaskKind t) {
  static constexpr std::array<std::string_view, 8> names = {
      "T2I", "T2T", "T2IT", "I2T", "I2I", "IT2T", "IT2I", "IT2IT"};
  return names[static_cast<int>(t) - 1];
}

TaskKind parse_task_name(std::string_view s) {
  for (TaskKind t : kAllTasks)
    if (task_name(t) == s) return t;
  if (s.size() == 1 && s[0] >= '1' && s[0] <= '8') return task_from_number(s[0] - '0');
  throw Error(ErrorCode::ConfigInvalid, "unknown task '" + std::string(s) + "'");
}

Domain::Domain(std::string label) : label_(std::move(label)) {
  const bool ok = !label_.empty() && std::all_of(label_.begin(), label_.end(), [](char ch) {
    auto c = static_cast<unsigned char>(ch);
    return c < 0x80 && !(c >= 'A' && c <= 'Z') && c > ' ';
  });
  if (!ok) throw Error(ErrorCode::MalformedRecord, "invalid domain label '" + label_ + "'");
}

bool Domain::is_canonical() const {
  return label_ == "news" || label_ == "misc" || label_ == "fashion" || label_ == "wiki";
}

}  // namespace unir
