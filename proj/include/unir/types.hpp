#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unir {

enum class Modality : std::uint8_t { Text, Image, ImageText };

std::string_view modality_name(Modality m);  // "text" | "image" | "image,text"
Modality parse_modality(std::string_view s);  // throws Error(MalformedRecord)

inline bool has_text(Modality m) { return m != Modality::Image; }
inline bool has_image(Modality m) { return m != Modality::Text; }

// The eight retrieval tasks, numbered 1..8 in query -> candidate order.
enum class TaskKind : std::uint8_t {
  T2I = 1,
  T2T = 2,
  T2IT = 3,
  I2T = 4,
  I2I = 5,
  IT2T = 6,
  IT2I = 7,
  IT2IT = 8,
};

inline constexpr std::array<TaskKind, 8> kAllTasks = {
    TaskKind::T2I, TaskKind::T2T, TaskKind::T2IT, TaskKind::I2T,
    TaskKind::I2I, TaskKind::IT2T, TaskKind::IT2I, TaskKind::IT2IT};

Modality query_modality(TaskKind t);
Modality target_modality(TaskKind t);
int task_number(TaskKind t);
TaskKind task_from_number(int n);  // throws Error(MalformedRecord) outside 1..8
std::string_view task_name(TaskKind t);  // "T2I", ...
TaskKind parse_task_name(std::string_view s);

// Lowercase ASCII domain label ("news", "misc", "fashion", "wiki", or synthetic).
class Domain {
 public:
  Domain() = default;
  explicit Domain(std::string label);  // throws Error(MalformedRecord) if invalid

  const std::string& str() const { return label_; }
  bool is_canonical() const;

  friend bool operator==(const Domain&, const Domain&) = default;
  friend auto operator<=>(const Domain&, const Domain&) = default;

 private:
  std::string label_;
};

struct Instruction {
  std::string text;
  TaskKind task = TaskKind::T2I;
  std::string intent;
  Domain domain;
  Modality query_modality = Modality::Text;
  Modality target_modality = Modality::Image;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Candidate {
  std::string did;
  Modality modality = Modality::Text;
  Domain domain;
  std::optional<std::string> text;
  std::optional<std::string> image_ref;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct QueryInstance {
  std::string qid;
  TaskKind task = TaskKind::T2I;
  std::string dataset;
  Modality modality = Modality::Text;
  std::optional<std::string> text;
  std::optional<std::string> image_ref;
  std::vector<Instruction> instructions;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;

  friend bool operator==(const QueryInstance&, const QueryInstance&) = default;
};

}  // namespace unir
