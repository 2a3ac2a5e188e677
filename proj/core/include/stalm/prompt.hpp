#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stalm/motion.hpp"
#include "stalm/world.hpp"

namespace stalm::prompt {

struct PromptBundle {
  std::string system_text;
  std::string user_text;
};

struct TaskPlan {
  std::vector<world::DiscreteAction> actions;

  bool operator==(const TaskPlan& o) const { return actions == o.actions; }
};

struct ParseError {
  enum class Kind { NoPlanBlock, MalformedTuple, UnknownEntity, BadArity };
  Kind kind = Kind::NoPlanBlock;
  int tuple_index = -1;   // MalformedTuple/BadArity
  std::string name;       // UnknownEntity
  std::string message;
};

std::string to_string(ParseError::Kind kind);

struct ParsedResponse {
  std::string challenges;
  TaskPlan plan;
  std::string raw;
};

struct ParseResult {
  std::optional<ParsedResponse> response;
  std::optional<ParseError> error;

  bool ok() const { return response.has_value(); }
};

/// Renders the PDDL-style prompt for the state. Deterministic and
/// byte-stable: objects are sorted by (kind, name), init literals by
/// predicate then arguments.
PromptBundle create_prompt(const world::WorldState& s, const world::Goal& g,
                           const world::ProblemInstance& prob,
                           const motion::LiteralSet& literals);

/// Extracts the plan from an LLM response: the last `plan = [...]` block is
/// parsed as a list of quoted-string tuples, tolerating comments, trailing
/// commas, and either bracket or quote style. Never throws; malformed input
/// yields a structured ParseError.
ParseResult parse_response(const std::string& text,
                           const world::ProblemInstance& prob);

/// Inverse of parse_response on well-typed plans.
std::string format_plan(const TaskPlan& plan);

}  // namespace stalm::prompt
