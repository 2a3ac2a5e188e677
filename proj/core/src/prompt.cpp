#include "stalm/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace stalm::prompt {
namespace {

constexpr const char* kSystemText =
    "You are an expert proficient in PDDL and planning actions for a problem. "
    "Your response should follow this template: "
    "## Possible Challenges for unachieved goals based on current state ##\n\n"
    "## Plan for unachieved goals ##\n"
    "plan = [('action_type', 'args_1', 'args_2', ...)]\n";

constexpr const char* kDomainText =
    "### Domain ###\n"
    "(define (domain shop)\n"
    "  (:requirements :typing :derived-predicates)\n"
    "  (:types movable_object region openable - object)\n"
    "  (:constants on left_of right_of front_of behind_of - direction)\n"
    "  (:predicates\n"
    "    (RobotHolding ?movable_object) ; True if robot is holding "
    "movable_object\n"
    "    (HandAvailable) ; True if robot hand is available\n"
    "    (AtPosition ?subject ?direction ?reference) ; True if subject is at "
    "direction of reference\n"
    "    (IsClosed ?door) ; True if the door is closed\n"
    "    (PickOccludedBy ?subject ?occluder) ; True if action (pick, subject) "
    "is occluded by occluder\n"
    "    (PlaceOccludedBy ?subject ?direction ?reference ?occluder) ; True if "
    "action (place, subject, direction, reference) is occluded by occluder)\n"
    "  (:derived (UnsafePick ?subject)\n"
    "    (exists (?occluder) (PickOccludedBy ?subject ?occluder)))\n"
    "  (:derived (UnsafePlace ?subject ?direction ?reference)\n"
    "    (exists (?occluder) (PlaceOccludedBy ?subject ?direction ?reference "
    "?occluder)))\n"
    "  (:action pick ; example ('pick', 'bottle')\n"
    "    :parameters (?subject)\n"
    "    :precondition (and (HandAvailable) (not (UnsafePick ?subject)))\n"
    "    :effect (and (not (HandAvailable)) (RobotHolding ?subject)\n"
    "      (not (AtPosition ?subject ?direction ?reference))))\n"
    "  (:action place ; example ('place', 'bottle', 'behind_of', 'can')\n"
    "    :parameters (?subject ?direction ?reference)\n"
    "    :precondition (and (RobotHolding ?subject)\n"
    "      (not (UnsafePlace ?subject ?direction ?reference)))\n"
    "    :effect (and (not (RobotHolding ?subject)) (HandAvailable)\n"
    "      (AtPosition ?subject ?direction ?reference)))\n"
    "  (:action open ; example ('open', 'door')\n"
    "    :parameters (?subject)\n"
    "    :precondition (and (IsClosed ?subject) (HandAvailable))\n"
    "    :effect (and (not (IsClosed ?subject)))))\n";

std::string type_token(world::EntityKind kind) {
  switch (kind) {
    case world::EntityKind::movable: return "movable_object";
    case world::EntityKind::region: return "region";
    case world::EntityKind::door: return "openable";
  }
  return "object";
}

bool word_boundary_before(const std::string& text, std::size_t pos) {
  if (pos == 0) return true;
  const unsigned char c = static_cast<unsigned char>(text[pos - 1]);
  return !(std::isalnum(c) || c == '_');
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Token stream over the plan list body: skips whitespace and '#' comments.
class Cursor {
 public:
  Cursor(const std::string& text, std::size_t pos) : text_(text), pos_(pos) {}

  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void advance() { ++pos_; }

  /// Parses a single- or double-quoted string; returns nullopt on failure.
  std::optional<std::string> quoted() {
    skip();
    if (done()) return std::nullopt;
    const char q = peek();
    if (q != '\'' && q != '"') return std::nullopt;
    advance();
    std::string out;
    while (!done() && peek() != q) {
      out.push_back(peek());
      advance();
    }
    if (done()) return std::nullopt;
    advance();
    return out;
  }

 private:
  const std::string& text_;
  std::size_t pos_;
};

ParseResult make_error(ParseError::Kind kind, int index, std::string name,
                       std::string message) {
  ParseResult out;
  out.error = ParseError{kind, index, std::move(name), std::move(message)};
  return out;
}

std::string extract_challenges(const std::string& text) {
  const std::string low = lower(text);
  const std::size_t start = low.find("## possible challenges");
  if (start == std::string::npos) return "";
  std::size_t body = low.find("##", start + 2);
  if (body == std::string::npos) return "";
  body += 2;
  std::size_t end = low.find("## plan", body);
  if (end == std::string::npos) end = text.size();
  return text.substr(body, end - body);
}

}  // namespace

std::string to_string(ParseError::Kind kind) {
  switch (kind) {
    case ParseError::Kind::NoPlanBlock: return "NoPlanBlock";
    case ParseError::Kind::MalformedTuple: return "MalformedTuple";
    case ParseError::Kind::UnknownEntity: return "UnknownEntity";
    case ParseError::Kind::BadArity: return "BadArity";
  }
  return "?";
}

PromptBundle create_prompt(const world::WorldState& s, const world::Goal& g,
                           const world::ProblemInstance& prob,
                           const motion::LiteralSet& literals) {
  PromptBundle out;
  out.system_text = kSystemText;

  std::ostringstream user;
  user << kDomainText;
  user << "\n### Problem ###\n";

  std::vector<std::pair<world::EntityKind, std::string>> objects;
  for (const auto& m : prob.movables) {
    objects.emplace_back(world::EntityKind::movable, m.name);
  }
  for (const auto& r : prob.regions) {
    objects.emplace_back(world::EntityKind::region, r.name);
  }
  for (const auto& d : prob.doors) {
    objects.emplace_back(world::EntityKind::door, d.name);
  }
  std::sort(objects.begin(), objects.end());
  user << "(:objects\n";
  for (const auto& [kind, name] : objects) {
    user << "  " << name << " - " << type_token(kind) << "\n";
  }
  user << ")\n";

  user << "(:init\n";
  for (const auto& [lit, _] : literals.entries()) {
    user << "  " << lit.to_string() << "\n";
  }
  user << ")\n";

  user << "(:goal (and\n";
  for (const auto& c : g.conjuncts) {
    user << "  (AtPosition " << c.subject << " " << world::to_string(c.dir)
         << " " << c.ref << ")\n";
  }
  user << "))\n";
  user << "Generate a plan to achieve the goals from init.\n";
  out.user_text = user.str();
  return out;
}

ParseResult parse_response(const std::string& text,
                           const world::ProblemInstance& prob) {
  // Last `plan = [` occurrence wins.
  std::size_t list_start = std::string::npos;
  std::size_t search = 0;
  while (true) {
    const std::size_t hit = text.find("plan", search);
    if (hit == std::string::npos) break;
    search = hit + 4;
    if (!word_boundary_before(text, hit)) continue;
    std::size_t p = hit + 4;
    while (p < text.size() &&
           std::isspace(static_cast<unsigned char>(text[p]))) {
      ++p;
    }
    if (p >= text.size() || text[p] != '=') continue;
    ++p;
    while (p < text.size() &&
           std::isspace(static_cast<unsigned char>(text[p]))) {
      ++p;
    }
    if (p >= text.size() || text[p] != '[') continue;
    list_start = p;
  }
  if (list_start == std::string::npos) {
    return make_error(ParseError::Kind::NoPlanBlock, -1, "",
                      "no `plan = [...]` block found");
  }

  Cursor cur(text, list_start + 1);
  std::vector<world::DiscreteAction> actions;
  int index = 0;
  while (true) {
    cur.skip();
    if (cur.done()) {
      return make_error(ParseError::Kind::MalformedTuple, index, "",
                        "plan list not closed");
    }
    if (cur.peek() == ']') {
      cur.advance();
      break;
    }
    if (cur.peek() == ',') {
      cur.advance();
      continue;
    }
    const char open = cur.peek();
    if (open != '(' && open != '[') {
      return make_error(ParseError::Kind::MalformedTuple, index, "",
                        "expected a tuple at index " + std::to_string(index));
    }
    const char close = open == '(' ? ')' : ']';
    cur.advance();
    std::vector<std::string> items;
    while (true) {
      cur.skip();
      if (cur.done()) {
        return make_error(ParseError::Kind::MalformedTuple, index, "",
                          "tuple " + std::to_string(index) + " not closed");
      }
      if (cur.peek() == close) {
        cur.advance();
        break;
      }
      if (cur.peek() == ',') {
        cur.advance();
        continue;
      }
      const auto item = cur.quoted();
      if (!item) {
        return make_error(ParseError::Kind::MalformedTuple, index, "",
                          "tuple " + std::to_string(index) +
                              " contains a non-string element");
      }
      items.push_back(*item);
    }
    if (items.empty()) {
      return make_error(ParseError::Kind::MalformedTuple, index, "",
                        "tuple " + std::to_string(index) + " is empty");
    }

    const std::string op = lower(items[0]);
    if (op == "pick" || op == "open") {
      if (items.size() != 2) {
        return make_error(ParseError::Kind::BadArity, index, "",
                          "tuple " + std::to_string(index) + ": '" + op +
                              "' takes one argument");
      }
      const auto kind = prob.kind_of(items[1]);
      if (op == "pick") {
        if (kind != world::EntityKind::movable) {
          return make_error(ParseError::Kind::UnknownEntity, index, items[1],
                            "tuple " + std::to_string(index) + ": '" +
                                items[1] + "' is not a movable");
        }
        actions.push_back(world::make_pick(items[1]));
      } else {
        if (kind != world::EntityKind::door) {
          return make_error(ParseError::Kind::UnknownEntity, index, items[1],
                            "tuple " + std::to_string(index) + ": '" +
                                items[1] + "' is not a door");
        }
        actions.push_back(world::make_open(items[1]));
      }
    } else if (op == "place") {
      if (items.size() != 4) {
        return make_error(ParseError::Kind::BadArity, index, "",
                          "tuple " + std::to_string(index) +
                              ": 'place' takes three arguments");
      }
      if (prob.kind_of(items[1]) != world::EntityKind::movable) {
        return make_error(ParseError::Kind::UnknownEntity, index, items[1],
                          "tuple " + std::to_string(index) + ": '" + items[1] +
                              "' is not a movable");
      }
      const auto dir = world::parse_direction(lower(items[2]));
      if (!dir) {
        return make_error(ParseError::Kind::UnknownEntity, index, items[2],
                          "tuple " + std::to_string(index) + ": '" + items[2] +
                              "' is not a direction");
      }
      const auto ref_kind = prob.kind_of(items[3]);
      if (*dir == world::Direction::on) {
        if (ref_kind != world::EntityKind::region) {
          return make_error(ParseError::Kind::UnknownEntity, index, items[3],
                            "tuple " + std::to_string(index) + ": '" +
                                items[3] + "' is not a region");
        }
      } else if (ref_kind != world::EntityKind::movable ||
                 items[3] == items[1]) {
        return make_error(ParseError::Kind::UnknownEntity, index, items[3],
                          "tuple " + std::to_string(index) + ": '" + items[3] +
                              "' is not another movable");
      }
      actions.push_back(world::make_place(items[1], *dir, items[3]));
    } else {
      return make_error(ParseError::Kind::MalformedTuple, index, "",
                        "tuple " + std::to_string(index) +
                            ": unknown operator '" + items[0] + "'");
    }
    ++index;
  }

  if (actions.empty()) {
    return make_error(ParseError::Kind::NoPlanBlock, -1, "",
                      "plan list is empty");
  }
  ParseResult out;
  out.response = ParsedResponse{extract_challenges(text),
                                TaskPlan{std::move(actions)}, text};
  return out;
}

std::string format_plan(const TaskPlan& plan) {
  std::ostringstream out;
  out << "plan = [";
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    if (i) out << ", ";
    out << plan.actions[i].to_string();
  }
  out << "]";
  return out.str();
}

}  // namespace stalm::prompt
