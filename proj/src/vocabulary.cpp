#include "surgrep/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"

namespace surgrep {

namespace {

struct VerbEntry {
  std::string_view name;
  VerbForms forms;
};

// "grasp" renders as "holds"/"hold"/"held" outside of frame captions, which
// is how the clip-level reference captions of the dataset phrase it.
const std::vector<VerbEntry>& verb_table() {
  static const std::vector<VerbEntry> table = {
      {"grasp", {"grasping", "holds", "hold", "held"}},
      {"retract", {"retracting", "retracts", "retract", "retracted"}},
      {"dissect", {"dissecting", "dissects", "dissect", "dissected"}},
      {"coagulate", {"coagulating", "coagulates", "coagulate", "coagulated"}},
      {"clip", {"clipping", "clips", "clip", "clipped"}},
      {"cut", {"cutting", "cuts", "cut", "cut"}},
      {"aspirate", {"aspirating", "aspirates", "aspirate", "aspirated"}},
      {"irrigate", {"irrigating", "irrigates", "irrigate", "irrigated"}},
      {"pack", {"packing", "packs", "pack", "packed"}},
      {"null_verb", {"", "", "", ""}},
  };
  return table;
}

bool is_placeholder(std::string_view name) { return name.starts_with("null"); }

void check_list(const std::vector<std::string>& names, std::size_t expected, Category c) {
  if (names.size() != expected) {
    throw PreconditionError("vocabulary: " + std::string(to_string(c)) + " list has " +
                            std::to_string(names.size()) + " entries, expected " +
                            std::to_string(expected));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& n : names) {
    if (n.empty() || n.find_first_of(" \t\n,.") != std::string::npos) {
      throw PreconditionError("vocabulary: invalid " + std::string(to_string(c)) + " name '" + n +
                              "'");
    }
    if (!seen.insert(n).second) {
      throw PreconditionError("vocabulary: duplicate " + std::string(to_string(c)) + " '" + n + "'");
    }
  }
}

std::optional<std::size_t> find_placeholder(const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (is_placeholder(names[i])) return i;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::instrument: return "instrument";
    case Category::verb: return "verb";
    case Category::target: return "target";
    case Category::phase: return "phase";
  }
  return "?";
}

std::optional<VerbForms> default_verb_forms(std::string_view verb) {
  for (const auto& e : verb_table()) {
    if (e.name == verb) return e.forms;
  }
  return std::nullopt;
}

Vocabulary::Vocabulary(std::vector<std::string> instruments, std::vector<std::string> verbs,
                       std::vector<std::string> targets, std::vector<std::string> phases,
                       std::vector<VerbForms> verb_forms)
    : instruments_(std::move(instruments)),
      verbs_(std::move(verbs)),
      targets_(std::move(targets)),
      phases_(std::move(phases)),
      verb_forms_(std::move(verb_forms)) {
  check_list(instruments_, kNumInstruments, Category::instrument);
  check_list(verbs_, kNumVerbs, Category::verb);
  check_list(targets_, kNumTargets, Category::target);
  check_list(phases_, kNumPhases, Category::phase);
  if (find_placeholder(instruments_) || find_placeholder(phases_)) {
    throw PreconditionError("vocabulary: instruments and phases cannot contain null entries");
  }
  null_verb_ = find_placeholder(verbs_);
  null_target_ = find_placeholder(targets_);

  if (verb_forms_.empty()) {
    for (const auto& v : verbs_) {
      auto forms = default_verb_forms(v);
      if (!forms && !is_placeholder(v)) {
        throw PreconditionError("vocabulary: no inflection table entry for verb '" + v + "'");
      }
      verb_forms_.push_back(forms.value_or(VerbForms{}));
    }
  }
  if (verb_forms_.size() != verbs_.size()) {
    throw PreconditionError("vocabulary: verb_forms must match verbs one to one");
  }
  for (std::size_t i = 0; i < verbs_.size(); ++i) {
    if (null_verb_ == i) continue;
    const auto& f = verb_forms_[i];
    for (const auto* s : {&f.progressive, &f.present, &f.base, &f.past}) {
      if (s->empty() || s->find_first_of(" ,.") != std::string::npos) {
        throw PreconditionError("vocabulary: bad inflection for verb '" + verbs_[i] + "'");
      }
    }
  }
}

const Vocabulary& Vocabulary::canonical() {
  static const Vocabulary vocab(
      {"grasper", "bipolar", "hook", "scissors", "clipper", "irrigator"},
      {"grasp", "retract", "dissect", "coagulate", "clip", "cut", "aspirate", "irrigate", "pack",
       "null_verb"},
      {"gallbladder", "cystic_plate", "cystic_duct", "cystic_artery", "cystic_pedicle",
       "blood_vessel", "fluid", "abdominal_wall_cavity", "liver", "adhesion", "omentum",
       "peritoneum", "gut", "specimen_bag", "null_target"},
      {"preparation", "calot-triangle-dissection", "clipping-and-cutting",
       "gallbladder-dissection", "gallbladder-packaging", "cleaning-and-coagulation",
       "gallbladder-extraction"},
      {});
  return vocab;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    std::vector<VerbForms> forms;
    auto verbs = j.at("verbs").get<std::vector<std::string>>();
    if (j.contains("verb_forms")) {
      const auto& table = j.at("verb_forms");
      for (const auto& v : verbs) {
        if (table.contains(v)) {
          const auto& e = table.at(v);
          forms.push_back({e.at("progressive").get<std::string>(), e.at("present").get<std::string>(),
                           e.at("base").get<std::string>(), e.at("past").get<std::string>()});
        } else {
          auto f = default_verb_forms(v);
          if (!f && !is_placeholder(v)) {
            throw PreconditionError("vocabulary: no inflection for verb '" + v + "'");
          }
          forms.push_back(f.value_or(VerbForms{}));
        }
      }
    }
    return Vocabulary(j.at("instruments").get<std::vector<std::string>>(), std::move(verbs),
                      j.at("targets").get<std::vector<std::string>>(),
                      j.at("phases").get<std::vector<std::string>>(), std::move(forms));
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("vocabulary: ") + e.what());
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError("vocabulary " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json forms = nlohmann::json::object();
  for (std::size_t i = 0; i < verbs_.size(); ++i) {
    if (null_verb_ == i) continue;
    const auto& f = verb_forms_[i];
    forms[verbs_[i]] = {{"progressive", f.progressive},
                        {"present", f.present},
                        {"base", f.base},
                        {"past", f.past}};
  }
  return {{"instruments", instruments_},
          {"verbs", verbs_},
          {"targets", targets_},
          {"phases", phases_},
          {"verb_forms", forms}};
}

const std::vector<std::string>& Vocabulary::names(Category c) const {
  switch (c) {
    case Category::instrument: return instruments_;
    case Category::verb: return verbs_;
    case Category::target: return targets_;
    case Category::phase: return phases_;
  }
  return phases_;
}

std::optional<std::size_t> Vocabulary::find(Category c, std::string_view name) const {
  const auto& list = names(c);
  auto it = std::find(list.begin(), list.end(), name);
  if (it == list.end()) return std::nullopt;
  return static_cast<std::size_t>(it - list.begin());
}

std::string Vocabulary::detection_class_name(std::size_t cls) const {
  if (cls < instruments_.size()) return instruments_[cls];
  return targets_.at(cls - instruments_.size());
}

}  // namespace surgrep
