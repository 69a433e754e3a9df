#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace surgrep {

inline constexpr std::size_t kNumInstruments = 6;
inline constexpr std::size_t kNumVerbs = 10;
inline constexpr std::size_t kNumTargets = 15;
inline constexpr std::size_t kNumPhases = 7;
inline constexpr std::size_t kNumDetectionClasses = kNumInstruments + kNumTargets;

/// Inflections used by the caption grammars and the offline report.
struct VerbForms {
  std::string progressive;  // retracting
  std::string present;      // retracts
  std::string base;         // retract
  std::string past;         // retracted
};

enum class Category { instrument, verb, target, phase };

std::string_view to_string(Category c);

/// The closed label sets of the dataset.
///
/// Verb and target lists may contain a placeholder entry ("null_verb",
/// "null_target") as the upstream label files do; such entries decode to an
/// absent component rather than a regular label.
class Vocabulary {
public:
  Vocabulary(std::vector<std::string> instruments, std::vector<std::string> verbs,
             std::vector<std::string> targets, std::vector<std::string> phases,
             std::vector<VerbForms> verb_forms);

  /// The CholecT50 label set shipped with the library.
  static const Vocabulary& canonical();

  static Vocabulary from_json(const nlohmann::json& j);
  static Vocabulary load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<std::string>& instruments() const { return instruments_; }
  const std::vector<std::string>& verbs() const { return verbs_; }
  const std::vector<std::string>& targets() const { return targets_; }
  const std::vector<std::string>& phases() const { return phases_; }

  const std::string& instrument(std::size_t i) const { return instruments_.at(i); }
  const std::string& verb(std::size_t i) const { return verbs_.at(i); }
  const std::string& target(std::size_t i) const { return targets_.at(i); }
  const std::string& phase(std::size_t i) const { return phases_.at(i); }
  const VerbForms& forms(std::size_t verb) const { return verb_forms_.at(verb); }

  const std::vector<std::string>& names(Category c) const;

  /// Index of `name` in category `c`, or nullopt.
  std::optional<std::size_t> find(Category c, std::string_view name) const;

  /// Index of the placeholder entry standing for "no verb" / "no target".
  std::optional<std::size_t> null_verb() const { return null_verb_; }
  std::optional<std::size_t> null_target() const { return null_target_; }

  /// Detection class space: instruments followed by targets.
  std::size_t detection_classes() const { return instruments_.size() + targets_.size(); }
  std::size_t instrument_class(std::size_t instrument) const { return instrument; }
  std::size_t target_class(std::size_t target) const { return instruments_.size() + target; }
  std::string detection_class_name(std::size_t cls) const;

private:
  std::vector<std::string> instruments_;
  std::vector<std::string> verbs_;
  std::vector<std::string> targets_;
  std::vector<std::string> phases_;
  std::vector<VerbForms> verb_forms_;
  std::optional<std::size_t> null_verb_;
  std::optional<std::size_t> null_target_;
};

/// Built-in inflection table keyed by verb name; nullopt for unknown verbs.
std::optional<VerbForms> default_verb_forms(std::string_view verb);

}  // namespace surgrep
