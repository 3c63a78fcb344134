#pragma once

// Encounter-level registry -> matched case-control cohort -> feature and
// outcome blocks for the hybrid model.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hirrr/estimators.hpp"

namespace hirrr {

struct EncounterRecord {
  std::string patient_id;
  std::string date;  // YYYY-MM-DD
  int age = 0;
  std::string sex;
  std::string race;
  std::vector<std::string> codes;  // ICD-9, dotted form
  bool is_attempt = false;
};

struct DisorderPatterns {
  std::string disorder;
  std::vector<std::string> patterns;  // "296.2", "291.0-5", "303.0-303.9"
};

/// Seven concurrent-disorder groups in output column order.
const std::vector<DisorderPatterns>& default_surrogate_map();

struct CohortConfig {
  int control_ratio = 5;
  int age_window = 2;
  double code_prevalence_floor = 0.005;
  int truncate_digits = 3;
  std::vector<DisorderPatterns> surrogate_map = default_surrogate_map();

  void validate() const;
};

/// Expands one table pattern into plain code prefixes. Ranges expand at the
/// final digit inclusively: "291.0-5" -> 291.0 ... 291.5. Throws ConfigError.
std::vector<std::string> expand_pattern(const std::string& pattern);

/// True iff `code` starts with any expanded prefix of `patterns`.
bool matches_any(const std::string& code, const std::vector<std::string>& prefixes);

/// Part before the decimal point, cut to `digits` characters: "296.33" -> "296".
std::string truncate_code(const std::string& code, int digits);

/// Strict YYYY-MM-DD check.
bool valid_iso_date(const std::string& date);

struct Patient {
  std::string patient_id;
  bool multi_record = false;
  bool is_case = false;
  int age = 0;  // at the outcome encounter
  std::string sex;
  std::string race;
  std::vector<std::string> history_codes;  // sorted unique codes before the outcome encounter
  std::vector<std::string> outcome_codes;  // codes at the outcome encounter
  bool outcome_attempt = false;
};

struct PatientSplit {
  std::vector<Patient> multi;
  std::vector<Patient> single;
};

/// Groups records by patient (first-appearance order) and sorts encounters by date.
/// Single-record: exactly one encounter, or first encounter an attempt (that encounter is the outcome).
/// Multi-record case: outcome at the first attempt, history = earlier encounters.
/// Multi-record control: outcome = last encounter, history = all earlier ones.
PatientSplit split_multi_single(const std::vector<EncounterRecord>& records);

struct MatchedSet {
  std::size_t case_index = 0;
  std::vector<std::size_t> control_indices;
  bool flagged = false;  // fewer than control_ratio eligible controls
};

/// Greedy matching in case order; each control is used at most once.
std::vector<MatchedSet> match_case_control(const std::vector<Patient>& cases, const std::vector<Patient>& controls,
                                           const CohortConfig& cfg, std::uint64_t seed);

struct Cohort {
  std::vector<Patient> multi;   // matched multi-record patients
  std::vector<Patient> single;  // matched single-record patients
  std::size_t flagged_cases = 0;
};

/// Split, then match cases to controls within the multi and single groups separately.
Cohort build_cohort(const std::vector<EncounterRecord>& records, const CohortConfig& cfg, std::uint64_t seed);

struct FeatureBlock {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  std::vector<std::string> retained_codes;
};

/// age, sex and race one-hot, retained truncated codes (prevalence among
/// multi-record patients > floor), then prior-disorder indicators.
FeatureBlock build_features(const Cohort& cohort, const CohortConfig& cfg);

struct OutcomeBlock {
  Eigen::MatrixXd Y;
  Eigen::MatrixXd Ytilde;
  std::vector<std::string> names;  // "attempt" then the disorders
};

OutcomeBlock build_outcomes(const Cohort& cohort, const CohortConfig& cfg);

/// Bernoulli dataset with q0 = 1 built from the two blocks.
Dataset build_dataset(const Cohort& cohort, const CohortConfig& cfg);

struct ScreenEntry {
  Eigen::Index feature = 0;
  double p_value = 1.0;
  double abs_log_odds = 0.0;
  bool degenerate = false;
};

/// Fisher statistics of every binary column against binary y.
std::vector<ScreenEntry> fisher_scores(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Column indices ordered by p ascending, then |log OR| descending, then index;
/// constant columns (p = 1) go last. Returns the first top_k.
std::vector<Eigen::Index> fisher_screen(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::Index top_k = 100);

std::vector<EncounterRecord> parse_records_csv(const std::string& text);
std::string records_to_csv(const std::vector<EncounterRecord>& records);

struct RegistryOptions {
  std::size_t patients = 500;
  double single_fraction = 0.6;
  double attempt_rate = 0.12;
  std::uint64_t seed = 0;
};

/// Synthetic registry with planted structure: a latent risk raises attempts,
/// depressive and anxiety codes; a few ordinary codes are common, many rare.
std::vector<EncounterRecord> generate_registry(const RegistryOptions& opt);

}  // namespace hirrr
