#include "hirrr/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hirrr/errors.hpp"
#include "hirrr/expfam.hpp"
#include "hirrr/io.hpp"
#include "hirrr/metrics.hpp"
#include "hirrr/random.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const std::vector<DisorderPatterns>& default_surrogate_map() {
  static const std::vector<DisorderPatterns> table = {
      {"Depressive", {"293.83", "296.2", "296.3", "296.9", "298.0", "300.4", "301.12", "309.0"}},
      {"Alcohol",
       {"291.0-5", "291.8-9", "303.0-303.9", "305.0", "357.5", "425.5", "571.0-3", "535.3", "V11.3"}},
      {"Drug", {"292.0-1", "304.0-304.9", "305.2-305.8"}},
      {"Anxiety", {"300.0", "300.1", "300.2", "799.2"}},
      {"Posttraumatic", {"309.81"}},
      {"Schizophrenia", {"295.0-295.9", "V11.0"}},
      {"Bipolar",
       {"296.0", "296.1", "296.4-7", "296.80", "296.81", "296.82", "296.89", "296.90", "296.99", "V11.1"}},
  };
  return table;
}

void CohortConfig::validate() const {
  if (control_ratio < 1) throw ConfigError("control_ratio must be >= 1");
  if (age_window < 0) throw ConfigError("age_window must be >= 0");
  if (!(code_prevalence_floor > 0.0 && code_prevalence_floor < 1.0)) {
    throw ConfigError("code_prevalence_floor must lie in (0, 1)");
  }
  if (truncate_digits < 1) throw ConfigError("truncate_digits must be >= 1");
  for (const auto& d : surrogate_map) {
    for (const auto& p : d.patterns) expand_pattern(p);
  }
}

namespace {

bool valid_code_text(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '.'; });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> expand_all(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const auto& p : patterns) {
    const auto e = expand_pattern(p);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::vector<std::string> expand_pattern(const std::string& raw) {
  const std::string pattern = trim(raw);
  const auto dash = pattern.find('-');
  if (dash == std::string::npos) {
    if (!valid_code_text(pattern)) throw ConfigError("malformed code pattern '" + raw + "'");
    return {pattern};
  }
  const std::string lo = pattern.substr(0, dash);
  std::string hi = pattern.substr(dash + 1);
  if (!valid_code_text(lo) || !valid_code_text(hi) || hi.size() > lo.size()) {
    throw ConfigError("malformed code range '" + raw + "'");
  }
  // Short upper ends ("291.0-5") replace the trailing characters of the lower end.
  hi = lo.substr(0, lo.size() - hi.size()) + hi;
  const std::string stem = lo.substr(0, lo.size() - 1);
  const char a = lo.back();
  const char b = hi.back();
  if (hi.substr(0, hi.size() - 1) != stem || !std::isdigit(static_cast<unsigned char>(a)) ||
      !std::isdigit(static_cast<unsigned char>(b)) || a > b) {
    throw ConfigError("malformed code range '" + raw + "'");
  }
  std::vector<std::string> out;
  for (char c = a; c <= b; ++c) out.push_back(stem + c);
  return out;
}

bool matches_any(const std::string& code, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return code.compare(0, p.size(), p) == 0; });
}

std::string truncate_code(const std::string& code, int digits) {
  const std::string head = code.substr(0, code.find('.'));
  return head.substr(0, static_cast<std::size_t>(std::max(digits, 0)));
}

bool valid_iso_date(const std::string& date) {
  if (date.size() != 10 || date[4] != '-' || date[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(date[i]))) return false;
  }
  const int y = std::stoi(date.substr(0, 4));
  const int m = std::stoi(date.substr(5, 2));
  const int d = std::stoi(date.substr(8, 2));
  if (m < 1 || m > 12 || d < 1) return false;
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return d <= days[m - 1] + (m == 2 && leap ? 1 : 0);
}

PatientSplit split_multi_single(const std::vector<EncounterRecord>& records) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const EncounterRecord*>> by_patient;
  for (const auto& r : records) {
    if (!valid_iso_date(r.date)) throw DomainError("invalid date '" + r.date + "' for patient " + r.patient_id);
    if (r.age < 0) throw DomainError("negative age for patient " + r.patient_id);
    auto& v = by_patient[r.patient_id];
    if (v.empty()) order.push_back(r.patient_id);
    v.push_back(&r);
  }

  PatientSplit out;
  for (const auto& id : order) {
    auto enc = by_patient[id];
    std::stable_sort(enc.begin(), enc.end(),
                     [](const EncounterRecord* a, const EncounterRecord* b) { return a->date < b->date; });
    std::size_t outcome = enc.size() - 1;
    bool multi = enc.size() > 1 && !enc[0]->is_attempt;
    if (!multi) {
      outcome = 0;
    } else {
      for (std::size_t k = 1; k < enc.size(); ++k) {
        if (enc[k]->is_attempt) {
          outcome = k;
          break;
        }
      }
    }
    Patient p;
    p.patient_id = id;
    p.multi_record = multi;
    const EncounterRecord& o = *enc[outcome];
    p.is_case = o.is_attempt;
    p.outcome_attempt = o.is_attempt;
    p.age = o.age;
    p.sex = o.sex;
    p.race = o.race;
    p.outcome_codes = sorted_unique(o.codes);
    if (multi) {
      std::vector<std::string> hist;
      for (std::size_t k = 0; k < outcome; ++k) hist.insert(hist.end(), enc[k]->codes.begin(), enc[k]->codes.end());
      p.history_codes = sorted_unique(std::move(hist));
    }
    (multi ? out.multi : out.single).push_back(std::move(p));
  }
  return out;
}

std::vector<MatchedSet> match_case_control(const std::vector<Patient>& cases, const std::vector<Patient>& controls,
                                           const CohortConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<bool> used(controls.size(), false);
  std::vector<MatchedSet> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const Patient& cs = cases[c];
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < controls.size(); ++k) {
      const Patient& ct = controls[k];
      if (!used[k] && ct.sex == cs.sex && ct.race == cs.race && std::abs(ct.age - cs.age) <= cfg.age_window) {
        eligible.push_back(k);
      }
    }
    std::shuffle(eligible.begin(), eligible.end(), rng);
    const std::size_t take = std::min(eligible.size(), static_cast<std::size_t>(cfg.control_ratio));
    MatchedSet m;
    m.case_index = c;
    m.control_indices.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(m.control_indices.begin(), m.control_indices.end());
    for (std::size_t k : m.control_indices) used[k] = true;
    m.flagged = take < static_cast<std::size_t>(cfg.control_ratio);
    out.push_back(std::move(m));
  }
  return out;
}

Cohort build_cohort(const std::vector<EncounterRecord>& records, const CohortConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const PatientSplit split = split_multi_single(records);
  Cohort out;
  const auto match_group = [&](const std::vector<Patient>& group, std::uint64_t s, std::vector<Patient>& dest) {
    std::vector<Patient> cases;
    std::vector<Patient> controls;
    for (const auto& p : group) (p.is_case ? cases : controls).push_back(p);
    for (const auto& m : match_case_control(cases, controls, cfg, s)) {
      dest.push_back(cases[m.case_index]);
      for (std::size_t k : m.control_indices) dest.push_back(controls[k]);
      if (m.flagged) ++out.flagged_cases;
    }
  };
  match_group(split.multi, derive_seed(seed, {1}), out.multi);
  match_group(split.single, derive_seed(seed, {2}), out.single);
  return out;
}

FeatureBlock build_features(const Cohort& cohort, const CohortConfig& cfg) {
  cfg.validate();
  if (cohort.multi.empty()) throw DegenerateInputError("cohort has no multi-record patients");
  const std::size_t n = cohort.multi.size();

  std::set<std::string> sexes;
  std::set<std::string> races;
  std::map<std::string, std::size_t> code_count;
  std::vector<std::set<std::string>> truncated(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Patient& p = cohort.multi[i];
    sexes.insert(p.sex);
    races.insert(p.race);
    for (const auto& c : p.history_codes) truncated[i].insert(truncate_code(c, cfg.truncate_digits));
    for (const auto& t : truncated[i]) ++code_count[t];
  }
  FeatureBlock fb;
  for (const auto& [code, count] : code_count) {
    if (static_cast<double>(count) / static_cast<double>(n) > cfg.code_prevalence_floor) fb.retained_codes.push_back(code);
  }

  std::vector<std::vector<std::string>> disorder_prefixes;
  for (const auto& d : cfg.surrogate_map) disorder_prefixes.push_back(expand_all(d.patterns));

  fb.names.push_back("age");
  for (const auto& s : sexes) fb.names.push_back("sex_" + s);
  for (const auto& r : races) fb.names.push_back("race_" + r);
  for (const auto& c : fb.retained_codes) fb.names.push_back("icd_" + c);
  for (const auto& d : cfg.surrogate_map) fb.names.push_back("prior_" + d.disorder);

  fb.X = MatrixXd::Zero(static_cast<Index>(n), static_cast<Index>(fb.names.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const Patient& p = cohort.multi[i];
    const auto row = static_cast<Index>(i);
    Index col = 0;
    fb.X(row, col++) = p.age;
    for (const auto& s : sexes) fb.X(row, col++) = p.sex == s ? 1.0 : 0.0;
    for (const auto& r : races) fb.X(row, col++) = p.race == r ? 1.0 : 0.0;
    for (const auto& c : fb.retained_codes) fb.X(row, col++) = truncated[i].count(c) ? 1.0 : 0.0;
    for (const auto& prefixes : disorder_prefixes) {
      const bool hit = std::any_of(p.history_codes.begin(), p.history_codes.end(),
                                   [&](const std::string& c) { return matches_any(c, prefixes); });
      fb.X(row, col++) = hit ? 1.0 : 0.0;
    }
  }
  return fb;
}

OutcomeBlock build_outcomes(const Cohort& cohort, const CohortConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<std::string>> disorder_prefixes;
  for (const auto& d : cfg.surrogate_map) disorder_prefixes.push_back(expand_all(d.patterns));
  OutcomeBlock ob;
  ob.names.push_back("attempt");
  for (const auto& d : cfg.surrogate_map) ob.names.push_back(d.disorder);
  const auto fill = [&](const std::vector<Patient>& group) {
    MatrixXd Y = MatrixXd::Zero(static_cast<Index>(group.size()), static_cast<Index>(ob.names.size()));
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto row = static_cast<Index>(i);
      Y(row, 0) = group[i].outcome_attempt ? 1.0 : 0.0;
      for (std::size_t d = 0; d < disorder_prefixes.size(); ++d) {
        const bool hit = std::any_of(group[i].outcome_codes.begin(), group[i].outcome_codes.end(),
                                     [&](const std::string& c) { return matches_any(c, disorder_prefixes[d]); });
        Y(row, static_cast<Index>(d + 1)) = hit ? 1.0 : 0.0;
      }
    }
    return Y;
  };
  ob.Y = fill(cohort.multi);
  ob.Ytilde = fill(cohort.single);
  return ob;
}

Dataset build_dataset(const Cohort& cohort, const CohortConfig& cfg) {
  const FeatureBlock fb = build_features(cohort, cfg);
  OutcomeBlock ob = build_outcomes(cohort, cfg);
  Dataset ds;
  ds.X = fb.X;
  ds.Y = std::move(ob.Y);
  ds.Ytilde = std::move(ob.Ytilde);
  ds.q0 = 1;
  ds.families.assign(static_cast<std::size_t>(ds.Y.cols()), Family::bernoulli());
  ds.feature_names = fb.names;
  ds.outcome_names = ob.names;
  ds.validate();
  return ds;
}

std::vector<ScreenEntry> fisher_scores(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size()) throw ArgumentError("fisher_screen: X and y differ in rows");
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DomainError("fisher_screen: outcome must be binary");
  }
  std::vector<ScreenEntry> out;
  for (Index j = 0; j < X.cols(); ++j) {
    long a = 0, b = 0, c = 0, d = 0;
    for (Index i = 0; i < X.rows(); ++i) {
      const double x = X(i, j);
      if (x != 0.0 && x != 1.0) throw DomainError("fisher_screen: features must be binary");
      if (x == 1.0) {
        (y(i) == 1.0 ? a : b)++;
      } else {
        (y(i) == 1.0 ? c : d)++;
      }
    }
    ScreenEntry e;
    e.feature = j;
    e.degenerate = a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0;
    if (!e.degenerate) {
      e.p_value = fisher_exact(a, b, c, d);
      e.abs_log_odds = std::abs(std::log((a + 0.5) * (d + 0.5)) - std::log((b + 0.5) * (c + 0.5)));
    }
    out.push_back(e);
  }
  return out;
}

std::vector<Index> fisher_screen(const MatrixXd& X, const VectorXd& y, Index top_k) {
  auto entries = fisher_scores(X, y);
  std::sort(entries.begin(), entries.end(), [](const ScreenEntry& a, const ScreenEntry& b) {
    if (a.p_value != b.p_value) return a.p_value < b.p_value;
    if (a.degenerate != b.degenerate) return !a.degenerate;
    if (a.abs_log_odds != b.abs_log_odds) return a.abs_log_odds > b.abs_log_odds;
    return a.feature < b.feature;
  });
  std::vector<Index> out;
  for (const auto& e : entries) {
    if (static_cast<Index>(out.size()) >= top_k) break;
    out.push_back(e.feature);
  }
  return out;
}

std::vector<EncounterRecord> parse_records_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw IoError("records CSV is empty");
  const std::vector<std::string> header = {"patient_id", "date", "age", "sex", "race", "codes", "is_attempt"};
  if (rows[0] != header) throw IoError("records CSV header must be " + std::string("patient_id,date,age,sex,race,codes,is_attempt"));
  std::vector<EncounterRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) throw IoError("records CSV line " + std::to_string(i + 1) + " has wrong field count");
    EncounterRecord e;
    e.patient_id = r[0];
    e.date = r[1];
    try {
      std::size_t used = 0;
      e.age = std::stoi(r[2], &used);
      if (used != r[2].size()) throw std::invalid_argument("age");
    } catch (const std::exception&) {
      throw IoError("records CSV line " + std::to_string(i + 1) + ": bad age '" + r[2] + "'");
    }
    e.sex = r[3];
    e.race = r[4];
    std::stringstream ss(r[5]);
    std::string code;
    while (std::getline(ss, code, ';')) {
      code = trim(code);
      if (!code.empty()) e.codes.push_back(code);
    }
    if (r[6] == "1" || r[6] == "true" || r[6] == "TRUE") {
      e.is_attempt = true;
    } else if (r[6] == "0" || r[6] == "false" || r[6] == "FALSE") {
      e.is_attempt = false;
    } else {
      throw IoError("records CSV line " + std::to_string(i + 1) + ": bad is_attempt '" + r[6] + "'");
    }
    if (!valid_iso_date(e.date)) throw DomainError("records CSV line " + std::to_string(i + 1) + ": bad date");
    out.push_back(std::move(e));
  }
  return out;
}

std::string records_to_csv(const std::vector<EncounterRecord>& records) {
  std::ostringstream os;
  os << "patient_id,date,age,sex,race,codes,is_attempt\n";
  for (const auto& r : records) {
    std::string codes;
    for (std::size_t k = 0; k < r.codes.size(); ++k) codes += (k ? ";" : "") + r.codes[k];
    os << csv_escape(r.patient_id) << ',' << r.date << ',' << r.age << ',' << csv_escape(r.sex) << ','
       << csv_escape(r.race) << ',' << csv_escape(codes) << ',' << (r.is_attempt ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

std::string date_from_day(int day) {
  // Days since 2012-01-01 in a proleptic Gregorian calendar.
  int y = 2012;
  const auto year_len = [](int yy) { return (yy % 4 == 0 && (yy % 100 != 0 || yy % 400 == 0)) ? 366 : 365; };
  while (day >= year_len(y)) day -= year_len(y++);
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int m = 0;
  while (true) {
    const int len = days[m] + (m == 1 && year_len(y) == 366 ? 1 : 0);
    if (day < len) break;
    day -= len;
    ++m;
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m + 1, day + 1);
  return buf;
}

}  // namespace

std::vector<EncounterRecord> generate_registry(const RegistryOptions& opt) {
  Rng rng(derive_seed(opt.seed, {0x5e6}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto bern = [&](double pr) { return unif(rng) < pr; };
  const std::vector<std::string> sexes = {"F", "M"};
  const std::vector<std::string> races = {"White", "Black", "Hispanic", "Other"};
  // Ordinary codes: a few common, the rest rare so the prevalence floor bites.
  const std::vector<std::pair<std::string, double>> ordinary = {
      {"780.60", 0.20}, {"786.50", 0.15}, {"789.00", 0.12}, {"465.9", 0.10}, {"493.90", 0.08},
      {"250.01", 0.05}, {"345.90", 0.04}, {"996.1", 0.003}, {"E879.8", 0.002}, {"733.90", 0.004},
      {"V58.69", 0.06}, {"305.1", 0.05}};
  // Mental-health codes, one per disorder group plus a second depressive code.
  const std::vector<std::pair<std::string, double>> mental = {
      {"296.33", -2.0}, {"311", -2.2}, {"303.90", -3.0}, {"304.30", -3.0}, {"300.02", -2.3},
      {"309.81", -3.2}, {"295.30", -3.6}, {"296.40", -3.4}};
  const double base_attempt = std::log(opt.attempt_rate / (1.0 - opt.attempt_rate));

  std::vector<EncounterRecord> out;
  for (std::size_t i = 0; i < opt.patients; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "P%05zu", i + 1);
    const std::string sex = sexes[static_cast<std::size_t>(unif(rng) * 2.0) % 2];
    const std::string race = races[static_cast<std::size_t>(unif(rng) * 4.0) % 4];
    int age = 10 + static_cast<int>(unif(rng) * 13.0);
    const double risk = normal(rng);
    std::size_t n_enc = 1;
    if (!bern(opt.single_fraction)) {
      n_enc = 2;
      while (n_enc < 5 && bern(0.4)) ++n_enc;
    }
    int day = static_cast<int>(unif(rng) * 700.0);
    for (std::size_t k = 0; k < n_enc; ++k) {
      EncounterRecord e;
      e.patient_id = id;
      e.date = date_from_day(day);
      e.age = age;
      e.sex = sex;
      e.race = race;
      for (const auto& [code, pr] : ordinary) {
        if (bern(pr)) e.codes.push_back(code);
      }
      for (const auto& [code, base] : mental) {
        if (bern(expfam::plogis(base + 1.2 * risk))) e.codes.push_back(code);
      }
      // First encounters of multi-record patients rarely are attempts.
      const double shift = (n_enc > 1 && k == 0) ? -2.0 : 0.0;
      e.is_attempt = bern(expfam::plogis(base_attempt + shift + 1.3 * risk));
      if (e.is_attempt) e.codes.push_back("E950.3");
      out.push_back(std::move(e));
      const int gap = 20 + static_cast<int>(unif(rng) * 300.0);
      if ((day % 365) + gap >= 365) ++age;
      day += gap;
    }
  }
  return out;
}

}  // namespace hirrr
