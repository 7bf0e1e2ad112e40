#include "mdid/core_data.hpp"

#include <cmath>
#include <iostream>
#include <mutex>

#include "mdid/errors.hpp"

namespace mdid {

namespace {

std::mutex g_warn_mutex;
WarningHandler g_warn_handler = [](const std::string& msg) {
  std::cerr << "warning: " << msg << '\n';
};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view s,
                           const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, State>, 4> kStates{{
    {"KY", State::KY}, {"TN", State::TN}, {"VA", State::VA}, {"WV", State::WV}}};
constexpr std::array<std::pair<std::string_view, Race>, 3> kRaces{{
    {"white", Race::white}, {"black", Race::black}, {"other", Race::other}}};
constexpr std::array<std::pair<std::string_view, AgeBand>, 6> kAgeBands{{
    {"<20", AgeBand::under20},
    {"20-24", AgeBand::a20_24},
    {"25-29", AgeBand::a25_29},
    {"30-34", AgeBand::a30_34},
    {"35-39", AgeBand::a35_39},
    {"40+", AgeBand::a40plus}}};
constexpr std::array<std::pair<std::string_view, Sex>, 2> kSexes{{
    {"male", Sex::male}, {"female", Sex::female}}};
constexpr std::array<std::pair<std::string_view, Plurality>, 2> kPluralities{{
    {"single", Plurality::single}, {"multiple", Plurality::multiple}}};
constexpr std::array<std::pair<std::string_view, Outcome>, 4> kOutcomes{{
    {"lbw", Outcome::lbw}, {"vlbw", Outcome::vlbw}, {"preterm", Outcome::preterm},
    {"sga", Outcome::sga}}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warn_mutex);
  auto previous = std::move(g_warn_handler);
  g_warn_handler = std::move(handler);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(g_warn_mutex);
  if (g_warn_handler) g_warn_handler(message);
}

std::string_view to_string(State s) { return name_of(s, kStates); }
std::optional<State> parse_state(std::string_view s) { return lookup(s, kStates); }
std::string_view to_string(Race r) { return name_of(r, kRaces); }
std::string_view to_string(AgeBand a) { return name_of(a, kAgeBands); }
std::string_view to_string(Sex s) { return name_of(s, kSexes); }
std::string_view to_string(Plurality p) { return name_of(p, kPluralities); }
std::string_view to_string(Outcome o) { return name_of(o, kOutcomes); }
std::optional<Race> parse_race(std::string_view s) { return lookup(s, kRaces); }
std::optional<AgeBand> parse_age_band(std::string_view s) { return lookup(s, kAgeBands); }
std::optional<Sex> parse_sex(std::string_view s) { return lookup(s, kSexes); }
std::optional<Plurality> parse_plurality(std::string_view s) { return lookup(s, kPluralities); }

Outcome parse_outcome(std::string_view s) {
  if (auto o = lookup(s, kOutcomes)) return *o;
  throw ConfigError("unknown outcome '" + std::string(s) + "' (expected lbw, vlbw, preterm or sga)");
}

std::string_view to_string(ColumnBlock b) {
  switch (b) {
    case ColumnBlock::intercept: return "intercept";
    case ColumnBlock::county: return "county";
    case ColumnBlock::year: return "year";
    case ColumnBlock::individual: return "individual";
    case ColumnBlock::treatment: return "treatment";
  }
  return "?";
}

std::vector<int> YearRange::years() const {
  std::vector<int> out;
  for (int y = first; y <= last; ++y) out.push_back(y);
  return out;
}

void CountyPanel::validate() const {
  if (!(area_sq_mi > 0)) {
    throw ValidationError("county " + county_id + ": area_sq_mi must be positive");
  }
  for (const auto& [year, frac] : disturbed_frac) {
    if (!(frac >= 0.0 && frac <= 1.0)) {
      throw ValidationError("county " + county_id + ": disturbed_frac for " +
                            std::to_string(year) + " outside [0,1]");
    }
  }
  for (const auto& [year, tons] : surface_production) {
    if (!(tons >= 0.0)) {
      throw ValidationError("county " + county_id + ": negative surface production in " +
                            std::to_string(year));
    }
    auto it = total_production.find(year);
    if (it != total_production.end() && it->second < tons) {
      throw ValidationError("county " + county_id + ": total production below surface production in " +
                            std::to_string(year));
    }
  }
  for (const auto& [year, tons] : total_production) {
    if (!(tons >= 0.0)) {
      throw ValidationError("county " + county_id + ": negative total production in " +
                            std::to_string(year));
    }
  }
}

const std::array<std::string_view, CovariateVector::kSize> CovariateVector::kNames{
    "median_income_pre", "median_income_post", "poverty_pre",    "poverty_post",
    "percent_white",     "education_pre",      "education_post", "maternal_smoking_rate"};

std::array<double, CovariateVector::kSize> CovariateVector::values() const {
  return {median_income_pre, median_income_post, poverty_pre,    poverty_post,
          percent_white,     education_pre,      education_post, maternal_smoking_rate};
}

void CovariateVector::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("covariate out of range: ") + what);
  };
  check(median_income_pre > 0 && median_income_post > 0, "incomes must be positive");
  for (double pct : {poverty_pre, poverty_post, percent_white}) {
    check(pct >= 0 && pct <= 100, "percent outside [0,100]");
  }
  check(maternal_smoking_rate >= 0 && maternal_smoking_rate <= 1, "smoking rate outside [0,1]");
  constexpr double kEps = 1e-9;
  for (double ed : {education_pre, education_post}) {
    check(ed >= 10 - kEps && ed <= 16 + kEps, "education outside [10,16]");
  }
}

void SgaTable::set(int week, Sex sex, double grams) { cells_[{week, sex}] = grams; }

double SgaTable::p10(int week, Sex sex) const {
  auto it = cells_.find({week, sex});
  if (it == cells_.end()) {
    throw ConfigError("SGA table has no entry for week " + std::to_string(week) + ", sex " +
                      std::string(to_string(sex)));
  }
  return it->second;
}

std::optional<int> derive_outcome(const BirthRecord& record, Outcome outcome,
                                  const SgaTable* sga_table) {
  switch (outcome) {
    case Outcome::lbw:
      if (!record.birth_weight_g) return std::nullopt;
      return *record.birth_weight_g < 2500.0 ? 1 : 0;
    case Outcome::vlbw:
      if (!record.birth_weight_g) return std::nullopt;
      return *record.birth_weight_g < 1500.0 ? 1 : 0;
    case Outcome::preterm:
      if (!record.gestational_age_wk) return std::nullopt;
      return *record.gestational_age_wk < 37.0 ? 1 : 0;
    case Outcome::sga: {
      if (sga_table == nullptr || sga_table->empty()) {
        throw ConfigError("outcome sga requires a percentile table");
      }
      if (!record.birth_weight_g || !record.gestational_age_wk || !record.infant_sex) {
        return std::nullopt;
      }
      const int week = static_cast<int>(std::floor(*record.gestational_age_wk));
      return *record.birth_weight_g < sga_table->p10(week, *record.infant_sex) ? 1 : 0;
    }
  }
  throw ConfigError("unknown outcome");
}

void StudyConfig::validate() const {
  auto range_ok = [](const YearRange& r) { return r.first <= r.last; };
  if (!range_ok(pre_period) || !range_ok(post_period) || !range_ok(baseline_years) ||
      !range_ok(pseudo_treated_period)) {
    throw ConfigError("year ranges must have first <= last");
  }
  if (pre_period.last >= post_period.first) {
    throw ConfigError("pre_period must end before post_period starts");
  }
  if (!(treated_threshold > 0) || !(control_surface_max > 0) || !(control_total_max > 0)) {
    throw ConfigError("thresholds must be positive");
  }
  for (double theta : theta_grid) {
    if (!(theta > 0)) throw ConfigError("theta values must be positive");
  }
  for (double p : confounder_prevalence) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("confounder prevalence outside [0,1]");
  }
  for (double g : confounder_odds_ratio) {
    if (!(g >= 1)) throw ConfigError("confounder odds ratio must be >= 1");
  }
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0,1)");
  if (caliper && !(*caliper > 0)) throw ConfigError("caliper must be positive");
}

YearRange StudyConfig::effective_pre_period() const {
  YearRange r = pre_period;
  if (outcome == Outcome::preterm || outcome == Outcome::sga) {
    r.first = std::max(r.first, 1981);
  }
  return r;
}

std::size_t FitResult::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ValidationError("no coefficient named '" + std::string(name) + "'");
}

double FitResult::coefficient(std::string_view name) const {
  return coefficients(static_cast<Eigen::Index>(index_of(name)));
}

double FitResult::naive_se(std::string_view name) const {
  const auto i = static_cast<Eigen::Index>(index_of(name));
  return std::sqrt(naive_covariance(i, i));
}

double FitResult::robust_se(std::string_view name) const {
  if (robust_covariance.size() == 0) {
    throw ValidationError("robust covariance has not been computed");
  }
  const auto i = static_cast<Eigen::Index>(index_of(name));
  return std::sqrt(robust_covariance(i, i));
}

}  // namespace mdid
