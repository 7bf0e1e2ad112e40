#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mdid {

using CountyId = std::string;

enum class State { KY, TN, VA, WV };

std::string_view to_string(State s);
std::optional<State> parse_state(std::string_view s);

// Closed interval of calendar years.
struct YearRange {
  int first = 0;
  int last = 0;

  bool contains(int year) const { return year >= first && year <= last; }
  int size() const { return last - first + 1; }
  std::vector<int> years() const;
  bool operator==(const YearRange&) const = default;
};

struct CountyPanel {
  CountyId county_id;
  State state = State::KY;
  double area_sq_mi = 1.0;
  std::map<int, double> disturbed_frac;      // year -> fraction of land disturbed
  std::map<int, double> surface_production;  // year -> short tons
  std::map<int, double> total_production;    // year -> short tons
  bool borders_treated = false;

  // Throws ValidationError on a broken invariant.
  void validate() const;
  bool operator==(const CountyPanel&) const = default;
};

// County-level matching covariates, one value per protocol item.
struct CovariateVector {
  static constexpr std::size_t kSize = 8;
  static const std::array<std::string_view, kSize> kNames;

  double median_income_pre = 0;
  double median_income_post = 0;
  double poverty_pre = 0;
  double poverty_post = 0;
  double percent_white = 0;
  double education_pre = 0;
  double education_post = 0;
  double maternal_smoking_rate = 0;

  std::array<double, kSize> values() const;
  void validate() const;
};

enum class Race { white, black, other };
enum class AgeBand { under20, a20_24, a25_29, a30_34, a35_39, a40plus };
enum class Sex { male, female };
enum class Plurality { single, multiple };

std::string_view to_string(Race r);
std::string_view to_string(AgeBand a);
std::string_view to_string(Sex s);
std::string_view to_string(Plurality p);
std::optional<Race> parse_race(std::string_view s);
std::optional<AgeBand> parse_age_band(std::string_view s);
std::optional<Sex> parse_sex(std::string_view s);
std::optional<Plurality> parse_plurality(std::string_view s);

struct BirthRecord {
  CountyId county_id;
  int year = 0;
  std::optional<double> birth_weight_g;
  std::optional<double> gestational_age_wk;
  std::optional<Race> mother_race;
  std::optional<AgeBand> mother_age_band;
  std::optional<Sex> infant_sex;
  std::optional<Plurality> plurality;

  bool operator==(const BirthRecord&) const = default;
};

enum class Outcome { lbw, vlbw, preterm, sga };

std::string_view to_string(Outcome o);
// Throws ConfigError for an unknown name.
Outcome parse_outcome(std::string_view s);

// 10th percentile of birth weight by completed gestational week and sex.
class SgaTable {
 public:
  void set(int week, Sex sex, double grams);
  // Throws ConfigError when the (week, sex) cell is absent.
  double p10(int week, Sex sex) const;
  bool empty() const { return cells_.empty(); }

 private:
  std::map<std::pair<int, Sex>, double> cells_;
};

// 1 when the record is an event, 0 when not, nullopt when a field the outcome
// needs is missing. Thresholds are strict: 2500 g is not low birth weight.
std::optional<int> derive_outcome(const BirthRecord& record, Outcome outcome,
                                  const SgaTable* sga_table = nullptr);

enum class TotalProductionScale { raw_tons, per_sq_mi };

struct StudyConfig {
  YearRange pre_period{1977, 1989};
  YearRange post_period{1999, 2011};
  YearRange baseline_years{1985, 1989};
  // Pseudo-treated years used by the pre-period test of controls.
  YearRange pseudo_treated_period{1984, 1989};
  double treated_threshold = 0.01;
  double control_surface_max = 1000.0;  // short tons per sq mi
  double control_total_max = 5000.0;    // short tons
  TotalProductionScale total_production_scale = TotalProductionScale::raw_tons;
  bool exclude_border_controls = false;
  bool plain_mahalanobis = false;
  std::optional<double> caliper;
  Outcome outcome = Outcome::lbw;
  std::vector<double> theta_grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> confounder_prevalence{0.05, 0.1, 0.2, 0.3, 0.5};
  std::vector<double> confounder_odds_ratio{1.0, 1.25, 1.5, 2.0, 3.0, 5.0};
  double alpha = 0.05;
  std::uint64_t rng_seed = 20180601;

  void validate() const;
  // Pre-period actually analysed: gestational-age outcomes start in 1981.
  YearRange effective_pre_period() const;
};

enum class ColumnBlock { intercept, county, year, individual, treatment };

std::string_view to_string(ColumnBlock b);

struct FitResult {
  std::vector<std::string> names;
  std::vector<ColumnBlock> blocks;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd naive_covariance;
  Eigen::MatrixXd robust_covariance;  // empty until a sandwich is computed
  double n_obs = 0;
  int n_clusters = 0;
  std::size_t n_dropped_missing = 0;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0;
  double max_abs_score = 0;
  std::vector<std::string> warnings;

  // Throws ValidationError if `name` is not a coefficient.
  std::size_t index_of(std::string_view name) const;
  double coefficient(std::string_view name) const;
  double naive_se(std::string_view name) const;
  double robust_se(std::string_view name) const;
};

}  // namespace mdid
