#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mdid/cohort.hpp"
#include "mdid/core_data.hpp"

namespace mdid::synthgen {

enum class TrueModel { dose, binary, latent };

// Log-odds effects of the individual covariates, relative to a black,
// 20-24 year old mother of a female infant from a multiple birth.
struct IndividualEffects {
  double race_white = -0.57;
  double race_other = -0.33;
  double age_under20 = 0.28;
  double age_25_29 = -0.14;
  double age_30_34 = -0.05;
  double age_35_39 = 0.21;
  double age_40plus = 0.36;
  double sex_male = -0.18;
  double plurality_single = -2.9;
};

struct PlantedConfounder {
  double prevalence = 0;
  double odds_ratio = 1;
};

struct GeneratorSpec {
  int n_treated = 23;
  int n_control = 23;
  // Non-treated counties whose surface production rules them out as controls.
  int n_high_production = 0;
  YearRange pre_period{1977, 1989};
  YearRange post_period{1999, 2011};
  YearRange baseline_years{1985, 1989};
  double births_per_cell = 200;

  TrueModel true_model = TrueModel::dose;
  double effect = 0.22314355131420976;  // chi, beta or tau; default ln 1.25
  double theta = 1;                     // latent mode only
  // Post-period dose increments for treated counties are uniform on this range.
  double dose_min = 0.005;
  double dose_max = 0.08;

  double base_log_odds = 0.87;
  double county_effect_sd = 0.1;
  double year_effect_sd = 0.05;
  IndividualEffects gamma;
  std::optional<PlantedConfounder> planted_confounder;
  // Log-odds per year added to treated counties, measured from the first
  // pre-period year.
  double differential_trend = 0;

  // Treated shift, in standard deviations, of the socioeconomic factor that
  // drives the matching covariates.
  double covariate_shift = 1.8;
  double border_fraction = 0.2;
  double missing_weight_rate = 0;
  double missing_race_rate = 0;

  std::uint64_t rng_seed = 1;

  // Throws ValidationError on bad counts, ranges or theta * max dose > 1.
  void validate() const;
};

struct GroundTruth {
  std::map<CountyId, double> county_effect;
  std::map<int, double> year_effect;
  std::map<std::pair<CountyId, int>, double> dose;  // treated post cells only
};

struct SimulatedStudy {
  std::vector<CountyPanel> panels;
  std::vector<cohort::CountyCensusInputs> census;
  std::vector<BirthRecord> births;
  std::vector<CountyId> treated_ids;
  std::vector<CountyId> control_ids;
  GroundTruth truth;
};

// Draws panels, census inputs and birth records from the specified model.
// Every county-year cell uses its own RNG stream derived from (seed, cell),
// so output is identical under any parallel schedule.
SimulatedStudy generate_panel(const GeneratorSpec& spec);

// Latent indicators for one birth, as drawn by the generator.
struct LatentDraws {
  bool exposed = false;     // W (latent model)
  bool confounded = false;  // u (planted confounder)
};

// Log-odds the generator uses for a birth with known covariates.
double birth_log_odds(const GeneratorSpec& spec, const GroundTruth& truth, const CountyId& county,
                      bool treated, int year, Race race, AgeBand age, Sex sex, Plurality plurality,
                      LatentDraws latent = {});

}  // namespace mdid::synthgen
