#include "mdid/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "mdid/errors.hpp"
#include "mdid/kernels.hpp"

namespace mdid::synthgen {

namespace {

enum class Kind { treated, control, high_production };

struct CountySeed {
  CountyId id;
  Kind kind;
  int index;
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

std::string make_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03d", prefix, i + 1);
  return buf;
}

constexpr std::array<State, 4> kStates{State::KY, State::TN, State::VA, State::WV};
constexpr std::array<Race, 3> kRaces{Race::white, Race::black, Race::other};
constexpr std::array<AgeBand, 6> kAges{AgeBand::under20, AgeBand::a20_24, AgeBand::a25_29,
                                       AgeBand::a30_34,  AgeBand::a35_39, AgeBand::a40plus};

// Loading of each matching covariate on the socioeconomic factor, with the
// sign a disadvantaged (treated-like) county shows.
constexpr std::array<double, 8> kLoadings{-0.85, -0.9, 0.8, 0.9, 0.6, -0.75, -0.85, 0.9};

cohort::CountyCensusInputs draw_census(const CountyId& id, bool treated, double shift,
                                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double factor = normal(rng) + (treated ? shift : 0.0);
  std::array<double, 8> z{};
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double load = kLoadings[k];
    z[k] = load * factor + std::sqrt(1.0 - load * load) * normal(rng);
  }
  auto edu = [](double zz) {
    zz = std::clamp(zz, -2.2, 2.2);
    return cohort::EducationShares{0.3 - 0.08 * zz, 0.4, 0.18 + 0.03 * zz, 0.12 + 0.05 * zz};
  };
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  cohort::CountyCensusInputs c;
  c.county_id = id;
  const double income_pre = std::max(5000.0, 23000.0 + 4000.0 * z[0]);
  const double income_post = std::max(8000.0, 39000.0 + 7000.0 * z[1]);
  c.income_1979 = income_pre - 1500.0 + 200.0 * jitter(rng);
  c.income_1989 = income_pre + 1500.0 + 200.0 * jitter(rng);
  c.income_1999 = income_post - 3000.0 + 300.0 * jitter(rng);
  c.income_2011 = income_post + 3000.0 + 300.0 * jitter(rng);
  const double pov_pre = std::clamp(17.5 + 6.0 * z[2], 2.0, 60.0);
  const double pov_post = std::clamp(16.2 + 6.0 * z[3], 2.0, 60.0);
  c.poverty_1980 = std::clamp(pov_pre + 0.5 * jitter(rng), 1.0, 70.0);
  c.poverty_1990 = std::clamp(pov_pre + 0.5 * jitter(rng), 1.0, 70.0);
  c.poverty_2000 = std::clamp(pov_post + 0.5 * jitter(rng), 1.0, 70.0);
  c.poverty_2010 = std::clamp(pov_post + 0.5 * jitter(rng), 1.0, 70.0);
  c.percent_white_1990 = std::clamp(89.0 + 5.0 * z[4], 40.0, 99.9);
  c.education_1980 = edu(z[5] + 0.1 * jitter(rng));
  c.education_1990 = edu(z[5] + 0.1 * jitter(rng));
  c.education_2000 = edu(z[6] + 0.1 * jitter(rng));
  c.education_2012_2016 = edu(z[6] + 0.1 * jitter(rng));
  const double known = std::floor(1000.0 + 2000.0 * (0.5 + 0.5 * jitter(rng)));
  const double rate = std::clamp(0.22 + 0.06 * z[7], 0.02, 0.6);
  c.known_smoking_births_1989_2003 = known;
  c.smoking_births_1989_2003 = std::round(rate * known);
  return c;
}

double baseline_mean(const CountyPanel& panel, const YearRange& years) {
  double sum = 0;
  for (int y = years.first; y <= years.last; ++y) sum += panel.disturbed_frac.at(y);
  return sum / years.size();
}

}  // namespace

void GeneratorSpec::validate() const {
  if (n_treated <= 0 || n_control <= 0 || n_high_production < 0) {
    throw ValidationError("generator counts must be positive");
  }
  if (!(births_per_cell > 0)) throw ValidationError("births_per_cell must be positive");
  if (pre_period.first > pre_period.last || post_period.first > post_period.last ||
      pre_period.last >= post_period.first) {
    throw ValidationError("generator periods must be ordered and disjoint");
  }
  if (!(baseline_years.first >= pre_period.first && baseline_years.last <= pre_period.last)) {
    throw ValidationError("baseline years must lie inside the pre-period");
  }
  if (!(dose_min >= 0 && dose_max >= dose_min && dose_max <= 0.9)) {
    throw ValidationError("dose range must satisfy 0 <= dose_min <= dose_max <= 0.9");
  }
  if (true_model == TrueModel::latent && theta * dose_max > 1.0 + 1e-12) {
    throw ValidationError("latent generation with theta * max dose > 1");
  }
  if (!(theta > 0)) throw ValidationError("theta must be positive");
  if (planted_confounder && (!(planted_confounder->prevalence >= 0 && planted_confounder->prevalence <= 1) ||
                             !(planted_confounder->odds_ratio > 0))) {
    throw ValidationError("planted confounder needs prevalence in [0,1] and a positive odds ratio");
  }
  for (double r : {missing_weight_rate, missing_race_rate, border_fraction}) {
    if (!(r >= 0 && r <= 1)) throw ValidationError("rates must lie in [0,1]");
  }
}

double birth_log_odds(const GeneratorSpec& spec, const GroundTruth& truth, const CountyId& county,
                      bool treated, int year, Race race, AgeBand age, Sex sex, Plurality plurality,
                      LatentDraws latent) {
  const auto& g = spec.gamma;
  double eta = spec.base_log_odds + truth.county_effect.at(county) + truth.year_effect.at(year);
  if (race == Race::white) eta += g.race_white;
  if (race == Race::other) eta += g.race_other;
  switch (age) {
    case AgeBand::under20: eta += g.age_under20; break;
    case AgeBand::a25_29: eta += g.age_25_29; break;
    case AgeBand::a30_34: eta += g.age_30_34; break;
    case AgeBand::a35_39: eta += g.age_35_39; break;
    case AgeBand::a40plus: eta += g.age_40plus; break;
    case AgeBand::a20_24: break;
  }
  if (sex == Sex::male) eta += g.sex_male;
  if (plurality == Plurality::single) eta += g.plurality_single;

  const bool treated_post = treated && spec.post_period.contains(year);
  if (treated_post) {
    auto it = truth.dose.find({county, year});
    const double d = it == truth.dose.end() ? 0.0 : it->second;
    switch (spec.true_model) {
      case TrueModel::dose: eta += spec.effect * d; break;
      case TrueModel::binary: eta += spec.effect; break;
      case TrueModel::latent: eta += latent.exposed ? spec.effect : 0.0; break;
    }
    if (spec.planted_confounder && latent.confounded) {
      eta += std::log(spec.planted_confounder->odds_ratio);
    }
  }
  if (treated) eta += spec.differential_trend * (year - spec.pre_period.first);
  return eta;
}

SimulatedStudy generate_panel(const GeneratorSpec& spec) {
  spec.validate();
  SimulatedStudy out;

  std::vector<CountySeed> seeds;
  for (int i = 0; i < spec.n_treated; ++i) seeds.push_back({make_id('T', i), Kind::treated, i});
  for (int i = 0; i < spec.n_control; ++i) seeds.push_back({make_id('C', i), Kind::control, i});
  for (int i = 0; i < spec.n_high_production; ++i) {
    seeds.push_back({make_id('H', i), Kind::high_production, i});
  }

  const int first_year = spec.pre_period.first;
  const int last_year = spec.post_period.last;

  // County-level draws.
  for (std::size_t c = 0; c < seeds.size(); ++c) {
    const auto& s = seeds[c];
    auto rng = stream(spec.rng_seed, 0xC0FFEEu, c);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    CountyPanel p;
    p.county_id = s.id;
    p.state = kStates[c % kStates.size()];
    p.area_sq_mi = 200.0 + 400.0 * unit(rng);
    const bool treated = s.kind == Kind::treated;
    const double base = treated ? 0.03 * unit(rng) : 0.004 * unit(rng);
    for (int y = first_year; y <= last_year; ++y) {
      double frac = base;
      if (treated && spec.post_period.contains(y)) {
        frac = base + spec.dose_min + (spec.dose_max - spec.dose_min) * unit(rng);
      } else if (treated && y > spec.pre_period.last) {
        frac = base + 0.5 * spec.dose_max * unit(rng);
      }
      p.disturbed_frac[y] = std::min(frac, 1.0);
      double surface = 0;
      double total = 0;
      switch (s.kind) {
        case Kind::treated:
          surface = p.area_sq_mi * (1200.0 + 6800.0 * unit(rng));
          total = surface + 1e4 + 1e6 * unit(rng);
          break;
        case Kind::control:
          total = 4500.0 * unit(rng);
          surface = total * unit(rng);
          break;
        case Kind::high_production:
          surface = p.area_sq_mi * (1500.0 + 3500.0 * unit(rng));
          total = surface + 1e4 * unit(rng);
          break;
      }
      p.surface_production[y] = surface;
      p.total_production[y] = total;
    }
    p.borders_treated = s.kind != Kind::treated && unit(rng) < spec.border_fraction;
    out.truth.county_effect[s.id] = spec.county_effect_sd * normal(rng);
    out.census.push_back(draw_census(s.id, treated, spec.covariate_shift, rng));

    if (treated) {
      out.treated_ids.push_back(s.id);
      const double b = baseline_mean(p, spec.baseline_years);
      for (int y = spec.post_period.first; y <= spec.post_period.last; ++y) {
        out.truth.dose[{s.id, y}] = std::max(p.disturbed_frac.at(y) - b, 0.0);
      }
    } else if (s.kind == Kind::control) {
      out.control_ids.push_back(s.id);
    }
    out.panels.push_back(std::move(p));
  }

  {
    auto rng = stream(spec.rng_seed, 0x7EA4u, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int y = first_year; y <= last_year; ++y) out.truth.year_effect[y] = spec.year_effect_sd * normal(rng);
  }

  // Birth cells: analysis years only.
  std::vector<int> years = spec.pre_period.years();
  for (int y : spec.post_period.years()) years.push_back(y);
  const std::discrete_distribution<int>::param_type race_p({0.92, 0.05, 0.03});
  const std::discrete_distribution<int>::param_type age_p({0.18, 0.33, 0.27, 0.14, 0.06, 0.02});

  std::vector<std::vector<BirthRecord>> cells(seeds.size() * years.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t cell = 0; cell < static_cast<std::ptrdiff_t>(cells.size()); ++cell) {
    const std::size_t c = static_cast<std::size_t>(cell) / years.size();
    const int year = years[static_cast<std::size_t>(cell) % years.size()];
    const auto& s = seeds[c];
    const bool treated = s.kind == Kind::treated;
    const bool treated_post = treated && spec.post_period.contains(year);
    auto rng = stream(spec.rng_seed, 0xB1E7u + c, static_cast<std::uint64_t>(year));
    std::poisson_distribution<int> count(spec.births_per_cell);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::discrete_distribution<int> race_d(race_p);
    std::discrete_distribution<int> age_d(age_p);
    double d = 0;
    if (treated_post) d = out.truth.dose.at({s.id, year});
    const int n = count(rng);
    auto& bucket = cells[static_cast<std::size_t>(cell)];
    bucket.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      BirthRecord b;
      b.county_id = s.id;
      b.year = year;
      const Race race = kRaces[static_cast<std::size_t>(race_d(rng))];
      const AgeBand age = kAges[static_cast<std::size_t>(age_d(rng))];
      const Sex sex = unit(rng) < 0.51 ? Sex::male : Sex::female;
      const Plurality plur = unit(rng) < 0.97 ? Plurality::single : Plurality::multiple;
      LatentDraws latent;
      const double u_exposed = unit(rng);
      const double u_confounded = unit(rng);
      if (treated_post) {
        latent.exposed = spec.true_model == TrueModel::latent && u_exposed < spec.theta * d;
        latent.confounded = spec.planted_confounder && u_confounded < spec.planted_confounder->prevalence;
      }
      const double eta = birth_log_odds(spec, out.truth, s.id, treated, year, race, age, sex, plur, latent);
      const bool event = unit(rng) < kernels::inv_logit(eta);
      const double grams = event ? std::floor(800.0 + 1699.0 * unit(rng))
                                 : std::floor(2500.0 + 2000.0 * unit(rng));
      const double weeks = event ? std::floor(30.0 + 9.0 * unit(rng)) : std::floor(36.0 + 7.0 * unit(rng));
      const bool drop_weight = unit(rng) < spec.missing_weight_rate;
      const bool drop_race = unit(rng) < spec.missing_race_rate;
      if (!drop_weight) b.birth_weight_g = grams;
      b.gestational_age_wk = weeks;
      if (!drop_race) b.mother_race = race;
      b.mother_age_band = age;
      b.infant_sex = sex;
      b.plurality = plur;
      bucket.push_back(std::move(b));
    }
  }
  std::size_t total = 0;
  for (const auto& bucket : cells) total += bucket.size();
  out.births.reserve(total);
  for (auto& bucket : cells) {
    std::move(bucket.begin(), bucket.end(), std::back_inserter(out.births));
  }
  return out;
}

}  // namespace mdid::synthgen
