#include <gtest/gtest.h>

#include "mdid/core_data.hpp"
#include "mdid/errors.hpp"
#include "test_support.hpp"

using namespace mdid;

TEST(DeriveOutcome, LowBirthWeightThresholdIsStrict) {
  auto b = support::birth("A", 1980, 2499);
  EXPECT_EQ(derive_outcome(b, Outcome::lbw), 1);
  b.birth_weight_g = 2500;
  EXPECT_EQ(derive_outcome(b, Outcome::lbw), 0);
  b.birth_weight_g = 1499;
  EXPECT_EQ(derive_outcome(b, Outcome::vlbw), 1);
  b.birth_weight_g = 1500;
  EXPECT_EQ(derive_outcome(b, Outcome::vlbw), 0);
}

TEST(DeriveOutcome, PretermUsesCompletedWeeks) {
  auto b = support::birth("A", 1985, 3000);
  b.gestational_age_wk = 36.9;
  EXPECT_EQ(derive_outcome(b, Outcome::preterm), 1);
  b.gestational_age_wk = 37;
  EXPECT_EQ(derive_outcome(b, Outcome::preterm), 0);
}

TEST(DeriveOutcome, MissingFieldGivesNoOutcome) {
  auto b = support::birth("A", 1985, 3000);
  b.birth_weight_g.reset();
  EXPECT_FALSE(derive_outcome(b, Outcome::lbw).has_value());
  EXPECT_EQ(derive_outcome(b, Outcome::preterm), 0);
}

TEST(DeriveOutcome, SmallForGestationalAge) {
  SgaTable t;
  t.set(39, Sex::female, 2900);
  t.set(39, Sex::male, 3000);
  auto b = support::birth("A", 1985, 2950);
  b.gestational_age_wk = 39.6;  // week 39
  EXPECT_EQ(derive_outcome(b, Outcome::sga, &t), 0);
  b.infant_sex = Sex::male;
  EXPECT_EQ(derive_outcome(b, Outcome::sga, &t), 1);
  b.gestational_age_wk = 40;
  EXPECT_THROW(derive_outcome(b, Outcome::sga, &t), ConfigError);
  EXPECT_THROW(derive_outcome(b, Outcome::sga, nullptr), ConfigError);
}

TEST(Enums, NamesRoundTrip) {
  for (auto r : {Race::white, Race::black, Race::other}) EXPECT_EQ(parse_race(to_string(r)), r);
  for (auto a : {AgeBand::under20, AgeBand::a20_24, AgeBand::a25_29, AgeBand::a30_34, AgeBand::a35_39,
                 AgeBand::a40plus}) {
    EXPECT_EQ(parse_age_band(to_string(a)), a);
  }
  for (auto s : {State::KY, State::TN, State::VA, State::WV}) EXPECT_EQ(parse_state(to_string(s)), s);
  EXPECT_EQ(to_string(AgeBand::under20), "<20");
  EXPECT_EQ(to_string(AgeBand::a40plus), "40+");
  EXPECT_FALSE(parse_age_band("45-49").has_value());
  EXPECT_FALSE(parse_state("OH").has_value());
  EXPECT_THROW(parse_outcome("weight"), ConfigError);
}

TEST(YearRange, Basics) {
  YearRange r{1977, 1989};
  EXPECT_EQ(r.size(), 13);
  EXPECT_TRUE(r.contains(1977));
  EXPECT_FALSE(r.contains(1990));
  EXPECT_EQ(r.years().front(), 1977);
  EXPECT_EQ(r.years().back(), 1989);
}

TEST(StudyConfig, DefaultsMatchProtocol) {
  StudyConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.pre_period, (YearRange{1977, 1989}));
  EXPECT_EQ(cfg.post_period, (YearRange{1999, 2011}));
  EXPECT_EQ(cfg.baseline_years, (YearRange{1985, 1989}));
  EXPECT_EQ(cfg.pseudo_treated_period, (YearRange{1984, 1989}));
  EXPECT_DOUBLE_EQ(cfg.treated_threshold, 0.01);
  EXPECT_EQ(cfg.theta_grid.size(), 10u);
  EXPECT_EQ(cfg.effective_pre_period(), cfg.pre_period);
  cfg.outcome = Outcome::preterm;
  EXPECT_EQ(cfg.effective_pre_period(), (YearRange{1981, 1989}));
}

TEST(StudyConfig, RejectsBadValues) {
  StudyConfig cfg;
  cfg.post_period = {1985, 2000};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.confounder_odds_ratio = {0.5};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.caliper = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(CountyPanel, Validation) {
  CountyPanel p;
  p.county_id = "A";
  p.disturbed_frac[1990] = 0.5;
  EXPECT_NO_THROW(p.validate());
  p.disturbed_frac[1991] = 1.5;
  EXPECT_THROW(p.validate(), ValidationError);
  p.disturbed_frac.erase(1991);
  p.surface_production[1990] = 10;
  p.total_production[1990] = 5;
  EXPECT_THROW(p.validate(), ValidationError);
  p.area_sq_mi = 0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(CovariateVector, EducationMustBeInSchoolingRange) {
  CovariateVector v;
  v.median_income_pre = v.median_income_post = 20000;
  v.poverty_pre = v.poverty_post = 20;
  v.percent_white = 90;
  v.education_pre = v.education_post = 12;
  v.maternal_smoking_rate = 0.2;
  EXPECT_NO_THROW(v.validate());
  v.education_pre = 17;
  EXPECT_THROW(v.validate(), ValidationError);
}

TEST(Warnings, HandlerReceivesMessages) {
  std::vector<std::string> seen;
  auto previous = set_warning_handler([&](const std::string& m) { seen.push_back(m); });
  warn("hello");
  set_warning_handler(previous);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], "hello");
}
