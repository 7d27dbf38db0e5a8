#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "scalemix/error.hpp"
#include "scalemix/io.hpp"
#include "test_support.hpp"

using namespace scalemix;

namespace {

struct Row {
  const char* name;
  int knots;
  double radius;
  double range;  // truncated to two decimals
  bool fixed;
};

// The thirteen configurations compared on the station data.
const Row kModels[] = {
    {"H-W Stationary", 1, INFINITY, INFINITY, false},
    {"k13r4b4", 13, 4, 4.89, false},
    {"k13r4b4m", 13, 4, 4.89, true},
    {"k25r2b0.67", 25, 2, 2.00, false},
    {"k25r2b0.67m", 25, 2, 2.00, true},
    {"k25r2b2", 25, 2, 3.46, false},
    {"k25r2b2m", 25, 2, 3.46, true},
    {"k25r4b4", 25, 4, 4.89, false},
    {"k25r4b4m", 25, 4, 4.89, true},
    {"k41r1.6b0.43", 41, 1.6, 1.60, false},
    {"k41r1.6b0.43m", 41, 1.6, 1.60, true},
    {"k41r2b0.67", 41, 2, 2.00, false},
    {"k41r2b0.67m", 41, 2, 2.00, true},
};

std::string daily(const std::vector<std::tuple<std::string, int, int, double>>& obs) {
  std::ostringstream s;
  s << "station_id,lon,lat,elev,year,day,value\n";
  for (const auto& [id, year, day, v] : obs) {
    s << id << ",1,2,3," << year << ',' << day << ',';
    if (!std::isnan(v)) s << v;
    s << '\n';
  }
  return s.str();
}

// days 1..n observed with value = day, the rest absent
void season(std::vector<std::tuple<std::string, int, int, double>>& obs, const std::string& id, int year, int n) {
  for (int d = 1; d <= n; ++d) obs.emplace_back(id, year, d, d);
}

}  // namespace

TEST(ModelName, AllThirteenParse) {
  for (const Row& r : kModels) {
    const ModelName n = ModelName::parse(r.name);
    EXPECT_EQ(n.knots, r.knots) << r.name;
    EXPECT_EQ(n.radius, r.radius) << r.name;
    EXPECT_EQ(n.fix_margins, r.fixed) << r.name;
    if (std::isinf(r.range)) {
      EXPECT_TRUE(std::isinf(n.bandwidth)) << r.name;
    } else {
      EXPECT_NEAR(std::floor(gaussian_effective_range(n.bandwidth) * 100.0) / 100.0, r.range, 1e-12) << r.name;
    }
    EXPECT_EQ(ModelName::parse(n.str()).knots, n.knots);

    RunConfig c = parse_config(std::string("name = ") + r.name + "\n");
    EXPECT_EQ(static_cast<int>(c.model_spec().knots.size()), r.knots) << r.name;
    EXPECT_EQ(c.model_spec().fix_margins, r.fixed) << r.name;
  }
}

TEST(ModelName, Rejects) {
  EXPECT_THROW(ModelName::parse("k25r4"), Error);
  EXPECT_THROW(ModelName::parse("k0r4b4"), Error);
  EXPECT_THROW(ModelName::parse("k25r4b4mm"), Error);
}

TEST(Config, NameFieldConflictListsMismatches) {
  try {
    parse_config("name = k25r4b5\nradius = 3\nknots = 25\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    const std::string w = e.what();
    EXPECT_NE(w.find("radius = 3"), std::string::npos);
    EXPECT_EQ(w.find("knots ="), std::string::npos);
  }
  EXPECT_THROW(parse_config("name = k25r4b4\nfix_margins = true\n"), Error);
  EXPECT_NO_THROW(parse_config("name = k25r4b4m\nfix_margins = true\n"));
}

TEST(Config, RoundTripAndDigest) {
  RunConfig c = parse_config(
      "name = k13r4b4m  # comment\n"
      "chain.iterations = 5000\nchain.seed = 18446744073709551615\n"
      "diagnose.u_grid = 0.9, 0.95, 0.99\ndesign.mu1 = 1 elev\nprior.rho_sd = 1.5\n");
  const RunConfig back = parse_config(serialize_config(c));
  EXPECT_EQ(serialize_config(back), serialize_config(c));
  EXPECT_EQ(back.digest(), c.digest());
  EXPECT_EQ(back.seed, 18446744073709551615ull);
  EXPECT_EQ(back.design.mu1, (std::vector<std::string>{"1", "elev"}));
  c.seed = 2;
  EXPECT_NE(c.digest(), back.digest());

  const RunConfig hw = parse_config("name = hw-stationary\n");
  EXPECT_EQ(serialize_config(parse_config(serialize_config(hw))), serialize_config(hw));
}

TEST(Config, Rejects) {
  EXPECT_THROW(parse_config("bogus = 1\n"), Error);
  EXPECT_THROW(parse_config("knots = 9\nknots = 9\n"), Error);
  EXPECT_THROW(parse_config("knots\n"), Error);
  EXPECT_THROW(parse_config("chain.thin = 0\n"), Error);
  EXPECT_THROW(parse_config("chain.iterations = ten\n"), Error);
}

TEST(StationCsv, RoundTrip) {
  const std::string text =
      "station_id,lon,lat,elev,year,value\n"
      "A,-100.5,40.25,300,1950,31.5\n"
      "A,-100.5,40.25,300,1951,\n"
      "B,-99,41,120.5,1951,28\n";
  const StationTable t = parse_station_csv(text);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_TRUE(std::isnan(t.rows[1].value));
  const Dataset d = t.to_dataset();
  EXPECT_EQ(d.sites(), 2);
  EXPECT_EQ(d.replicates(), 2);
  EXPECT_EQ(d.Y(0, 0), 31.5);
  EXPECT_TRUE(std::isnan(d.Y(0, 1)));
  EXPECT_TRUE(std::isnan(d.Y(1, 0)));  // absent row
  EXPECT_EQ(d.station_ids[1], "B");

  const std::string dir = support::temp_dir("csv");
  write_station_csv(dir + "/s.csv", t);
  const StationTable back = read_station_csv(dir + "/s.csv");
  EXPECT_EQ(format_station_csv(back), format_station_csv(t));
  EXPECT_EQ(format_station_csv(StationTable::from_dataset(d)), format_station_csv(StationTable::from_dataset(back.to_dataset())));
  std::filesystem::remove_all(dir);
}

TEST(StationCsv, SchemaErrorsNameTheRow) {
  auto expect_row = [](const std::string& text, const std::string& needle) {
    try {
      parse_station_csv(text);
      FAIL() << needle;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ingestion);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  const std::string h = "station_id,lon,lat,elev,year,value\n";
  expect_row(h + "A,1,2,3,1950,1\nA,1,2,3,1950,2\n", "row 3");
  expect_row(h + "A,1,2,3,1950,1\nA,1,x,3,1951,2\n", "row 3");
  expect_row("id,lon,lat,elev,year,value\n", "row 1");
  expect_row(h + "A,1,2,3,1950\n", "row 2");
}

TEST(Daily, TwoThirdsRuleAndSplit) {
  CompletenessRule rule;
  rule.season_days = 30;
  std::vector<std::tuple<std::string, int, int, double>> obs;
  // full station
  for (int y : {2000, 2001}) season(obs, "full", y, 30);
  // one season at half coverage: that year is masked; overall 45/60 = 0.75 drops it
  season(obs, "half", 2000, 30);
  season(obs, "half", 2001, 15);
  // 53/60 = 0.883 lands in the holdout band, with both seasons above two thirds
  season(obs, "hold", 2000, 30);
  season(obs, "hold", 2001, 23);
  // explicit missing days count as missing
  season(obs, "gaps", 2000, 30);
  for (int d = 1; d <= 30; ++d) obs.emplace_back("gaps", 2001, d, d <= 27 ? d : NAN);
  const DailySplit s = ingest_daily_text(daily(obs), rule);

  const Dataset tr = s.train.to_dataset();
  ASSERT_EQ(tr.station_ids, (std::vector<std::string>{"full", "gaps"}));
  EXPECT_EQ(tr.Y(0, 1), 30.0);
  EXPECT_EQ(tr.Y(1, 1), 27.0);
  const Dataset ho = s.holdout.to_dataset();
  ASSERT_EQ(ho.station_ids, std::vector<std::string>{"hold"});
  EXPECT_EQ(ho.Y(0, 1), 23.0);
  EXPECT_EQ(s.train.report.stations_dropped, 1);
  EXPECT_EQ(s.train.report.dropped, std::vector<std::string>{"half"});
  EXPECT_EQ(s.train.report.stations_kept, 3);
}

TEST(Daily, SeasonBelowTwoThirdsMasked) {
  CompletenessRule rule;
  rule.season_days = 10;
  rule.train_fraction = 0.5;
  rule.holdout_lower = 0.4;
  std::vector<std::tuple<std::string, int, int, double>> obs;
  season(obs, "A", 1990, 10);
  season(obs, "A", 1991, 5);
  const DailySplit s = ingest_daily_text(daily(obs), rule);
  const Dataset d = s.train.to_dataset();
  EXPECT_EQ(d.Y(0, 0), 10.0);
  EXPECT_TRUE(std::isnan(d.Y(0, 1)));
  EXPECT_EQ(s.train.report.years_masked, 1);

  std::vector<std::tuple<std::string, int, int, double>> dup{{"A", 1990, 1, 1.0}, {"A", 1990, 1, 2.0}};
  EXPECT_THROW(ingest_daily_text(daily(dup), rule), Error);
  std::vector<std::tuple<std::string, int, int, double>> late{{"A", 1990, 11, 1.0}};
  EXPECT_THROW(ingest_daily_text(daily(late), rule), Error);
}

TEST(RunDirectory, ManifestAndLock) {
  const std::string dir = support::temp_dir("run");
  write_text_file(dir + "/b.txt", "beta\n");
  write_text_file(dir + "/a.txt", "alpha\n");
  RunConfig c;
  c.seed = 77;
  {
    DirectoryLock lock(dir);
    EXPECT_THROW(DirectoryLock second(dir), Error);
    write_manifest(dir, c, "fit");
  }
  EXPECT_NO_THROW(DirectoryLock again(dir));
  const auto kv = read_text_file(dir + "/manifest.txt");
  EXPECT_NE(kv.find("command = fit"), std::string::npos);
  EXPECT_NE(kv.find("seed = 77"), std::string::npos);
  EXPECT_LT(kv.find("file = a.txt"), kv.find("file = b.txt"));
  EXPECT_EQ(kv.find(".lock"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(RunDirectory, TruthSidecar) {
  const std::string dir = support::temp_dir("truth");
  const ProcessSpec s = build_scenario(2, 20, 4, 9);
  write_truth(dir + "/truth.txt", s);
  const auto kv = read_key_values(dir + "/truth.txt");
  EXPECT_EQ(kv.at("sites"), "20");
  EXPECT_EQ(kv.at("replicates"), "4");
  EXPECT_EQ(kv.count("phi"), 1u);
  std::filesystem::remove_all(dir);
}
