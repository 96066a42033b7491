#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <string>
#include <vector>

#include "stokesbie/nystrom.hpp"
#include "stokesbie/scenario.hpp"

using namespace stokesbie;

namespace {

Scenario basic(GeometryPreset preset, int n_panels) {
  Scenario s;
  s.preset = preset;
  s.wall = preset_curve(preset, Vec2::Zero(),
                        preset == GeometryPreset::Obstacles ? 2.0 : 1.0);
  s.n_panels = n_panels;
  if (preset == GeometryPreset::Obstacles)
    s.formulation.kind = FormulationKind::Mixed;
  return s;
}

double dense_cond(const Mat& a) {
  Eigen::BDCSVD<Mat> svd(a);
  const auto& sv = svd.singularValues();
  return sv(0) / sv(sv.size() - 1);
}

int count_commas(const std::string& s) {
  return (int)std::count(s.begin(), s.end(), ',');
}

}  // namespace

TEST_CASE("strategy names map both ways") {
  const char* names[] = {"Direct-HBS",   "GMRES-HBS",  "Direct-Local",
                         "GMRES-Local",  "PGMRES-Local", "GMRES-indy",
                         "Direct-indy"};
  for (const char* n : names) CHECK(strategy_name(strategy_from_name(n)) == n);
  CHECK_THROWS_AS((void)strategy_from_name("Direct"), std::invalid_argument);
}

TEST_CASE("scenario json round trips") {
  Scenario s;
  s.name = "trip";
  s.preset = GeometryPreset::Channel;
  s.kind_key = "fourier";
  s.custom_curve = true;
  s.wall.kind = CurveKind::Fourier;
  s.wall.scale = 1.5;
  s.wall.center = Vec2(0.25, -0.5);
  s.wall.cos_coef = {0.0, 0.1};
  s.wall.sin_coef = {0.05};
  s.n_panels = 24;
  s.formulation.kind = FormulationKind::InteriorDirichlet;
  s.formulation.mu = 2.0;
  s.sources = ring_sources(3, Vec2(0.25, -0.5), 7.0);
  s.action = ActionKind::Refine;
  s.refine_spec.panels = {1, 5, 6};
  s.refine_spec.m = 3;
  s.strategy = Strategy::PGmresLocal;
  s.eps_compress = 1e-9;
  s.eps_lowrank = 1e-8;
  s.gmres_tol = 1e-10;
  s.targets = {Vec2(0.4, -0.4), Vec2(0.1, -0.6)};

  const Scenario t = scenario_from_json(scenario_to_json(s));
  CHECK(t.name == s.name);
  CHECK(t.wall.kind == CurveKind::Fourier);
  CHECK(t.wall.scale == s.wall.scale);
  CHECK(t.wall.center == s.wall.center);
  CHECK(t.wall.cos_coef == s.wall.cos_coef);
  CHECK(t.wall.sin_coef == s.wall.sin_coef);
  CHECK(t.n_panels == s.n_panels);
  CHECK(t.formulation.mu == s.formulation.mu);
  CHECK(t.sources.size() == 3);
  CHECK(t.sources[1].location == s.sources[1].location);
  CHECK(t.action == ActionKind::Refine);
  CHECK(t.refine_spec.panels == s.refine_spec.panels);
  CHECK(t.refine_spec.m == 3);
  CHECK(t.strategy == Strategy::PGmresLocal);
  CHECK(t.eps_compress == s.eps_compress);
  CHECK(t.eps_lowrank == s.eps_lowrank);
  CHECK(t.gmres_tol == s.gmres_tol);
  CHECK(t.targets.size() == 2);
  CHECK(t.targets[1] == s.targets[1]);

  CHECK(scenario_from_json("{}").strategy == Strategy::DirectHbs);
  CHECK_THROWS_AS((void)scenario_from_json("{nope"), std::invalid_argument);
  CHECK_THROWS_AS((void)scenario_from_json(R"({"geometry":{"kind":"moon"}})"),
                  GeometryError);
  CHECK_THROWS_AS((void)scenario_from_json(R"({"strategy":"Fast"})"),
                  std::invalid_argument);
}

TEST_CASE("the folded preset is genuinely ill-conditioned and stays so") {
  // Conditioning must come from the geometry, not from under-resolution.
  double kappa[2];
  int idx = 0;
  for (int n_panels : {40, 60}) {
    Scenario s = basic(GeometryPreset::Rough, n_panels);
    const PreparedScenario p = prepare_scenario(s);
    const auto sys = assemble(p.final_disc, p.formulation, true);
    kappa[idx++] = dense_cond(sys.dense);
  }
  CHECK(kappa[0] >= 1e4);
  CHECK(kappa[1] >= 1e4);
  CHECK(kappa[1] / kappa[0] < 2.0);
  CHECK(kappa[0] / kappa[1] < 2.0);
}

TEST_CASE("a direct run on the disc recovers the generating field") {
  Scenario s = basic(GeometryPreset::Disc, 20);
  const RunReport r = run_scenario(s);
  CHECK(r.strategy == "Direct-HBS");
  CHECK(r.n_k == 320);
  CHECK(r.n_c == 0);
  CHECK(r.t_comp >= 0);
  CHECK(r.t_inv >= 0);
  CHECK(r.t_dsol >= 0);
  CHECK(r.t_gsol < 0);
  CHECK(r.e >= 0);
  CHECK(r.e <= 1e-8);
}

TEST_CASE("update and rebuild strategies agree on a refined star") {
  Scenario s = basic(GeometryPreset::Fish, 24);
  s.action = ActionKind::Refine;
  s.refine_spec.panels = {2, 3};
  s.refine_spec.m = 4;

  s.strategy = Strategy::DirectLocal;
  const RunReport local = run_scenario(s);
  s.strategy = Strategy::DirectIndy;
  const RunReport indy = run_scenario(s);

  CHECK(local.n_k == 22 * 16);
  CHECK(local.n_c == 2 * 16);
  CHECK(local.n_p == 8 * 16);
  CHECK(local.e <= 1e-8);
  CHECK(indy.e <= 1e-8);
  CHECK(local.t_static >= 0);
  CHECK(local.t_rsol >= 0);
  CHECK(local.k > 0);
  CHECK(local.k_kc > 0);
  CHECK(indy.k < 0);
  CHECK(indy.t_static < 0);
}

TEST_CASE("krylov strategies converge on the smooth disc") {
  Scenario s = basic(GeometryPreset::Disc, 20);
  s.strategy = Strategy::GmresHbs;
  const RunReport r = run_scenario(s);
  CHECK(r.n_iter >= 1);
  CHECK(r.t_gsol >= 0);
  CHECK(r.t_dsol < 0);
  CHECK(r.e <= 1e-8);
}

TEST_CASE("preconditioning collapses the obstacle iteration count") {
  Scenario s = basic(GeometryPreset::Obstacles, 40);
  s.action = ActionKind::AddHoles;

  s.strategy = Strategy::GmresLocal;
  const RunReport plain = run_scenario(s);
  s.strategy = Strategy::PGmresLocal;
  const RunReport prec = run_scenario(s);

  CHECK(plain.n_iter >= 50);
  CHECK(prec.n_iter <= 10);
  CHECK(prec.t_pgsol >= 0);
  CHECK(prec.t_pgsol < plain.t_gsol);
  // Same compressed update on both runs.
  CHECK(plain.k == prec.k);
}

TEST_CASE("snapshot batches reuse the static solver and the update cache") {
  Scenario s = basic(GeometryPreset::Disc, 60);
  s.action = ActionKind::Snapshots;
  s.strategy = Strategy::DirectLocal;

  const auto rs = run_snapshot_batch(s);
  REQUIRE(rs.size() == 19);

  int refined = 0, cached = 0;
  for (const auto& r : rs) {
    if (r.refined) {
      ++refined;
      CHECK(r.t_rsol >= 0);
      CHECK(r.t_osol < 0);
      CHECK(r.n_p > 0);
    } else {
      CHECK(r.t_osol >= 0);
      CHECK(r.t_rsol < 0);
      CHECK(r.t_comp < 0);
    }
    if (r.cache_hit) ++cached;
    CHECK(r.e <= 1e-8);
  }
  CHECK(refined == 12);
  CHECK(cached == 1);

  // The twelfth near-wall stop repeats the first: same plan, cached update.
  CHECK(rs[11].cache_hit);
  CHECK(rs[11].e == rs[0].e);
  CHECK(rs[11].t_comp * 5 <= rs[0].t_comp);
  CHECK(rs[0].t_static >= 0);
  CHECK(rs[1].t_static < 0);

  // A tour that never comes near the wall reuses the static solve only.
  s.snapshots.positions = {Vec2(0.1, 0.0), Vec2(0.0, 0.2), Vec2(-0.15, 0.1)};
  const auto still = run_snapshot_batch(s);
  REQUIRE(still.size() == 3);
  for (const auto& r : still) {
    CHECK_FALSE(r.refined);
    CHECK(r.t_rsol < 0);
  }
}

TEST_CASE("invalid scenarios are rejected with the right types") {
  Scenario s = basic(GeometryPreset::Disc, 20);
  s.strategy = Strategy::DirectLocal;
  CHECK_THROWS_AS((void)run_scenario(s), std::invalid_argument);

  s = basic(GeometryPreset::Disc, 20);
  s.action = ActionKind::Snapshots;
  CHECK_THROWS_AS((void)run_scenario(s), std::invalid_argument);

  s = basic(GeometryPreset::Disc, 20);
  s.action = ActionKind::AddHoles;  // interior formulation cannot take holes
  CHECK_THROWS_AS((void)run_scenario(s), std::invalid_argument);

  s = basic(GeometryPreset::Disc, 20);
  s.action = ActionKind::Refine;
  s.refine_spec.auto_near = true;
  s.refine_spec.near_point = Vec2(30.0, 0.0);
  s.refine_spec.near_radius = 0.1;
  CHECK_THROWS_AS((void)run_scenario(s), GeometryError);

  s = basic(GeometryPreset::Obstacles, 24);
  s.action = ActionKind::AddHoles;
  s.strategy = Strategy::GmresHbs;
  s.gmres_max_iter = 5;
  CHECK_THROWS_WITH_AS((void)run_scenario(s),
                       doctest::Contains("[scenario 'scenario'"),
                       ConvergenceError);
}

TEST_CASE("reports serialize to the pinned csv schema") {
  CHECK(report_csv_header() ==
        "scenario,strategy,N_k,N_c,N_p,k,T_comp,T_inv,T_Dsol,T_Gsol,T_PGsol,"
        "n_iter,E");
  CHECK(count_commas(report_csv_header()) == 12);

  RunReport r;
  r.scenario = "demo";
  r.strategy = "Direct-HBS";
  r.n_k = 320;
  r.t_comp = 0.5;
  r.t_inv = 0.25;
  r.t_dsol = 0.001;
  r.e = 1e-9;
  const std::string row = report_csv_row(r);
  CHECK(count_commas(row) == 12);
  CHECK(row.find("demo,Direct-HBS,320,0,0,") == 0);
  CHECK(row.find(",,") != std::string::npos);  // absent cells stay empty

  RunReport snap;
  snap.snapshot = 3;
  snap.refined = true;
  const std::string srow = snapshot_csv_row(snap);
  CHECK(count_commas(srow) == count_commas(snapshot_csv_header()));

  r.kappa_w = 10.0;
  r.min_sol = 4;
  const std::string csv = reports_to_csv({r}, false, true);
  CHECK(csv.find("# diagnostics") != std::string::npos);
  CHECK(csv.find("min_sol=4") != std::string::npos);
  CHECK(reports_to_csv({r}, false, false).find('#') == std::string::npos);
}

TEST_CASE("reports are deterministic for a fixed seed") {
  Scenario s = basic(GeometryPreset::Fish, 20);
  s.action = ActionKind::Refine;
  s.refine_spec.panels = {4};
  s.refine_spec.m = 4;
  s.strategy = Strategy::DirectLocal;

  BenchOptions opts;
  opts.seed = 42;
  const RunReport a = run_scenario(s, opts);
  const RunReport b = run_scenario(s, opts);
  CHECK(a.k == b.k);
  CHECK(a.k_kc == b.k_kc);
  CHECK(a.k_kp == b.k_kp);
  CHECK(a.k_pk == b.k_pk);
  CHECK(a.e == b.e);
  CHECK(a.n_iter == b.n_iter);
}
