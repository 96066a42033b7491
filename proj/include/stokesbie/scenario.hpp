#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stokesbie/els.hpp"
#include "stokesbie/geometry.hpp"
#include "stokesbie/hbs.hpp"
#include "stokesbie/nystrom.hpp"

namespace stokesbie {

// Shipped wall geometries.  Disc is the unit circle; Fish a three-pronged
// star; Channel a gently wavy closed curve; Rough a deeply folded
// high-frequency curve whose operator conditioning exceeds 1e4; Obstacles a
// large disc meant to be combined with the built-in ring of four
// nearly-touching holes.
enum class GeometryPreset { Disc, Fish, Channel, Rough, Obstacles };

// How the scenario solves its final linear system.
//   Direct-HBS    compress + invert the post-action operator, direct solve
//   GMRES-HBS     compress only, unpreconditioned GMRES via the fast apply
//   Direct-Local  reuse the pre-action inverse, low-rank update solver
//   GMRES-Local   unpreconditioned GMRES on the post-action system, applied
//                 through the update representation
//   PGMRES-Local  GMRES left-preconditioned with the update solver
//   *-indy        same work as the HBS variants, rebuilt from scratch; kept
//                 as separate labels so update-vs-rebuild rows pair up
enum class Strategy {
  DirectHbs,
  GmresHbs,
  DirectLocal,
  GmresLocal,
  PGmresLocal,
  GmresIndy,
  DirectIndy
};

enum class ActionKind { None, Refine, AddHoles, Snapshots };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);
std::string preset_name(GeometryPreset p);

struct RefineSpec {
  std::vector<Index> panels;  // explicit panel ids, or empty with auto_near
  bool auto_near = false;
  Vec2 near_point = Vec2::Zero();
  double near_radius = 0.0;
  int m = 4;
};

struct SnapshotSpec {
  std::vector<Vec2> positions;  // empty selects the built-in 19-stop tour
  double body_radius = -1.0;    // negative: 0.08 x wall scale
  int m = 4;
};

struct Scenario {
  std::string name = "scenario";

  GeometryPreset preset = GeometryPreset::Disc;
  CurveParams wall;        // resolved base curve
  std::string kind_key;    // geometry kind as spelled in the input
  bool custom_curve = false;
  int n_panels = 40;
  int q = 16;

  Formulation formulation;
  std::vector<StokesletSource> sources;  // empty: preset defaults

  ActionKind action = ActionKind::None;
  RefineSpec refine_spec;
  std::vector<HoleSpec> holes;  // empty with AddHoles: preset ring of four
  SnapshotSpec snapshots;

  Strategy strategy = Strategy::DirectHbs;
  double eps_compress = 1e-10;
  double eps_lowrank = 1e-10;
  double gmres_tol = 1e-11;
  Index gmres_restart = 0;
  Index gmres_max_iter = 600;

  std::vector<Vec2> targets;  // empty: preset defaults inside the fluid
};

// Wall curve and hole ring of a preset; hole sizes scale with the wall and
// hole panel counts with the wall panel count, so mesh doublings refine the
// whole geometry.
CurveParams preset_curve(GeometryPreset p, const Vec2& center, double scale);
std::vector<HoleSpec> preset_holes(const Vec2& center, double scale,
                                   int wall_panels, int q);

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);

// Geometry, refinement bookkeeping, boundary data and reference targets of a
// scenario, before any solver runs.  Exposed so tests can replay the exact
// same problem against dense oracles.
struct PreparedScenario {
  std::shared_ptr<const Discretization> base, final_disc;
  RefinementPlan plan;  // meaningful for Refine / AddHoles actions
  bool has_plan = false;
  Formulation formulation;
  std::vector<StokesletSource> sources;
  std::vector<Vec2> targets;
  Vec data;  // boundary values on the final discretization
};

PreparedScenario prepare_scenario(const Scenario& s);

// Fields default to -1 meaning "not applicable to this strategy"; the CSV
// writers leave such cells empty.  Counts N_k/N_c/N_p are nodes, not scalar
// unknowns.
struct RunReport {
  std::string scenario, strategy;
  Index n_k = 0, n_c = 0, n_p = 0;
  Index k = -1, k_kc = -1, k_kp = -1, k_pk = -1;

  double t_comp = -1, t_inv = -1;
  double t_dsol = -1, t_gsol = -1, t_pgsol = -1;
  double t_static = -1, t_osol = -1, t_rsol = -1;
  Index n_iter = -1;
  double e = -1;

  // Conditioning diagnostics (diagnostics runs of the Local strategies).
  double kappa_w = -1, kappa_l = -1, kappa_r = -1;
  double kappa_ext = -1, kappa_tilde = -1, bound = -1;
  // Break-even number of solves after which preconditioner construction
  // pays off; depends on a cost model, so it is derived, never measured.
  Index min_sol = -1;

  Index snapshot = -1;
  bool refined = false, cache_hit = false;
};

struct BenchOptions {
  std::uint64_t seed = 0;
  int threads = 1;  // accepted for interface stability; the build is serial
  bool diagnostics = false;
};

RunReport run_scenario(const Scenario& s, const BenchOptions& opts = {});

// Runs every snapshot against one static factorization of the base wall.
// Snapshots whose body sits near the wall refine the nearby panels and go
// through the update solver; identical refinement plans reuse the cached
// low-rank update.  Strategy Direct-indy instead rebuilds per snapshot.
std::vector<RunReport> run_snapshot_batch(const Scenario& s,
                                          const BenchOptions& opts = {});

// Panels whose minimum node distance to the body surface is below twice
// their arclength.
std::vector<Index> panels_near_body(const Discretization& d, const Vec2& center,
                                    double body_radius);

std::string report_csv_header();
std::string report_csv_row(const RunReport& r);
std::string snapshot_csv_header();
std::string snapshot_csv_row(const RunReport& r);

// Main report table; diagnostics rows are appended as '#' comment lines so
// the column schema never changes.
std::string reports_to_csv(const std::vector<RunReport>& rs, bool snapshot_table,
                           bool diagnostics);

}  // namespace stokesbie
