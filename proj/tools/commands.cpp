#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "synthctl/csv.hpp"
#include "synthctl/donor_pool.hpp"
#include "synthctl/error.hpp"
#include "synthctl/inference.hpp"
#include "synthctl/logistic_vax.hpp"
#include "synthctl/panel_store.hpp"
#include "synthctl/parallel.hpp"
#include "synthctl/scm_engine.hpp"

namespace synthctl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string outcomes, predictors, metadata, clusters, blocks, adjacency, ccvi;
  std::string treated, t0, placebo_t0, donors;
  std::string t_fit = "10";
  double l1 = 0.6;
  double l2 = 0.1;
  std::string v_mode = "optimized";
  std::string placement = "tail";
  std::string filter = "none";
  bool no_standardize = false;
  bool sparsify = false;
  int bins = 10;
  int jobs = default_parallelism();
  std::uint64_t seed = 42;
  std::string out = ".";
  double threshold = 0.4;
  bool clean = false;
  double max_bad_fraction = 0.10;
  int window = 7;
  std::string repair = "interpolate";
};

[[noreturn]] void bad_config(const std::string& message) { throw Error(ErrorCode::InvalidArgument, message); }

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) bad_config(fmt::format("{} needs {}", command, flag));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_int(const std::string& s, const char* flag) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  bad_config(fmt::format("{}: '{}' is not an integer", flag, s));
}

// Output files are rendered in memory and written in one go.
void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
  f << content;
  if (!f) throw Error(ErrorCode::Io, fmt::format("write to '{}' failed", path.string()));
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  return dir;
}

std::string fmt_double(double x) { return csv::format_double(x); }

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json series_json(const Series& s) {
  json a = json::array();
  for (double x : s) a.push_back(number(x));
  return a;
}

struct Loaded {
  Panel panel;
  PredictorTable predictors;
  MetadataTable metadata;
  bool has_metadata = false;
};

CleaningPolicy cleaning_policy(const Options& o) {
  CleaningPolicy p;
  p.max_bad_fraction = o.max_bad_fraction;
  p.window = o.window;
  if (o.repair == "interpolate") {
    p.repair = RepairMode::interpolate;
  } else if (o.repair == "cumulative-max") {
    p.repair = RepairMode::cumulative_max;
  } else if (o.repair == "both") {
    p.repair = RepairMode::both;
  } else {
    bad_config(fmt::format("--repair: unknown mode '{}'", o.repair));
  }
  return p;
}

Loaded load(const Options& o, const char* command, std::ostream& err, bool force_clean = false) {
  require(o.outcomes, "--outcomes", command);
  Loaded l;
  l.panel = ingest_panel(fs::path(o.outcomes));
  if (o.clean || force_clean) {
    CleanPanelReport report;
    l.panel = clean_panel(l.panel, cleaning_policy(o), &report);
    for (std::size_t i = 0; i < report.dropped.size(); ++i) {
      err << fmt::format("warning: dropped {} ({:.1f}% missing or zero)\n", report.dropped[i].code(),
                         100.0 * report.dropped_bad_fraction[i]);
    }
  }
  if (!o.metadata.empty()) {
    l.metadata = read_metadata(fs::path(o.metadata));
    l.has_metadata = true;
    l.panel = l.panel.with_metadata(l.metadata);
  }
  if (!o.predictors.empty()) l.predictors = read_keyed_table(fs::path(o.predictors));
  return l;
}

VMode parse_v_mode(const std::string& s) {
  if (s == "optimized") return VMode::optimized;
  if (s == "inverse_variance" || s == "inverse-variance") return VMode::inverse_variance;
  bad_config(fmt::format("--v-mode: unknown mode '{}'", s));
}

TrainPlacement parse_placement(const std::string& s) {
  if (s == "tail") return TrainPlacement::tail;
  if (s == "head") return TrainPlacement::head;
  bad_config(fmt::format("--train-placement: unknown placement '{}'", s));
}

DonorFilter parse_filter(const std::string& s) {
  if (s == "none") return DonorFilter::none;
  if (s == "cluster") return DonorFilter::cluster;
  if (s == "neighbors") return DonorFilter::neighbors;
  bad_config(fmt::format("--filter: unknown filter '{}'", s));
}

int day_of(const Panel& panel, const std::string& iso, const char* flag) {
  const Date d = Date::parse(iso);
  auto idx = panel.day_index(d);
  if (!idx) {
    bad_config(fmt::format("{} {} lies outside the panel ({} to {})", flag, iso, panel.first_date().to_string(),
                           panel.date_at(panel.num_days() - 1).to_string()));
  }
  return *idx;
}

UnitId resolve_treated(const Options& o, const Loaded& l) {
  if (!o.treated.empty()) {
    UnitId id(o.treated);
    l.panel.index_of(id);
    return id;
  }
  std::vector<UnitId> flagged;
  for (const auto& [id, m] : l.metadata) {
    if (m.treated && l.panel.find(id)) flagged.push_back(id);
  }
  if (flagged.size() != 1) {
    bad_config(fmt::format("--treated is required ({} treated units in the metadata)", flagged.size()));
  }
  return flagged.front();
}

int resolve_pre_length(const Options& o, const Loaded& l, const UnitId& treated) {
  if (!o.t0.empty()) return day_of(l.panel, o.t0, "--t0");
  const auto& m = l.panel.meta(treated);
  if (!m.t0) bad_config(fmt::format("--t0 is required: no intervention date for {} in the metadata", treated.code()));
  return day_of(l.panel, m.t0->to_string(), "metadata t0");
}

std::vector<UnitId> resolve_donors(const Options& o, const Loaded& l, const UnitId& treated, std::ostream& err) {
  std::vector<UnitId> candidates;
  if (!o.donors.empty()) {
    candidates = to_unit_ids(split_list(o.donors));
    for (const auto& id : candidates) l.panel.index_of(id);
  } else if (l.has_metadata) {
    candidates = split_control_target(l.panel).control;
  } else {
    candidates = l.panel.units();
  }
  std::erase(candidates, treated);

  if (!l.predictors.columns.empty()) {
    std::vector<UnitId> kept;
    for (const auto& id : candidates) {
      if (l.predictors.find(id)) {
        kept.push_back(id);
      } else {
        err << fmt::format("warning: {} has no predictor row and is not a donor\n", id.code());
      }
    }
    candidates = std::move(kept);
  }

  const DonorFilter filter = parse_filter(o.filter);
  std::optional<ClusterMap> clusters;
  std::optional<StateAdjacency> adjacency;
  if (filter == DonorFilter::cluster) {
    clusters = o.clusters.empty() ? clusters_from_metadata(l.metadata) : read_clusters(fs::path(o.clusters));
  }
  if (filter == DonorFilter::neighbors) {
    require(o.adjacency, "--adjacency", "--filter neighbors");
    adjacency = read_adjacency(fs::path(o.adjacency));
  }
  std::vector<std::string> warnings;
  auto donors = filter_donors(treated, candidates, filter, clusters ? &*clusters : nullptr,
                              adjacency ? &*adjacency : nullptr, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return donors;
}

// Picks predictor columns by block when --blocks is given.
PredictorTable resolve_predictors(const Options& o, const Loaded& l) {
  if (o.blocks.empty() || l.predictors.columns.empty()) return l.predictors;
  const auto blocks = read_blocks(fs::path(o.blocks));
  blocks.validate(l.predictors.columns);
  const auto sel = select_predictors_naive(abs_correlation(l.predictors), blocks, o.threshold);
  return l.predictors.select_columns(sel.selected);
}

struct Study {
  Loaded data;
  PredictorTable predictors;
  StudySpec spec;
};

Study prepare_study(const Options& o, const char* command, std::ostream& err, bool single_t_fit = true) {
  Study s;
  s.data = load(o, command, err);
  s.predictors = resolve_predictors(o, s.data);
  StudySpec& spec = s.spec;
  spec.treated = resolve_treated(o, s.data);
  spec.pre_length = resolve_pre_length(o, s.data, spec.treated);
  if (single_t_fit) spec.t_fit = parse_int(o.t_fit, "--t-fit");
  spec.v_mode = parse_v_mode(o.v_mode);
  spec.placement = parse_placement(o.placement);
  spec.reg = Regularization{o.l1, o.l2};
  spec.standardize = !o.no_standardize;
  spec.sparsify = o.sparsify;
  spec.solver.seed = o.seed;
  spec.donors = resolve_donors(o, s.data, spec.treated, err);
  if (spec.donors.empty()) bad_config(fmt::format("no donors left for {}", spec.treated.code()));
  return s;
}

PlaceboOptions placebo_options(const Options& o, const Panel& panel) {
  PlaceboOptions p;
  p.parallelism = o.jobs;
  if (!o.placebo_t0.empty()) p.placebo_pre_length = day_of(panel, o.placebo_t0, "--placebo-t0");
  return p;
}

json range_json(IndexRange r) { return json::array({r.begin, r.end}); }

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  Study s = prepare_study(o, "fit", err);
  const SynthResult r = fit_synth(s.spec, s.data.panel, s.predictors);
  const Panel& panel = s.data.panel;

  json j;
  j["treated"] = r.treated.code();
  j["t0"] = panel.date_at(r.pre_length).to_string();
  j["pre_length"] = r.pre_length;
  j["t_fit"] = s.spec.t_fit;
  j["training"] = range_json(r.split.training);
  j["validation"] = range_json(r.split.validation);
  json w = json::object();
  for (std::size_t i = 0; i < r.donors.size(); ++i) w[r.donors[i].code()] = r.w[i];
  j["w"] = std::move(w);
  json v = json::object();
  for (std::size_t i = 0; i < r.predictor_names.size(); ++i) v[r.predictor_names[i]] = r.v[i];
  j["v"] = std::move(v);
  j["w_objective"] = number(r.w_objective);
  j["mspe"] = {{"pre", number(r.pre_mspe)}, {"train", number(r.train_mspe)}, {"validation", number(r.validation_mspe)}};
  j["first_date"] = panel.first_date().to_string();
  j["synthetic"] = series_json(r.synthetic);
  j["gap"] = series_json(r.gap);

  const fs::path dir = out_dir(o);
  write_file(dir / "result.json", j.dump(2) + "\n");

  std::ostringstream curve;
  csv::Writer cw(curve);
  cw.row({"date", "actual", "synthetic", "gap"});
  for (int t = 0; t < panel.num_days(); ++t) {
    cw.row({panel.date_at(t).to_string(), fmt_double(r.actual[t]), fmt_double(r.synthetic[t]), fmt_double(r.gap[t])});
  }
  write_file(dir / "curve.csv", curve.str());
  out << fmt::format("fit {}: {} donors, pre-period MSPE {}\n", r.treated.code(), r.donors.size(),
                     fmt_double(r.pre_mspe));
  return kExitOk;
}

int cmd_placebo(const Options& o, std::ostream& out, std::ostream& err) {
  Study s = prepare_study(o, "placebo", err);
  const PlaceboEnsemble ens = placebo_run(s.spec, s.data.panel, s.predictors, placebo_options(o, s.data.panel));
  const double p = p_value(ens);

  std::vector<double> ranked;
  std::vector<std::optional<std::size_t>> rank_index(ens.entries.size());
  for (std::size_t i = 0; i < ens.entries.size(); ++i) {
    if (ens.entries[i].skipped) continue;
    rank_index[i] = ranked.size();
    ranked.push_back(ens.entries[i].r);
  }

  json entries = json::array();
  std::ostringstream table;
  csv::Writer tw(table);
  tw.row({"unit", "treated", "r", "rmse_pre", "rmse_post", "pre_length", "skipped", "p_value"});
  for (std::size_t i = 0; i < ens.entries.size(); ++i) {
    const auto& e = ens.entries[i];
    json je = {{"unit", e.unit.code()}, {"r", number(e.r)},           {"R_pre", number(e.rmse_pre)},
               {"R_post", number(e.rmse_post)}, {"pre_length", e.pre_length}, {"pre_floored", e.pre_floored},
               {"skipped", e.skipped}};
    if (e.skipped) je["skip_reason"] = e.skip_reason;
    entries.push_back(std::move(je));
    const std::string unit_p = rank_index[i] ? fmt_double(p_value(ranked, *rank_index[i])) : "";
    tw.row({e.unit.code(), i == ens.treated_index ? "1" : "0", e.skipped ? "" : fmt_double(e.r),
            e.skipped ? "" : fmt_double(e.rmse_pre), e.skipped ? "" : fmt_double(e.rmse_post),
            std::to_string(e.pre_length), e.skipped ? "1" : "0", unit_p});
    if (e.skipped) err << fmt::format("warning: placebo {} skipped: {}\n", e.unit.code(), e.skip_reason);
  }
  json j;
  j["treated"] = ens.treated.code();
  j["p_value"] = p;
  j["ranked_entries"] = ranked.size();
  j["entries"] = std::move(entries);

  const fs::path dir = out_dir(o);
  write_file(dir / "placebo.json", j.dump(2) + "\n");
  write_file(dir / "pvalues.csv", table.str());
  out << fmt::format("placebo {}: p = {} over {} units\n", ens.treated.code(), fmt_double(p), ranked.size());
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  Study s = prepare_study(o, "sweep", err, false);
  std::vector<int> t_fits;
  for (const auto& item : split_list(o.t_fit)) t_fits.push_back(parse_int(item, "--t-fit"));
  if (t_fits.empty()) bad_config("--t-fit needs at least one training length");
  const auto rows = training_sweep(s.spec, t_fits, s.data.panel, s.predictors, placebo_options(o, s.data.panel));

  std::ostringstream table;
  csv::Writer tw(table);
  tw.row({"t_fit", "pre_deviation", "p_value", "error"});
  std::size_t failed = 0;
  for (const auto& r : rows) {
    failed += r.failed;
    tw.row({std::to_string(r.t_fit), r.failed ? "" : fmt_double(r.pre_deviation),
            r.failed ? "" : fmt_double(r.p_value), r.error});
  }
  write_file(out_dir(o) / "sweep.csv", table.str());
  out << fmt::format("sweep {}: {} training lengths, {} failed\n", s.spec.treated.code(), rows.size(), failed);
  return failed == rows.size() ? kExitCompute : kExitOk;
}

int cmd_logistic(const Options& o, std::ostream& out, std::ostream& err) {
  Loaded l = load(o, "logistic", err);
  const Panel& panel = l.panel;
  const std::size_t n = panel.num_units();
  if (n == 0) throw Error(ErrorCode::TooFewUnits, "the outcome panel has no units");

  std::vector<std::optional<LogisticFit>> fits(n);
  std::vector<std::string> reasons(n);
  LogisticFitOptions fit_opts;
  fit_opts.seed = o.seed;
  parallel_for(n, o.jobs, [&](std::size_t u) {
    try {
      LogisticFit f = fit_logistic(panel.row(u), fit_opts);
      if (f.identifiable) {
        fits[u] = f;
      } else {
        reasons[u] = "flat series: K and nu are not identifiable";
      }
    } catch (const Error& e) {
      reasons[u] = fmt::format("{}: {}", to_string(e.code()), e.what());
    }
  });

  std::map<UnitId, LogisticFit> ok;
  std::ostringstream failures;
  csv::Writer fw(failures);
  fw.row({"unit", "reason"});
  for (std::size_t u = 0; u < n; ++u) {
    if (fits[u]) {
      ok.emplace(panel.units()[u], *fits[u]);
    } else {
      fw.row({panel.units()[u].code(), reasons[u]});
    }
  }
  std::map<UnitId, Quadrant> quadrants;
  if (ok.size() >= 2) quadrants = classify_quadrant(ok);

  std::ostringstream fits_csv;
  csv::Writer cw(fits_csv);
  cw.row({"unit", "K", "nu", "p0", "sse", "quadrant"});
  for (const auto& [id, f] : ok) {
    auto q = quadrants.find(id);
    cw.row({id.code(), fmt_double(f.K), fmt_double(f.nu), fmt_double(f.p0), fmt_double(f.sse),
            q == quadrants.end() ? "" : to_string(q->second)});
  }
  const fs::path dir = out_dir(o);
  write_file(dir / "fits.csv", fits_csv.str());
  write_file(dir / "fit_failures.csv", failures.str());

  if (!o.ccvi.empty()) {
    const KeyedTable ccvi = read_ccvi(fs::path(o.ccvi));
    std::ostringstream reg_csv, dec_csv;
    csv::Writer rw(reg_csv), dw(dec_csv);
    rw.row({"theme", "param", "slope", "corr", "n"});
    dw.row({"theme", "param", "bin", "count", "mean", "std"});
    for (std::size_t c = 0; c < ccvi.columns.size(); ++c) {
      const std::string& theme = ccvi.columns[c];
      std::vector<double> index, k_vals, nu_vals;
      for (const auto& [id, f] : ok) {
        auto row = ccvi.find(id);
        if (!row) continue;
        index.push_back(ccvi.rows[*row][c]);
        k_vals.push_back(f.K);
        nu_vals.push_back(f.nu);
      }
      for (LogisticParam param : {LogisticParam::K, LogisticParam::nu}) {
        const auto& values = param == LogisticParam::K ? k_vals : nu_vals;
        const std::string pname = to_string(param);
        try {
          const Regression reg = theme_regression(values, index);
          rw.row({theme, pname, fmt_double(reg.slope), fmt_double(reg.corr), std::to_string(values.size())});
        } catch (const Error& e) {
          rw.row({theme, pname, "", "", std::to_string(values.size())});
          err << fmt::format("warning: regression of {} on {} failed: {}\n", pname, theme, e.what());
        }
        try {
          const auto bins = decile_summary(values, index, o.bins);
          for (std::size_t b = 0; b < bins.size(); ++b) {
            dw.row({theme, pname, std::to_string(b + 1), std::to_string(bins[b].count), fmt_double(bins[b].mean),
                    fmt_double(bins[b].std)});
          }
        } catch (const Error& e) {
          err << fmt::format("warning: binning of {} by {} failed: {}\n", pname, theme, e.what());
        }
      }
    }
    write_file(dir / "ccvi_regression.csv", reg_csv.str());
    write_file(dir / "deciles.csv", dec_csv.str());
  } else {
    err << "note: no --ccvi table given; skipping ccvi_regression.csv and deciles.csv\n";
  }

  out << fmt::format("logistic: {} of {} units fitted\n", ok.size(), n);
  return 2 * ok.size() >= n ? kExitOk : kExitCompute;
}

int cmd_select(const Options& o, std::ostream& out, std::ostream&) {
  require(o.predictors, "--predictors", "select-predictors");
  require(o.blocks, "--blocks", "select-predictors");
  const KeyedTable table = read_keyed_table(fs::path(o.predictors));
  const PredictorBlocks blocks = read_blocks(fs::path(o.blocks));
  blocks.validate(table.columns);
  const auto sel = select_predictors_naive(abs_correlation(table), blocks, o.threshold);

  std::ostringstream csv_out;
  csv::Writer w(csv_out);
  w.row({"block", "predictor"});
  for (const auto& [block, members] : blocks.blocks) {
    for (const auto& name : sel.selected) {
      if (std::find(members.begin(), members.end(), name) != members.end()) w.row({block, name});
    }
  }
  write_file(out_dir(o) / "selected_predictors.csv", csv_out.str());
  out << fmt::format("selected {} predictors\n", sel.selected.size());
  for (const auto& b : sel.short_blocks) out << fmt::format("block {} has fewer than 2 compliant picks\n", b);
  return kExitOk;
}

int cmd_ingest(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.outcomes, "--outcomes", "ingest");
  Loaded l = load(o, "ingest", err, true);
  const fs::path dir = out_dir(o);
  std::ostringstream panel_csv;
  write_panel(panel_csv, l.panel);
  write_file(dir / "panel.csv", panel_csv.str());

  if (l.has_metadata) {
    const auto split = split_control_target(l.panel);
    std::ostringstream roles;
    csv::Writer w(roles);
    w.row({"unit", "role"});
    std::map<UnitId, std::string> role;
    for (const auto& id : split.control) role[id] = "control";
    for (const auto& id : split.target) role[id] = "target";
    for (const auto& [id, r] : role) w.row({id.code(), r});
    write_file(dir / "roles.csv", roles.str());
    out << fmt::format("{} control and {} target units\n", split.control.size(), split.target.size());
  }
  out << fmt::format("ingested {} units over {} days\n", l.panel.num_units(), l.panel.num_days());
  return kExitOk;
}

void add_options(CLI::App& app, Options& o) {
  auto file = [&](const char* name, std::string& target, const char* help) {
    app.add_option(name, target, help)->check(CLI::ExistingFile)->group("Inputs");
  };
  file("--outcomes", o.outcomes, "long CSV of unit,date,value");
  file("--predictors", o.predictors, "CSV keyed by unit with one column per predictor");
  file("--metadata", o.metadata, "CSV of unit,treated,t0,cluster,incentive_category");
  file("--clusters", o.clusters, "CSV of fips,cluster");
  file("--blocks", o.blocks, "CSV of block,predictor");
  file("--adjacency", o.adjacency, "CSV of state,neighbor");
  file("--ccvi", o.ccvi, "CSV keyed by unit with six theme indices and the global index");

  app.add_option("--treated", o.treated, "treated unit")->group("Study");
  app.add_option("--t0", o.t0, "intervention date (YYYY-MM-DD)")->group("Study");
  app.add_option("--t-fit", o.t_fit, "training window length; a comma list for sweep")
      ->capture_default_str()
      ->group("Study");
  app.add_option("--donors", o.donors, "comma list of donor units")->group("Study");
  app.add_option("--filter", o.filter, "donor filter")
      ->check(CLI::IsMember({"none", "cluster", "neighbors"}))
      ->capture_default_str()
      ->group("Study");
  app.add_option("--placebo-t0", o.placebo_t0, "intervention date assumed for placebo units")->group("Study");

  app.add_option("--l1", o.l1, "coefficient on the 2-norm of w")->capture_default_str()->group("Solver");
  app.add_option("--l2", o.l2, "coefficient on the 1-norm of w")->capture_default_str()->group("Solver");
  app.add_option("--v-mode", o.v_mode, "optimized or inverse_variance")->capture_default_str()->group("Solver");
  app.add_option("--train-placement", o.placement, "tail or head")->capture_default_str()->group("Solver");
  app.add_flag("--no-standardize", o.no_standardize, "fit on raw predictor scales")->group("Solver");
  app.add_flag("--sparsify", o.sparsify, "zero small weights and refit")->group("Solver");
  app.add_option("--seed", o.seed, "random seed")->capture_default_str()->group("Solver");
  app.add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber)->group("Solver");

  app.add_flag("--clean", o.clean, "clean outcome series before fitting")->group("Cleaning");
  app.add_option("--max-bad-fraction", o.max_bad_fraction, "drop series above this share of bad cells")
      ->capture_default_str()
      ->group("Cleaning");
  app.add_option("--window", o.window, "rolling mean window in days")->capture_default_str()->group("Cleaning");
  app.add_option("--repair", o.repair, "interpolate, cumulative-max or both")
      ->capture_default_str()
      ->group("Cleaning");

  app.add_option("--bins", o.bins, "bins for the index summary")->capture_default_str()->group("Reporting");
  app.add_option("--threshold", o.threshold, "correlation cap for predictor selection")
      ->capture_default_str()
      ->group("Reporting");
  app.add_option("--out", o.out, "output directory")->capture_default_str()->group("Reporting");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Synthetic control estimation and vaccination curve analysis", "synthctl"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  add_options(app, o);
  app.require_subcommand(1, 1);

  using Handler = int (*)(const Options&, std::ostream&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands{
      {"fit", "fit one synthetic control; writes result.json and curve.csv", cmd_fit},
      {"placebo", "placebo ensemble and p-value; writes placebo.json and pvalues.csv", cmd_placebo},
      {"sweep", "p-values over several training lengths; writes sweep.csv", cmd_sweep},
      {"logistic", "logistic curve per unit; writes fits.csv, ccvi_regression.csv and deciles.csv", cmd_logistic},
      {"select-predictors", "pick predictors per block; writes selected_predictors.csv", cmd_select},
      {"ingest", "clean an outcome panel; writes panel.csv", cmd_ingest},
  };
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    subs.emplace_back(sub, fn);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) return fn(o, out, err);
    }
    return kExitConfig;
  } catch (const Error& e) {
    err << fmt::format("error [{}]: {}\n", to_string(e.code()), e.what());
    return is_configuration_error(e.code()) ? kExitConfig : kExitCompute;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCompute;
  }
}

}  // namespace synthctl::cli
