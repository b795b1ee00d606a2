#include "rdps/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rdps/parallel.hpp"
#include "rdps/rng.hpp"

namespace rdps {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Substream keys under a replication seed.
constexpr uint64_t kDataStream = 1;
constexpr uint64_t kCvStream = 2;
constexpr uint64_t kCvFoldStream = 3;

}  // namespace

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

GeneratedInstance gen_linear(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  Rng rng(seed);
  Eigen::MatrixXd x(n + 1, 1);
  Eigen::VectorXd y(n + 1);
  for (int i = 0; i <= n; ++i) {
    x(i, 0) = rng.next_normal();
    y(i) = x(i, 0) + rng.next_normal();
  }
  return GeneratedInstance{Dataset(x.topRows(n), y.head(n)), x.row(n), y(n)};
}

GeneratedInstance gen_nonlinear(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  Rng rng(seed);
  Eigen::MatrixXd x(n + 1, 1);
  Eigen::VectorXd y(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double xi = rng.next_uniform(0.0, 10.0);
    x(i, 0) = xi;
    y(i) = 2.0 * xi + 5.0 * std::sin(xi) + (xi / 5.0) * rng.next_normal();
  }
  return GeneratedInstance{Dataset(x.topRows(n), y.head(n)), x.row(n), y(n)};
}

GeneratedInstance generate(const SimSetting& setting, uint64_t seed) {
  return setting.kind == SimSetting::Kind::linear ? gen_linear(setting.n, seed)
                                                  : gen_nonlinear(setting.n, seed);
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

LevelGrid LevelGrid::defaults() {
  LevelGrid g;
  for (int k = 50; k <= 95; k += 5) g.levels.push_back(static_cast<double>(k) / 100.0);
  return g;
}

namespace {

RegressorSpec resolve_backend(const BackendChoice& choice,
                              const RegressorSpec* auto_krr) {
  if (std::holds_alternative<AutoKrr>(choice)) {
    if (!auto_krr)
      throw std::logic_error("auto-krr backend requested but not resolved");
    return *auto_krr;
  }
  return std::get<RegressorSpec>(choice);
}

bool wants_auto_krr(const MethodSpec& m) {
  return std::visit([](const auto& op) {
    return std::holds_alternative<AutoKrr>(op.backend);
  }, m.op);
}

BaseSpec to_base_spec(const RegressorSpec& spec) {
  return std::visit(
      [](const auto& s) -> BaseSpec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DeletedSpec>)
          throw std::invalid_argument("deleted backend cannot be nested");
        else
          return BaseSpec(s);
      },
      spec);
}

// Grid fits inside the runner stay serial: replications are the parallel axis.
FullStrategy serial_strategy(const FullStrategy& s) {
  if (const auto* g = std::get_if<GridStrategy>(&s)) {
    GridStrategy copy = *g;
    copy.parallel = false;
    return copy;
  }
  return s;
}

PredictiveSystem build_system(const MethodSpec& method, const Dataset& train,
                              const Eigen::RowVectorXd& x_new,
                              const RegressorSpec* auto_krr) {
  if (const auto* sc = std::get_if<SplitCpsMethod>(&method.op)) {
    SplitConfig cfg{sc->estimation_count, resolve_backend(sc->backend, auto_krr),
                    sc->transform};
    return split_system(train, cfg, x_new);
  }
  if (const auto* fc = std::get_if<FullCpsMethod>(&method.op)) {
    return full_cps(train, resolve_backend(fc->backend, auto_krr), fc->kind, x_new);
  }
  const auto& fr = std::get<FullRdpsMethod>(method.op);
  const RegressorSpec spec = resolve_backend(fr.backend, auto_krr);
  if (fr.trim_fraction > 0.0) {
    const auto* grid = std::get_if<GridStrategy>(&fr.strategy);
    if (!grid)
      throw std::invalid_argument("deleted rdps requires the grid strategy");
    GridStrategy g = *grid;
    g.parallel = false;
    return full_rdps_deleted(train, to_base_spec(spec), fr.trim_fraction, x_new, g);
  }
  return full_rdps(train, spec, x_new, serial_strategy(fr.strategy));
}

void mark_failed(ReplicationCell& cell, const ExperimentConfig& cfg,
                 const std::string& reason) {
  cell = ReplicationCell{};
  cell.failed = true;
  cell.reason = reason;
  cell.thickness = kNan;
  for (double level : cfg.levels.levels)
    cell.levels.push_back({level, false, kNan, kNan});
}

// Never lets an exception escape: the replication workers run inside the
// parallel loop, and failures belong in the result cells anyway.
void run_one_replication(const ExperimentConfig& cfg, int rep,
                         std::vector<std::vector<ReplicationCell>>& cells) try {
  const uint64_t rep_seed = derive_seed(cfg.master_seed, static_cast<uint64_t>(rep));
  const GeneratedInstance inst =
      generate(cfg.setting, derive_seed(rep_seed, kDataStream));

  bool need_auto = false;
  for (const auto& m : cfg.methods) need_auto = need_auto || wants_auto_krr(m);
  RegressorSpec auto_krr = OlsSpec{};
  if (need_auto) {
    const GeneratedInstance cv_inst =
        generate(cfg.setting, derive_seed(rep_seed, kCvStream));
    const double gamma = median_heuristic_gamma(inst.train);
    const double lambda = cross_validate_lambda(
        cv_inst.train, gamma, {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}, 5,
        derive_seed(rep_seed, kCvFoldStream));
    auto_krr = KrrSpec{gamma, lambda};
  }

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    ReplicationCell& cell = cells[m][static_cast<std::size_t>(rep)];
    try {
      const PredictiveSystem sys =
          build_system(cfg.methods[m], inst.train, inst.x_new,
                       need_auto ? &auto_krr : nullptr);
      cell.thickness = thickness(sys);
      cell.levels.reserve(cfg.levels.levels.size());
      for (double level : cfg.levels.levels) {
        const PredictionInterval iv = central_interval(sys, 1.0 - level);
        const ScoreRecord r = score_interval(iv, inst.y_new);
        cell.levels.push_back({level, r.covered, r.width, r.interval_score});
      }
    } catch (const std::exception& e) {
      mark_failed(cell, cfg, e.what());
    }
  }
} catch (const std::exception& e) {
  for (auto& per_method : cells)
    mark_failed(per_method[static_cast<std::size_t>(rep)], cfg, e.what());
}

ExperimentResult run_with_threads(const ExperimentConfig& cfg, int threads) {
  if (cfg.replications < 1) throw std::invalid_argument("need replications >= 1");
  if (cfg.methods.empty()) throw std::invalid_argument("no methods configured");
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.methods.size(); ++j)
      if (cfg.methods[i].name == cfg.methods[j].name)
        throw std::invalid_argument("duplicate method name: " + cfg.methods[i].name);

  ExperimentResult result;
  result.levels = cfg.levels.levels;
  result.cells.resize(cfg.methods.size());
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    result.method_names.push_back(cfg.methods[m].name);
    result.cells[m].resize(static_cast<std::size_t>(cfg.replications));
  }
  parallel_for(cfg.replications, threads,
               [&](int rep) { run_one_replication(cfg, rep, result.cells); });
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_with_threads(cfg, effective_threads(cfg.threads));
}

ExperimentResult run_experiment_serial(const ExperimentConfig& cfg) {
  return run_with_threads(cfg, 1);
}

double ExperimentResult::failure_fraction() const {
  double failed = 0.0, total = 0.0;
  for (const auto& per_method : cells)
    for (const auto& cell : per_method) {
      total += 1.0;
      failed += cell.failed ? 1.0 : 0.0;
    }
  return total > 0.0 ? failed / total : 0.0;
}

bool ExperimentResult::operator==(const ExperimentResult& other) const {
  if (method_names != other.method_names || levels != other.levels) return false;
  if (cells.size() != other.cells.size()) return false;
  for (std::size_t m = 0; m < cells.size(); ++m) {
    if (cells[m].size() != other.cells[m].size()) return false;
    for (std::size_t r = 0; r < cells[m].size(); ++r) {
      const auto& a = cells[m][r];
      const auto& b = other.cells[m][r];
      if (a.failed != b.failed) return false;
      if (a.failed) continue;
      if (a.thickness != b.thickness || a.levels.size() != b.levels.size())
        return false;
      for (std::size_t l = 0; l < a.levels.size(); ++l) {
        const auto& x = a.levels[l];
        const auto& y = b.levels[l];
        if (x.level != y.level || x.covered != y.covered || x.width != y.width ||
            x.score != y.score)
          return false;
      }
    }
  }
  return true;
}

std::vector<SummaryRow> summarize(const ExperimentResult& result) {
  std::vector<SummaryRow> rows;
  for (std::size_t m = 0; m < result.cells.size(); ++m) {
    std::vector<double> thick;
    for (const auto& cell : result.cells[m])
      if (!cell.failed) thick.push_back(cell.thickness);
    double median = kNan;
    if (!thick.empty()) {
      std::sort(thick.begin(), thick.end());
      const std::size_t mid = thick.size() / 2;
      median = thick.size() % 2 == 1 ? thick[mid]
                                     : 0.5 * (thick[mid - 1] + thick[mid]);
    }
    for (std::size_t l = 0; l < result.levels.size(); ++l) {
      std::vector<ScoreRecord> records;
      for (const auto& cell : result.cells[m]) {
        if (cell.failed) continue;
        const auto& c = cell.levels[l];
        records.push_back({c.level, c.covered, c.width, c.score});
      }
      SummaryRow row;
      row.method = result.method_names[m];
      row.level = result.levels[l];
      if (records.empty()) {
        row.coverage = row.mean_width = row.mean_score = row.defective_fraction = kNan;
      } else {
        row.coverage = coverage(records);
        row.mean_width = mean_width(records);
        row.mean_score = mean_score(records);
        row.defective_fraction = defective_fraction(records);
      }
      row.median_thickness = median;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

void emit_csv(const ExperimentResult& result, const std::string& path) {
  std::string out = "method,replication,level,covered,width,interval_score,thickness\n";
  for (std::size_t m = 0; m < result.cells.size(); ++m) {
    for (std::size_t r = 0; r < result.cells[m].size(); ++r) {
      const auto& cell = result.cells[m][r];
      for (const auto& c : cell.levels) {
        out += result.method_names[m];
        out += ',';
        out += std::to_string(r);
        out += ',';
        out += format_full(c.level);
        out += ',';
        out += c.covered ? '1' : '0';
        out += ',';
        out += format_full(c.width);
        out += ',';
        out += format_full(c.score);
        out += ',';
        out += format_full(cell.thickness);
        out += '\n';
      }
    }
  }
  write_file(path, out);
}

ExperimentResult parse_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "method,replication,level,covered,width,interval_score,thickness")
    throw std::runtime_error("unexpected csv header in " + path);

  ExperimentResult result;
  std::vector<std::string>& names = result.method_names;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto parts = split_line(line, ',');
    if (parts.size() != 7) throw std::runtime_error("malformed csv row: " + line);
    const std::string& method = parts[0];
    const std::size_t rep = std::stoul(parts[1]);
    const double level = std::strtod(parts[2].c_str(), nullptr);
    const bool covered = parts[3] == "1";
    const double width = std::strtod(parts[4].c_str(), nullptr);
    const double score = std::strtod(parts[5].c_str(), nullptr);
    const double thick = std::strtod(parts[6].c_str(), nullptr);

    std::size_t m = std::find(names.begin(), names.end(), method) - names.begin();
    if (m == names.size()) {
      names.push_back(method);
      result.cells.emplace_back();
    }
    if (result.cells[m].size() <= rep) result.cells[m].resize(rep + 1);
    ReplicationCell& cell = result.cells[m][rep];
    cell.thickness = thick;
    cell.failed = std::isnan(width);
    cell.levels.push_back({level, covered, width, score});
    if (m == 0 && rep == 0) result.levels.push_back(level);
  }
  return result;
}

void emit_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::string out =
      "method,level,coverage,mean_width,mean_interval_score,defective_fraction,"
      "median_thickness\n";
  for (const auto& r : rows) {
    out += r.method;
    out += ',';
    out += format_full(r.level);
    out += ',';
    out += format_full(r.coverage);
    out += ',';
    out += format_full(r.mean_width);
    out += ',';
    out += format_full(r.mean_score);
    out += ',';
    out += format_full(r.defective_fraction);
    out += ',';
    out += format_full(r.median_thickness);
    out += '\n';
  }
  write_file(path, out);
}

void emit_bounds_csv(const PredictiveSystem& system,
                     const std::vector<double>& y_grid, const std::string& path) {
  std::string out = "y,lower,upper\n";
  for (double y : y_grid) {
    out += format_full(y);
    out += ',';
    out += format_full(system.lower()(y));
    out += ',';
    out += format_full(system.upper()(y));
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Config files and canned profiles
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_line(s, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    std::size_t used = 0;
    out.push_back(std::stod(t, &used));
    if (used != t.size()) throw std::invalid_argument("bad number: " + t);
  }
  return out;
}

BackendChoice parse_backend(const std::string& value) {
  if (value == "ols") return RegressorSpec(OlsSpec{});
  if (value == "auto-krr") return AutoKrr{};
  const auto colon = value.find(':');
  const std::string kind = value.substr(0, colon);
  const std::vector<double> args =
      colon == std::string::npos ? std::vector<double>{}
                                 : parse_number_list(value.substr(colon + 1));
  if (kind == "krr") {
    if (args.size() != 2) throw std::invalid_argument("krr wants gamma,lambda");
    return RegressorSpec(KrrSpec{args[0], args[1]});
  }
  if (kind == "quantile") {
    QuantileSgdSpec q;
    if (!args.empty()) q.tau = args[0];
    if (args.size() > 1) q.step_scale = args[1];
    if (args.size() > 2) q.n_passes = static_cast<int>(args[2]);
    if (args.size() > 3) q.seed = static_cast<uint64_t>(args[3]);
    return RegressorSpec(q);
  }
  if (kind == "smoother") {
    KernelSmootherSpec s;
    if (args.empty()) throw std::invalid_argument("smoother wants bandwidth[,t2,t1]");
    s.bandwidth = args[0];
    if (args.size() > 1) s.trim_lo = args[1];
    if (args.size() > 2) s.trim_hi = args[2];
    return RegressorSpec(s);
  }
  throw std::invalid_argument("unknown backend: " + value);
}

MethodSpec parse_method(const std::string& text) {
  std::string name, kind = "full_rdps", backend = "ols", conformity = "studentised";
  std::string transform = "identity", strategy = "grid";
  double q = 0.0;
  int estimation = 0, points = 512;
  double span = 3.0;

  std::istringstream iss(text);
  std::string tok;
  while (iss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("method token needs key=value: " + tok);
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "name") name = value;
    else if (key == "kind") kind = value;
    else if (key == "backend") backend = value;
    else if (key == "conformity") conformity = value;
    else if (key == "transform") transform = value;
    else if (key == "strategy") strategy = value;
    else if (key == "q") q = std::stod(value);
    else if (key == "estimation") estimation = std::stoi(value);
    else if (key == "points") points = std::stoi(value);
    else if (key == "span") span = std::stod(value);
    else throw std::invalid_argument("unknown method key: " + key);
  }
  if (name.empty()) throw std::invalid_argument("method needs a name");

  MethodSpec m;
  m.name = name;
  const BackendChoice choice = parse_backend(backend);
  if (kind == "split_cps") {
    if (estimation < 1) throw std::invalid_argument("split_cps needs estimation=N");
    ResidualTransform t = transform == "scale" ? ResidualTransform::scale()
                                               : ResidualTransform::identity();
    m.op = SplitCpsMethod{estimation, choice, t};
  } else if (kind == "full_cps") {
    const ConformityKind ck = conformity == "plain" ? ConformityKind::plain
                                                    : ConformityKind::studentised;
    m.op = FullCpsMethod{choice, ck};
  } else if (kind == "full_rdps") {
    GridStrategy grid;
    grid.points = points;
    grid.span_mult = span;
    FullStrategy strat = grid;
    if (strategy == "linear") strat = LinearExactStrategy{};
    else if (strategy == "monotone") strat = MonotoneLimitsStrategy{};
    else if (strategy != "grid") throw std::invalid_argument("unknown strategy: " + strategy);
    m.op = FullRdpsMethod{choice, q, strat};
  } else {
    throw std::invalid_argument("unknown method kind: " + kind);
  }
  return m;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  ExperimentConfig cfg;
  cfg.methods.clear();
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line needs key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "setting") {
      if (value == "linear") cfg.setting.kind = SimSetting::Kind::linear;
      else if (value == "nonlinear") cfg.setting.kind = SimSetting::Kind::nonlinear;
      else throw std::invalid_argument("unknown setting: " + value);
    } else if (key == "n") {
      cfg.setting.n = std::stoi(value);
      if (cfg.setting.n < 10) throw std::invalid_argument("n must be >= 10");
    } else if (key == "replications") {
      cfg.replications = std::stoi(value);
    } else if (key == "seed") {
      cfg.master_seed = std::stoull(value);
    } else if (key == "threads") {
      cfg.threads = std::stoi(value);
    } else if (key == "levels") {
      cfg.levels.levels = parse_number_list(value);
      for (std::size_t i = 0; i < cfg.levels.levels.size(); ++i) {
        const double l = cfg.levels.levels[i];
        if (!(l > 0.0 && l < 1.0)) throw std::invalid_argument("level outside (0,1)");
        if (i > 0 && !(cfg.levels.levels[i - 1] < l))
          throw std::invalid_argument("levels must be strictly increasing");
      }
    } else if (key == "method") {
      cfg.methods.push_back(parse_method(value));
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  return cfg;
}

ExperimentConfig reproduce_config(SimSetting::Kind kind, int replications,
                                  uint64_t seed) {
  ExperimentConfig cfg;
  cfg.setting = SimSetting{kind, 100};
  cfg.replications = replications;
  cfg.master_seed = seed;
  cfg.methods = {
      {"lspm", FullCpsMethod{RegressorSpec(OlsSpec{}), ConformityKind::studentised}},
      {"krrpm", FullCpsMethod{AutoKrr{}, ConformityKind::studentised}},
      {"rdps-ols", FullRdpsMethod{RegressorSpec(OlsSpec{}), 0.05, GridStrategy{}}},
      {"rdps-krr", FullRdpsMethod{AutoKrr{}, 0.05, GridStrategy{}}},
  };
  return cfg;
}

ReproduceOutput run_reproduce(const ReproduceProfile& profile) {
  ReproduceOutput out;
  out.failure_fraction = 0.0;
  const int reps = profile.smoke ? 100 : 1000;
  for (const auto kind : {SimSetting::Kind::linear, SimSetting::Kind::nonlinear}) {
    ExperimentConfig cfg = reproduce_config(kind, reps, profile.seed);
    cfg.threads = profile.threads;
    const ExperimentResult result = run_experiment(cfg);
    out.failure_fraction = std::max(out.failure_fraction, result.failure_fraction());
    const std::string tag =
        kind == SimSetting::Kind::linear ? "linear" : "nonlinear";
    const std::string records = profile.out_dir + "/records_" + tag + ".csv";
    const std::string summary = profile.out_dir + "/summary_" + tag + ".csv";
    emit_csv(result, records);
    emit_summary_csv(summarize(result), summary);
    out.paths.push_back(records);
    out.paths.push_back(summary);
  }
  return out;
}

}  // namespace rdps
