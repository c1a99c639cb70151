#include "hwsc/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hwsc/csv.hpp"
#include "hwsc/error.hpp"

namespace hwsc::simgen {

std::string Scenario::name() const {
  if (spatial_dep && spillover) return "sd+sp";
  if (spatial_dep) return "sd";
  if (spillover) return "sp";
  return "none";
}

std::string Scenario::label() const {
  return std::string(spatial_dep ? "SD" : "NoSD") + (spillover ? "-Sp" : "-NoSp");
}

Scenario parse_scenario(const std::string& s) {
  if (s == "sd+sp" || s == "SD-Sp") return {true, true};
  if (s == "sd" || s == "SD-NoSp") return {true, false};
  if (s == "sp" || s == "NoSD-Sp") return {false, true};
  if (s == "none" || s == "NoSD-NoSp") return {false, false};
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + s + "' (expected sd+sp, sd, sp or none)");
}

std::vector<Scenario> all_scenarios() { return {{false, false}, {false, true}, {true, false}, {true, true}}; }

EffectMode parse_effect_mode(const std::string& s) {
  if (s == "multiplicative") return EffectMode::multiplicative;
  if (s == "additive-log" || s == "additive_log") return EffectMode::additive_log;
  throw Error(ErrorCode::InvalidArgument, "effect mode must be multiplicative or additive-log");
}

std::string to_string(EffectMode m) { return m == EffectMode::multiplicative ? "multiplicative" : "additive-log"; }

void DgpConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "dgp config: " + what); };
  if (G < 1) fail("G must be >= 1");
  if (static_cast<int>(phi_f.size()) != G || static_cast<int>(sigma_f.size()) != G) fail("phi_f/sigma_f need G entries");
  for (double p : phi_f)
    if (!(std::abs(p) < 1.0)) fail("|phi_f| < 1");
  if (!(std::abs(phi_gamma) < 1.0)) fail("|phi_gamma| < 1");
  if (!(std::abs(varpi_alpha) < 1.0) || !(std::abs(varpi_b) < 1.0)) fail("|varpi| < 1");
  if (!(std::abs(rho_u) < 1.0)) fail("|rho_u| < 1");
  for (double s : sigma_f)
    if (!(s > 0.0)) fail("sigma_f > 0");
  if (!(sigma_alpha > 0.0 && sigma_b > 0.0 && sigma_gamma > 0.0 && sigma_u > 0.0 && sigma_eps > 0.0)) {
    fail("standard deviations must be positive");
  }
  for (double c : chi)
    if (!(c >= 0.0 && c <= 1.0)) fail("chi entries in [0,1]");
  if (pre_len < 2 || post_len < 1) fail("pre_len >= 2 and post_len >= 1");
  if (year_min > year_max) fail("year range");
  if (constant_effect && !(*constant_effect > 0.0)) fail("constant effect must be positive");
  heatwave.validate();
}

Geography make_geography(geo::SpatialIndex index, geo::AdjacencyGraph adjacency, int knn_k, double knn_bandwidth) {
  if (adjacency.size() != index.size()) throw Error(ErrorCode::DimensionMismatch, "adjacency vs centroids");
  auto sep = geo::degrees_of_separation(adjacency);
  auto W = geo::knn_kernel_weights(index, knn_k, knn_bandwidth);
  return Geography{std::move(index), std::move(adjacency), std::move(sep), std::move(W)};
}

Geography synthetic_geography(int rows, int cols, std::uint64_t seed, int knn_k, double knn_bandwidth) {
  if (rows < 1 || cols < 1 || rows * cols < knn_k + 1) throw Error(ErrorCode::InvalidArgument, "grid too small");
  Rng rng(seed);
  const double lat0 = 40.5, lat1 = 45.0, lon0 = -79.5, lon1 = -69.5;
  const double dlat = (lat1 - lat0) / rows, dlon = (lon1 - lon0) / cols;
  std::vector<std::string> ids;
  std::vector<geo::Centroid> cents;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "U%03d", r * cols + c + 1);
      ids.emplace_back(buf);
      const double lat = lat0 + (r + 0.5 + rng.uniform(-0.15, 0.15)) * dlat;
      const double lon = lon0 + (c + 0.5 + rng.uniform(-0.15, 0.15)) * dlon;
      cents.push_back({lat, lon});
    }
  }
  geo::AdjacencyGraph adj(ids.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (int dr = 0; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc <= 0) continue;
          const int r2 = r + dr, c2 = c + dc;
          if (r2 < rows && c2 >= 0 && c2 < cols) {
            adj.add_edge(static_cast<std::size_t>(r * cols + c), static_cast<std::size_t>(r2 * cols + c2));
          }
        }
      }
    }
  }
  return make_geography(geo::SpatialIndex(std::move(ids), std::move(cents)), std::move(adj), knn_k, knn_bandwidth);
}

namespace {

Eigen::VectorXd normals(Rng& rng, Eigen::Index n, double sd) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = sd * rng.normal();
  return v;
}

// AR(1) started from its stationary distribution.
Eigen::VectorXd ar1(Rng& rng, int T, double phi, double sd) {
  Eigen::VectorXd x(T);
  x[0] = rng.normal() * sd / std::sqrt(1.0 - phi * phi);
  for (int t = 1; t < T; ++t) x[t] = phi * x[t - 1] + sd * rng.normal();
  return x;
}

int day_of_year(Date d) {
  const std::chrono::year_month_day ymd{d};
  const Date jan1 = std::chrono::sys_days{ymd.year() / std::chrono::January / 1};
  return static_cast<int>((d - jan1).count()) + 1;
}

}  // namespace

Baseline gen_baseline(const DgpConfig& config, const geo::GeoWeightMatrix& W, std::uint64_t seed) {
  config.validate();
  const auto N = W.W.rows();
  const int T = config.T();
  const bool sd = config.scenario.spatial_dep;
  const double va = sd ? config.varpi_alpha : 0.0;
  const double vb = sd ? config.varpi_b : 0.0;
  const double rho = sd ? config.rho_u : 0.0;
  Rng rng(seed);

  Baseline b;
  b.alpha = geo::sar_smooth(W, va, normals(rng, N, config.sigma_alpha));
  b.B.resize(N, config.G);
  for (int g = 0; g < config.G; ++g) b.B.col(g) = geo::sar_smooth(W, vb, normals(rng, N, config.sigma_b));
  b.f.resize(T, config.G);
  for (int g = 0; g < config.G; ++g) b.f.col(g) = ar1(rng, T, config.phi_f[g], config.sigma_f[g]);
  b.delta = ar1(rng, T, config.phi_gamma, config.sigma_gamma);
  b.u.resize(N, T);
  b.u.col(0) = normals(rng, N, config.sigma_u);
  for (int t = 1; t < T; ++t) b.u.col(t) = rho * (W.W * b.u.col(t - 1)) + normals(rng, N, config.sigma_u);
  b.eps.resize(N, T);
  for (int t = 0; t < T; ++t) b.eps.col(t) = normals(rng, N, config.sigma_eps);

  b.y00 = b.B * b.f.transpose() + b.u + b.eps;
  b.y00.colwise() += b.alpha;
  b.y00.rowwise() += b.delta.transpose();
  return b;
}

Eigen::MatrixXd gen_treatment_effects(const Eigen::MatrixXd& heat, const exposure::TreatmentMask& mask,
                                      const DgpConfig& config) {
  if (heat.rows() != mask.rows() || heat.cols() != mask.cols()) throw Error(ErrorCode::DimensionMismatch, "heat vs mask");
  const int pre = config.pre_len;
  if (heat.cols() < pre || pre < 2) throw Error(ErrorCode::WindowOutOfRange, "heat shorter than the pre window");
  Eigen::MatrixXd tau = Eigen::MatrixXd::Ones(heat.rows(), heat.cols());
  for (Eigen::Index i = 0; i < heat.rows(); ++i) {
    if (!mask.row(i).any()) continue;
    const auto pre_heat = heat.row(i).head(pre);
    const double mean = pre_heat.mean();
    const double sd = std::sqrt((pre_heat.array() - mean).square().sum() / (pre - 1));
    if (!(sd > 0.0)) throw Error(ErrorCode::ZeroPreSd, "constant pre-period heat for unit row " + std::to_string(i));
    for (Eigen::Index t = 0; t < heat.cols(); ++t) {
      if (mask(i, t)) tau(i, t) = config.tau0 * (std::exp(config.kappa * (heat(i, t) - mean) / sd) - 1.0);
    }
  }
  return tau;
}

Eigen::MatrixXd gen_spillovers(const Eigen::MatrixXd& tau, const geo::SeparationMatrix& sep,
                               const std::vector<double>& chi, const exposure::TreatmentMask& mask) {
  const auto N = tau.rows(), T = tau.cols();
  if (mask.rows() != N || mask.cols() != T || static_cast<Eigen::Index>(sep.size()) != N) {
    throw Error(ErrorCode::DimensionMismatch, "spillover inputs");
  }
  std::vector<std::size_t> treated;
  for (Eigen::Index i = 0; i < N; ++i)
    if (mask.row(i).any()) treated.push_back(static_cast<std::size_t>(i));

  Eigen::MatrixXd psi = Eigen::MatrixXd::Ones(N, T);
  const int max_s = static_cast<int>(chi.size());
  for (Eigen::Index j = 0; j < N; ++j) {
    if (mask.row(j).any()) continue;
    int s = geo::SeparationMatrix::kUnreachable;
    for (auto i : treated) s = std::min(s, sep(i, static_cast<std::size_t>(j)));
    if (s < 1 || s > max_s) continue;
    for (Eigen::Index t = 0; t < T; ++t) {
      double sum = 0.0;
      int n = 0;
      for (auto i : treated) {
        if (sep(i, static_cast<std::size_t>(j)) == s && mask(static_cast<Eigen::Index>(i), t)) {
          sum += tau(static_cast<Eigen::Index>(i), t);
          ++n;
        }
      }
      if (n > 0) psi(j, t) = chi[static_cast<std::size_t>(s - 1)] * sum / n;
    }
  }
  return psi;
}

Calibration calibrate_levels(const Eigen::MatrixXd& y00, const Eigen::MatrixXd& target_rates, int pre_len) {
  if (target_rates.rows() != y00.rows() || target_rates.cols() < pre_len || y00.cols() < pre_len || pre_len < 1) {
    throw Error(ErrorCode::DimensionMismatch, "calibration targets must cover the pre window");
  }
  Calibration c;
  c.shifts.resize(y00.rows());
  for (Eigen::Index i = 0; i < y00.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < pre_len; ++t) {
      const double r = target_rates(i, t);
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw Error(ErrorCode::NonPositiveTarget, "target rate must be positive (row " + std::to_string(i) + ")");
      }
      acc += std::log(r) - y00(i, t);
    }
    c.shifts[i] = acc / pre_len;
  }
  c.shifted = y00;
  c.shifted.colwise() += c.shifts;
  return c;
}

Eigen::MatrixXd synthetic_targets(const Geography& geo, const TargetConfig& config, int days, Rng& rng) {
  const auto N = static_cast<Eigen::Index>(geo.size());
  Eigen::VectorXd z = geo::sar_smooth(geo.W, config.varpi, normals(rng, N, 1.0));
  z.array() -= z.mean();
  const double sd = std::sqrt(z.squaredNorm() / std::max<Eigen::Index>(N - 1, 1));
  if (sd > 0.0) z /= sd;
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(N, config.level) + config.spatial_sd * z +
                            normals(rng, N, config.unit_sd);
  Eigen::MatrixXd rates(N, days);
  for (Eigen::Index t = 0; t < days; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) rates(i, t) = std::exp(m[i] + config.day_sd * rng.normal());
  }
  return rates;
}

Eigen::MatrixXd synthetic_heat(const Geography& geo, const HeatGenConfig& config, const std::vector<Date>& days,
                               std::size_t focal_unit, std::size_t onset, Rng& rng) {
  const auto N = static_cast<Eigen::Index>(geo.size());
  const auto D = static_cast<int>(days.size());
  double lat_c = 0.0;
  for (const auto& c : geo.index.centroids()) lat_c += c.lat;
  lat_c /= static_cast<double>(N);
  const double spacing = geo::knn_median_distance(geo.index, 1);
  const double radius = config.bump_radius * spacing;

  const Eigen::VectorXd regional = ar1(rng, D, config.regional_phi, config.regional_sd);
  Eigen::MatrixXd heat(N, D);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Eigen::VectorXd local = ar1(rng, D, config.local_phi, config.local_sd);
    const double lat_term = config.lat_gradient * (geo.index.centroids()[static_cast<std::size_t>(i)].lat - lat_c);
    const double dist = geo.index.distance(focal_unit, static_cast<std::size_t>(i));
    const double bump = config.bump * std::exp(-0.5 * dist * dist / (radius * radius));
    for (int t = 0; t < D; ++t) {
      const double season =
          config.seasonal_amp * std::sin(2.0 * std::numbers::pi * (day_of_year(days[t]) - 109) / 365.0);
      heat(i, t) = config.base + season + lat_term + regional[t] + local[t];
      if (t >= static_cast<int>(onset) && t < static_cast<int>(onset) + config.bump_days) heat(i, t) += bump;
    }
  }
  return heat;
}

double observe(double y00, double effect, EffectMode mode) {
  if (mode == EffectMode::multiplicative) return y00 * effect;
  if (!(effect > 0.0)) throw Error(ErrorCode::InvalidArgument, "additive-log effect mode needs positive effects");
  return y00 + std::log(effect);
}

SimulatedPanel run_replication(const DgpConfig& config, const Geography& geo, const HeatInput& heat_input, int jj) {
  config.validate();
  const auto N = geo.size();
  const int pre = config.pre_len, T = config.T();
  const std::uint64_t seed = config.seed_base + static_cast<std::uint64_t>(jj);

  Rng pick(derive_seed(seed, 0));
  const int year = static_cast<int>(pick.uniform_int(config.year_min, config.year_max));
  const auto focal = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(N) - 1));

  const auto& season = config.heatwave.season;
  const Date season_start = make_date(year, season.start_month, season.start_day);
  const Date season_end = make_date(year, season.end_month, season.end_day);
  const Date onset = make_date(year, 6, 1);
  std::vector<Date> season_days;
  for (Date d = season_start; d <= season_end; d += std::chrono::days{1}) season_days.push_back(d);
  const auto t0s = static_cast<std::size_t>((onset - season_start).count());
  if (t0s < static_cast<std::size_t>(pre) || t0s + config.post_len > season_days.size()) {
    throw Error(ErrorCode::WindowOutOfRange, "replication window must lie inside the warm season");
  }

  Eigen::MatrixXd season_heat;
  if (heat_input.observed) {
    const Panel& hp = *heat_input.observed;
    if (!hp.heat()) throw Error(ErrorCode::InvalidArgument, "heat panel has no heat column");
    if (hp.units() != geo.index.units()) throw Error(ErrorCode::Misalignment, "heat panel units vs geography");
    const auto a = hp.time_index(season_start);
    const auto b = hp.time_index(season_end);
    season_heat = hp.heat()->middleCols(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b - a + 1));
  } else {
    Rng heat_rng(derive_seed(seed, 2));
    season_heat = synthetic_heat(geo, config.heat, season_days, focal, t0s, heat_rng);
  }

  const Panel heat_panel(geo.index.units(), season_days,
                         Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), season_heat.cols()), season_heat);
  const auto detection = exposure::detect_heatwaves(heat_panel, config.heatwave);
  std::vector<std::uint8_t> is_treated(N, 0);
  is_treated[focal] = 1;
  for (const auto& e : detection.episodes) {
    if (e.start <= t0s && t0s < e.start + e.length) is_treated[e.unit] = 1;
  }

  SimulatedPanel sim{.panel = Panel(geo.index.units(), {onset}, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), 1))};
  sim.jj = jj;
  sim.seed = seed;
  sim.year = year;
  sim.focal_unit = focal;
  sim.t0 = static_cast<std::size_t>(pre);
  sim.mask = exposure::TreatmentMask::Zero(static_cast<Eigen::Index>(N), T);
  for (std::size_t i = 0; i < N; ++i) {
    if (!is_treated[i]) continue;
    sim.treated.push_back(i);
    sim.mask.row(static_cast<Eigen::Index>(i)).tail(config.post_len).setConstant(1);
  }

  const Eigen::MatrixXd heat = season_heat.middleCols(static_cast<Eigen::Index>(t0s) - pre, T);
  std::vector<Date> days(season_days.begin() + static_cast<std::ptrdiff_t>(t0s) - pre,
                         season_days.begin() + static_cast<std::ptrdiff_t>(t0s) + config.post_len);

  const auto baseline = gen_baseline(config, geo.W, derive_seed(seed, 1));
  Rng target_rng(derive_seed(seed, 3));
  const auto targets = synthetic_targets(geo, config.target, T, target_rng);
  auto cal = calibrate_levels(baseline.y00, targets, pre);
  sim.y00 = std::move(cal.shifted);
  sim.shifts = std::move(cal.shifts);

  if (config.constant_effect) {
    sim.tau = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(N), T);
    for (Eigen::Index i = 0; i < sim.tau.rows(); ++i)
      for (Eigen::Index t = 0; t < T; ++t)
        if (sim.mask(i, t)) sim.tau(i, t) = *config.constant_effect;
  } else {
    sim.tau = gen_treatment_effects(heat, sim.mask, config);
  }
  sim.psi = config.scenario.spillover ? gen_spillovers(sim.tau, geo.separation, config.chi, sim.mask)
                                      : Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(N), T);

  Eigen::MatrixXd observed = sim.y00;
  sim.cells.setZero(static_cast<Eigen::Index>(N), T);
  for (Eigen::Index i = 0; i < observed.rows(); ++i) {
    for (Eigen::Index t = 0; t < T; ++t) {
      if (sim.mask(i, t)) {
        sim.cells(i, t) = static_cast<std::uint8_t>(CellClass::treated);
        observed(i, t) = observe(sim.y00(i, t), sim.tau(i, t), config.effect_mode);
      } else if (sim.psi(i, t) != 1.0) {
        sim.cells(i, t) = static_cast<std::uint8_t>(CellClass::spillover);
        observed(i, t) = observe(sim.y00(i, t), sim.psi(i, t), config.effect_mode);
      }
    }
  }
  sim.panel = Panel(geo.index.units(), std::move(days), std::move(observed), heat, std::nullopt,
                    Scale::simulated_log_rate);
  return sim;
}

std::string ground_truth_csv(const SimulatedPanel& sim) {
  std::ostringstream out;
  out << "unit_id,date,y00,tau,psi,cell,observed\n";
  const auto& units = sim.panel.units();
  const auto& days = sim.panel.days();
  static const char* names[] = {"clean", "treated", "spillover"};
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (std::size_t t = 0; t < days.size(); ++t) {
      const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(t);
      out << units[i] << ',' << format_date(days[t]) << ',' << csv::format_double(sim.y00(I, J)) << ','
          << csv::format_double(sim.tau(I, J)) << ',' << csv::format_double(sim.psi(I, J)) << ','
          << names[sim.cells(I, J)] << ',' << csv::format_double(sim.panel.outcome()(I, J)) << '\n';
    }
  }
  return out.str();
}

}  // namespace hwsc::simgen
