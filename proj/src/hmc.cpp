#include "hwsc/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "hwsc/error.hpp"

namespace hwsc::hmc {

namespace {

// Dual averaging of log step size (Hoffman & Gelman 2014, Alg. 5 constants).
class StepSizeAdapter {
 public:
  StepSizeAdapter(double delta) : delta_(delta) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    h_bar_ = 0.0;
    log_bar_ = 0.0;
    count_ = 0;
  }

  double learn(double accept) {
    ++count_;
    const double m = static_cast<double>(count_);
    const double eta = 1.0 / (m + t0_);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (delta_ - accept);
    const double log_step = mu_ - std::sqrt(m) / gamma_ * h_bar_;
    const double w = std::pow(m, -kappa_);
    log_bar_ = w * log_step + (1.0 - w) * log_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_bar_); }

 private:
  double delta_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_bar_ = 0.0;
  long count_ = 0;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

// Stan-style warmup schedule: fast initial buffer, doubling slow windows for
// the metric, fast terminal buffer. Returns the iteration indices (exclusive
// end) at which a metric window closes, plus the first slow-window iteration.
struct MetricSchedule {
  int start = 0;
  std::vector<int> ends;
};

MetricSchedule metric_schedule(int warmup) {
  MetricSchedule sched;
  sched.start = warmup;
  if (warmup < 20) return sched;
  int init = 75, term = 50, base = 25;
  if (init + base + term > warmup) {
    init = static_cast<int>(0.15 * warmup);
    term = static_cast<int>(0.1 * warmup);
    base = warmup - init - term;
  }
  const int last = warmup - term;
  sched.start = init;
  int start = init;
  int size = base;
  while (start < last) {
    int end = start + size;
    if (end + 2 * size > last) end = last;
    sched.ends.push_back(end);
    start = end;
    size *= 2;
  }
  return sched;
}

void draw_momentum(Eigen::VectorXd& p, const Eigen::VectorXd& inv_metric, Rng& rng) {
  for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = rng.normal() / std::sqrt(inv_metric[k]);
}

double find_initial_step(const LogDensity& f, const PhasePoint& start, const Eigen::VectorXd& inv_metric, Rng& rng) {
  double step = 0.1;
  PhasePoint s = start;
  s.p.resize(start.q.size());
  draw_momentum(s.p, inv_metric, rng);
  const double h0 = hamiltonian(s, inv_metric);
  auto delta_h = [&](double eps) {
    PhasePoint t = s;
    leapfrog(f, t, eps, inv_metric, 1);
    const double h = hamiltonian(t, inv_metric);
    return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
  };
  const int direction = delta_h(step) > std::log(0.8) ? 1 : -1;
  for (int k = 0; k < 50; ++k) {
    const double next = direction > 0 ? 2.0 * step : 0.5 * step;
    const double dh = delta_h(next);
    if (direction > 0 ? !(dh > std::log(0.8)) : (dh > std::log(0.8))) {
      return direction > 0 ? step : next;
    }
    step = next;
  }
  return step;
}

}  // namespace

void Options::validate() const {
  if (iters < 1 || warmup < 0 || warmup >= iters) throw Error(ErrorCode::InvalidArgument, "need 0 <= warmup < iters");
  if (leapfrog_steps < 1) throw Error(ErrorCode::InvalidArgument, "leapfrog_steps must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw Error(ErrorCode::InvalidArgument, "target_accept in (0,1)");
  if (!(step_jitter >= 0.0 && step_jitter < 1.0)) throw Error(ErrorCode::InvalidArgument, "step_jitter in [0,1)");
}

double hamiltonian(const PhasePoint& s, const Eigen::VectorXd& inv_metric) {
  return -s.logp + 0.5 * s.p.cwiseProduct(s.p).dot(inv_metric);
}

void leapfrog(const LogDensity& f, PhasePoint& s, double step, const Eigen::VectorXd& inv_metric, int steps) {
  for (int l = 0; l < steps; ++l) {
    s.p += 0.5 * step * s.grad;
    s.q += step * inv_metric.cwiseProduct(s.p);
    s.logp = f(s.q, s.grad);
    if (!std::isfinite(s.logp)) return;
    s.p += 0.5 * step * s.grad;
  }
}

ChainResult run_chain(const LogDensity& f, Eigen::VectorXd init, const Options& opts, Rng& rng) {
  opts.validate();
  const auto dim = init.size();
  PhasePoint cur;
  cur.q = std::move(init);
  cur.logp = f(cur.q, cur.grad);
  if (!std::isfinite(cur.logp)) throw Error(ErrorCode::NonFiniteDensity, "log density at the initial point");
  cur.p = Eigen::VectorXd::Zero(dim);

  Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(dim);
  double step = find_initial_step(f, cur, inv_metric, rng);
  StepSizeAdapter adapter(opts.target_accept);
  adapter.restart(step);

  const auto schedule = metric_schedule(opts.warmup);
  const auto& window_ends = schedule.ends;
  std::size_t next_window = 0;
  // Welford accumulators for the current metric window.
  long w_count = 0;
  Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(dim), w_m2 = Eigen::VectorXd::Zero(dim);

  ChainResult out;
  const int kept = opts.iters - opts.warmup;
  out.draws.resize(kept, dim);
  out.logp.reserve(static_cast<std::size_t>(kept));
  double accept_sum = 0.0;

  for (int it = 0; it < opts.iters; ++it) {
    const bool warm = it < opts.warmup;
    PhasePoint prop = cur;
    draw_momentum(prop.p, inv_metric, rng);
    const double h0 = hamiltonian(prop, inv_metric);
    const double eps = opts.step_jitter > 0.0 ? step * rng.uniform(1.0 - opts.step_jitter, 1.0 + opts.step_jitter) : step;
    leapfrog(f, prop, eps, inv_metric, opts.leapfrog_steps);
    const double h1 = hamiltonian(prop, inv_metric);
    double accept = 0.0;
    const bool divergent = !std::isfinite(h1) || h1 - h0 > opts.max_energy_error;
    if (divergent) {
      (warm ? out.warmup_divergences : out.divergences) += 1;
    } else {
      accept = std::min(1.0, std::exp(h0 - h1));
      if (rng.uniform() < accept) cur = std::move(prop);
    }

    if (warm) {
      step = adapter.learn(accept);
      if (it >= schedule.start && next_window < window_ends.size()) {
        ++w_count;
        const Eigen::VectorXd delta = cur.q - w_mean;
        w_mean += delta / static_cast<double>(w_count);
        w_m2 += delta.cwiseProduct(cur.q - w_mean);
        if (it + 1 == window_ends[next_window]) {
          const double n = static_cast<double>(w_count);
          if (w_count > 2) {
            const Eigen::VectorXd var = w_m2 / (n - 1.0);
            inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
          }
          w_count = 0;
          w_mean.setZero();
          w_m2.setZero();
          ++next_window;
          step = find_initial_step(f, cur, inv_metric, rng);
          adapter.restart(step);
        }
      }
      if (it + 1 == opts.warmup) step = adapter.final_step();
    } else {
      const auto row = it - opts.warmup;
      out.draws.row(row) = cur.q.transpose();
      out.logp.push_back(cur.logp);
      accept_sum += accept;
    }
  }
  if (opts.warmup == 0) step = step > 0 ? step : 0.1;
  out.step_size = step;
  out.inv_metric = inv_metric;
  out.mean_accept = kept > 0 ? accept_sum / kept : 0.0;
  return out;
}

std::vector<ChainResult> run_chains(const LogDensity& f, int dim, int chains, const Options& opts,
                                    std::uint64_t seed) {
  opts.validate();
  if (chains < 1) throw Error(ErrorCode::InvalidArgument, "chains must be >= 1");
  std::vector<ChainResult> results(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));

  auto run_one = [&](int c) {
    try {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
      Eigen::VectorXd init(dim);
      Eigen::VectorXd grad;
      for (int attempt = 0;; ++attempt) {
        for (int k = 0; k < dim; ++k) init[k] = rng.uniform(-opts.init_radius, opts.init_radius);
        if (std::isfinite(f(init, grad)) || attempt >= 100) break;
      }
      results[static_cast<std::size_t>(c)] = run_chain(f, init, opts, rng);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  const int workers = std::clamp(opts.workers, 1, chains);
  if (workers == 1) {
    for (int c = 0; c < chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int c = w; c < chains; c += workers) run_one(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace hwsc::hmc
