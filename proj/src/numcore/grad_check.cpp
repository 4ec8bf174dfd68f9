#include "cfftgan/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cfftgan/numcore/rng.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::num {

namespace {

double eval_scalar(const ScalarFn& f, std::span<const Tensor> inputs) {
  NoGradScope no_grad;
  const Tensor out = f(inputs);
  if (!out.defined() || out.numel() != 1) {
    throw ShapeError("grad_check: function must return a scalar, got " +
                     (out.defined() ? to_string(out.shape()) : std::string("<undefined>")));
  }
  return out.item();
}

std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= limit) return idx;
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const InputCheck& c = inputs[i];
    os << " | input " << i << ": n=" << c.checked << " max_rel=" << c.max_rel_error
       << " max_abs=" << c.max_abs_error;
    if (c.refined > 0) os << " refined=" << c.refined;
    if (!c.pass) {
      os << " worst@" << c.worst_index << " analytic=" << c.worst_analytic
         << " numeric=" << c.worst_numeric;
    }
  }
  return os.str();
}

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> inputs,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<bool> previous(inputs.size());
  std::vector<Tensor> analytic(inputs.size());
  {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      previous[i] = inputs[i].requires_grad();
      Tensor handle = inputs[i];
      handle.set_requires_grad(true);
    }
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f(inputs);
    }
    if (!loss.defined() || loss.numel() != 1) {
      throw ShapeError("grad_check: function must return a scalar, got " +
                       (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (tape.node_of(loss) >= 0) {
      const Gradients grads = tape.backward(loss);
      for (std::size_t i = 0; i < inputs.size(); ++i) analytic[i] = grads.of_or_zeros(inputs[i]);
    } else {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        analytic[i] = Tensor::zeros(inputs[i].shape(), inputs[i].dtype());
      }
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor handle = inputs[i];
      handle.set_requires_grad(previous[i]);
    }
  }

  // Tensors the differences are taken on.
  std::vector<Tensor> probe;
  std::unique_ptr<DTypeScope> wide;
  if (options.promote_numeric) {
    wide = std::make_unique<DTypeScope>(DType::f64);
    for (const Tensor& t : inputs) probe.push_back(t.to(DType::f64));
  } else {
    probe.assign(inputs.begin(), inputs.end());
  }

  Rng rng(options.seed, 0x6772616463686bULL);
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    Tensor& x = probe[i];
    InputCheck check;
    const auto coords = pick_coordinates(x.numel(), options.max_coords, rng);
    for (std::size_t c : coords) {
      const double orig = x.at(c);
      const auto central = [&](double step) {
        x.set(c, orig + step);
        const double hi_x = x.at(c);
        const double f_hi = eval_scalar(f, probe);
        x.set(c, orig - step);
        const double lo_x = x.at(c);
        const double f_lo = eval_scalar(f, probe);
        x.set(c, orig);
        // The realized step differs from 2 eps after rounding to 32-bit.
        return (f_hi - f_lo) / (hi_x - lo_x);
      };
      double step = options.eps;
      double numeric = central(step);
      for (int attempt = 0; attempt < options.kink_refinements; ++attempt) {
        const double half = central(step / 2);
        const bool smooth = std::abs(half - numeric) <= 0.25 * (options.atol + options.rtol * std::abs(half));
        numeric = half;
        if (smooth) break;
        if (attempt == 0) ++check.refined;
        step /= 10.0;
        if (attempt + 1 < options.kink_refinements) numeric = central(step);
      }
      const double a = analytic[i].at(c);
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      const bool ok = abs_err <= options.atol + options.rtol * std::abs(numeric) && std::isfinite(a) &&
                      std::isfinite(numeric);
      ++check.checked;
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      if (rel_err > check.max_rel_error || (!ok && check.pass)) {
        check.max_rel_error = std::max(check.max_rel_error, rel_err);
        if (!ok || check.pass) {
          check.worst_index = c;
          check.worst_analytic = a;
          check.worst_numeric = numeric;
        }
      }
      if (!ok) check.pass = false;
    }
    report.pass = report.pass && check.pass;
    report.inputs.push_back(check);
  }
  return report;
}

}  // namespace cfftgan::num
