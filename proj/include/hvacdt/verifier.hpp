#pragma once

// Safety verification of tree policies.
//
//   #1  starting in comfort, the next predicted state stays in comfort with
//       probability > l (Monte Carlo over the augmented input distribution);
//   #2  zone too warm  -> cooling setpoint below the zone temperature;
//   #3  zone too cold  -> heating setpoint above the zone temperature.
//
// #2 and #3 are checked exactly on the leaf boxes and repaired by editing
// leaves; #1 is estimated one step ahead, which counts the same failing
// states as an H-step rollout that charges each exit to the last safe state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvacdt/decision_tree.hpp"
#include "hvacdt/dynamics_model.hpp"
#include "hvacdt/policy_extraction.hpp"
#include "hvacdt/rng.hpp"
#include "hvacdt/types.hpp"

namespace hvacdt {

struct VerifyConfig {
  ComfortRange comfort = ComfortRange::winter();
  double safe_threshold = 0.9;  // l
  int sample_count = 10000;
  int horizon = 20;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  bool strict = false;

  void validate() const {
    comfort.validate();
    if (!(safe_threshold > 0.0 && safe_threshold < 1.0)) throw PreconditionError("safe_threshold must lie in (0, 1)");
    if (sample_count < 1) throw PreconditionError("sample_count must be >= 1");
    if (horizon < 1) throw PreconditionError("horizon must be >= 1");
    noise.validate();
  }
};

// Criteria #2 / #3 ---------------------------------------------------------

struct PathVerification {
  std::vector<int> violations_crit2;
  std::vector<int> violations_crit3;
  /// Leaves whose temperature interval crosses a comfort bound and whose
  /// action points the wrong way on the out-of-comfort part. Strict mode only.
  std::vector<int> straddling_review;

  bool clean() const noexcept { return violations_crit2.empty() && violations_crit3.empty(); }
};

inline bool entirely_above(const Interval& t, double upper) noexcept {
  return t.lo > upper || (t.lo == upper && t.lo_open);
}
inline bool entirely_below(const Interval& t, double lower) noexcept {
  return t.hi < lower || (t.hi == lower && t.hi_open);
}

/// cool_sp < s for every s in the interval.
inline bool cools_below(const Interval& t, int cool_sp) noexcept {
  return t.lo_open ? cool_sp <= t.lo : cool_sp < t.lo;
}
/// heat_sp > s for every s in the interval.
inline bool heats_above(const Interval& t, int heat_sp) noexcept {
  return t.hi_open ? heat_sp >= t.hi : heat_sp > t.hi;
}

inline PathVerification verify_paths(const TreePolicy& tree, const ComfortRange& comfort, bool strict = false) {
  comfort.validate();
  PathVerification out;
  for (const auto& leaf : enumerate_leaf_boxes(tree)) {
    if (leaf.box.empty()) continue;
    const Interval& t = leaf.box.dims[kZoneTemp];
    const SetpointAction a = tree.node(leaf.leaf_id).action;
    if (entirely_above(t, comfort.upper)) {
      if (!cools_below(t, a.cool_sp())) out.violations_crit2.push_back(leaf.leaf_id);
    } else if (entirely_below(t, comfort.lower)) {
      if (!heats_above(t, a.heat_sp())) out.violations_crit3.push_back(leaf.leaf_id);
    } else if (strict) {
      const bool hot_part = t.hi > comfort.upper && a.cool_sp() > comfort.upper;
      const bool cold_part = t.lo < comfort.lower && a.heat_sp() < comfort.lower;
      if (hot_part || cold_part) out.straddling_review.push_back(leaf.leaf_id);
    }
  }
  return out;
}

/// Setpoints nearest the comfort median: both at round-half-even(median),
/// clamped to their ranges.
inline SetpointAction corrected_action(const ComfortRange& comfort) {
  const int m = round_half_even(comfort.median());
  int heat = std::clamp(m, kHeatMin, kHeatMax);
  const int cool = std::max(std::clamp(m, kCoolMin, kCoolMax), heat);
  return {heat, cool};
}

/// New tree with every listed leaf set to corrected_action(comfort). Throws
/// when a listed node is not a leaf, or when the corrected setpoints cannot
/// satisfy the failed criterion (comfort range outside the setpoint ranges).
inline TreePolicy correct_tree(const TreePolicy& tree, const PathVerification& violations, const ComfortRange& comfort) {
  comfort.validate();
  std::vector<std::pair<int, SetpointAction>> edits;
  const SetpointAction fix = corrected_action(comfort);
  for (int id : violations.violations_crit2) edits.emplace_back(id, fix);
  for (int id : violations.violations_crit3) edits.emplace_back(id, fix);
  if (edits.empty()) return tree;
  TreePolicy out = tree.with_leaf_actions(edits);
  const auto recheck = verify_paths(out, comfort);
  for (const auto& [id, a] : edits) {
    const bool still = std::count(recheck.violations_crit2.begin(), recheck.violations_crit2.end(), id) ||
                       std::count(recheck.violations_crit3.begin(), recheck.violations_crit3.end(), id);
    if (still) throw Error("comfort range cannot be enforced with valid setpoints at leaf " + std::to_string(id));
  }
  return out;
}

// Criterion #1 -------------------------------------------------------------

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

/// 95% Wilson score interval for `successes` out of `trials`.
inline WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
  if (trials == 0) throw PreconditionError("wilson_interval: zero trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  if (successes == trials) return {std::max(0.0, center - half), 1.0};
  if (successes == 0) return {0.0, std::min(1.0, center + half)};
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct ProbabilisticResult {
  double safe_probability = 0.0;
  WilsonInterval ci;
  bool pass = false;
  std::size_t draws = 0;
  std::size_t start_safe = 0;
  std::size_t stayed_safe = 0;
};

/// Draws sample_count inputs from the augmented history (stream i per
/// draw), keeps those starting in comfort and checks whether the model's
/// next temperature under the tree's action stays in comfort.
template <TransitionModel M>
ProbabilisticResult verify_probabilistic(const TreePolicy& tree, const M& model, const Augmenter& history,
                                         const VerifyConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.sample_count);
  std::vector<ModelInput> inputs;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_stream(cfg.seed, i);
    const FeatureVector x = history.sample(rng, cfg.noise.noise_level);
    if (cfg.comfort.contains(x[kZoneTemp])) inputs.push_back(make_model_input(x, tree.infer(x)));
  }
  if (inputs.empty()) throw Error("verify_probabilistic: no start-safe samples after " + std::to_string(n) + " draws");
  std::vector<double> next(inputs.size());
  predict_batch(model, std::span<const ModelInput>(inputs), std::span<double>(next));

  ProbabilisticResult out;
  out.draws = n;
  out.start_safe = inputs.size();
  out.stayed_safe = static_cast<std::size_t>(
      std::count_if(next.begin(), next.end(), [&](double t) { return cfg.comfort.contains(t); }));
  out.safe_probability = static_cast<double>(out.stayed_safe) / static_cast<double>(out.start_safe);
  out.ci = wilson_interval(out.stayed_safe, out.start_safe);
  out.pass = out.safe_probability > cfg.safe_threshold;
  return out;
}

// One-step / H-step equivalence on finite systems --------------------------

/// Finite deterministic stand-in for the closed loop: a temperature grid
/// crossed with a fixed set of disturbance vectors. The successor of a state
/// keeps its disturbance and snaps the predicted temperature to the grid.
struct DiscretizedSystem {
  std::vector<double> temps;  // ascending
  std::vector<DisturbanceVector> disturbances;
  ComfortRange comfort = ComfortRange::winter();

  static constexpr std::size_t kMaxStates = 10000;

  std::size_t size() const noexcept { return temps.size() * disturbances.size(); }

  void validate() const {
    if (temps.empty() || disturbances.empty()) throw PreconditionError("DiscretizedSystem: empty grid");
    if (size() > kMaxStates) throw PreconditionError("DiscretizedSystem: more than 10^4 states");
    if (!std::is_sorted(temps.begin(), temps.end())) throw PreconditionError("DiscretizedSystem: temps must ascend");
  }

  FeatureVector state(std::size_t i) const {
    return make_features(temps[i % temps.size()], disturbances[i / temps.size()]);
  }
  bool safe(std::size_t i) const { return comfort.contains(temps[i % temps.size()]); }

  /// Grid index nearest to t (lower index on exact midpoints).
  std::size_t snap_temp(double t) const {
    const auto it = std::lower_bound(temps.begin(), temps.end(), t);
    if (it == temps.begin()) return 0;
    if (it == temps.end()) return temps.size() - 1;
    const auto hi = static_cast<std::size_t>(it - temps.begin());
    return (t - temps[hi - 1] <= temps[hi] - t) ? hi - 1 : hi;
  }

  std::vector<FeatureVector> all_states() const {
    std::vector<FeatureVector> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(state(i));
    return out;
  }
};

/// A model whose predictions are snapped to a system's temperature grid, so
/// that sampling-based checks see exactly the finite system's transitions.
template <TransitionModel M>
struct GridSnappedModel {
  const M* inner;
  const DiscretizedSystem* system;
  double predict(const ModelInput& x) const {
    return system->temps[system->snap_temp(static_cast<double>(inner->predict(x)))];
  }
};

template <TransitionModel M>
std::vector<std::size_t> successor_table(const TreePolicy& tree, const M& model, const DiscretizedSystem& sys) {
  sys.validate();
  std::vector<std::size_t> next(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) {
    const FeatureVector x = sys.state(i);
    const double t = model.predict(make_model_input(x, tree.infer(x)));
    next[i] = (i / sys.temps.size()) * sys.temps.size() + sys.snap_temp(t);
  }
  return next;
}

struct EquivalenceResult {
  std::size_t safe_states = 0;          // |S|
  std::size_t one_step_failures = 0;    // safe x with unsafe successor
  std::size_t bootstrap_failures = 0;   // H-step rollouts, exit charged to the last safe state
  std::size_t start_state_failures = 0; // H-step rollouts, exit charged to the start state
  bool equal = false;

  double one_step_fraction() const { return safe_states ? double(one_step_failures) / double(safe_states) : 0.0; }
  double bootstrap_fraction() const { return safe_states ? double(bootstrap_failures) / double(safe_states) : 0.0; }
};

/// Compares the one-step failure set with the H-step bootstrap over every
/// safe start state of a deterministic transition table.
inline EquivalenceResult compare_failure_counts(std::span<const std::size_t> next, std::span<const char> safe, int horizon) {
  if (next.size() != safe.size()) throw PreconditionError("compare_failure_counts: size mismatch");
  if (horizon < 1) throw PreconditionError("compare_failure_counts: horizon must be >= 1");
  EquivalenceResult r;
  std::vector<char> one_step(next.size(), 0), charged(next.size(), 0);
  for (std::size_t x = 0; x < next.size(); ++x) {
    if (!safe[x]) continue;
    ++r.safe_states;
    if (!safe[next[x]]) one_step[x] = 1, ++r.one_step_failures;

    std::size_t prev = x, cur = x;
    for (int t = 0; t < horizon; ++t) {
      prev = cur;
      cur = next[cur];
      if (!safe[cur]) {
        charged[prev] = 1;
        ++r.start_state_failures;
        break;
      }
    }
  }
  r.bootstrap_failures = static_cast<std::size_t>(std::count(charged.begin(), charged.end(), 1));
  r.equal = r.bootstrap_failures == r.one_step_failures && one_step == charged;
  return r;
}

template <TransitionModel M>
EquivalenceResult equivalence_details(const TreePolicy& tree, const M& model, const DiscretizedSystem& sys, int horizon) {
  const auto next = successor_table(tree, model, sys);
  std::vector<char> safe(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) safe[i] = sys.safe(i) ? 1 : 0;
  return compare_failure_counts(next, safe, horizon);
}

template <TransitionModel M>
bool equivalence_check(const TreePolicy& tree, const M& model, const DiscretizedSystem& sys, int horizon) {
  return equivalence_details(tree, model, sys, horizon).equal;
}

// Report -------------------------------------------------------------------

struct VerificationReport {
  std::size_t total_nodes = 0;
  std::size_t leaf_nodes = 0;
  bool structure_consistent = false;  // total_nodes == 2 * leaf_nodes - 1
  double safe_probability = 0.0;
  WilsonInterval ci;
  double safe_threshold = 0.9;
  bool pass_criterion_1 = false;
  std::vector<int> violations_crit2;
  std::vector<int> violations_crit3;
  std::vector<int> straddling_review;
  std::size_t corrected_crit2 = 0;
  std::size_t corrected_crit3 = 0;
  std::size_t corrected_count = 0;
};

/// `corrected` states whether the listed violations were repaired by correct_tree.
inline VerificationReport make_report(const TreePolicy& tree, const PathVerification& paths,
                                      const ProbabilisticResult& prob, double safe_threshold, bool corrected) {
  VerificationReport r;
  r.total_nodes = tree.size();
  r.leaf_nodes = tree.leaf_count();
  r.structure_consistent = r.total_nodes == 2 * r.leaf_nodes - 1;
  r.safe_probability = prob.safe_probability;
  r.ci = prob.ci;
  r.safe_threshold = safe_threshold;
  r.pass_criterion_1 = prob.safe_probability > safe_threshold;
  r.violations_crit2 = paths.violations_crit2;
  r.violations_crit3 = paths.violations_crit3;
  r.straddling_review = paths.straddling_review;
  if (corrected) {
    r.corrected_crit2 = paths.violations_crit2.size();
    r.corrected_crit3 = paths.violations_crit3.size();
    r.corrected_count = r.corrected_crit2 + r.corrected_crit3;
  }
  return r;
}

inline nlohmann::json to_json(const VerificationReport& r) {
  return {{"total_nodes", r.total_nodes},
          {"leaf_nodes", r.leaf_nodes},
          {"structure_consistent", r.structure_consistent},
          {"safe_probability", r.safe_probability},
          {"safe_probability_ci95", {r.ci.low, r.ci.high}},
          {"safe_threshold", r.safe_threshold},
          {"pass_criterion_1", r.pass_criterion_1},
          {"violations_crit2", r.violations_crit2},
          {"violations_crit3", r.violations_crit3},
          {"straddling_review", r.straddling_review},
          {"corrected_crit2", r.corrected_crit2},
          {"corrected_crit3", r.corrected_crit3},
          {"corrected_count", r.corrected_count}};
}

}  // namespace hvacdt
