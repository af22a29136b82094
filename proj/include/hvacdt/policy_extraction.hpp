#pragma once

// Decision dataset generation (noise-augmented resampling of logged inputs,
// labelled with the modal random-shooting action), distribution diagnostics
// and CART fitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hvacdt/csv.hpp"
#include "hvacdt/decision_tree.hpp"
#include "hvacdt/mbrl_controller.hpp"
#include "hvacdt/parallel.hpp"
#include "hvacdt/rng.hpp"
#include "hvacdt/types.hpp"

namespace hvacdt {

struct NoiseConfig {
  double noise_level = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
      throw PreconditionError("noise_level must be finite and >= 0");
    }
  }
};

struct DecisionRecord {
  FeatureVector x{};
  SetpointAction a_star;
};

// Augmentation -------------------------------------------------------------

/// Resamples logged inputs with per-feature Gaussian noise of standard
/// deviation noise_level * (population std of that feature).
class Augmenter {
 public:
  explicit Augmenter(std::vector<FeatureVector> history) : history_(std::move(history)) {
    if (history_.empty()) throw PreconditionError("augment: empty history");
    const auto n = static_cast<double>(history_.size());
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      double mean = 0.0;
      for (const auto& x : history_) mean += x[f];
      mean /= n;
      double ss = 0.0;
      for (const auto& x : history_) ss += (x[f] - mean) * (x[f] - mean);
      sigma_[f] = std::sqrt(ss / n);
    }
  }

  const std::vector<FeatureVector>& history() const noexcept { return history_; }
  const std::array<double, kFeatureCount>& sigma() const noexcept { return sigma_; }

  FeatureVector sample(Rng& rng, double noise_level) const {
    std::uniform_int_distribution<std::size_t> pick(0, history_.size() - 1);
    FeatureVector x = history_[pick(rng)];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const double sd = noise_level * sigma_[f];
      if (sd > 0.0) x[f] += std::normal_distribution<double>(0.0, sd)(rng);
    }
    x[kOccupantCount] = std::max(0.0, std::round(x[kOccupantCount]));
    x[kOutdoorRh] = std::clamp(x[kOutdoorRh], 0.0, 100.0);
    x[kWindSpeed] = std::max(0.0, x[kWindSpeed]);
    x[kSolarRad] = std::max(0.0, x[kSolarRad]);
    return x;
  }

 private:
  std::vector<FeatureVector> history_;
  std::array<double, kFeatureCount> sigma_{};
};

inline FeatureVector augment_sample(const Augmenter& history, const NoiseConfig& cfg, Rng& rng) {
  cfg.validate();
  return history.sample(rng, cfg.noise_level);
}

// Decision dataset ---------------------------------------------------------

struct DatasetStats {
  std::size_t model_calls = 0;  // n * repeats * sample_number * horizon
};

/// n records; record i draws its input from stream (noise seed, i), holds the
/// sampled disturbance constant over the horizon and is labelled by the
/// modal action of `repeats` random-shooting runs seeded from (mpc seed, i).
/// Record i is independent of n, so a shorter dataset is a prefix of a longer one.
template <TransitionModel M>
std::vector<DecisionRecord> build_decision_dataset(const M& model, const Augmenter& history, std::size_t n,
                                                   const NoiseConfig& noise_cfg, const MPCConfig& mpc_cfg,
                                                   const RewardConfig& reward_cfg, DatasetStats* stats = nullptr,
                                                   std::size_t first_index = 0) {
  if (n == 0) throw PreconditionError("build_decision_dataset: n must be >= 1");
  noise_cfg.validate();
  mpc_cfg.validate();
  reward_cfg.validate();
  std::vector<DecisionRecord> out(n);
  parallel_for(n, [&](std::size_t k) {
    const std::size_t i = first_index + k;
    Rng rng = make_stream(noise_cfg.seed, i);
    const FeatureVector x = history.sample(rng, noise_cfg.noise_level);
    const std::vector<DisturbanceVector> forecast(static_cast<std::size_t>(mpc_cfg.horizon), disturbance_of(x));
    const auto mode = mode_action(model, ZoneState{x[kZoneTemp]}, std::span<const DisturbanceVector>(forecast),
                                  mpc_cfg, reward_cfg, mpc_cfg.repeats, derive_seed(mpc_cfg.seed, i));
    out[k] = {x, mode.action};
  });
  if (stats) {
    stats->model_calls = n * static_cast<std::size_t>(mpc_cfg.repeats) *
                         static_cast<std::size_t>(mpc_cfg.sample_number) * static_cast<std::size_t>(mpc_cfg.horizon);
  }
  return out;
}

inline constexpr const char* kDecisionCsvHeader =
    "zone_temp,outdoor_temp,outdoor_rh,wind_speed,solar_rad,occupant_count,heat_sp,cool_sp";

inline void save_decisions_csv(const std::string& path, std::span<const DecisionRecord> records) {
  auto out = csv::open_out(path);
  out << kDecisionCsvHeader << '\n';
  for (const auto& r : records) {
    for (double v : r.x) out << csv::num(v) << ',';
    out << r.a_star.heat_sp() << ',' << r.a_star.cool_sp() << '\n';
  }
}

inline std::vector<DecisionRecord> load_decisions_csv(const std::string& path) {
  auto in = csv::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const csv::Header header(csv::split(line));
  std::array<std::size_t, kFeatureCount> cols{};
  for (std::size_t f = 0; f < kFeatureCount; ++f) cols[f] = header.index(kFeatureNames[f]);
  const auto c_heat = header.index("heat_sp"), c_cool = header.index("cool_sp");
  std::vector<DecisionRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw ParseError("row " + std::to_string(row) + ": wrong field count");
    DecisionRecord r;
    for (std::size_t k = 0; k < kFeatureCount; ++k) r.x[k] = csv::to_double(f[cols[k]], row, kFeatureNames[k]);
    const auto h = static_cast<int>(csv::to_double(f[c_heat], row, "heat_sp"));
    const auto c = static_cast<int>(csv::to_double(f[c_cool], row, "cool_sp"));
    if (!SetpointAction::valid(h, c)) throw ParseError("row " + std::to_string(row) + ": invalid setpoints");
    r.a_star = {h, c};
    out.push_back(r);
  }
  return out;
}

// Diagnostics --------------------------------------------------------------

inline double shannon_entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

/// sqrt of the base-2 Jensen-Shannon divergence; lies in [0, 1].
inline double jensen_shannon_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw PreconditionError("jensen_shannon_distance: size mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::sqrt(std::clamp(js, 0.0, 1.0));
}

struct DistributionDiagnostics {
  std::vector<double> entropy_bits;  // of P, per feature
  std::vector<double> jsd;           // P vs Q, per feature
  double mean_entropy = 0.0;
  double mean_jsd = 0.0;
};

/// Per-feature histograms over the joint range of P and Q with `bins` equal bins.
template <std::size_t N>
DistributionDiagnostics distribution_diagnostics(std::span<const std::array<double, N>> p_samples,
                                                 std::span<const std::array<double, N>> q_samples,
                                                 int bins = 20) {
  if (p_samples.empty() || q_samples.empty()) throw PreconditionError("distribution_diagnostics: empty input");
  if (bins < 1) throw PreconditionError("distribution_diagnostics: bins must be >= 1");
  DistributionDiagnostics out;
  const auto nb = static_cast<std::size_t>(bins);
  for (std::size_t f = 0; f < N; ++f) {
    double lo = p_samples[0][f], hi = lo;
    for (const auto& s : p_samples) lo = std::min(lo, s[f]), hi = std::max(hi, s[f]);
    for (const auto& s : q_samples) lo = std::min(lo, s[f]), hi = std::max(hi, s[f]);
    const double width = hi - lo;
    auto histogram = [&](std::span<const std::array<double, N>> samples) {
      std::vector<double> h(nb, 0.0);
      for (const auto& s : samples) {
        std::size_t b = 0;
        if (width > 0.0) {
          b = static_cast<std::size_t>(std::floor((s[f] - lo) / width * static_cast<double>(nb)));
          b = std::min(b, nb - 1);
        }
        h[b] += 1.0;
      }
      for (double& v : h) v /= static_cast<double>(samples.size());
      return h;
    };
    const auto hp = histogram(p_samples);
    const auto hq = histogram(q_samples);
    out.entropy_bits.push_back(shannon_entropy_bits(hp));
    out.jsd.push_back(jensen_shannon_distance(hp, hq));
  }
  out.mean_entropy = std::accumulate(out.entropy_bits.begin(), out.entropy_bits.end(), 0.0) / N;
  out.mean_jsd = std::accumulate(out.jsd.begin(), out.jsd.end(), 0.0) / N;
  return out;
}

// CART ---------------------------------------------------------------------

struct CartParams {
  int max_depth = -1;  // < 0: unbounded
  int min_samples_split = 2;

  void validate() const {
    if (min_samples_split < 2) throw PreconditionError("min_samples_split must be >= 2");
  }
};

namespace cart_detail {

/// Exact Gini bookkeeping. For a partition into children c with class counts
/// n_ck, weighted Gini = 1 - (1/n) * sum_c (sum_k n_ck^2) / n_c, so the best
/// split maximizes sum_c S_c / n_c with S_c = sum_k n_ck^2. Scores are kept
/// as integer fractions and compared by cross-multiplication.
__extension__ using Wide = __int128;

struct Score {
  Wide num = 0;
  Wide den = 1;

  static Score of_split(std::int64_t s_left, std::int64_t n_left, std::int64_t s_right, std::int64_t n_right) {
    return {static_cast<Wide>(s_left) * n_right + static_cast<Wide>(s_right) * n_left,
            static_cast<Wide>(n_left) * n_right};
  }
  static Score of_node(std::int64_t s, std::int64_t n) { return {s, n}; }
  bool operator>(const Score& o) const { return num * o.den > o.num * den; }
};

inline std::int64_t square_sum(std::span<const std::int64_t> counts) {
  std::int64_t s = 0;
  for (auto c : counts) s += c * c;
  return s;
}

}  // namespace cart_detail

/// Majority label; ties go to the lowest energy proxy, then lexicographic order.
inline SetpointAction majority_label(std::span<const std::int64_t> counts, std::span<const SetpointAction> classes) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < counts.size(); ++k) {
    if (counts[k] > counts[best] ||
        (counts[k] == counts[best] && energy_proxy(classes[k]) < energy_proxy(classes[best]))) {
      best = k;
    }
  }
  return classes[best];
}

/// Greedy CART with Gini impurity. Candidate thresholds are midpoints between
/// consecutive distinct feature values; ties go to the lowest feature index,
/// then the lowest threshold. A node becomes a leaf when pure, when it has
/// fewer than min_samples_split rows, at max_depth, or when no split strictly
/// lowers the weighted Gini. Nodes are stored in preorder.
inline TreePolicy fit_cart(std::span<const FeatureVector> x, std::span<const SetpointAction> y,
                           const CartParams& params = {}) {
  params.validate();
  if (x.empty() || x.size() != y.size()) throw PreconditionError("fit_cart: need >= 1 record and matching labels");

  std::vector<SetpointAction> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<std::size_t> label(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    label[i] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
  }
  const std::size_t k = classes.size();

  std::vector<TreeNode> nodes;
  std::vector<std::int64_t> counts(k), left(k), right(k);

  std::function<int(std::vector<std::size_t>&, int)> grow = [&](std::vector<std::size_t>& idx, int depth) -> int {
    std::fill(counts.begin(), counts.end(), 0);
    for (auto i : idx) ++counts[label[i]];
    const auto n = static_cast<std::int64_t>(idx.size());
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode::leaf(majority_label(counts, classes)));

    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    if (pure || n < params.min_samples_split || (params.max_depth >= 0 && depth >= params.max_depth)) return id;

    const auto parent = cart_detail::Score::of_node(cart_detail::square_sum(counts), n);
    std::optional<cart_detail::Score> best;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return x[a][f] < x[b][f]; });
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      std::int64_t s_left = 0, s_right = cart_detail::square_sum(counts);
      for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
        const auto c = label[sorted[j]];
        s_left += 2 * left[c] + 1;
        s_right -= 2 * right[c] - 1;
        ++left[c];
        --right[c];
        const double v = x[sorted[j]][f], w = x[sorted[j + 1]][f];
        if (!(v < w)) continue;
        const auto n_left = static_cast<std::int64_t>(j + 1);
        const auto score = cart_detail::Score::of_split(s_left, n_left, s_right, n - n_left);
        if (!(score > parent)) continue;
        if (!best || score > *best) {
          best = score;
          best_feature = static_cast<int>(f);
          double t = v + (w - v) / 2.0;
          if (t >= w) t = v;
          best_threshold = t;
        }
      }
    }
    if (!best) return id;

    std::vector<std::size_t> go_left, go_right;
    for (auto i : idx) {
      (x[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? go_left : go_right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(go_left, depth + 1);
    const int r = grow(go_right, depth + 1);
    nodes[static_cast<std::size_t>(id)] = TreeNode::split(best_feature, best_threshold, l, r);
    return id;
  };

  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  grow(all, 0);
  return TreePolicy(std::move(nodes), 0);
}

inline TreePolicy fit_cart(std::span<const DecisionRecord> records, const CartParams& params = {}) {
  std::vector<FeatureVector> x;
  std::vector<SetpointAction> y;
  x.reserve(records.size());
  y.reserve(records.size());
  for (const auto& r : records) {
    x.push_back(r.x);
    y.push_back(r.a_star);
  }
  return fit_cart(std::span<const FeatureVector>(x), std::span<const SetpointAction>(y), params);
}

}  // namespace hvacdt
