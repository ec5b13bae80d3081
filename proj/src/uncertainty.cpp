#include "centaur/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "centaur/error.hpp"

namespace centaur::uncertainty {

namespace {

double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::array<double, geometry::kAnchorCount> cluster_masses(
    const ScoreTable& table, const std::vector<AnchorLabel>& labels) {
  std::array<double, geometry::kAnchorCount> masses{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    masses[static_cast<std::size_t>(labels[i])] += scorer::aggregate(table.rows[i]);
  }
  return masses;
}

UncertaintyReport clustered_report(Measure measure, const ScoreTable& table,
                                   const std::vector<AnchorLabel>& labels) {
  const auto masses = cluster_masses(table, labels);
  double total = 0.0;
  for (double m : masses) total += m;
  require(total > 0.0, "all-zero-scores", "all aggregated candidate scores are zero");

  UncertaintyReport report;
  report.measure = measure;
  ClusterDistribution dist;
  for (int a = 0; a < geometry::kAnchorCount; ++a) {
    dist.probs[static_cast<std::size_t>(a)] = masses[static_cast<std::size_t>(a)] / total;
  }
  report.value = entropy_of(dist.probs);
  report.cluster_distribution = dist;
  report.diagnostics.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    report.diagnostics[i].traj_id = table.ids[i];
    report.diagnostics[i].aggregated_score = scorer::aggregate(table.rows[i]);
    report.diagnostics[i].label = labels[i];
  }
  return report;
}

// One-step fixed-center clustering in an arbitrary feature space: candidates
// within tau of their nearest center take that center's label, the rest keep
// their fallback (trajectory-space) label.
std::vector<AnchorLabel> one_step_clusters(const std::vector<std::vector<double>>& feats,
                                           const AnchorSet& anchors,
                                           const std::vector<AnchorLabel>& fallback,
                                           double tau) {
  std::vector<AnchorLabel> labels(feats.size());
  std::array<const std::vector<double>*, geometry::kAnchorCount> centers{};
  for (int a = 0; a < geometry::kAnchorCount; ++a) {
    centers[static_cast<std::size_t>(a)] =
        &feats[static_cast<std::size_t>(anchors.index[static_cast<std::size_t>(a)])];
  }
  for (std::size_t i = 0; i < feats.size(); ++i) {
    AnchorLabel best = AnchorLabel::kSharpLeft;
    double best_d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < geometry::kAnchorCount; ++a) {
      const std::vector<double>& c = *centers[static_cast<std::size_t>(a)];
      double sq = 0.0;
      for (std::size_t d = 0; d < c.size(); ++d) {
        const double diff = feats[i][d] - c[d];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<AnchorLabel>(a);
      }
    }
    labels[i] = (best_d <= tau) ? best : fallback[i];
  }
  return labels;
}

}  // namespace

const char* measure_name(Measure m) {
  switch (m) {
    case Measure::kClusterEntropy: return "cluster_entropy";
    case Measure::kFullEntropy: return "full_entropy";
    case Measure::kSemanticEntropy: return "semantic_entropy";
    case Measure::kKlDivergence: return "kl_divergence";
    case Measure::kEvidential: return "evidential";
  }
  return "?";
}

Measure measure_from_name(const std::string& name) {
  for (int i = 0; i < 5; ++i) {
    if (name == measure_name(static_cast<Measure>(i))) return static_cast<Measure>(i);
  }
  raise("invalid-parameter", "unknown uncertainty measure: " + name);
}

UncertaintyReport cluster_entropy(const ScoreTable& table,
                                  const ClusterAssignment& assignment) {
  require(table.rows.size() == assignment.label.size(), "shape-mismatch",
          "score table and assignment sizes differ");
  require(!table.rows.empty(), "invalid-parameter", "empty score table");
  return clustered_report(Measure::kClusterEntropy, table, assignment.label);
}

UncertaintyReport full_entropy(const ScoreTable& table) {
  require(!table.rows.empty(), "invalid-parameter", "empty score table");
  std::vector<double> scores(table.rows.size());
  double total = 0.0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    scores[i] = scorer::aggregate(table.rows[i]);
    total += scores[i];
  }
  require(total > 0.0, "all-zero-scores", "all aggregated candidate scores are zero");
  for (double& s : scores) s /= total;

  UncertaintyReport report;
  report.measure = Measure::kFullEntropy;
  report.value = entropy_of(scores);
  report.diagnostics.resize(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    report.diagnostics[i].traj_id = table.ids[i];
    report.diagnostics[i].aggregated_score = scorer::aggregate(table.rows[i]);
  }
  return report;
}

UncertaintyReport semantic_entropy(const ScoreTable& table, const AnchorSet& anchors,
                                   const std::vector<Trajectory>& candidates, double tau) {
  require(table.rows.size() == candidates.size(), "shape-mismatch",
          "score table and candidate counts differ");
  require(tau > 0.0, "invalid-parameter", "semantic threshold must be positive");
  const ClusterAssignment fallback = geometry::assign_clusters(candidates, anchors);
  std::vector<std::vector<double>> feats(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    feats[i].assign(table.rows[i].begin(), table.rows[i].end());
  }
  const std::vector<AnchorLabel> labels =
      one_step_clusters(feats, anchors, fallback.label, tau);
  UncertaintyReport report = clustered_report(Measure::kSemanticEntropy, table, labels);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    report.diagnostics[i].lateral_endpoint = geometry::lateral_endpoint(candidates[i]);
  }
  return report;
}

UncertaintyReport kl_divergence_uncertainty(const ScoreTable& full_table) {
  require(!full_table.rows.empty(), "invalid-parameter", "empty score table");
  const std::size_t k = full_table.rows.size();
  std::array<std::vector<double>, 5> cols;
  for (int f = 0; f < 5; ++f) {
    auto& col = cols[static_cast<std::size_t>(f)];
    col.resize(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      col[i] = std::max(full_table.rows[i][static_cast<std::size_t>(f)], kKlFloor);
      total += col[i];
    }
    for (double& v : col) v /= total;
  }
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      const auto& p = cols[static_cast<std::size_t>(i)];
      const auto& q = cols[static_cast<std::size_t>(j)];
      for (std::size_t x = 0; x < k; ++x) sum += p[x] * std::log(p[x] / q[x]);
    }
  }
  UncertaintyReport report;
  report.measure = Measure::kKlDivergence;
  report.value = sum;
  return report;
}

std::vector<std::array<double, 2>> regression_semantic_features(
    const scorer::EvidentialOutput& ev, const std::vector<Trajectory>& candidates, int n,
    std::uint64_t seed) {
  const scorer::NigSamples samples = scorer::sample_nig(ev, n, seed);
  std::vector<std::array<double, 2>> feats(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::array<double, scorer::kRegressionDims> flat{};
    for (int w = 0; w < Trajectory::kWaypointCount; ++w) {
      flat[static_cast<std::size_t>(2 * w)] = candidates[i].waypoints[static_cast<std::size_t>(w)].x;
      flat[static_cast<std::size_t>(2 * w + 1)] =
          candidates[i].waypoints[static_cast<std::size_t>(w)].y;
    }
    double l_gamma_sq = 0.0;
    for (int d = 0; d < scorer::kRegressionDims; ++d) {
      const double diff = flat[static_cast<std::size_t>(d)] - ev.gamma[static_cast<std::size_t>(d)];
      l_gamma_sq += diff * diff;
    }
    double l_mu = std::numeric_limits<double>::infinity();
    for (const std::vector<double>& mu : samples.mu) {
      double sq = 0.0;
      for (int d = 0; d < scorer::kRegressionDims; ++d) {
        const double diff = flat[static_cast<std::size_t>(d)] - mu[static_cast<std::size_t>(d)];
        sq += diff * diff;
      }
      l_mu = std::min(l_mu, std::sqrt(sq));
    }
    feats[i] = {std::sqrt(l_gamma_sq), l_mu};
  }
  return feats;
}

UncertaintyReport regression_semantic_entropy(const scorer::EvidentialOutput& ev,
                                              const AnchorSet& anchors,
                                              const std::vector<Trajectory>& candidates,
                                              int n, std::uint64_t seed, double tau) {
  require(tau > 0.0, "invalid-parameter", "semantic threshold must be positive");
  const auto feats2 = regression_semantic_features(ev, candidates, n, seed);
  std::vector<std::vector<double>> feats(feats2.size());
  for (std::size_t i = 0; i < feats2.size(); ++i) feats[i].assign(feats2[i].begin(), feats2[i].end());
  const ClusterAssignment fallback = geometry::assign_clusters(candidates, anchors);
  const std::vector<AnchorLabel> labels =
      one_step_clusters(feats, anchors, fallback.label, tau);

  // Regression planners emit no per-candidate scores; each candidate carries
  // uniform mass, so only cluster occupancy matters.
  std::array<double, geometry::kAnchorCount> masses{};
  for (AnchorLabel l : labels) masses[static_cast<std::size_t>(l)] += 1.0;
  const double total = static_cast<double>(labels.size());

  UncertaintyReport report;
  report.measure = Measure::kSemanticEntropy;
  ClusterDistribution dist;
  for (int a = 0; a < geometry::kAnchorCount; ++a) {
    dist.probs[static_cast<std::size_t>(a)] = masses[static_cast<std::size_t>(a)] / total;
  }
  report.value = entropy_of(dist.probs);
  report.cluster_distribution = dist;
  report.diagnostics.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    report.diagnostics[i].traj_id = candidates[i].id;
    report.diagnostics[i].label = labels[i];
    report.diagnostics[i].lateral_endpoint = geometry::lateral_endpoint(candidates[i]);
  }
  return report;
}

UncertaintyReport evidential_uncertainty(const scorer::EvidentialOutput& ev) {
  double v = 0.0;
  for (std::size_t d = 0; d < ev.gamma.size(); ++d) {
    v += ev.beta[d] / (ev.upsilon[d] * (ev.alpha[d] - 1.0));
  }
  v /= static_cast<double>(ev.gamma.size());
  UncertaintyReport report;
  report.measure = Measure::kEvidential;
  report.value = 1.0 - std::exp(-v);
  return report;
}

// --- Differentiable builders ---------------------------------------------------

namespace {

// -sum p log p over the nonempty cluster masses; masses must be positive.
Tape::Var entropy_from_mass_vars(Tape& tape, const std::vector<Tape::Var>& masses) {
  double total_val = 0.0;
  for (const Tape::Var& m : masses) total_val += tape.val(m);
  require(total_val > 0.0, "all-zero-scores", "all aggregated candidate scores are zero");
  Tape::Var total = tape.sum(masses);
  Tape::Var h = tape.constant(0.0);
  for (const Tape::Var& m : masses) {
    if (tape.val(m) <= 0.0) continue;  // empty cluster contributes 0
    const Tape::Var p = tape.div(m, total);
    h = tape.sub(h, tape.mul(p, tape.log(p)));
  }
  return h;
}

std::vector<Tape::Var> mass_vars_for_labels(Tape& tape, std::span<const RowVars> rows,
                                            const std::vector<AnchorLabel>& labels) {
  std::array<std::vector<Tape::Var>, geometry::kAnchorCount> members;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    members[static_cast<std::size_t>(labels[i])].push_back(
        scorer::aggregate_var(tape, rows[i]));
  }
  std::vector<Tape::Var> masses;
  for (int a = 0; a < geometry::kAnchorCount; ++a) {
    auto& m = members[static_cast<std::size_t>(a)];
    if (!m.empty()) masses.push_back(tape.sum(m));
  }
  return masses;
}

}  // namespace

Tape::Var cluster_entropy_var(Tape& tape, std::span<const RowVars> rows,
                              const ClusterAssignment& assignment) {
  require(rows.size() == assignment.label.size(), "shape-mismatch",
          "rows and assignment sizes differ");
  return entropy_from_mass_vars(tape, mass_vars_for_labels(tape, rows, assignment.label));
}

Tape::Var full_entropy_var(Tape& tape, std::span<const RowVars> rows) {
  std::vector<Tape::Var> scores;
  scores.reserve(rows.size());
  for (const RowVars& row : rows) scores.push_back(scorer::aggregate_var(tape, row));
  return entropy_from_mass_vars(tape, scores);
}

Tape::Var semantic_entropy_var(Tape& tape, std::span<const RowVars> rows,
                               const AnchorSet& anchors,
                               const std::vector<Trajectory>& candidates, double tau) {
  require(rows.size() == candidates.size(), "shape-mismatch",
          "rows and candidate counts differ");
  const ClusterAssignment fallback = geometry::assign_clusters(candidates, anchors);
  std::vector<std::vector<double>> feats(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    feats[i].resize(5);
    for (int j = 0; j < 5; ++j) {
      feats[i][static_cast<std::size_t>(j)] = tape.val(rows[i].s[static_cast<std::size_t>(j)]);
    }
  }
  const std::vector<AnchorLabel> labels =
      one_step_clusters(feats, anchors, fallback.label, tau);
  return entropy_from_mass_vars(tape, mass_vars_for_labels(tape, rows, labels));
}

Tape::Var kl_divergence_var(Tape& tape, std::span<const RowVars> rows) {
  require(!rows.empty(), "invalid-parameter", "empty score table");
  const std::size_t k = rows.size();
  std::array<std::vector<Tape::Var>, 5> p;
  std::array<std::vector<Tape::Var>, 5> logp;
  for (int f = 0; f < 5; ++f) {
    std::vector<Tape::Var> col;
    col.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      col.push_back(tape.clamp_min(rows[i].s[static_cast<std::size_t>(f)], kKlFloor));
    }
    const Tape::Var total = tape.sum(col);
    auto& pf = p[static_cast<std::size_t>(f)];
    auto& lf = logp[static_cast<std::size_t>(f)];
    pf.reserve(k);
    lf.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      pf.push_back(tape.div(col[i], total));
      lf.push_back(tape.log(pf.back()));
    }
  }
  Tape::Var sum = tape.constant(0.0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      for (std::size_t x = 0; x < k; ++x) {
        sum = tape.add(sum, tape.mul(p[static_cast<std::size_t>(i)][x],
                                     tape.sub(logp[static_cast<std::size_t>(i)][x],
                                              logp[static_cast<std::size_t>(j)][x])));
      }
    }
  }
  return sum;
}

Tape::Var evidential_uncertainty_var(Tape& tape, const scorer::EvidentialVars& ev) {
  Tape::Var acc = tape.constant(0.0);
  for (std::size_t d = 0; d < ev.gamma.size(); ++d) {
    const Tape::Var denom = tape.mul(ev.upsilon[d], tape.add_const(ev.alpha[d], -1.0));
    acc = tape.add(acc, tape.div(ev.beta[d], denom));
  }
  const Tape::Var v = tape.mul_const(acc, 1.0 / static_cast<double>(ev.gamma.size()));
  return tape.add_const(tape.neg(tape.exp(tape.neg(v))), 1.0);
}

std::string report_csv_header() { return "frame_index,measure,value,p1,p2,p3,p4,p5"; }

std::string report_csv_row(int frame_index, const UncertaintyReport& report) {
  char buf[64];
  std::ostringstream out;
  out << frame_index << "," << measure_name(report.measure) << ",";
  std::snprintf(buf, sizeof(buf), "%.17g", report.value);
  out << buf;
  for (int a = 0; a < geometry::kAnchorCount; ++a) {
    out << ",";
    if (report.cluster_distribution.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g",
                    report.cluster_distribution->probs[static_cast<std::size_t>(a)]);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace centaur::uncertainty
