#include "centaur/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "centaur/error.hpp"
#include "centaur/parallel.hpp"
#include "centaur/rng.hpp"

namespace centaur::scorer {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kBceEps = 1e-12;

double signed_menger_curvature(std::pair<double, double> a, std::pair<double, double> b,
                               std::pair<double, double> c) {
  const double abx = b.first - a.first, aby = b.second - a.second;
  const double bcx = c.first - b.first, bcy = c.second - b.second;
  const double acx = c.first - a.first, acy = c.second - a.second;
  const double cross = abx * bcy - aby * bcx;
  const double denom = std::hypot(abx, aby) * std::hypot(bcx, bcy) * std::hypot(acx, acy);
  if (denom < 1e-12) return 0.0;
  return 2.0 * cross / denom;
}

}  // namespace

SceneFeatures encode_scene(const worldsim::Scene& scene) {
  SceneFeatures f;
  f.v[0] = scene.ego.speed / 10.0;
  f.v[1] = scene.ego.acceleration / 5.0;
  f.v[2 + static_cast<int>(scene.ego.command)] = 1.0;
  f.v[5] = scene.corridor.half_width / 8.0;

  // Centerline curvature sampled at five arc-length fractions.
  const auto& line = scene.corridor.centerline;
  const double total = scene.corridor.total_length();
  constexpr double kFractions[5] = {0.1, 0.3, 0.5, 0.7, 0.9};
  for (int s = 0; s < 5; ++s) {
    const double target = kFractions[s] * total;
    double arc = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      const double seg = std::hypot(line[i + 1].first - line[i].first,
                                    line[i + 1].second - line[i].second);
      if (arc + seg >= target) {
        idx = i;
        break;
      }
      arc += seg;
      idx = i;
    }
    double curv = 0.0;
    if (idx >= 1 && idx + 1 < line.size()) {
      curv = signed_menger_curvature(line[idx - 1], line[idx], line[idx + 1]);
    } else if (line.size() >= 3) {
      const std::size_t m = std::min(line.size() - 2, std::max<std::size_t>(idx, 1));
      curv = signed_menger_curvature(line[m - 1], line[m], line[m + 1]);
    }
    f.v[6 + s] = curv * 5.0;
  }

  // Nearest three obstacles by distance at t = 0; empty slots stay zero.
  std::vector<int> order(scene.obstacles.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& oa = scene.obstacles[static_cast<std::size_t>(a)];
    const auto& ob = scene.obstacles[static_cast<std::size_t>(b)];
    const double da = std::hypot(oa.x, oa.y);
    const double db = std::hypot(ob.x, ob.y);
    if (da != db) return da < db;
    return a < b;
  });
  for (std::size_t s = 0; s < 3 && s < order.size(); ++s) {
    const auto& o = scene.obstacles[static_cast<std::size_t>(order[s])];
    const int base = 11 + static_cast<int>(s) * 6;
    f.v[base + 0] = o.x / 20.0;
    f.v[base + 1] = o.y / 20.0;
    f.v[base + 2] = o.vx / 10.0;
    f.v[base + 3] = o.vy / 10.0;
    f.v[base + 4] = o.half_length / 5.0;
    f.v[base + 5] = o.half_width / 5.0;
  }
  return f;
}

TrajectoryFeatures encode_trajectory(const Trajectory& traj) {
  TrajectoryFeatures f;
  constexpr int kProbes[5] = {4, 9, 19, 29, 39};
  for (int s = 0; s < 5; ++s) {
    const auto& w = traj.waypoints[static_cast<std::size_t>(kProbes[s])];
    f.v[2 * s + 0] = w.x / 20.0;
    f.v[2 * s + 1] = w.y / 20.0;
  }
  f.v[10] = traj.waypoints.back().heading;

  double path_len = 0.0;
  double heading_turn = 0.0;
  for (int i = 0; i + 1 < Trajectory::kWaypointCount; ++i) {
    const auto& a = traj.waypoints[static_cast<std::size_t>(i)];
    const auto& b = traj.waypoints[static_cast<std::size_t>(i + 1)];
    path_len += std::hypot(b.x - a.x, b.y - a.y);
    double dh = b.heading - a.heading;
    while (dh > kPi) dh -= 2.0 * kPi;
    while (dh <= -kPi) dh += 2.0 * kPi;
    heading_turn += std::fabs(dh);
  }
  f.v[11] = (path_len / Trajectory::kHorizonSeconds) / 10.0;  // mean speed proxy
  f.v[12] = (path_len > 1e-9 ? heading_turn / path_len : 0.0) * 5.0;  // |curvature| proxy
  return f;
}

DecoderParams DecoderParams::init(const MlpSpec& spec, std::uint64_t seed) {
  DecoderParams p;
  p.spec = spec;
  p.init_seed = seed;
  p.theta.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
  SplitMix64 rng(mix_seed(seed, 0x1417u));
  const auto fill = [&](int off, int rows, int cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (int i = 0; i < rows * cols; ++i) {
      p.theta[static_cast<std::size_t>(off + i)] = rng.uniform(-limit, limit);
    }
  };
  fill(spec.w1_off(), spec.h1, spec.in);
  fill(spec.w2_off(), spec.h2, spec.h1);
  fill(spec.w3_off(), spec.out, spec.h2);
  return p;
}

DecoderParams DecoderParams::unflatten(const MlpSpec& spec, std::vector<double> theta) {
  require(static_cast<int>(theta.size()) == spec.param_count(), "shape-mismatch",
          "flattened parameter size does not match layout");
  DecoderParams p;
  p.spec = spec;
  p.theta = std::move(theta);
  return p;
}

namespace {

ScoreTable forward_impl(const DecoderParams& params, const SceneFeatures& scene,
                        std::span<const TrajectoryFeatures> batch, std::span<const int> ids,
                        bool parallel) {
  require(params.spec == kScoringSpec, "shape-mismatch",
          "forward expects scoring decoder parameters");
  require(ids.empty() || ids.size() == batch.size(), "shape-mismatch",
          "id list must match batch size");
  const std::size_t n = batch.size();
  ScoreTable table;
  table.rows.resize(n);
  table.ids.resize(n);
  const auto row_fn = [&](std::size_t r) {
    double input[kScoringSpec.in];
    std::copy(scene.v.begin(), scene.v.end(), input);
    std::copy(batch[r].v.begin(), batch[r].v.end(), input + SceneFeatures::kSize);
    double h1[64], h2[64], raw[5];
    autodiff::mlp_forward_core(params.spec, params.theta.data(), input, h1, h2, raw);
    for (int j = 0; j < 5; ++j) {
      table.rows[r][static_cast<std::size_t>(j)] = autodiff::stable_sigmoid(raw[j]);
    }
    table.ids[r] = ids.empty() ? static_cast<int>(r) : ids[r];
  };
  if (parallel) {
    par::parallel_for(n, row_fn);
  } else {
    for (std::size_t r = 0; r < n; ++r) row_fn(r);
  }
  return table;
}

}  // namespace

ScoreTable forward(const DecoderParams& params, const SceneFeatures& scene,
                   std::span<const TrajectoryFeatures> batch, std::span<const int> ids) {
  return forward_impl(params, scene, batch, ids, true);
}

ScoreTable forward_serial(const DecoderParams& params, const SceneFeatures& scene,
                          std::span<const TrajectoryFeatures> batch,
                          std::span<const int> ids) {
  return forward_impl(params, scene, batch, ids, false);
}

double aggregate(const std::array<double, 5>& row) {
  return row[0] * row[1] * (5.0 * row[4] + 2.0 * row[3] + 5.0 * row[2]) / 12.0;
}

int select_trajectory(const ScoreTable& table) {
  require(!table.rows.empty(), "invalid-parameter", "empty score table");
  int best_id = table.ids[0];
  double best = aggregate(table.rows[0]);
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    const double a = aggregate(table.rows[r]);
    if (a > best || (a == best && table.ids[r] < best_id)) {
      best = a;
      best_id = table.ids[r];
    }
  }
  return best_id;
}

double kd_loss(const ScoreTable& predicted, std::span<const worldsim::SubScores> expert) {
  require(predicted.rows.size() == expert.size(), "shape-mismatch",
          "prediction and expert row counts differ");
  require(!expert.empty(), "invalid-parameter", "kd loss over empty table");
  double total = 0.0;
  for (std::size_t r = 0; r < expert.size(); ++r) {
    const std::array<double, 5> y = {expert[r].nc, expert[r].dac, expert[r].ep, expert[r].c,
                                     expert[r].ttc};
    for (int j = 0; j < 5; ++j) {
      const double p = std::clamp(predicted.rows[r][static_cast<std::size_t>(j)], kBceEps,
                                  1.0 - kBceEps);
      total += -(y[static_cast<std::size_t>(j)] * std::log(p) +
                 (1.0 - y[static_cast<std::size_t>(j)]) * std::log(1.0 - p));
    }
  }
  return total / (static_cast<double>(expert.size()) * 5.0);
}

namespace {

std::vector<double> imitation_target(std::span<const double> distances, double lambda) {
  // softmax(-d/lambda) with the usual max-shift.
  std::vector<double> target(distances.size());
  double best = std::numeric_limits<double>::infinity();
  for (double d : distances) best = std::min(best, d);
  double z = 0.0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    target[j] = std::exp(-(distances[j] - best) / lambda);
    z += target[j];
  }
  for (double& t : target) t /= z;
  return target;
}

}  // namespace

double imitation_loss(std::span<const double> final_scores, const PlanningVocabulary& vocab,
                      const Trajectory& human_traj) {
  require(final_scores.size() == vocab.trajectories.size(), "shape-mismatch",
          "final score count must match vocabulary size");
  require(!final_scores.empty(), "invalid-parameter", "imitation loss over empty vocabulary");
  std::vector<double> distances(final_scores.size());
  for (std::size_t j = 0; j < distances.size(); ++j) {
    distances[j] = geometry::trajectory_l2(vocab.trajectories[j], human_traj);
  }
  const std::vector<double> target = imitation_target(distances, kImitationLambda);

  double mx = -std::numeric_limits<double>::infinity();
  for (double s : final_scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double s : final_scores) z += std::exp(s - mx);
  const double log_z = std::log(z) + mx;

  double loss = 0.0;
  for (std::size_t j = 0; j < final_scores.size(); ++j) {
    loss += target[j] * (log_z - final_scores[j]);
  }
  return loss;
}

// --- Tape builders ----------------------------------------------------------

std::vector<RowVars> forward_rows_var(Tape& tape, const Tape::ParamBlock& params,
                                      const SceneFeatures& scene,
                                      std::span<const TrajectoryFeatures> batch) {
  require(params.spec == kScoringSpec, "shape-mismatch",
          "forward_rows_var expects scoring decoder parameters");
  std::vector<RowVars> rows;
  rows.reserve(batch.size());
  double input[kScoringSpec.in];
  std::copy(scene.v.begin(), scene.v.end(), input);
  for (const TrajectoryFeatures& tf : batch) {
    std::copy(tf.v.begin(), tf.v.end(), input + SceneFeatures::kSize);
    const std::vector<Tape::Var> raw =
        tape.mlp_raw(params, std::span<const double>(input, kScoringSpec.in));
    RowVars row;
    for (int j = 0; j < 5; ++j) row.s[static_cast<std::size_t>(j)] = tape.sigmoid(raw[static_cast<std::size_t>(j)]);
    rows.push_back(row);
  }
  return rows;
}

Tape::Var aggregate_var(Tape& tape, const RowVars& row) {
  Tape::Var weighted = tape.add(
      tape.add(tape.mul_const(row.s[4], 5.0), tape.mul_const(row.s[3], 2.0)),
      tape.mul_const(row.s[2], 5.0));
  return tape.mul_const(tape.mul(tape.mul(row.s[0], row.s[1]), weighted), 1.0 / 12.0);
}

Tape::Var kd_loss_var(Tape& tape, std::span<const RowVars> rows,
                      std::span<const worldsim::SubScores> expert) {
  require(rows.size() == expert.size(), "shape-mismatch",
          "prediction and expert row counts differ");
  require(!expert.empty(), "invalid-parameter", "kd loss over empty table");
  Tape::Var total = tape.constant(0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::array<double, 5> y = {expert[r].nc, expert[r].dac, expert[r].ep, expert[r].c,
                                     expert[r].ttc};
    for (int j = 0; j < 5; ++j) {
      const Tape::Var p = rows[r].s[static_cast<std::size_t>(j)];
      const Tape::Var one_minus_p = tape.add_const(tape.neg(p), 1.0);
      Tape::Var term = tape.add(
          tape.mul_const(tape.log(p), -y[static_cast<std::size_t>(j)]),
          tape.mul_const(tape.log(one_minus_p), -(1.0 - y[static_cast<std::size_t>(j)])));
      total = tape.add(total, term);
    }
  }
  return tape.mul_const(total, 1.0 / (static_cast<double>(rows.size()) * 5.0));
}

Tape::Var imitation_loss_var(Tape& tape, std::span<const Tape::Var> final_scores,
                             std::span<const double> distances, double lambda) {
  require(final_scores.size() == distances.size(), "shape-mismatch",
          "score and distance counts differ");
  const std::vector<double> target = imitation_target(distances, lambda);

  // log-sum-exp with a constant shift (max of current values).
  double mx = -std::numeric_limits<double>::infinity();
  for (const Tape::Var& s : final_scores) mx = std::max(mx, tape.val(s));
  Tape::Var z = tape.constant(0.0);
  for (const Tape::Var& s : final_scores) z = tape.add(z, tape.exp(tape.add_const(s, -mx)));
  const Tape::Var log_z = tape.add_const(tape.log(z), mx);

  Tape::Var loss = tape.constant(0.0);
  for (std::size_t j = 0; j < final_scores.size(); ++j) {
    loss = tape.add(loss, tape.mul_const(tape.sub(log_z, final_scores[j]), target[j]));
  }
  return loss;
}

std::vector<double> backward(const DecoderParams& params, const LossBuilder& builder) {
  Tape tape;
  const Tape::ParamBlock block = tape.register_params(params.spec, params.theta);
  const Tape::Var root = builder(tape, block);
  tape.backward(root);
  return tape.param_gradient(block);
}

// --- Training ---------------------------------------------------------------

TrainingDataset build_training_dataset(const std::vector<worldsim::Scene>& scenes,
                                       const PlanningVocabulary& vocab) {
  require(!scenes.empty(), "empty-dataset", "no scenes to build a dataset from");
  TrainingDataset dataset;
  dataset.vocabulary = vocab;
  dataset.records.resize(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    TrainingRecord& rec = dataset.records[i];
    rec.scene = scenes[i];
    const worldsim::ExpertTable table = worldsim::expert_score_vocabulary(scenes[i], vocab);
    rec.expert = table.rows;
    int best = 0;
    for (int j = 1; j < vocab.size(); ++j) {
      if (table.pdms[static_cast<std::size_t>(j)] > table.pdms[static_cast<std::size_t>(best)]) {
        best = j;
      }
    }
    rec.human = vocab.at(best);
  }
  return dataset;
}

namespace {

Tape::Var record_loss_var(Tape& tape, const Tape::ParamBlock& block,
                          const TrainingDataset& dataset,
                          std::span<const TrajectoryFeatures> vocab_features,
                          const TrainingRecord& rec) {
  const SceneFeatures sf = encode_scene(rec.scene);
  const std::vector<RowVars> rows = forward_rows_var(tape, block, sf, vocab_features);
  const Tape::Var kd = kd_loss_var(tape, rows, rec.expert);

  std::vector<Tape::Var> finals;
  finals.reserve(rows.size());
  for (const RowVars& row : rows) finals.push_back(aggregate_var(tape, row));
  std::vector<double> distances(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    distances[j] = geometry::trajectory_l2(dataset.vocabulary.trajectories[j], rec.human);
  }
  const Tape::Var im = imitation_loss_var(tape, finals, distances, kImitationLambda);
  return tape.add(kd, im);
}

double record_loss_plain(const DecoderParams& params, const TrainingDataset& dataset,
                         std::span<const TrajectoryFeatures> vocab_features,
                         const TrainingRecord& rec) {
  const SceneFeatures sf = encode_scene(rec.scene);
  const ScoreTable table = forward_serial(params, sf, vocab_features);
  std::vector<double> finals(table.rows.size());
  for (std::size_t j = 0; j < finals.size(); ++j) finals[j] = aggregate(table.rows[j]);
  return kd_loss(table, rec.expert) +
         imitation_loss(finals, dataset.vocabulary, rec.human);
}

std::vector<TrajectoryFeatures> vocabulary_features(const PlanningVocabulary& vocab) {
  std::vector<TrajectoryFeatures> feats(vocab.trajectories.size());
  par::parallel_for(feats.size(),
                    [&](std::size_t i) { feats[i] = encode_trajectory(vocab.trajectories[i]); });
  return feats;
}

}  // namespace

double total_loss(const DecoderParams& params, const TrainingDataset& dataset) {
  require(!dataset.records.empty(), "empty-dataset", "dataset has no records");
  const std::vector<TrajectoryFeatures> feats = vocabulary_features(dataset.vocabulary);
  std::vector<double> losses(dataset.records.size());
  par::parallel_for(losses.size(), [&](std::size_t i) {
    losses[i] = record_loss_plain(params, dataset, feats, dataset.records[i]);
  });
  return par::pairwise_sum(losses) / static_cast<double>(losses.size());
}

TrainResult train(const TrainingDataset& dataset, int epochs, double lr,
                  std::uint64_t seed) {
  require(!dataset.records.empty(), "empty-dataset", "cannot train on an empty dataset");
  const std::vector<TrajectoryFeatures> feats = vocabulary_features(dataset.vocabulary);

  TrainResult result;
  result.params = DecoderParams::init(kScoringSpec, seed);
  result.initial_loss = total_loss(result.params, dataset);
  if (epochs <= 0) {
    result.final_loss = result.initial_loss;
    return result;
  }

  const std::size_t n = dataset.records.size();
  const std::size_t pc = static_cast<std::size_t>(kScoringSpec.param_count());
  constexpr std::size_t kBatch = 8;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle_rng(mix_seed(seed, 0x50ffull));

  std::vector<double> grad(pc);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates with the deterministic generator.
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < n; start += kBatch) {
      const std::size_t end = std::min(n, start + kBatch);
      const std::size_t bsize = end - start;
      par::accumulate_blocks(
          bsize, 1, pc, grad,
          [&](std::size_t, std::size_t begin, std::size_t finish, double* accum) {
            for (std::size_t b = begin; b < finish; ++b) {
              const TrainingRecord& rec = dataset.records[order[start + b]];
              Tape tape;
              const Tape::ParamBlock block =
                  tape.register_params(result.params.spec, result.params.theta);
              const Tape::Var loss = record_loss_var(tape, block, dataset, feats, rec);
              tape.backward(loss);
              const std::vector<double> g = tape.param_gradient(block);
              for (std::size_t p = 0; p < pc; ++p) accum[p] += g[p];
            }
          });
      const double scale = lr / static_cast<double>(bsize);
      for (std::size_t p = 0; p < pc; ++p) result.params.theta[p] -= scale * grad[p];
    }
  }
  result.final_loss = total_loss(result.params, dataset);
  return result;
}

// --- Evidential regression head ----------------------------------------------

EvidentialOutput forward_regression(const DecoderParams& reg_params,
                                    const SceneFeatures& scene) {
  require(reg_params.spec == kRegressionSpec, "shape-mismatch",
          "forward_regression expects regression decoder parameters");
  std::vector<double> h1(64), h2(64), raw(static_cast<std::size_t>(kRegressionSpec.out));
  autodiff::mlp_forward_core(reg_params.spec, reg_params.theta.data(), scene.v.data(),
                             h1.data(), h2.data(), raw.data());
  EvidentialOutput ev;
  ev.gamma.resize(kRegressionDims);
  ev.upsilon.resize(kRegressionDims);
  ev.alpha.resize(kRegressionDims);
  ev.beta.resize(kRegressionDims);
  for (int d = 0; d < kRegressionDims; ++d) {
    ev.gamma[static_cast<std::size_t>(d)] = raw[static_cast<std::size_t>(d)];
    ev.upsilon[static_cast<std::size_t>(d)] =
        autodiff::stable_softplus(raw[static_cast<std::size_t>(kRegressionDims + d)]);
    ev.alpha[static_cast<std::size_t>(d)] =
        1.0 + autodiff::stable_softplus(raw[static_cast<std::size_t>(2 * kRegressionDims + d)]);
    ev.beta[static_cast<std::size_t>(d)] =
        autodiff::stable_softplus(raw[static_cast<std::size_t>(3 * kRegressionDims + d)]);
  }
  return ev;
}

Trajectory regression_trajectory(const EvidentialOutput& ev) {
  Trajectory t;
  t.id = -1;
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    t.waypoints[static_cast<std::size_t>(i)].x = ev.gamma[static_cast<std::size_t>(2 * i)];
    t.waypoints[static_cast<std::size_t>(i)].y = ev.gamma[static_cast<std::size_t>(2 * i + 1)];
  }
  for (int i = 0; i < Trajectory::kWaypointCount; ++i) {
    const int j = std::min(i, Trajectory::kWaypointCount - 2);
    const auto& a = t.waypoints[static_cast<std::size_t>(j)];
    const auto& b = t.waypoints[static_cast<std::size_t>(j + 1)];
    const double dx = b.x - a.x, dy = b.y - a.y;
    t.waypoints[static_cast<std::size_t>(i)].heading =
        (std::fabs(dx) + std::fabs(dy) > 1e-12) ? std::atan2(dy, dx) : 0.0;
  }
  return t;
}

double evidential_loss(const EvidentialOutput& ev, std::span<const double> target) {
  require(static_cast<int>(target.size()) == kRegressionDims, "shape-mismatch",
          "evidential target must have 80 dimensions");
  double total = 0.0;
  for (int d = 0; d < kRegressionDims; ++d) {
    const std::size_t i = static_cast<std::size_t>(d);
    const double residual = target[i] - ev.gamma[i];
    const double omega = 2.0 * ev.beta[i] * (1.0 + ev.upsilon[i]);
    const double nll = 0.5 * std::log(kPi / ev.upsilon[i]) -
                       ev.alpha[i] * std::log(omega) +
                       (ev.alpha[i] + 0.5) *
                           std::log(residual * residual * ev.upsilon[i] + omega) +
                       std::lgamma(ev.alpha[i]) - std::lgamma(ev.alpha[i] + 0.5);
    const double reg = kEvidentialRegularizer * std::fabs(residual) *
                       (2.0 * ev.upsilon[i] + ev.alpha[i]);
    total += nll + reg;
  }
  return total;
}

EvidentialVars forward_regression_var(Tape& tape, const Tape::ParamBlock& params,
                                      const SceneFeatures& scene) {
  require(params.spec == kRegressionSpec, "shape-mismatch",
          "forward_regression_var expects regression decoder parameters");
  const std::vector<Tape::Var> raw =
      tape.mlp_raw(params, std::span<const double>(scene.v.data(), scene.v.size()));
  EvidentialVars ev;
  ev.gamma.resize(kRegressionDims);
  ev.upsilon.resize(kRegressionDims);
  ev.alpha.resize(kRegressionDims);
  ev.beta.resize(kRegressionDims);
  for (int d = 0; d < kRegressionDims; ++d) {
    const std::size_t i = static_cast<std::size_t>(d);
    ev.gamma[i] = raw[i];
    ev.upsilon[i] = tape.softplus(raw[static_cast<std::size_t>(kRegressionDims + d)]);
    ev.alpha[i] =
        tape.add_const(tape.softplus(raw[static_cast<std::size_t>(2 * kRegressionDims + d)]), 1.0);
    ev.beta[i] = tape.softplus(raw[static_cast<std::size_t>(3 * kRegressionDims + d)]);
  }
  return ev;
}

Tape::Var evidential_loss_var(Tape& tape, const EvidentialVars& ev,
                              std::span<const double> target) {
  require(static_cast<int>(target.size()) == kRegressionDims, "shape-mismatch",
          "evidential target must have 80 dimensions");
  Tape::Var total = tape.constant(0.0);
  for (int d = 0; d < kRegressionDims; ++d) {
    const std::size_t i = static_cast<std::size_t>(d);
    const Tape::Var residual = tape.add_const(tape.neg(ev.gamma[i]), target[i]);
    const Tape::Var omega = tape.mul_const(
        tape.mul(ev.beta[i], tape.add_const(ev.upsilon[i], 1.0)), 2.0);
    const Tape::Var log_ups = tape.log(ev.upsilon[i]);
    Tape::Var nll = tape.add_const(tape.mul_const(log_ups, -0.5), 0.5 * std::log(kPi));
    nll = tape.sub(nll, tape.mul(ev.alpha[i], tape.log(omega)));
    const Tape::Var inner =
        tape.add(tape.mul(tape.mul(residual, residual), ev.upsilon[i]), omega);
    nll = tape.add(nll, tape.mul(tape.add_const(ev.alpha[i], 0.5), tape.log(inner)));
    nll = tape.add(nll, tape.sub(tape.lgamma(ev.alpha[i]),
                                 tape.lgamma(tape.add_const(ev.alpha[i], 0.5))));
    const Tape::Var reg = tape.mul_const(
        tape.mul(tape.abs(residual),
                 tape.add(tape.mul_const(ev.upsilon[i], 2.0), ev.alpha[i])),
        kEvidentialRegularizer);
    total = tape.add(total, tape.add(nll, reg));
  }
  return total;
}

namespace {

// Marsaglia-Tsang; valid for shape >= 1 (alpha > 1 holds by construction).
double gamma_draw(SplitMix64& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.next_gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

NigSamples sample_nig(const EvidentialOutput& ev, int n, std::uint64_t seed) {
  require(n >= 1, "invalid-parameter", "sample count must be >= 1");
  NigSamples samples;
  samples.mu.assign(static_cast<std::size_t>(n),
                    std::vector<double>(static_cast<std::size_t>(kRegressionDims)));
  samples.sigma_sq.assign(static_cast<std::size_t>(n),
                          std::vector<double>(static_cast<std::size_t>(kRegressionDims)));
  SplitMix64 rng(mix_seed(seed, 0x2168ull));
  for (int s = 0; s < n; ++s) {
    for (int d = 0; d < kRegressionDims; ++d) {
      const std::size_t i = static_cast<std::size_t>(d);
      const double sigma_sq = ev.beta[i] / gamma_draw(rng, ev.alpha[i]);
      const double mu =
          ev.gamma[i] + rng.next_gaussian() * std::sqrt(sigma_sq / ev.upsilon[i]);
      samples.sigma_sq[static_cast<std::size_t>(s)][i] = sigma_sq;
      samples.mu[static_cast<std::size_t>(s)][i] = mu;
    }
  }
  return samples;
}

// --- Checkpoint file ----------------------------------------------------------

void save_checkpoint(const DecoderParams& params, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "missing-path", "cannot open checkpoint for writing: " + path);
  out << "centaur-checkpoint 1\n";
  out << "spec " << params.spec.in << " " << params.spec.h1 << " " << params.spec.h2 << " "
      << params.spec.out << "\n";
  out << "feature_layout " << kFeatureLayoutVersion << "\n";
  out << "seed " << params.init_seed << "\n";
  char buf[40];
  for (double v : params.theta) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
  require(out.good(), "missing-path", "failed writing checkpoint: " + path);
}

DecoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "missing-path", "cannot open checkpoint: " + path);
  std::string magic;
  int version = -1;
  in >> magic >> version;
  require(magic == "centaur-checkpoint" && version == 1, "schema-version-mismatch",
          "not a supported checkpoint file: " + path);
  std::string key;
  DecoderParams p;
  in >> key >> p.spec.in >> p.spec.h1 >> p.spec.h2 >> p.spec.out;
  require(key == "spec", "schema-version-mismatch", "malformed checkpoint header");
  int layout = -1;
  in >> key >> layout;
  require(key == "feature_layout" && layout == kFeatureLayoutVersion,
          "schema-version-mismatch", "checkpoint feature layout mismatch");
  in >> key >> p.init_seed;
  require(key == "seed", "schema-version-mismatch", "malformed checkpoint header");
  require(p.spec == kScoringSpec || p.spec == kRegressionSpec, "schema-version-mismatch",
          "checkpoint layer sizes match no known decoder");
  p.theta.resize(static_cast<std::size_t>(p.spec.param_count()));
  for (double& v : p.theta) {
    require(static_cast<bool>(in >> v), "schema-version-mismatch",
            "truncated checkpoint file: " + path);
  }
  return p;
}

}  // namespace centaur::scorer
