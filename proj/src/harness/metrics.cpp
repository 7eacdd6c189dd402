#include "thinker/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "thinker/core/errors.hpp"
#include "thinker/ppo/ppo.hpp"

namespace thinker::harness {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ArgumentError("quantile: no values");
  if (p < 0.0 || p > 1.0) throw ArgumentError("quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RewardStats summarize(std::vector<double> returns) {
  RewardStats s;
  s.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
  s.median = quantile(returns, 0.5);
  s.q25 = quantile(returns, 0.25);
  s.q75 = quantile(returns, 0.75);
  s.returns = std::move(returns);
  return s;
}

namespace {

constexpr int kColumns = 14;

std::string format_record(const MetricsRecord& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.step << ',' << r.initial_steps << ',' << r.total_env_steps() << ',' << r.iteration << ','
      << r.train_reward_mean << ',' << r.test_mean << ',' << r.test_median << ',' << r.test_q25 << ',' << r.test_q75
      << ',' << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ',' << r.approx_kl << ','
      << r.clip_fraction << ',' << r.wall_clock;
  return out.str();
}

MetricsRecord parse_record(const std::string& line, const std::string& path) {
  std::vector<std::string> cells;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (cells.size() != kColumns + 1) throw DataError(path + ": malformed metrics row '" + line + "'");
  try {
    MetricsRecord r;
    r.step = std::stoll(cells[0]);
    r.initial_steps = std::stoll(cells[1]);
    r.iteration = std::stoll(cells[3]);
    double* fields[] = {&r.train_reward_mean, &r.test_mean,     &r.test_median, &r.test_q25,
                        &r.test_q75,          &r.policy_loss,   &r.value_loss,  &r.entropy,
                        &r.approx_kl,         &r.clip_fraction, &r.wall_clock};
    for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = std::strtod(cells[4 + i].c_str(), nullptr);
    return r;
  } catch (const std::exception&) {
    throw DataError(path + ": malformed metrics row '" + line + "'");
  }
}

}  // namespace

std::string MetricsLog::header() {
  return "step,initial_steps,total_env_steps,iteration,train_reward_mean,test_mean,test_median,test_q25,test_q75,"
         "policy_loss,value_loss,entropy,approx_kl,clip_fraction,wall_clock";
}

MetricsLog::MetricsLog(std::string path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    records_ = read(path_);
  } else {
    rewrite();
  }
}

void MetricsLog::append(const MetricsRecord& record) {
  if (!records_.empty() && record.step <= records_.back().step) {
    throw StateError("MetricsLog: step " + std::to_string(record.step) + " does not follow " +
                     std::to_string(records_.back().step));
  }
  std::ofstream out(path_, std::ios::app);
  out << format_record(record) << '\n';
  if (!out) throw StateError("MetricsLog: cannot append to " + path_);
  records_.push_back(record);
}

void MetricsLog::truncate_after(std::int64_t step) {
  const auto keep = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.step > step; });
  if (keep == records_.end()) return;
  records_.erase(keep, records_.end());
  rewrite();
}

void MetricsLog::rewrite() const {
  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << header() << '\n';
    for (const auto& r : records_) out << format_record(r) << '\n';
    if (!out) throw StateError("MetricsLog: cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path_);
}

std::vector<MetricsRecord> MetricsLog::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing metrics file " + path);
  std::string line;
  if (!std::getline(in, line) || line != header()) throw DataError(path + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line, path));
    if (out.size() > 1 && out.back().step <= out[out.size() - 2].step) throw DataError(path + ": steps not increasing");
  }
  return out;
}

RewardStats evaluate_zero_shot(const BatchPolicy& policy, const env::EnvConfig& config, int n_episodes, Rng& rng) {
  if (n_episodes < 1) throw ArgumentError("evaluate_zero_shot: n_episodes must be positive");
  std::vector<env::ColorMaze> envs(static_cast<std::size_t>(n_episodes), env::ColorMaze(config));
  std::vector<double> returns(envs.size(), 0.0);
  for (auto& e : envs) e.reset(rng.next_u64());
  while (true) {
    std::vector<const env::ColorMaze*> active;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < envs.size(); ++i) {
      if (!envs[i].done()) {
        active.push_back(&envs[i]);
        index.push_back(i);
      }
    }
    if (active.empty()) break;
    const std::vector<int> actions = policy(active, rng);
    if (actions.size() != active.size()) throw StateError("evaluate_zero_shot: policy returned the wrong action count");
    for (std::size_t k = 0; k < index.size(); ++k) returns[index[k]] += envs[index[k]].step(actions[k]).reward;
  }
  return summarize(std::move(returns));
}

RewardStats evaluate_zero_shot(const ppo::PolicyModel<float>& model, const env::EnvConfig& config, int n_episodes,
                               Rng& rng) {
  const BatchPolicy policy = [&model](const std::vector<const env::ColorMaze*>& active, Rng& r) {
    std::vector<Observation> obs;
    obs.reserve(active.size());
    for (const auto* e : active) obs.push_back(e->observe());
    const auto out = ppo::policy_forward(model, to_tensor<float>(obs, PixelConvention::Unit));
    const nn::Index a = out.logits.value().dim(1);
    std::vector<int> actions(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      actions[i] = ppo::sample_action(std::span<const float>(out.logits.value().data() + static_cast<nn::Index>(i) * a,
                                                             static_cast<std::size_t>(a)), r);
    }
    return actions;
  };
  return evaluate_zero_shot(policy, config, n_episodes, rng);
}

}  // namespace thinker::harness
