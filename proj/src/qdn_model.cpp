#include "qdnbandit/qdn_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace qdnbandit {

std::string_view to_string(NetworkState state) {
  return state == NetworkState::Busy ? "busy" : "idle";
}

NetworkState network_state_from_string(std::string_view text) {
  if (text == "busy") return NetworkState::Busy;
  if (text == "idle") return NetworkState::Idle;
  throw std::invalid_argument(fmt::format("unknown network state '{}'", text));
}

const std::vector<int>& PathSpec::repeater_capacity(NetworkState state) const {
  return state == NetworkState::Busy ? repeater_capacity_busy
                                     : repeater_capacity_idle;
}

void PathSpec::validate() const {
  if (link_probs.empty()) throw std::invalid_argument("path has no links");
  for (double p : link_probs) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument(
          fmt::format("link probability {} outside (0,1)", p));
    }
  }
  const std::size_t repeaters = link_probs.size() - 1;
  if (repeater_capacity_busy.size() != repeaters ||
      repeater_capacity_idle.size() != repeaters) {
    throw std::invalid_argument(fmt::format(
        "path with {} links needs {} repeater capacities per state",
        link_probs.size(), repeaters));
  }
  for (std::size_t v = 0; v < repeaters; ++v) {
    if (repeater_capacity_busy[v] < 1) {
      throw std::invalid_argument("repeater capacity must be positive");
    }
    if (repeater_capacity_idle[v] < repeater_capacity_busy[v]) {
      throw std::invalid_argument(fmt::format(
          "repeater {} idle capacity {} below busy capacity {}", v,
          repeater_capacity_idle[v], repeater_capacity_busy[v]));
    }
  }
  if (channel_capacity) {
    if (channel_capacity->size() != link_probs.size()) {
      throw std::invalid_argument("channel capacity needs one entry per link");
    }
    for (int w : *channel_capacity) {
      if (w < 1) throw std::invalid_argument("channel capacity must be positive");
    }
  }
}

void NetworkSpec::validate() const {
  if (paths.empty()) throw std::invalid_argument("network has no paths");
  if (attempts_per_slot < 1) {
    throw std::invalid_argument("attempts_per_slot must be >= 1");
  }
  if (endpoint_capacity && *endpoint_capacity < 1) {
    throw std::invalid_argument("endpoint capacity must be positive");
  }
  for (const auto& path : paths) path.validate();
}

int NetworkSpec::max_repeater_capacity(NetworkState state) const {
  int best = 0;
  for (const auto& path : paths) {
    for (int c : path.repeater_capacity(state)) best = std::max(best, c);
  }
  return best;
}

std::optional<int> NetworkSpec::endpoint_budget(NetworkState state) const {
  if (endpoint_capacity) return endpoint_capacity;
  const int cap = max_repeater_capacity(state);
  if (cap == 0) return std::nullopt;
  return cap;
}

int NetworkSpec::feature_scale() const {
  int scale = max_repeater_capacity(NetworkState::Idle);
  if (endpoint_capacity) scale = std::max(scale, *endpoint_capacity);
  if (scale == 0) {
    for (const auto& path : paths) {
      if (path.channel_capacity) {
        for (int w : *path.channel_capacity) scale = std::max(scale, w);
      }
    }
  }
  if (scale == 0) throw std::invalid_argument("network allocations are unbounded");
  return scale;
}

std::string Arm::to_string() const {
  return fmt::format("{}", fmt::join(allocation, "-"));
}

double per_channel_success(double p_tilde, int attempts) {
  if (!(p_tilde > 0.0 && p_tilde < 1.0)) {
    throw std::domain_error(
        fmt::format("single-attempt probability {} outside (0,1)", p_tilde));
  }
  if (attempts < 1) throw std::domain_error("attempts must be >= 1");
  return -std::expm1(static_cast<double>(attempts) * std::log1p(-p_tilde));
}

double link_success(double channel_success, int qubits) {
  if (qubits <= 0) return 0.0;
  return -std::expm1(static_cast<double>(qubits) * std::log1p(-channel_success));
}

double path_success(const PathSpec& path, const Arm& arm, int attempts) {
  if (arm.size() != path.num_links()) {
    throw std::invalid_argument(fmt::format(
        "allocation has {} entries for a {}-link path", arm.size(),
        path.num_links()));
  }
  double h = 1.0;
  for (std::size_t e = 0; e < arm.size(); ++e) {
    h *= link_success(per_channel_success(path.link_probs[e], attempts), arm[e]);
  }
  return h;
}

double attacked_success(double path_success, bool attacked) {
  return attacked ? 0.0 : path_success;
}

namespace {

constexpr int kUnbounded = std::numeric_limits<int>::max();

// Upper bound on link e given the allocation chosen for link e - 1.
int link_upper_bound(const PathSpec& path, const std::vector<int>& caps,
                     std::optional<int> endpoint, std::size_t e, int previous) {
  const std::size_t links = path.num_links();
  int bound = kUnbounded;
  if (path.channel_capacity) bound = std::min(bound, (*path.channel_capacity)[e]);
  if (e == 0) {
    if (endpoint) bound = std::min(bound, *endpoint);
  } else {
    bound = std::min(bound, caps[e - 1] - previous);
  }
  if (e + 1 == links) {
    if (endpoint) bound = std::min(bound, *endpoint);
  } else {
    // The next link needs at least one qubit from the same repeater.
    bound = std::min(bound, caps[e] - 1);
  }
  return bound;
}

void enumerate_from(const PathSpec& path, const std::vector<int>& caps,
                    std::optional<int> endpoint, std::vector<int>& current,
                    std::vector<Arm>& out) {
  const std::size_t e = current.size();
  if (e == path.num_links()) {
    out.push_back(Arm{current});
    return;
  }
  const int previous = e == 0 ? 0 : current.back();
  const int bound = link_upper_bound(path, caps, endpoint, e, previous);
  if (bound == kUnbounded) {
    throw std::invalid_argument(
        fmt::format("link {} has no finite qubit bound", e));
  }
  for (int q = 1; q <= bound; ++q) {
    current.push_back(q);
    enumerate_from(path, caps, endpoint, current, out);
    current.pop_back();
  }
}

}  // namespace

bool is_feasible(const PathSpec& path, const Arm& arm, NetworkState state,
                 std::optional<int> endpoint_budget) {
  const std::size_t links = path.num_links();
  if (arm.size() != links) return false;
  const auto& caps = path.repeater_capacity(state);
  for (std::size_t e = 0; e < links; ++e) {
    if (arm[e] < 1) return false;
    if (path.channel_capacity && arm[e] > (*path.channel_capacity)[e]) return false;
  }
  for (std::size_t v = 0; v + 1 < links; ++v) {
    if (arm[v] + arm[v + 1] > caps[v]) return false;
  }
  if (endpoint_budget) {
    if (arm[0] > *endpoint_budget || arm[links - 1] > *endpoint_budget) return false;
  }
  return true;
}

std::vector<Arm> enumerate_arms(const PathSpec& path, NetworkState state,
                                std::optional<int> endpoint_budget) {
  path.validate();
  std::vector<Arm> arms;
  std::vector<int> current;
  current.reserve(path.num_links());
  enumerate_from(path, path.repeater_capacity(state), endpoint_budget, current,
                 arms);
  return arms;
}

std::vector<Arm> enumerate_arms(const NetworkSpec& network, std::size_t path,
                                NetworkState state) {
  return enumerate_arms(network.paths.at(path), state,
                        network.endpoint_budget(state));
}

FeatureEncoder::FeatureEncoder(int scale) : scale_(scale) {
  if (scale < 1) throw std::invalid_argument("feature scale must be positive");
}

std::vector<double> FeatureEncoder::lifted(const Arm& arm) const {
  const std::size_t links = arm.size();
  const double denom = static_cast<double>(scale_) * std::sqrt(static_cast<double>(links));
  std::vector<double> x(links + 1);
  double norm2 = 0.0;
  for (std::size_t e = 0; e < links; ++e) {
    if (arm[e] < 0 || arm[e] > scale_) {
      throw std::invalid_argument(fmt::format(
          "allocation {} exceeds feature scale {}", arm.to_string(), scale_));
    }
    x[e] = static_cast<double>(arm[e]) / denom;
    norm2 += x[e] * x[e];
  }
  x[links] = std::sqrt(std::max(0.0, 1.0 - norm2));
  return x;
}

std::vector<double> FeatureEncoder::neural(const Arm& arm) const {
  const auto half = lifted(arm);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<double> x(2 * half.size());
  for (std::size_t i = 0; i < half.size(); ++i) {
    x[i] = half[i] * inv_sqrt2;
    x[i + half.size()] = half[i] * inv_sqrt2;
  }
  return x;
}

NetworkSpec table1_network() {
  NetworkSpec net;
  net.attempts_per_slot = 4000;
  net.paths = {
      PathSpec{{1.5e-4, 1.5e-4}, {8}, {9}, std::nullopt},
      PathSpec{{1e-4, 1e-4}, {10}, {11}, std::nullopt},
      PathSpec{{2e-4, 2e-4, 2e-4}, {5, 5}, {11, 11}, std::nullopt},
      PathSpec{{1.5e-4, 1.5e-4, 1.5e-4}, {6, 6}, {12, 12}, std::nullopt},
  };
  return net;
}

}  // namespace qdnbandit
