#pragma once

// Quantum data network abstraction: candidate paths, per-link entanglement
// success probabilities, repeater qubit capacities, and the latent success
// rate of a qubit allocation along a path.

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qdnbandit {

enum class NetworkState { Busy, Idle };

std::string_view to_string(NetworkState state);
NetworkState network_state_from_string(std::string_view text);

/// One candidate route from source to destination.
///
/// A path with D links has D - 1 interior repeaters. Repeater v sits between
/// link v and link v + 1 and shares its qubits between both links.
struct PathSpec {
  std::vector<double> link_probs;          // single-attempt success, one per link
  std::vector<int> repeater_capacity_busy;  // one per repeater
  std::vector<int> repeater_capacity_idle;  // entrywise >= busy
  std::optional<std::vector<int>> channel_capacity;  // per link; unset = unbounded

  std::size_t num_links() const { return link_probs.size(); }
  const std::vector<int>& repeater_capacity(NetworkState state) const;

  // Throws std::invalid_argument on shape or range violations.
  void validate() const;

  bool operator==(const PathSpec&) const = default;
};

struct NetworkSpec {
  std::vector<PathSpec> paths;
  int attempts_per_slot = 4000;
  // Source/destination qubit budget. Unset means "sufficient": equal to the
  // largest repeater capacity in the network under the current state.
  std::optional<int> endpoint_capacity;

  void validate() const;

  std::size_t num_paths() const { return paths.size(); }
  int max_repeater_capacity(NetworkState state) const;
  // Qubits available at the source and destination in the given state; empty
  // when the network has no repeaters and no explicit endpoint budget.
  std::optional<int> endpoint_budget(NetworkState state) const;
  // Largest per-link allocation any arm can carry; used to scale features.
  int feature_scale() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// A qubit allocation along one path: allocation[e] qubits on link e.
struct Arm {
  std::vector<int> allocation;

  std::size_t size() const { return allocation.size(); }
  int operator[](std::size_t e) const { return allocation[e]; }
  std::string to_string() const;  // "4-4"

  auto operator<=>(const Arm&) const = default;
};

/// p_e = 1 - (1 - p_tilde)^K. Throws std::domain_error unless 0 < p_tilde < 1
/// and K >= 1.
double per_channel_success(double p_tilde, int attempts);

/// P_e(q) = 1 - (1 - p_e)^q; zero qubits give zero.
double link_success(double channel_success, int qubits);

/// Product of link successes along the path for the given allocation.
double path_success(const PathSpec& path, const Arm& arm, int attempts);

/// Latent success once the adversary's choice is known.
double attacked_success(double path_success, bool attacked);

bool is_feasible(const PathSpec& path, const Arm& arm, NetworkState state,
                 std::optional<int> endpoint_budget);

/// Every feasible allocation in lexicographic order. Throws
/// std::invalid_argument if some link has no finite upper bound.
std::vector<Arm> enumerate_arms(const PathSpec& path, NetworkState state,
                                std::optional<int> endpoint_budget);
std::vector<Arm> enumerate_arms(const NetworkSpec& network, std::size_t path,
                                NetworkState state);

/// Maps allocations to unit-norm learner inputs.
///
/// The raw allocation u = q / (scale * sqrt(D)) lies in the unit ball; it is
/// lifted onto the unit sphere by appending sqrt(1 - |u|^2), which keeps
/// proportional allocations such as (1,1) and (4,4) distinct. The neural
/// input repeats the lifted vector twice and divides by sqrt(2) so the
/// antisymmetric initialization outputs exactly zero.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(int scale);

  int scale() const { return scale_; }
  static std::size_t lifted_dim(std::size_t links) { return links + 1; }
  static std::size_t neural_dim(std::size_t links) { return 2 * (links + 1); }

  std::vector<double> lifted(const Arm& arm) const;
  std::vector<double> neural(const Arm& arm) const;

 private:
  int scale_;
};

/// The four-path network used throughout the simulations: one- and
/// two-repeater paths with busy/idle repeater capacities and K = 4000.
NetworkSpec table1_network();

}  // namespace qdnbandit
