#include <cmath>
#include <random>

#include "doctest.h"
#include "qdnbandit/baselines.hpp"
#include "reference.hpp"

using namespace qdnbandit;

namespace {

PolicyConfig small_config() {
  PolicyConfig c;
  c.width = 8;
  c.depth = 2;
  c.beta = 0.5;
  c.eta = 0.1;
  return c;
}

std::vector<std::vector<Arm>> small_arm_sets() {
  std::vector<std::vector<Arm>> sets(2);
  for (int a = 1; a <= 3; ++a) {
    sets[0].push_back(Arm{{a}});
    for (int b = 1; b <= 2; ++b) sets[1].push_back(Arm{{a, b}});
  }
  return sets;
}

}  // namespace

TEST_CASE("GNeuralUCB with one group is plain NeuralUCB") {
  std::vector<std::vector<Arm>> sets{{Arm{{1, 1}}, Arm{{1, 2}}, Arm{{2, 2}}, Arm{{3, 1}}}};
  const auto c = small_config();
  GNeuralUcb g({2}, FeatureEncoder(3), c, 21);
  ExpNeuralUcb e({2}, FeatureEncoder(3), c, 21);
  std::mt19937_64 env(4);
  std::bernoulli_distribution coin(0.6);
  for (int t = 1; t <= 25; ++t) {
    const int y = coin(env) ? 1 : 0;
    auto fb = [y](std::size_t, std::size_t) { return Feedback{y, false}; };
    const auto dg = g.step(RoundInput{t, NetworkState::Busy, sets}, fb);
    const auto de = e.step(RoundInput{t, NetworkState::Busy, sets}, fb);
    CHECK(dg.arm == de.arm);
    CHECK(dg.distribution == std::vector<double>{1.0});
  }
  CHECK(g.group(0).params().theta == e.group(0).params().theta);
}

TEST_CASE("GNeuralUCB skips learning on attacked rounds") {
  const auto sets = small_arm_sets();
  GNeuralUcb g({1, 2}, FeatureEncoder(3), small_config(), 3);
  const auto th0 = g.group(0).params().theta;
  const auto th1 = g.group(1).params().theta;
  for (int t = 1; t <= 10; ++t) {
    g.step(RoundInput{t, NetworkState::Busy, sets},
           [](std::size_t, std::size_t) { return Feedback{0, true}; });
  }
  CHECK(g.group(0).params().theta == th0);
  CHECK(g.group(1).params().theta == th1);
  CHECK(g.group(0).history().empty());
  CHECK(g.group(1).history().empty());
}

TEST_CASE("GNeuralUCB skip-zero-reward variant") {
  const auto sets = small_arm_sets();
  auto c = small_config();
  c.gneural_update = GNeuralUpdateRule::SkipZeroReward;
  GNeuralUcb g({1, 2}, FeatureEncoder(3), c, 3);
  for (int t = 1; t <= 6; ++t) {
    g.step(RoundInput{t, NetworkState::Busy, sets},
           [](std::size_t, std::size_t) { return Feedback{0, false}; });
  }
  CHECK(g.group(0).history().empty());
  CHECK(g.group(1).history().empty());
}

TEST_CASE("GNeuralUCB scripted transcript") {
  // Two groups, every arm pays 1 unless the group is attacked. The policy
  // picks the global argmax of the per-group UCB scores, recomputed here.
  const auto sets = small_arm_sets();
  const auto c = small_config();
  const FeatureEncoder enc(3);
  GNeuralUcb g({1, 2}, enc, c, 8);
  for (int t = 1; t <= 5; ++t) {
    double best = -1e300;
    std::size_t best_r = 0, best_a = 0;
    for (std::size_t r = 0; r < 2; ++r) {
      const double alpha = confidence_width(g.group(r), t, c);
      for (std::size_t a = 0; a < sets[r].size(); ++a) {
        const double s = arm_score(g.group(r), enc.neural(sets[r][a]), alpha);
        if (s > best + 1e-9) {
          best = s;
          best_r = r;
          best_a = a;
        }
      }
    }
    const auto d = g.step(RoundInput{t, NetworkState::Busy, sets}, [t](std::size_t r, std::size_t) {
      return Feedback{1, (t % 2 == 0) && r == 1};
    });
    CHECK(d.group == best_r);
    CHECK(d.arm == best_a);
  }
}

TEST_CASE("LinUCB ridge estimate converges on a linear reward") {
  const std::vector<double> truth{0.3, -0.2, 0.5};
  LinGroup lin(3, 1.0);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(3);
    for (auto& v : x) v = n(rng);
    double y = noise(rng);
    for (int j = 0; j < 3; ++j) y += truth[j] * x[j];
    lin.learn(x, y);
  }
  for (int j = 0; j < 3; ++j) CHECK(std::abs(lin.estimate()[j] - truth[j]) < 0.1);
  const Eigen::MatrixXd inv = lin.design().inverse();
  CHECK((inv - lin.design_inverse()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("LinUCB score formula") {
  LinGroup lin(2, 1.0);
  lin.learn(std::vector<double>{1.0, 0.0}, 1.0);
  // A = diag(2, 1), b = (1, 0), theta = (0.5, 0).
  CHECK(lin.score(std::vector<double>{1.0, 0.0}, 0.0) == doctest::Approx(0.5));
  CHECK(lin.score(std::vector<double>{1.0, 0.0}, 2.0) == doctest::Approx(0.5 + 2.0 * std::sqrt(0.5)));
  CHECK(lin.score(std::vector<double>{0.0, 1.0}, 2.0) == doctest::Approx(2.0));
  CHECK(lin.log_det_ratio() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("EXPUCB with zero width picks the ridge argmax") {
  std::vector<std::vector<Arm>> sets{{Arm{{1}}, Arm{{2}}, Arm{{3}}}};
  auto c = small_config();
  c.nu = 0.0;
  c.alpha_mode = AlphaMode::FixedNu;
  const FeatureEncoder enc(3);
  ExpUcb p({1}, enc, c, 5);
  for (int t = 1; t <= 20; ++t) {
    std::vector<double> s;
    for (const auto& a : sets[0]) s.push_back(p.group(0).score(enc.lifted(a), 0.0));
    const auto expect = argmax(s);
    const auto d = p.step(RoundInput{t, NetworkState::Busy, sets}, [](std::size_t, std::size_t a) {
      return Feedback{a == 2 ? 1 : 0, false};
    });
    CHECK(d.arm == expect);
  }
}

TEST_CASE("EXPUCB with beta one samples uniformly") {
  const auto sets = small_arm_sets();
  auto c = small_config();
  c.beta = 1.0;
  ExpUcb p({1, 2}, FeatureEncoder(3), c, 6);
  int first = 0;
  const int n = 4000;
  for (int t = 1; t <= n; ++t) {
    const auto d = p.step(RoundInput{t, NetworkState::Busy, sets}, [](std::size_t r, std::size_t) {
      return Feedback{r == 0 ? 1 : 0, false};
    });
    CHECK(d.distribution[0] == doctest::Approx(0.5));
    first += d.group == 0;
  }
  CHECK(std::abs(first - n / 2.0) < 3.0 * std::sqrt(n * 0.25));
}

TEST_CASE("NeuralUCB-Random samples paths uniformly") {
  std::vector<std::vector<Arm>> sets{{Arm{{1}}}, {Arm{{2}}}, {Arm{{3}}}, {Arm{{1}}}};
  auto c = small_config();
  c.width = 2;
  NeuralUcbRandom p({1, 1, 1, 1}, FeatureEncoder(3), c, 9);
  const int n = 10000;
  std::vector<int> count(4, 0);
  for (int t = 1; t <= n; ++t) {
    const auto d = p.step(RoundInput{t, NetworkState::Busy, sets},
                          [](std::size_t, std::size_t) { return Feedback{0, true}; });
    ++count[d.group];
  }
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (int k : count) CHECK(std::abs(k - n / 4.0) < 3.0 * sd);
}

TEST_CASE("oracle best allocation") {
  const auto net = table1_network();
  const auto [arm, value] = oracle_best_arm(net, 0, NetworkState::Busy);
  CHECK(arm == Arm{{4, 4}});
  // Exhaustive check against the reference enumeration.
  for (std::size_t r = 0; r < net.num_paths(); ++r) {
    for (auto s : {NetworkState::Busy, NetworkState::Idle}) {
      const auto best = oracle_best_arm(net, r, s);
      for (const auto& a : ref::brute_force_arms(net.paths[r], s, net.endpoint_budget(s), 20)) {
        CHECK(static_cast<double>(ref::path_success(net.paths[r], a, 4000)) <= best.second + 1e-12);
      }
    }
  }

  PathSpec tight{{1e-4, 2e-4}, {2}, {2}, std::nullopt};
  const auto [a2, v2] = oracle_best_arm(tight, NetworkState::Busy, 4000, 2);
  CHECK(a2 == Arm{{1, 1}});
  const double p1 = per_channel_success(1e-4, 4000), p2 = per_channel_success(2e-4, 4000);
  CHECK(v2 == doctest::Approx(p1 * p2));
}

TEST_CASE("hindsight total on a hand log") {
  const auto net = table1_network();
  const std::vector<std::vector<std::uint8_t>> attacks{{0, 1, 1, 1}, {1, 0, 1, 1}, {0, 1, 1, 1}};
  const std::vector<NetworkState> states{NetworkState::Busy, NetworkState::Idle,
                                         NetworkState::Busy};
  const auto res = oracle_total(attacks, states, net);
  std::vector<double> expect(4, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t r = 0; r < 4; ++r) {
      if (attacks[t][r]) expect[r] += oracle_best_arm(net, r, states[t]).second;
    }
  }
  for (std::size_t r = 0; r < 4; ++r) CHECK(res.per_group[r] == doctest::Approx(expect[r]));
  CHECK(res.total == doctest::Approx(*std::max_element(expect.begin(), expect.end())));
  CHECK(res.group == static_cast<std::size_t>(std::max_element(expect.begin(), expect.end()) -
                                              expect.begin()));

  // A path attacked every round is never the hindsight choice.
  std::vector<std::vector<std::uint8_t>> always(50, {1, 1, 1, 0});
  std::vector<NetworkState> idle(50, NetworkState::Idle);
  const auto r2 = oracle_total(always, idle, net);
  CHECK(r2.group != 3);
  CHECK(r2.per_group[3] == 0.0);
}

TEST_CASE("oracle replay plays the fixed path with its best allocation") {
  const auto net = table1_network();
  OracleReplay p(net, 2);
  std::vector<std::vector<Arm>> sets;
  for (std::size_t r = 0; r < 4; ++r) sets.push_back(enumerate_arms(net, r, NetworkState::Idle));
  const auto d = p.step(RoundInput{1, NetworkState::Idle, sets},
                        [](std::size_t, std::size_t) { return Feedback{1, false}; });
  CHECK(d.group == 2);
  CHECK(sets[2][d.arm] == oracle_best_arm(net, 2, NetworkState::Idle).first);
  CHECK_THROWS(OracleReplay(net, 4));
}
