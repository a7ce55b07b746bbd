#include "nalab/diagnostics.hpp"

#include <algorithm>
#include <fstream>

#include "nalab/errors.hpp"
#include "nalab/qmix.hpp"
#include "nalab/reward.hpp"

namespace nalab {

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return m;
}

double mlp_case(std::uint64_t seed, double tol) {
  Rng rng(seed);
  Mlp net("mlp", {4, 6, 5, 3}, rng);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(3, 3, rng);
  auto loss = [&](bool backward) {
    MlpCache cache;
    const Matrix y = net.forward(x, backward ? &cache : nullptr);
    if (backward) net.backward(cache, w);
    return y.cwiseProduct(w).sum();
  };
  return grad_check(loss, net.params(), tol, 1e-6).max_relative_error;
}

double lstm_case(std::uint64_t seed, double tol) {
  Rng rng(seed);
  LstmCell cell("lstm", 3, 4, rng);
  const int steps = 5;
  std::vector<Vector> xs;
  std::vector<double> coef;
  for (int t = 0; t < steps; ++t) {
    xs.push_back(random_matrix(3, 1, rng));
    coef.push_back(2.0 * uniform01(rng) - 1.0);
  }
  const Vector u = random_matrix(4, 1, rng);
  auto loss = [&](bool backward) {
    RecurrentState s = RecurrentState::zeros(4);
    std::vector<LstmStepCache> caches;
    double total = 0.0;
    for (int t = 0; t < steps; ++t) {
      auto r = cell.step(xs[static_cast<std::size_t>(t)], s);
      total += coef[static_cast<std::size_t>(t)] * r.output;
      s = std::move(r.next);
      caches.push_back(std::move(r.cache));
    }
    total += u.dot(s.hidden);
    if (backward) {
      RecurrentState d{u, Vector::Zero(4)};
      for (int t = steps - 1; t >= 0; --t) {
        d = cell.backward_step(caches[static_cast<std::size_t>(t)], coef[static_cast<std::size_t>(t)], d)
                .second;
      }
    }
    return total;
  };
  return grad_check(loss, cell.params(), tol, 1e-6).max_relative_error;
}

double mixer_case(std::uint64_t seed, double tol) {
  Rng rng(seed);
  MonotonicMixer mixer("mixer", 3, 5, 4, rng);
  const Matrix q = random_matrix(4, 3, rng);
  const Matrix c = random_matrix(4, 5, rng);
  const Vector w = random_matrix(4, 1, rng);
  auto loss = [&](bool backward) {
    MixerCache cache;
    const Vector y = mixer.forward(q, c, backward ? &cache : nullptr);
    if (backward) mixer.backward(cache, w);
    return y.dot(w);
  };
  double worst = grad_check(loss, mixer.params(), tol, 1e-6).max_relative_error;
  // Gradient with respect to the agent values themselves.
  MixerCache cache;
  mixer.forward(q, c, &cache);
  const Matrix dq = mixer.backward(cache, w);
  zero_grad(mixer.params());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    Matrix up = q, down = q;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    const double numeric = (mixer.forward(up, c).dot(w) - mixer.forward(down, c).dot(w)) / 2e-6;
    const double a = dq.data()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
  }
  return worst;
}

double reward_loss_case(std::uint64_t seed, double tol) {
  Rng rng(seed);
  RewardModel model(3, 4, rng);
  std::vector<std::vector<Vector>> episodes(3);
  std::vector<double> targets;
  for (auto& ep : episodes) {
    const int len = 2 + static_cast<int>(rng() % 4);
    for (int t = 0; t < len; ++t) ep.push_back(random_matrix(3, 1, rng));
    targets.push_back(4.0 * uniform01(rng));
  }
  auto loss = [&](bool backward) {
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(episodes.size());
    for (std::size_t b = 0; b < episodes.size(); ++b) {
      total += model.episode_loss(episodes[b], targets[b], backward, scale);
    }
    return total * scale;
  };
  return grad_check(loss, model.params(), tol, 1e-6).max_relative_error;
}

}  // namespace

std::vector<GradSuiteReport> run_gradient_suite(int seeds, double tolerance) {
  using Case = double (*)(std::uint64_t, double);
  const std::vector<std::pair<std::string, Case>> cases = {
      {"mlp", mlp_case},
      {"lstm_unroll", lstm_case},
      {"mixer", mixer_case},
      {"reward_model_loss", reward_loss_case},
  };
  std::vector<GradSuiteReport> out;
  for (const auto& [name, fn] : cases) {
    GradSuiteReport r;
    r.component = name;
    r.seeds = seeds;
    for (int s = 1; s <= seeds; ++s) {
      r.max_relative_error = std::max(r.max_relative_error, fn(static_cast<std::uint64_t>(s), tolerance));
    }
    r.passed = std::isfinite(r.max_relative_error) && r.max_relative_error < tolerance;
    out.push_back(r);
  }
  return out;
}

std::vector<std::uint64_t> oracle_instance_seeds() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(1000 + s);
  return seeds;
}

std::vector<TabularMDP> load_oracle_fixtures(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DependencyError("missing oracle fixture directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("instance_", 0) == 0 && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TabularMDP> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    out.push_back(read_tabular(in));
  }
  return out;
}

}  // namespace nalab
