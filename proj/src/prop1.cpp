#include "csober/prop1.hpp"

#include <cmath>

#include "json.hpp"

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

Prop1InstanceReport run_instance(const Prop1Config& cfg, int trials, Rng rng) {
    const int N = cfg.num_points;
    const int n = cfg.batch_size;
    const int M = cfg.nystrom_points;

    std::vector<Point> X;
    X.reserve(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd x(cfg.dim);
        for (int d = 0; d < cfg.dim; ++d) x(d) = rng.uniform();
        X.push_back(make_continuous(std::move(x)));
    }
    const KernelSpec kernel = rbf_kernel(cfg.dim, cfg.kernel_lengthscale, 1.0);

    EmpiricalMeasure measure;
    measure.points = X;
    measure.weights.resize(N);
    for (int i = 0; i < N; ++i) measure.weights(i) = rng.uniform(0.2, 1.0);
    measure.weights /= measure.weights.sum();

    Eigen::VectorXd g(N), q(N);
    for (int i = 0; i < N; ++i) g(i) = rng.uniform();
    for (int i = 0; i < N; ++i) q(i) = rng.uniform(0.05, 1.0);

    const double eps_lp = cfg.eps_lp >= 0.0
                              ? cfg.eps_lp
                              : std::pow(10.0, rng.uniform(-6.0, -1.0));

    const std::vector<Point> landmarks = deweighted_resample(measure, M, rng.next_u64());
    const NystromBasis basis = nystrom_basis(kernel, landmarks, n);
    const std::span<const Point> rec(measure.points);
    const Eigen::MatrixXd cross = basis.cov(basis.points, rec);
    const Eigen::VectorXd diag = gram_diagonal(kernel, rec);
    const double eps_nys = nystrom_error(basis, cross, diag);
    const double k_max = std::sqrt(diag.maxCoeff());

    const LpProblem lp = build_lp(measure, basis, test_function_matrix(basis, cross), g, q, eps_lp);
    const LpResult solved = solve_lp(lp);
    const BatchProposal bp = extract_batch(solved, lp, measure, eps_nys, k_max);

    Prop1InstanceReport report;
    report.eps_lp = eps_lp;
    report.eps_nys = eps_nys;
    report.eps_rej = 1.0 - measure.weights.dot(q);
    report.k_max = k_max;
    report.batch_points = static_cast<int>(bp.indices.size());
    report.reward_bound = measure.weights.dot(lp.reward);

    // RKHS test functions f = sum_i a_i K(., z_i) with |f|^2 = a K(Z,Z) a
    struct TestFn {
        Eigen::VectorXd values_rec;
        Eigen::VectorXd values_batch;
        double norm;
        double reference;  // w_rec . f(X_rec)
    };
    std::vector<TestFn> fns;
    for (int t = 0; t < cfg.num_test_functions; ++t) {
        constexpr int kCentres = 5;
        std::vector<Point> Z;
        for (int c = 0; c < kCentres; ++c) {
            Eigen::VectorXd z(cfg.dim);
            for (int d = 0; d < cfg.dim; ++d) z(d) = rng.uniform();
            Z.push_back(make_continuous(std::move(z)));
        }
        Eigen::VectorXd a(kCentres);
        for (int c = 0; c < kCentres; ++c) a(c) = rng.normal();
        TestFn fn;
        fn.norm = std::sqrt(a.dot(gram(kernel, Z, Z) * a));
        fn.values_rec = gram(kernel, std::span<const Point>(measure.points),
                             std::span<const Point>(Z)) *
                        a;
        fn.values_batch =
            gram(kernel, std::span<const Point>(bp.points), std::span<const Point>(Z)) * a;
        fn.reference = measure.weights.dot(fn.values_rec);
        fns.push_back(std::move(fn));
    }

    Eigen::VectorXd q_batch(bp.weights.size()), g_batch(bp.weights.size());
    for (Eigen::Index i = 0; i < bp.weights.size(); ++i) {
        q_batch(i) = q(bp.indices[static_cast<std::size_t>(i)]);
        g_batch(i) = g(bp.indices[static_cast<std::size_t>(i)]);
    }

    // acceptance draws use the truncated weights, matching the bound setting
    double reward_sum = 0.0, reward_sq = 0.0;
    std::vector<double> err_sum(fns.size(), 0.0), err_sq(fns.size(), 0.0);
    for (int trial = 0; trial < trials; ++trial) {
        double reward = 0.0;
        Eigen::VectorXd integral = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fns.size()));
        for (Eigen::Index i = 0; i < bp.weights.size(); ++i) {
            if (rng.uniform() < q_batch(i)) {
                reward += bp.weights(i) * g_batch(i);
                for (std::size_t f = 0; f < fns.size(); ++f)
                    integral(static_cast<Eigen::Index>(f)) +=
                        bp.weights(i) * fns[f].values_batch(i);
            }
        }
        reward_sum += reward;
        reward_sq += reward * reward;
        for (std::size_t f = 0; f < fns.size(); ++f) {
            const double err = std::abs(integral(static_cast<Eigen::Index>(f)) - fns[f].reference);
            err_sum[f] += err;
            err_sq[f] += err * err;
        }
    }

    const double inv_t = 1.0 / static_cast<double>(trials);
    auto std_error = [trials, inv_t](double sum, double sq) {
        const double mean = sum * inv_t;
        const double var = std::max(sq * inv_t - mean * mean, 0.0);
        return std::sqrt(var / static_cast<double>(trials));
    };

    report.reward_mc_mean = reward_sum * inv_t;
    report.reward_mc_std_error = std_error(reward_sum, reward_sq);
    report.reward_violated =
        report.reward_mc_mean + 3.0 * report.reward_mc_std_error < report.reward_bound;

    const double certificate = report.eps_rej * k_max + 2.0 * eps_nys + eps_lp;
    for (std::size_t f = 0; f < fns.size(); ++f) {
        Prop1FunctionCheck check;
        check.bound = certificate * fns[f].norm;
        check.mc_mean_abs_error = err_sum[f] * inv_t;
        check.mc_std_error = std_error(err_sum[f], err_sq[f]);
        check.violated = check.mc_mean_abs_error - 3.0 * check.mc_std_error > check.bound;
        report.functions.push_back(check);
    }
    return report;
}

}  // namespace

Prop1Report verify_prop1(const Prop1Config& config, int trials, std::uint64_t seed) {
    if (trials < 100) throw DomainError("verify_prop1: need at least 100 trials");
    Prop1Report report;
    report.trials = trials;
    for (int k = 0; k < config.instances; ++k) {
        Rng rng(split_seed(seed, 0xa11ceull + static_cast<std::uint64_t>(k)));
        Prop1InstanceReport inst = run_instance(config, trials, std::move(rng));
        if (inst.reward_violated) ++report.total_reward_violations;
        for (const Prop1FunctionCheck& fn : inst.functions)
            if (fn.violated) ++report.total_integration_violations;
        report.instances.push_back(std::move(inst));
    }
    return report;
}

std::string to_json_string(const Prop1Report& report) {
    nlohmann::json j;
    j["trials"] = report.trials;
    j["total_reward_violations"] = report.total_reward_violations;
    j["total_integration_violations"] = report.total_integration_violations;
    j["clean"] = report.clean();
    nlohmann::json instances = nlohmann::json::array();
    for (const Prop1InstanceReport& inst : report.instances) {
        nlohmann::json ji;
        ji["eps_lp"] = inst.eps_lp;
        ji["eps_nys"] = inst.eps_nys;
        ji["eps_rej"] = inst.eps_rej;
        ji["k_max"] = inst.k_max;
        ji["batch_points"] = inst.batch_points;
        ji["reward_bound"] = inst.reward_bound;
        ji["reward_mc_mean"] = inst.reward_mc_mean;
        ji["reward_mc_std_error"] = inst.reward_mc_std_error;
        ji["reward_violated"] = inst.reward_violated;
        ji["reward_margin"] = inst.reward_mc_mean - inst.reward_bound;
        nlohmann::json fns = nlohmann::json::array();
        for (const Prop1FunctionCheck& fn : inst.functions) {
            fns.push_back({{"bound", fn.bound},
                           {"mc_mean_abs_error", fn.mc_mean_abs_error},
                           {"mc_std_error", fn.mc_std_error},
                           {"margin", fn.bound - fn.mc_mean_abs_error},
                           {"violated", fn.violated}});
        }
        ji["functions"] = std::move(fns);
        instances.push_back(std::move(ji));
    }
    j["instances"] = std::move(instances);
    return j.dump(2);
}

}  // namespace csober
