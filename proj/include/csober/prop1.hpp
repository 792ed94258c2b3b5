#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csober/quadrature.hpp"

namespace csober {

/// Random-instance generator settings for the recombination bound checks.
struct Prop1Config {
    int instances = 20;
    int num_points = 200;      // N
    int batch_size = 10;       // n
    int nystrom_points = 50;   // M
    int num_test_functions = 10;
    int dim = 2;
    double eps_lp = 1e-2;      // negative draws a random tolerance per instance
    double kernel_lengthscale = 0.35;
};

struct Prop1FunctionCheck {
    double bound = 0.0;              // (eps_rej K_max + 2 eps_nys + eps_lp) |f|
    double mc_mean_abs_error = 0.0;
    double mc_std_error = 0.0;
    bool violated = false;
};

struct Prop1InstanceReport {
    double eps_lp = 0.0;
    double eps_nys = 0.0;
    double eps_rej = 0.0;
    double k_max = 0.0;
    int batch_points = 0;
    double reward_bound = 0.0;       // w_rec . (g o q)
    double reward_mc_mean = 0.0;
    double reward_mc_std_error = 0.0;
    bool reward_violated = false;
    std::vector<Prop1FunctionCheck> functions;
};

struct Prop1Report {
    int trials = 0;
    std::vector<Prop1InstanceReport> instances;
    int total_reward_violations = 0;      // expected-reward lower bound
    int total_integration_violations = 0; // RKHS integration-error bound

    bool clean() const {
        return total_reward_violations == 0 && total_integration_violations == 0;
    }
};

/// Monte-Carlo check of both recombination guarantees on random instances:
/// acceptance draws must reach the expected-reward lower bound, and for
/// random RKHS test functions with exactly computed norms the mean absolute
/// integration error must stay within the certificate. Violations are
/// counted beyond three Monte-Carlo standard errors.
Prop1Report verify_prop1(const Prop1Config& config, int trials, std::uint64_t seed);

std::string to_json_string(const Prop1Report& report);

}  // namespace csober
