#pragma once

#include <string>
#include <vector>

namespace pcnet::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;  // one-line summary of measurements and tolerances
};

// Each check is self-contained: it builds its own fixtures from fixed seeds,
// runs the relevant oracles, and reports a single pass/fail verdict with the
// measured numbers in `detail`.
CheckResult check_equivalence();   // forward pass of discriminative nets vs plain FNN
CheckResult check_zil();           // zero-divergence schedule reproduces backprop updates
CheckResult check_gradients();     // analytic gradients vs central finite differences
CheckResult check_descent();       // inference never increases the energy
CheckResult check_counts();        // operation counts match closed forms; scaling slopes
CheckResult check_reduction();     // graphs with layered masks reproduce layered nets
CheckResult check_em();            // EM alternation never increases the marginal NLL
CheckResult check_vfe();           // Gaussian variational free energy at the Hessian inverse
CheckResult check_learning();      // XOR trains to 100% accuracy
CheckResult check_determinism();   // parallel bitwise equality; byte-identical metrics

const std::vector<std::string>& suite_names();

// name is one of suite_names() or "all".
std::vector<CheckResult> run_suite(const std::string& name);

}  // namespace pcnet::verify
