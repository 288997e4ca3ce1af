#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "ouhedge/experiments.hpp"

using namespace ouhedge;

namespace {

bool report(const std::string& label, const std::vector<CheckResult>& parts) {
    bool ok = true;
    double seconds = 0.0;
    for (const auto& p : parts) {
        ok = ok && p.passed;
        seconds += p.seconds;
    }
    std::cout << (ok ? "PASS " : "FAIL ") << label << " (" << std::fixed << std::setprecision(1) << seconds
              << std::defaultfloat << " s)\n";
    for (const auto& p : parts) std::cout << "     " << p.name << ": " << p.detail << '\n';
    std::cout.flush();
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    SuiteOptions o;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--path-scale") o.path_scale = std::stod(argv[i + 1]);
        else if (flag == "--step-scale") o.step_scale = std::stod(argv[i + 1]);
        else if (flag == "--seed") o.seed = std::stoull(argv[i + 1]);
        else {
            std::cerr << "usage: acceptance [--path-scale x] [--step-scale x] [--seed n]\n";
            return 2;
        }
    }
    bool all = true;
    all &= report("1 closed-form identities", {check_closed_form_identities(o)});
    all &= report("2 figure endpoints", {check_figure_endpoints(o)});
    all &= report("3 variance-optimal martingale measure", check_vomm_martingale(o));
    all &= report("4 opportunity process cross-validation", {check_p_cross_validation(o)});
    all &= report("5 exact factor identity", {check_ou_identity(o)});
    all &= report("6 BSDE against Monte-Carlo oracle", check_bsde_oracle(o));
    all &= report("7 hedging error reproduction", {check_hedging_error(o)});
    all &= report("8 complete-market replication", {check_complete_market(o)});
    std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << '\n';
    return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
