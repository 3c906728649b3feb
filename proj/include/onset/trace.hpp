#pragma once

#include <string>
#include <vector>

namespace onset {

/// Time series of the mean velocity (and optionally acceleration and
/// diffraction-order populations), in recoil units: t in t_r, v in v_r,
/// a in v_r/t_r (so a force F in E_r k_r gives a = F for a bare particle).
struct VelocityTrace {
    std::vector<double> t;
    std::vector<double> v;
    std::vector<double> a;                    // empty when not available
    std::vector<int> peak_orders;             // n of the windows centred at 2n hbar k_r
    std::vector<std::vector<double>> peaks;   // [sample][order]
    bool guard_violated = false;              // first-order validity guard tripped
    double guard_ratio = 0.0;                 // max |F x_nN / E_nN| seen
    std::vector<std::string> notes;

    std::size_t size() const { return t.size(); }
};

}  // namespace onset
