#include "seqdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace seqdiff {

namespace {
void check_unit_interval(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error(std::string(what) + " outside [0, 1]");
    }
}
}  // namespace

NoiseSchedule NoiseSchedule::parse(const std::string& name) {
    if (name == "linear") return {Kind::linear};
    if (name == "sqrt") return {Kind::sqrt};
    throw std::invalid_argument("unknown schedule: " + name);
}

double NoiseSchedule::sigma(double t) const {
    check_unit_interval(t, "t");
    return kind == Kind::linear ? t : std::pow(t, 0.25);
}

double NoiseSchedule::alpha(double t) const {
    double s = sigma(t);
    // max() absorbs rounding at t = 1 where 1 - s^2 can go slightly negative.
    return std::sqrt(std::max(0.0, 1.0 - s * s));
}

double NoiseSchedule::sigma_inverse(double s) const {
    check_unit_interval(s, "sigma");
    return kind == Kind::linear ? s : s * s * s * s;
}

double NoiseSchedule::sigma_prime(double t) const {
    check_unit_interval(t, "t");
    if (kind == Kind::linear) return 1.0;
    if (t == 0.0) throw std::domain_error("sigma'(0) diverges for sqrt schedule");
    return 0.25 * std::pow(t, -0.75);
}

double NoiseSchedule::beta(double t) const {
    double s = sigma(t);
    double denom = 1.0 - s * s;
    if (denom <= 0.0) throw std::domain_error("beta(t) diverges at sigma = 1");
    return 2.0 * s * sigma_prime(t) / denom;
}

double effective_weight(const NoiseSchedule& from, const NoiseSchedule& to,
                        double sigma_value) {
    if (!(sigma_value > 0.0 && sigma_value < 1.0)) {
        throw std::domain_error("effective_weight requires sigma in (0, 1)");
    }
    // dt/dsigma = 1 / sigma'(sigma_inverse(sigma)).
    auto dt_dsigma = [&](const NoiseSchedule& sch) {
        double t = sch.sigma_inverse(sigma_value);
        return 1.0 / sch.sigma_prime(t);
    };
    return dt_dsigma(from) / dt_dsigma(to);
}

double ClippedTimeSampler::sample() {
    return rng_.uniform(t_min_, 1.0);
}

void ClippedTimeSampler::set_t_min(double t_min) {
    if (!(t_min >= 0.0 && t_min < 1.0)) {
        throw std::domain_error("t_min outside [0, 1)");
    }
    t_min_ = t_min;
}

}  // namespace seqdiff
