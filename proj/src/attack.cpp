#include "cadv/attack.hpp"

#include <cstring>

namespace cadv {

void assess(AttackResult& r, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> candidate,
            double eps, NormOrder p, ClassifierThreshold t)
{
    r.best.assign(candidate.begin(), candidate.end());
    r.g1 = model.predict_proba(candidate);
    r.g2 = distance(candidate, r.original, p);
    r.g3 = omega.total_penalty(candidate);
    r.misclassified = t(r.g1) == 0;
    r.constraints_ok = omega.satisfied(candidate);
    r.within_eps = r.g2 <= eps;
    r.success = r.misclassified && r.constraints_ok && r.within_eps;
}

std::uint64_t sample_seed(std::uint64_t seed, std::span<const double> sample)
{
    std::string bytes(sample.size() * sizeof(double), '\0');
    if (!sample.empty()) {
        std::memcpy(bytes.data(), sample.data(), bytes.size());
    }
    return mix_seed(seed, fnv1a(bytes));
}

} // namespace cadv
