#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace jch {

struct SimplexOptions {
    int max_evaluations = 4000;
    double f_tolerance = 1e-12;   // stop when the simplex value spread is below this
    double x_tolerance = 1e-10;   // ... and its extent is below this
    double initial_step = 0.1;    // per-coordinate size of the starting simplex
    int restarts = 1;             // fresh simplices around the best point after convergence
};

struct SimplexResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    std::vector<double> history;  // best value after every iteration, non-increasing
};

/// Derivative-free minimisation with the standard Nelder-Mead moves
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd start,
                                 const SimplexOptions& opt = {})
{
    const Eigen::Index n = start.size();
    SimplexResult result;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };

    result.x = start;
    result.value = eval(start);
    result.history.push_back(result.value);

    for (int round = 0; round <= opt.restarts; ++round) {
        std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), result.x);
        std::vector<double> vals(static_cast<std::size_t>(n + 1), result.value);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& p = pts[static_cast<std::size_t>(i + 1)];
            p[i] += opt.initial_step;
            vals[static_cast<std::size_t>(i + 1)] = eval(p);
        }
        std::vector<std::size_t> order(pts.size());

        while (result.evaluations < opt.max_evaluations) {
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
            const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

            if (vals[best] < result.value) {
                result.value = vals[best];
                result.x = pts[best];
            }
            result.history.push_back(result.value);

            double extent = 0.0;
            for (const auto& p : pts) extent = std::max(extent, (p - pts[best]).lpNorm<Eigen::Infinity>());
            if (vals[worst] - vals[best] <= opt.f_tolerance && extent <= opt.x_tolerance) break;

            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (std::size_t k = 0; k < pts.size(); ++k)
                if (k != worst) centroid += pts[k];
            centroid /= static_cast<double>(n);

            const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
            const double fr = eval(reflected);
            if (fr < vals[best]) {
                const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
                const double fe = eval(expanded);
                if (fe < fr) {
                    pts[worst] = expanded;
                    vals[worst] = fe;
                } else {
                    pts[worst] = reflected;
                    vals[worst] = fr;
                }
                continue;
            }
            if (fr < vals[second]) {
                pts[worst] = reflected;
                vals[worst] = fr;
                continue;
            }
            const bool outside = fr < vals[worst];
            const Eigen::VectorXd contracted =
                outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                        : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
            const double fc = eval(contracted);
            if (fc < (outside ? fr : vals[worst])) {
                pts[worst] = contracted;
                vals[worst] = fc;
                continue;
            }
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (k == best) continue;
                pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
                vals[k] = eval(pts[k]);
            }
        }
        for (std::size_t k = 0; k < pts.size(); ++k)
            if (vals[k] < result.value) {
                result.value = vals[k];
                result.x = pts[k];
            }
        result.history.push_back(result.value);
        if (result.evaluations >= opt.max_evaluations) break;
    }
    return result;
}

}  // namespace jch
