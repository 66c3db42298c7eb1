#include "dncl/refine.hpp"

#include "dncl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dncl::fit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mutable view of a skeleton: writing to slots and re-evaluating is the
// whole objective.
struct Objective {
    std::shared_ptr<expr::Expr> tree;
    std::vector<double*> slots;
    const data::PointSet* pts;

    double operator()(const std::vector<double>& c, int64_t* valid_out = nullptr) const {
        for (size_t i = 0; i < slots.size(); ++i) *slots[i] = c[i];
        expr::EvalResult r = expr::evaluate(*tree, pts->X.data(), pts->n, pts->d);
        double sum = 0.0;
        int64_t valid = 0;
        for (int64_t i = 0; i < pts->n; ++i) {
            if (!r.valid[size_t(i)]) continue;
            const double dlt = r.y[size_t(i)] - pts->y[size_t(i)];
            sum += dlt * dlt;
            ++valid;
        }
        if (valid_out) *valid_out = valid;
        if (valid == 0) return kInf;
        return sum / double(valid);
    }
};

void numeric_grad(const Objective& f, const std::vector<double>& c, std::vector<double>& g) {
    std::vector<double> probe(c);
    for (size_t i = 0; i < c.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(c[i]));
        probe[i] = c[i] + h;
        const double fp = f(probe);
        probe[i] = c[i] - h;
        const double fm = f(probe);
        probe[i] = c[i];
        g[i] = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h) : 0.0;
    }
}

// Plain BFGS with Armijo backtracking on the inverse-Hessian approximation.
double bfgs(const Objective& f, std::vector<double>& x, int max_iter) {
    const size_t k = x.size();
    double fx = f(x);
    if (!std::isfinite(fx)) return fx;
    if (k == 0 || max_iter <= 0) return fx;

    std::vector<double> H(k * k, 0.0);
    for (size_t i = 0; i < k; ++i) H[i * k + i] = 1.0;
    std::vector<double> g(k), gn(k), p(k), xn(k), s(k), y(k), Hy(k);
    numeric_grad(f, x, g);

    for (int iter = 0; iter < max_iter; ++iter) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax < 1e-12) break;

        for (size_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (size_t j = 0; j < k; ++j) acc += H[i * k + j] * g[j];
            p[i] = -acc;
        }
        double slope = 0.0;
        for (size_t i = 0; i < k; ++i) slope += p[i] * g[i];
        if (slope >= 0.0) { // reset to steepest descent
            for (size_t i = 0; i < k; ++i) {
                std::fill(H.begin() + ptrdiff_t(i * k), H.begin() + ptrdiff_t((i + 1) * k), 0.0);
                H[i * k + i] = 1.0;
                p[i] = -g[i];
            }
            slope = 0.0;
            for (size_t i = 0; i < k; ++i) slope -= g[i] * g[i];
            if (slope == 0.0) break;
        }

        double step = 1.0;
        double fn = kInf;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (size_t i = 0; i < k; ++i) xn[i] = x[i] + step * p[i];
            fn = f(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;

        numeric_grad(f, xn, gn);
        double sy = 0.0;
        for (size_t i = 0; i < k; ++i) {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
            sy += s[i] * y[i];
        }
        x = xn;
        fx = fn;
        if (sy > 1e-12) {
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            const double rho = 1.0 / sy;
            for (size_t i = 0; i < k; ++i) {
                double acc = 0.0;
                for (size_t j = 0; j < k; ++j) acc += H[i * k + j] * y[j];
                Hy[i] = acc;
            }
            double yHy = 0.0;
            for (size_t i = 0; i < k; ++i) yHy += y[i] * Hy[i];
            for (size_t i = 0; i < k; ++i)
                for (size_t j = 0; j < k; ++j)
                    H[i * k + j] += rho * rho * (sy + yHy) * s[i] * s[j] -
                                    rho * (Hy[i] * s[j] + s[i] * Hy[j]);
        }
        g = gn;
    }
    return fx;
}

} // namespace

FitProblem make_problem(const expr::ExprPtr& decoded, const data::PointSet& points) {
    FitProblem p;
    std::vector<double*> slots;
    std::shared_ptr<expr::Expr> copy = expr::clone_mutable(*decoded, &slots);
    p.skeleton = copy;
    for (double* s : slots) p.init.push_back(*s);
    p.points = &points;
    return p;
}

expr::ExprPtr with_constants(const expr::ExprPtr& skeleton, const std::vector<double>& constants) {
    std::vector<double*> slots;
    std::shared_ptr<expr::Expr> copy = expr::clone_mutable(*skeleton, &slots);
    if (slots.size() != constants.size())
        throw FitError("constant count mismatch: " + std::to_string(slots.size()) + " slots, " +
                       std::to_string(constants.size()) + " values");
    for (size_t i = 0; i < slots.size(); ++i) *slots[i] = constants[i];
    return copy;
}

RefineResult refine(const FitProblem& problem, int max_iter, int restarts, uint64_t seed) {
    if (!problem.points || problem.points->n < 1) throw FitError("refine needs data points");

    Objective obj;
    std::vector<double*> slots;
    obj.tree = expr::clone_mutable(*problem.skeleton, &slots);
    obj.slots = slots;
    obj.pts = problem.points;
    if (slots.size() != problem.init.size())
        throw FitError("init length does not match the skeleton's free slots");

    RefineResult result;
    result.initial_mse = obj(problem.init, &result.valid_points);
    if (result.valid_points == 0 && problem.init.empty())
        throw FitError("skeleton invalid on every data point");

    result.constants = problem.init;
    result.mse = result.initial_mse;

    if (problem.init.empty()) return result; // nothing to optimize

    bool any_finite = std::isfinite(result.initial_mse);
    for (int r = 0; r < restarts; ++r) {
        std::vector<double> x = problem.init;
        if (r > 0) {
            Rng rng = Rng::derive(seed, uint64_t(r));
            for (double& v : x) v *= rng.normal(1.0, 0.1);
        }
        const double fx = bfgs(obj, x, max_iter);
        if (!std::isfinite(fx)) continue;
        any_finite = true;
        if (fx < result.mse || !std::isfinite(result.mse)) {
            result.mse = fx;
            result.constants = x;
        }
    }
    if (!any_finite) throw FitError("all restarts produced non-finite objectives");

    // contract: never worse than the decoder initialization
    if (std::isfinite(result.initial_mse) && result.mse > result.initial_mse) {
        result.mse = result.initial_mse;
        result.constants = problem.init;
    }
    obj(result.constants, &result.valid_points);
    return result;
}

Selection select_best(const std::vector<expr::TokenSequence>& beams,
                      const data::PointSet& fit_points, uint64_t seed) {
    Selection best;
    bool have = false;
    double best_r2 = -kInf;
    int best_complexity = 0;

    for (size_t rank = 0; rank < beams.size(); ++rank) {
        expr::ExprPtr decoded;
        try {
            decoded = expr::from_preorder(beams[rank]);
        } catch (const expr::ExprError&) {
            continue;
        }
        if (expr::max_var_index(*decoded) >= fit_points.d) continue;

        FitProblem fp = make_problem(decoded, fit_points);
        RefineResult rr;
        try {
            rr = refine(fp, 200, 4, seed + rank);
        } catch (const FitError&) {
            continue;
        }
        expr::ExprPtr tree = with_constants(fp.skeleton, rr.constants);

        expr::EvalResult ev = expr::evaluate(*tree, fit_points.X.data(), fit_points.n,
                                             fit_points.d);
        std::vector<double> yv, pv;
        for (int64_t i = 0; i < fit_points.n; ++i)
            if (ev.valid[size_t(i)]) {
                yv.push_back(fit_points.y[size_t(i)]);
                pv.push_back(ev.y[size_t(i)]);
            }
        if (yv.size() < 2) continue;
        bench::R2 r2 = bench::r_squared(yv, pv);
        if (!r2.defined) continue;

        const int cx = expr::complexity(*tree, false);
        const bool better =
            !have || r2.value > best_r2 + 1e-9 ||
            (std::abs(r2.value - best_r2) <= 1e-9 && cx < best_complexity);
        if (better) {
            have = true;
            best_r2 = r2.value;
            best_complexity = cx;
            best.tree = tree;
            best.r2_fit = r2.value;
            best.beam_rank = int(rank);
        }
    }
    if (!have) throw FitError("no beam produced a usable expression");
    return best;
}

} // namespace dncl::fit
