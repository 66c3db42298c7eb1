#pragma once

#include "dncl/data.hpp"
#include "dncl/expr.hpp"

namespace dncl::fit {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A decoded skeleton with free constant slots (the fit-flagged Const nodes,
// in pre-order) and their decoder-provided initial values.
struct FitProblem {
    expr::ExprPtr skeleton;
    std::vector<double> init;
    const data::PointSet* points = nullptr;
};

FitProblem make_problem(const expr::ExprPtr& decoded, const data::PointSet& points);

struct RefineResult {
    std::vector<double> constants;
    double mse = 0.0;          // never above the decoder-initialized mse
    double initial_mse = 0.0;
    int64_t valid_points = 0;
};

// BFGS on the mean squared error over valid points; gradients by central
// differences with step 1e-6*(1+|c|). First restart starts from init, the
// others perturb it by N(1, 0.1^2) factors. Deterministic given seed.
// Throws when every restart only produces non-finite objectives.
RefineResult refine(const FitProblem& problem, int max_iter = 200, int restarts = 4,
                    uint64_t seed = 0);

// Clone of the skeleton with the given constants substituted into the free
// slots.
expr::ExprPtr with_constants(const expr::ExprPtr& skeleton, const std::vector<double>& constants);

struct Selection {
    expr::ExprPtr tree;
    double r2_fit = 0.0;
    int beam_rank = -1;
};

// Refine every candidate and keep the best R^2 on the fitting data;
// ties (within 1e-9) break toward lower complexity, then earlier rank.
// Throws when no candidate materializes.
Selection select_best(const std::vector<expr::TokenSequence>& beams,
                      const data::PointSet& fit_points, uint64_t seed);

} // namespace dncl::fit
