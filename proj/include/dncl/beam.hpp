#pragma once

#include "dncl/data.hpp"
#include "dncl/model.hpp"

namespace dncl::infer {

struct InferError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Beam {
    expr::TokenSequence tokens;
    double logprob = 0.0;
    double score = 0.0; // logprob / length
};

// Autoregressive beam search with arity-validity masking: every returned
// sequence materializes through from_preorder. Sorted by score descending.
// d masks variable tokens the target dimension cannot use.
std::vector<Beam> beam_search(model::Model& m, const data::PointSet& ps, int beam_size, int d);

} // namespace dncl::infer
