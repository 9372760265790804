#pragma once

#include <string>
#include <string_view>

#include "perfpred/gmm.hpp"

namespace perfpred {

inline constexpr int kModelFormatVersion = 1;

/// JSON document:
///   {version, d_q, d_r, parametrization, K, weights[], means[][],
///    covariances[][][], operating_point{threshold,label},
///    fit_meta{loglik,bic,n_iter,seed}}
/// Doubles are written with 17 significant digits, so reading a model back
/// reproduces every parameter bit for bit.
std::string model_to_json(const MixtureModel& model);

/// Throws ParseError on malformed documents and InvalidArgument when the
/// decoded model violates its invariants.
MixtureModel model_from_json(std::string_view text);

void save_model(const MixtureModel& model, const std::string& path);
MixtureModel load_model(const std::string& path);

}  // namespace perfpred
