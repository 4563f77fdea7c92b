#pragma once

#include <cstdint>
#include <string>

#include "ltcl/objectives.hpp"

namespace ltcl {

enum class LossTerm { kMce, kKd, kProto, kTotal };

std::string to_string(LossTerm term);

/// A small random student/teacher pair with batches, a fixed dropout mask and
/// a random class scope, used to exercise the analytic gradients.
struct GradCheckProblem {
  Model model;
  TeacherSnapshot teacher;
  Batch incoming;
  Batch buffer;
  DropoutMask mask;
  LossConfig config;
  ClassScope scope;
};

GradCheckProblem random_gradcheck_problem(std::uint64_t seed, HeadKind head = HeadKind::kCosine);

/// Central-difference check of one loss term on one random problem.
GradCheckReport check_loss_term(LossTerm term, const GradCheckProblem& problem,
                                double epsilon = 1e-5);

}  // namespace ltcl
