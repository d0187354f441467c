#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "miso/harness.hpp"

namespace miso {

inline constexpr std::string_view kCsvHeader =
    "algo,tau,multiplier,seed,k,grad_evals,epochs,dist_sq_ratio,subopt,grad_norm_sq,lyapunov,wall_ns";

/// Shortest decimal form that parses back to the same double ("nan" and
/// "inf" for non-finite values).
std::string format_double(double v);

/// One row per trace row, runs in RunKey order.
void write_csv(const std::vector<RunResult>& runs, std::ostream& out);
/// Per-run summary (constants, stepsize, epochs to target, x^a index) and
/// the multiplier selections.
void write_summary(const ExperimentResult& result, std::ostream& out);
/// Log-scale dist_sq_ratio against epochs, one path per run, 960 x 600.
void write_svg(const std::vector<RunResult>& runs, std::ostream& out, const std::string& title = "");

void write_file(const std::string& path, const std::string& contents);

}  // namespace miso
