#pragma once

#include "fisher/adm.hpp"
#include "fisher/bpsop.hpp"

#include <string>

namespace fisher {

/// CSV with columns iter, p_1..p_m, res_primal, res_clearing, res_dual,
/// res_violation and, when the trace carries them, lambda_1..lambda_n.
/// Numbers print with round-trip precision so artifacts are byte-stable.
std::string trace_to_csv(const ConvergenceTrace& trace);
std::string trace_to_json(const ConvergenceTrace& trace, int indent = 2);

/// CSV with columns iter, residual.
std::string fixed_point_to_csv(const FixedPointResult& result);
std::string fixed_point_to_json(const FixedPointResult& result, int indent = 2);

void write_file(const std::string& path, const std::string& content);

}  // namespace fisher
