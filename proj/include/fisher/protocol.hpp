#pragma once

#include "fisher/adm.hpp"
#include "fisher/market.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fisher {

/// Typed messages exchanged between the coordinator and agent workers.
/// Wire form: 4-byte big-endian length followed by UTF-8 JSON with a "type"
/// discriminator and the field names below.
struct PriceAnnounce {
  int round = 0;
  Vec p;
};
struct DemandReport {
  int round = 0;
  int agent_id = 0;
  Vec x_i;
};
struct BaselineAnnounce {
  int round = 0;
  Vec y_i;
};
struct RebateNote {
  int round = 0;
  int agent_id = 0;
  double amount = 0.0;
};
struct Terminate {
  std::string reason;
};

using ProtocolMessage =
    std::variant<PriceAnnounce, DemandReport, BaselineAnnounce, RebateNote,
                 Terminate>;

std::string encode_message(const ProtocolMessage& msg);  // JSON body
ProtocolMessage decode_message(const std::string& body);
std::string encode_frame(const ProtocolMessage& msg);  // length-prefixed

/// Per-round record: the broadcast price, all messages in arrival order and
/// a digest of the post-round state (FNV-1a over x, y, p, r bytes). Replay
/// rebuilds the state from the DemandReports alone and must reproduce every
/// digest and the final state exactly.
struct RoundLog {
  struct Round {
    int round = 0;
    std::vector<ProtocolMessage> messages;
    std::uint64_t state_digest = 0;
  };
  std::vector<Round> rounds;
  std::optional<std::string> terminated;  // reason, when the run was cut short
};

struct ProtocolOptions {
  int worker_count = 1;
  bool socket_transport = false;  // loopback TCP carrying the same frames
  bool emit_rebates = false;      // ADMM variants only
  int fail_agent = -1;            // fault injection: this agent dies ...
  int fail_round = -1;            // ... at the start of this round
};

struct ProtocolResult {
  ConvergenceTrace trace;
  AdmState state;
  RoundLog log;
};

/// Runs the tatonnement as a coordinator plus n agent roles executed on
/// `worker_count` concurrent workers. Aggregation is by agent index, so the
/// trace is identical to run_adm on the same inputs regardless of worker
/// scheduling (bit for bit, including over the socket transport).
ProtocolResult run_distributed(const Market& market, const AdmConfig& config,
                               const ProtocolOptions& options = {});

std::uint64_t state_digest(const AdmState& state);

/// Rebuilds the run from the log's DemandReports.
AdmState replay_round_log(const Market& market, const AdmConfig& config,
                          const RoundLog& log);

/// Loss an agent must be compensated for when asked to optimize the
/// proximally perturbed objective instead of its own:
/// [w log u(xu) - p.xu] - [w log u(xp) - p.xp] with xu optimal unperturbed.
double rebate_amount(const Agent& agent, const Vec& p, const Vec& y_i,
                     double beta, const Vec& x_unperturbed,
                     const Vec& x_perturbed);

}  // namespace fisher
