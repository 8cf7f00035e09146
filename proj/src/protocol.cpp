#include "fisher/protocol.hpp"

#include "fisher/kernels.hpp"

#include <nlohmann/json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

namespace fisher {

namespace {

using nlohmann::json;

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec json_vec(const json& a) {
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

std::string encode_message(const ProtocolMessage& msg) {
  json doc;
  std::visit(
      [&doc](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PriceAnnounce>) {
          doc["type"] = "PriceAnnounce";
          doc["round"] = m.round;
          doc["p"] = vec_json(m.p);
        } else if constexpr (std::is_same_v<T, DemandReport>) {
          doc["type"] = "DemandReport";
          doc["round"] = m.round;
          doc["agent_id"] = m.agent_id;
          doc["x_i"] = vec_json(m.x_i);
        } else if constexpr (std::is_same_v<T, BaselineAnnounce>) {
          doc["type"] = "BaselineAnnounce";
          doc["round"] = m.round;
          doc["y_i"] = vec_json(m.y_i);
        } else if constexpr (std::is_same_v<T, RebateNote>) {
          doc["type"] = "RebateNote";
          doc["round"] = m.round;
          doc["agent_id"] = m.agent_id;
          doc["amount"] = m.amount;
        } else {
          doc["type"] = "Terminate";
          doc["reason"] = m.reason;
        }
      },
      msg);
  return doc.dump();
}

ProtocolMessage decode_message(const std::string& body) {
  json doc = json::parse(body);
  const std::string type = doc.at("type").get<std::string>();
  if (type == "PriceAnnounce")
    return PriceAnnounce{doc.at("round").get<int>(), json_vec(doc.at("p"))};
  if (type == "DemandReport")
    return DemandReport{doc.at("round").get<int>(), doc.at("agent_id").get<int>(),
                        json_vec(doc.at("x_i"))};
  if (type == "BaselineAnnounce")
    return BaselineAnnounce{doc.at("round").get<int>(), json_vec(doc.at("y_i"))};
  if (type == "RebateNote")
    return RebateNote{doc.at("round").get<int>(), doc.at("agent_id").get<int>(),
                      doc.at("amount").get<double>()};
  if (type == "Terminate") return Terminate{doc.at("reason").get<std::string>()};
  throw std::invalid_argument("decode_message: unknown type " + type);
}

std::string encode_frame(const ProtocolMessage& msg) {
  const std::string body = encode_message(msg);
  const std::uint32_t len = htonl(static_cast<std::uint32_t>(body.size()));
  std::string frame(4, '\0');
  std::memcpy(frame.data(), &len, 4);
  return frame + body;
}

std::uint64_t state_digest(const AdmState& state) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const double* data, long count) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data);
    for (long i = 0; i < count * static_cast<long>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  mix(state.x.data(), state.x.size());
  mix(state.y.data(), state.y.size());
  mix(state.p.data(), state.p.size());
  if (state.p_tilde.size() > 0) mix(state.p_tilde.data(), state.p_tilde.size());
  for (const Vec& r : state.r) mix(r.data(), r.size());
  return h;
}

namespace {

// ---------- transports ----------

struct Arrival {
  int agent = -1;
  std::optional<ProtocolMessage> msg;  // nullopt: the agent's channel closed
};

class InboxQueue {
 public:
  void push(ProtocolMessage m) {
    std::lock_guard<std::mutex> lk(mu_);
    q_.push_back(std::move(m));
    cv_.notify_one();
  }
  void close() {
    std::lock_guard<std::mutex> lk(mu_);
    closed_ = true;
    cv_.notify_all();
  }
  std::optional<ProtocolMessage> pop() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [this] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    ProtocolMessage m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ProtocolMessage> q_;
  bool closed_ = false;
};

class ArrivalQueue {
 public:
  void push(Arrival a) {
    std::lock_guard<std::mutex> lk(mu_);
    q_.push_back(std::move(a));
    cv_.notify_one();
  }
  Arrival pop() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [this] { return !q_.empty(); });
    Arrival a = std::move(q_.front());
    q_.pop_front();
    return a;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Arrival> q_;
};

// Agent-side endpoint: how one agent role talks to the coordinator.
struct AgentEndpoint {
  virtual ~AgentEndpoint() = default;
  virtual std::optional<ProtocolMessage> recv() = 0;
  virtual void send(const ProtocolMessage& m) = 0;
  virtual void die() = 0;  // abrupt failure (fault injection)
};

struct InProcessEndpoint final : AgentEndpoint {
  int agent;
  InboxQueue inbox;
  ArrivalQueue* out;
  std::optional<ProtocolMessage> recv() override { return inbox.pop(); }
  void send(const ProtocolMessage& m) override { out->push({agent, m}); }
  void die() override {
    inbox.close();
    out->push({agent, std::nullopt});
  }
};

bool write_all(int fd, const char* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::write(fd, data, len);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool read_all(int fd, char* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::read(fd, data, len);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool write_frame(int fd, const ProtocolMessage& m) {
  const std::string frame = encode_frame(m);
  return write_all(fd, frame.data(), frame.size());
}

std::optional<ProtocolMessage> read_frame(int fd) {
  char hdr[4];
  if (!read_all(fd, hdr, 4)) return std::nullopt;
  std::uint32_t len;
  std::memcpy(&len, hdr, 4);
  len = ntohl(len);
  std::string body(len, '\0');
  if (!read_all(fd, body.data(), len)) return std::nullopt;
  return decode_message(body);
}

struct SocketEndpoint final : AgentEndpoint {
  int fd = -1;
  std::optional<ProtocolMessage> recv() override { return read_frame(fd); }
  void send(const ProtocolMessage& m) override { write_frame(fd, m); }
  void die() override {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
    fd = -1;
  }
  ~SocketEndpoint() override {
    if (fd >= 0) ::close(fd);
  }
};

// ---------- agent role ----------

struct AgentRole {
  int id;
  const Agent* agent;
  AdmVariant variant;
  double beta;
  Vec r_local;
  AgentEndpoint* ep;
  int fail_round = -1;

  // Handles one round; returns false when the role is finished (terminate,
  // closed channel, or injected death).
  bool step() {
    auto m1 = ep->recv();
    if (!m1 || std::holds_alternative<Terminate>(*m1)) return false;
    const auto& price = std::get<PriceAnnounce>(*m1);
    auto m2 = ep->recv();
    if (!m2 || std::holds_alternative<Terminate>(*m2)) return false;
    const auto& base = std::get<BaselineAnnounce>(*m2);
    if (price.round == fail_round) {
      ep->die();
      return false;
    }
    Vec x;
    try {
      x = x_update(variant, *agent, price.p, base.y_i, r_local, beta);
    } catch (const UnboundedError&) {
      // Report the divergence as an empty demand; the coordinator maps it
      // back to the in-process engine's UnboundedError path.
      ep->send(DemandReport{price.round, id, Vec(0)});
      return true;
    }
    if (variant == AdmVariant::AdmmNh) {
      const auto& rows = agent->constraints.rows;
      for (std::size_t t = 0; t < rows.size(); ++t)
        r_local[static_cast<long>(t)] +=
            beta * std::max(rows[t].coeffs.dot(x) - rows[t].rhs, 0.0);
    }
    ep->send(DemandReport{price.round, id, x});
    return true;
  }
};

// ---------- coordinator ----------

struct Coordinator {
  const Market& market;
  const AdmConfig& config;
  const ProtocolOptions& options;

  std::vector<std::unique_ptr<InProcessEndpoint>> in_endpoints;
  std::vector<std::unique_ptr<SocketEndpoint>> agent_sockets;  // agent side
  std::vector<int> coord_fds;                                  // coordinator side
  ArrivalQueue arrivals;  // in-process mode only
  std::vector<std::thread> workers;
  std::vector<AgentRole> roles;

  // worker synchronization: a shared round counter workers follow
  std::mutex round_mu;
  std::condition_variable round_cv;
  int announced_round = -1;
  bool stop_workers = false;

  RoundLog log;
  bool failed = false;
  std::string fail_reason;

  explicit Coordinator(const Market& m, const AdmConfig& c,
                       const ProtocolOptions& o)
      : market(m), config(c), options(o) {}

  void start() {
    const int n = market.agent_count();
    roles.resize(n);
    if (options.socket_transport) setup_sockets();
    for (int i = 0; i < n; ++i) {
      AgentRole& role = roles[i];
      role.id = i;
      role.agent = &market.agents[i];
      role.variant = config.variant;
      role.beta = config.beta;
      role.r_local = Vec::Zero(market.agents[i].constraints.size());
      role.fail_round = (i == options.fail_agent) ? options.fail_round : -1;
      if (options.socket_transport) {
        role.ep = agent_sockets[i].get();
      } else {
        auto ep = std::make_unique<InProcessEndpoint>();
        ep->agent = i;
        ep->out = &arrivals;
        role.ep = ep.get();
        in_endpoints.push_back(std::move(ep));
      }
    }
    const int wc = std::max(1, options.worker_count);
    for (int w = 0; w < wc; ++w) {
      workers.emplace_back([this, w, wc, n] {
        int next_round = 0;
        while (true) {
          {
            std::unique_lock<std::mutex> lk(round_mu);
            round_cv.wait(lk, [&] {
              return stop_workers || announced_round >= next_round;
            });
            if (stop_workers) return;
          }
          for (int i = w; i < n; i += wc) {
            if (!roles[i].step()) {
              // Role finished; nothing more this worker can do for it.
            }
          }
          ++next_round;
        }
      });
    }
  }

  void setup_sockets() {
    const int n = market.agent_count();
    int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener, n) != 0)
      throw SolveError("protocol: failed to open loopback listener");
    socklen_t alen = sizeof(addr);
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &alen);

    agent_sockets.resize(n);
    coord_fds.assign(n, -1);
    std::vector<int> pending;
    for (int i = 0; i < n; ++i) {
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw SolveError("protocol: loopback connect failed");
      auto ep = std::make_unique<SocketEndpoint>();
      ep->fd = fd;
      agent_sockets[i] = std::move(ep);
      // registration frame so the coordinator can map the accepted fd
      write_frame(fd, DemandReport{-1, i, Vec(0)});
      pending.push_back(::accept(listener, nullptr, nullptr));
    }
    for (int fd : pending) {
      auto hello = read_frame(fd);
      if (!hello) throw SolveError("protocol: registration failed");
      coord_fds[std::get<DemandReport>(*hello).agent_id] = fd;
    }
    ::close(listener);
  }

  void deliver(int agent, const ProtocolMessage& m) {
    if (options.socket_transport)
      write_frame(coord_fds[agent], m);
    else
      in_endpoints_for(agent).inbox.push(m);
  }

  InProcessEndpoint& in_endpoints_for(int agent) {
    for (auto& ep : in_endpoints)
      if (ep->agent == agent) return *ep;
    throw std::logic_error("protocol: missing endpoint");
  }

  // Collects exactly n demand reports (socket mode: poll over fds).
  bool collect(int round, AdmState& st, RoundLog::Round& entry) {
    const int n = market.agent_count();
    int got = 0;
    std::vector<bool> seen(n, false);
    if (!options.socket_transport) {
      while (got < n) {
        Arrival a = arrivals.pop();
        if (!a.msg) {
          fail_reason = "agent " + std::to_string(a.agent) + " failed at round " +
                        std::to_string(round);
          return false;
        }
        const auto& rep = std::get<DemandReport>(*a.msg);
        if (rep.x_i.size() == 0) throw UnboundedError("agent demand unbounded");
        if (rep.round != round || seen[rep.agent_id])
          throw SolveError("protocol: round message discipline violated");
        seen[rep.agent_id] = true;
        st.x.row(rep.agent_id) = rep.x_i.transpose();
        entry.messages.push_back(*a.msg);
        ++got;
      }
      return true;
    }
    std::vector<pollfd> fds(n);
    while (got < n) {
      for (int i = 0; i < n; ++i)
        fds[i] = {coord_fds[i], static_cast<short>(seen[i] ? 0 : POLLIN), 0};
      if (::poll(fds.data(), n, 30000) <= 0)
        throw SolveError("protocol: poll timeout");
      for (int i = 0; i < n && got < n; ++i) {
        if (seen[i] || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
        auto m = read_frame(coord_fds[i]);
        if (!m) {
          fail_reason = "agent " + std::to_string(i) + " failed at round " +
                        std::to_string(round);
          return false;
        }
        const auto& rep = std::get<DemandReport>(*m);
        if (rep.x_i.size() == 0) throw UnboundedError("agent demand unbounded");
        seen[rep.agent_id] = true;
        st.x.row(rep.agent_id) = rep.x_i.transpose();
        entry.messages.push_back(*m);
        ++got;
      }
    }
    return true;
  }

  // The XProvider body: one full round of messaging.
  bool provide(AdmState& st, std::string* abort_reason) {
    const int round = st.iteration;
    if (!log.rounds.empty() && log.rounds.back().state_digest == 0)
      log.rounds.back().state_digest = state_digest(st);

    RoundLog::Round entry;
    entry.round = round;
    entry.messages.push_back(PriceAnnounce{round, st.p});
    for (int i = 0; i < market.agent_count(); ++i) {
      const Vec price = config.variant == AdmVariant::Ama
                            ? Vec(st.p_tilde.row(i).transpose())
                            : st.p;
      deliver(i, PriceAnnounce{round, price});
      deliver(i, BaselineAnnounce{round, st.y.row(i).transpose()});
      entry.messages.push_back(BaselineAnnounce{round, st.y.row(i).transpose()});
    }
    {
      std::lock_guard<std::mutex> lk(round_mu);
      announced_round = round;
      round_cv.notify_all();
    }
    const bool ok = collect(round, st, entry);
    if (!ok) {
      entry.messages.push_back(Terminate{fail_reason});
      log.rounds.push_back(std::move(entry));
      log.terminated = fail_reason;
      *abort_reason = fail_reason;
      return false;
    }
    if (options.emit_rebates && config.variant != AdmVariant::Ama) {
      for (int i = 0; i < market.agent_count(); ++i) {
        try {
          const Vec xu = x_update(AdmVariant::Ama, market.agents[i], st.p,
                                  st.y.row(i).transpose(), Vec(0), config.beta);
          const double amount =
              rebate_amount(market.agents[i], st.p, st.y.row(i).transpose(),
                            config.beta, xu, st.x.row(i).transpose());
          entry.messages.push_back(RebateNote{round, i, amount});
          deliver(i, RebateNote{round, i, amount});
        } catch (const UnboundedError&) {
          // Unperturbed best response unbounded at this price; no rebate.
        }
      }
    }
    log.rounds.push_back(std::move(entry));
    return true;
  }

  void shutdown() {
    for (int i = 0; i < market.agent_count(); ++i) {
      if (options.fail_agent == i && !log.rounds.empty() &&
          log.terminated)
        continue;  // dead channel
      try {
        deliver(i, Terminate{"run complete"});
      } catch (...) {
      }
    }
    {
      std::lock_guard<std::mutex> lk(round_mu);
      stop_workers = true;
      round_cv.notify_all();
    }
    for (auto& w : workers) w.join();
    for (int fd : coord_fds)
      if (fd >= 0) ::close(fd);
  }
};

}  // namespace

ProtocolResult run_distributed(const Market& market, const AdmConfig& config,
                               const ProtocolOptions& options) {
  Coordinator coord(market, config, options);
  coord.start();
  ProtocolResult out;
  try {
    AdmResult r = run_adm_with_provider(
        market, config,
        [&coord](const Market&, const AdmConfig&, AdmState& st,
                 std::string* reason) { return coord.provide(st, reason); });
    out.trace = std::move(r.trace);
    out.state = std::move(r.state);
  } catch (...) {
    coord.shutdown();
    throw;
  }
  if (!coord.log.rounds.empty() && coord.log.rounds.back().state_digest == 0 &&
      !coord.log.terminated)
    coord.log.rounds.back().state_digest = state_digest(out.state);
  coord.shutdown();
  out.log = std::move(coord.log);
  return out;
}

AdmState replay_round_log(const Market& market, const AdmConfig& config,
                          const RoundLog& log) {
  std::size_t at = 0;
  AdmResult r = run_adm_with_provider(
      market, config,
      [&](const Market& mkt, const AdmConfig&, AdmState& st,
          std::string* reason) {
        if (at >= log.rounds.size()) {
          *reason = "log exhausted";
          return false;
        }
        const auto& round = log.rounds[at++];
        int filled = 0;
        for (const auto& m : round.messages) {
          if (const auto* rep = std::get_if<DemandReport>(&m)) {
            st.x.row(rep->agent_id) = rep->x_i.transpose();
            ++filled;
          }
        }
        if (filled != mkt.agent_count()) {
          *reason = "incomplete round";
          return false;
        }
        return true;
      });
  return r.state;
}

double rebate_amount(const Agent& agent, const Vec& p, const Vec& /*y_i*/,
                     double /*beta*/, const Vec& x_unperturbed,
                     const Vec& x_perturbed) {
  auto check_feasible = [&](const Vec& x) {
    if ((x.array() < -1e-9).any())
      throw std::invalid_argument("rebate_amount: negative bundle");
    for (const auto& row : agent.constraints.rows)
      if (row.coeffs.dot(x) > row.rhs + 1e-7)
        throw std::invalid_argument("rebate_amount: bundle violates a row");
  };
  check_feasible(x_unperturbed);
  check_feasible(x_perturbed);
  auto objective = [&](const Vec& x) {
    return agent.budget * std::log(agent.utility.value(x)) - p.dot(x);
  };
  return objective(x_unperturbed) - objective(x_perturbed);
}

}  // namespace fisher
