#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aucl/types.hpp"

namespace aucl {

enum class MessageType { kBelief, kBiasBook };

inline const char* message_type_name(MessageType t) {
  return t == MessageType::kBelief ? "belief" : "bias_book";
}

/// Local belief of the sender, snapshotted right after propagation.
struct BeliefMessage {
  int sender = -1;
  std::int64_t stamp = 0;
  Vec x_hat;
  Mat P;
};

/// The sender's state-bias correlation set.
struct BiasBookMessage {
  int sender = -1;
  std::int64_t stamp = 0;
  std::map<int, Vec> C;
};

struct MessageLogEntry {
  std::int64_t step = 0;
  int sender = -1;
  int receiver = -1;
  MessageType type = MessageType::kBelief;
  std::size_t payload_bytes = 0;
};

inline std::size_t belief_payload_bytes(Eigen::Index nx) {
  // sender id + stamp + state + covariance, 8 bytes per scalar
  return 16 + 8 * static_cast<std::size_t>(nx + nx * nx);
}

inline std::size_t bias_book_payload_bytes(Eigen::Index nx,
                                           std::size_t entries) {
  return 16 + entries * (4 + 8 * static_cast<std::size_t>(nx));
}

/// Per-step exchange point between agents. Beliefs and correlation sets are
/// value snapshots of the propagated priors; agents only ever talk when a
/// relative measurement between them is being processed.
class ExchangeHub {
 public:
  void begin_step(std::int64_t step) {
    step_ = step;
    snapshots_.clear();
  }

  void post_snapshot(int agent_id, const Belief& belief, const BiasBook& book) {
    snapshots_[agent_id] = Snapshot{belief, book};
  }

  struct Exchange {
    BeliefMessage belief;
    std::optional<BiasBookMessage> bias_book;
  };

  /// Serves the target's propagated belief, plus its correlation set when
  /// the NLoS branch can run and the compact mode is off. Returns nullopt
  /// (and counts the event) when no fresh snapshot exists.
  std::optional<Exchange> request_exchange(int observer, int target,
                                           bool needs_bias_book) {
    auto it = snapshots_.find(target);
    if (it == snapshots_.end()) {
      ++unknown_targets_;
      return std::nullopt;
    }
    const Snapshot& snap = it->second;
    if (snap.belief.stamp != step_) {
      ++stale_aborts_;
      return std::nullopt;
    }
    Exchange ex;
    ex.belief = BeliefMessage{target, snap.belief.stamp, snap.belief.x_hat,
                              snap.belief.P.matrix()};
    log_.push_back({step_, target, observer, MessageType::kBelief,
                    belief_payload_bytes(snap.belief.dim())});
    if (needs_bias_book) {
      ex.bias_book = BiasBookMessage{target, snap.belief.stamp, snap.book.C};
      log_.push_back({step_, target, observer, MessageType::kBiasBook,
                      bias_book_payload_bytes(snap.belief.dim(),
                                              snap.book.C.size())});
    }
    return ex;
  }

  void count_dropped() { ++dropped_; }

  const std::vector<MessageLogEntry>& log() const { return log_; }
  std::uint64_t stale_aborts() const { return stale_aborts_; }
  std::uint64_t unknown_targets() const { return unknown_targets_; }
  std::uint64_t dropped() const { return dropped_; }

  std::uint64_t count(MessageType t) const {
    std::uint64_t n = 0;
    for (const auto& e : log_) {
      if (e.type == t) ++n;
    }
    return n;
  }

 private:
  struct Snapshot {
    Belief belief;
    BiasBook book;
  };

  std::int64_t step_ = -1;
  std::map<int, Snapshot> snapshots_;
  std::vector<MessageLogEntry> log_;
  std::uint64_t stale_aborts_ = 0;
  std::uint64_t unknown_targets_ = 0;
  std::uint64_t dropped_ = 0;
};

inline void write_message_log_csv(const std::filesystem::path& path,
                                  const std::vector<MessageLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "step,sender,receiver,type,payload_bytes\n";
  for (const auto& e : log) {
    out << e.step << ',' << e.sender << ',' << e.receiver << ','
        << message_type_name(e.type) << ',' << e.payload_bytes << '\n';
  }
}

}  // namespace aucl
