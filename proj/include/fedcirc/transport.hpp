#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "fedcirc/common.hpp"

namespace fedcirc {

using MachineId = std::int32_t;
inline constexpr MachineId kServer = -1;

enum class MessageKind : std::uint8_t {
  FeatureAnnounce = 0,
  ClusterAssignment = 1,
  ModelUpload = 2,
  WeightInfo = 3,
  LikelihoodForward = 4,
};

enum class Phase : std::uint8_t { Announce = 0, Train = 1, Upload = 2, Weights = 3, Inference = 4 };

inline Phase phase_of(MessageKind kind) {
  switch (kind) {
    case MessageKind::FeatureAnnounce: return Phase::Announce;
    case MessageKind::ClusterAssignment: return Phase::Train;
    case MessageKind::ModelUpload: return Phase::Upload;
    case MessageKind::WeightInfo: return Phase::Weights;
    case MessageKind::LikelihoodForward: return Phase::Inference;
  }
  throw std::invalid_argument("unknown message kind");
}

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Announce: return "announce";
    case Phase::Train: return "train";
    case Phase::Upload: return "upload";
    case Phase::Weights: return "weights";
    case Phase::Inference: return "inference";
  }
  return "?";
}

inline const char* kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::FeatureAnnounce: return "FeatureAnnounce";
    case MessageKind::ClusterAssignment: return "ClusterAssignment";
    case MessageKind::ModelUpload: return "ModelUpload";
    case MessageKind::WeightInfo: return "WeightInfo";
    case MessageKind::LikelihoodForward: return "LikelihoodForward";
  }
  return "?";
}

inline constexpr std::size_t kMessageHeaderBytes = 32;
inline constexpr std::size_t kScalarBytes = 8;

struct Message {
  MessageKind kind = MessageKind::FeatureAnnounce;
  MachineId from = kServer;
  MachineId to = kServer;
  std::uint64_t scalar_count = 0;
  std::uint64_t byte_count = 0;

  static Message make(MessageKind kind, MachineId from, MachineId to, std::uint64_t scalars) {
    return Message{kind, from, to, scalars, kScalarBytes * scalars + kMessageHeaderBytes};
  }
};

struct PhaseTotals {
  std::uint64_t messages = 0;
  std::uint64_t scalars = 0;
  std::uint64_t bytes = 0;
};

/// Append-only record of every message the federation exchanged, with
/// per-phase totals. Values are plain data; copy freely.
class CommLedger {
 public:
  void record(const Message& m) {
    if (m.byte_count != kScalarBytes * m.scalar_count + kMessageHeaderBytes)
      throw std::invalid_argument("message byte_count violates the frame layout");
    entries_.push_back(m);
    auto& t = totals_[phase_of(m.kind)];
    ++t.messages;
    t.scalars += m.scalar_count;
    t.bytes += m.byte_count;
  }

  const std::vector<Message>& entries() const { return entries_; }

  PhaseTotals totals(Phase p) const {
    auto it = totals_.find(p);
    return it == totals_.end() ? PhaseTotals{} : it->second;
  }

  PhaseTotals grand_total() const {
    PhaseTotals t;
    for (const auto& [phase, pt] : totals_) {
      t.messages += pt.messages;
      t.scalars += pt.scalars;
      t.bytes += pt.bytes;
    }
    return t;
  }

  /// Scalars over the phases that constitute training traffic.
  std::uint64_t training_scalars() const {
    return totals(Phase::Train).scalars + totals(Phase::Upload).scalars +
           totals(Phase::Weights).scalars;
  }

  void report(std::ostream& out) const {
    out << "phase      messages    scalars      bytes\n";
    for (Phase p : {Phase::Announce, Phase::Train, Phase::Upload, Phase::Weights, Phase::Inference}) {
      const PhaseTotals t = totals(p);
      out << pad(phase_name(p), 10) << ' ' << pad_num(t.messages, 8) << ' ' << pad_num(t.scalars, 10)
          << ' ' << pad_num(t.bytes, 10) << '\n';
    }
    const PhaseTotals t = grand_total();
    out << pad("total", 10) << ' ' << pad_num(t.messages, 8) << ' ' << pad_num(t.scalars, 10) << ' '
        << pad_num(t.bytes, 10) << '\n';
  }

  std::string report() const {
    std::ostringstream out;
    report(out);
    return out.str();
  }

 private:
  static std::string pad(std::string s, std::size_t width) {
    while (s.size() < width) s.push_back(' ');
    return s;
  }
  static std::string pad_num(std::uint64_t v, std::size_t width) {
    std::string s = std::to_string(v);
    while (s.size() < width) s.insert(s.begin(), ' ');
    return s;
  }

  std::vector<Message> entries_;
  std::map<Phase, PhaseTotals> totals_;
};

/// Simulated default transport: messages queue per recipient and drain in
/// deterministic (phase, sender) order regardless of submission order.
class InProcessTransport {
 public:
  void send(const Message& m, std::vector<double> payload = {}) {
    if (payload.size() != m.scalar_count && !payload.empty())
      throw std::invalid_argument("payload size does not match scalar_count");
    mailboxes_[m.to].push_back({m, std::move(payload)});
  }

  struct Delivery {
    Message message;
    std::vector<double> payload;
  };

  std::vector<Delivery> drain(MachineId recipient) {
    auto it = mailboxes_.find(recipient);
    if (it == mailboxes_.end()) return {};
    std::vector<Delivery> out(it->second.begin(), it->second.end());
    mailboxes_.erase(it);
    std::stable_sort(out.begin(), out.end(), [](const Delivery& a, const Delivery& b) {
      const auto pa = phase_of(a.message.kind);
      const auto pb = phase_of(b.message.kind);
      if (pa != pb) return pa < pb;
      return a.message.from < b.message.from;
    });
    return out;
  }

 private:
  std::map<MachineId, std::deque<Delivery>> mailboxes_;
};

// Wire framing: 4-byte big-endian frame length, then the 32-byte header,
// then scalar_count IEEE-754 doubles, each as a big-endian 64-bit word.
//   header: kind u8 | pad u8[3] | from i32 | to i32 | scalar_count u64 | reserved u8[12]

inline std::vector<std::uint8_t> encode_frame(const Message& m, std::span<const double> payload) {
  if (payload.size() != m.scalar_count)
    throw std::invalid_argument("payload size does not match scalar_count");
  const std::uint32_t frame_len =
      static_cast<std::uint32_t>(kMessageHeaderBytes + kScalarBytes * payload.size());
  std::vector<std::uint8_t> buf(4 + frame_len, 0);
  auto put32 = [&](std::size_t off, std::uint32_t v) {
    buf[off] = static_cast<std::uint8_t>(v >> 24);
    buf[off + 1] = static_cast<std::uint8_t>(v >> 16);
    buf[off + 2] = static_cast<std::uint8_t>(v >> 8);
    buf[off + 3] = static_cast<std::uint8_t>(v);
  };
  auto put64 = [&](std::size_t off, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf[off + i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
  };
  put32(0, frame_len);
  buf[4] = static_cast<std::uint8_t>(m.kind);
  put32(8, static_cast<std::uint32_t>(m.from));
  put32(12, static_cast<std::uint32_t>(m.to));
  put64(16, m.scalar_count);
  std::size_t off = 4 + kMessageHeaderBytes;
  for (double x : payload) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put64(off, bits);
    off += 8;
  }
  return buf;
}

inline std::pair<Message, std::vector<double>> decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < kMessageHeaderBytes) throw std::runtime_error("short frame");
  auto get32 = [&](std::size_t off) {
    return (std::uint32_t(frame[off]) << 24) | (std::uint32_t(frame[off + 1]) << 16) |
           (std::uint32_t(frame[off + 2]) << 8) | std::uint32_t(frame[off + 3]);
  };
  auto get64 = [&](std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | frame[off + i];
    return v;
  };
  Message m;
  m.kind = static_cast<MessageKind>(frame[0]);
  m.from = static_cast<MachineId>(get32(4));
  m.to = static_cast<MachineId>(get32(8));
  m.scalar_count = get64(12);
  m.byte_count = kScalarBytes * m.scalar_count + kMessageHeaderBytes;
  if (frame.size() != kMessageHeaderBytes + kScalarBytes * m.scalar_count)
    throw std::runtime_error("frame length does not match scalar_count");
  std::vector<double> payload(m.scalar_count);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const std::uint64_t bits = get64(kMessageHeaderBytes + 8 * i);
    std::memcpy(&payload[i], &bits, 8);
  }
  return {m, std::move(payload)};
}

namespace detail {

inline void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::write(fd, data + sent, len - sent);
    if (n <= 0) throw std::runtime_error("socket write failed");
    sent += static_cast<std::size_t>(n);
  }
}

inline void read_all(int fd, std::uint8_t* data, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::read(fd, data + got, len - got);
    if (n <= 0) throw std::runtime_error("socket read failed (peer closed?)");
    got += static_cast<std::size_t>(n);
  }
}

}  // namespace detail

/// One end of a loopback TCP link carrying Message frames.
class TcpConnection {
 public:
  TcpConnection() = default;
  explicit TcpConnection(int fd) : fd_(fd) {}
  TcpConnection(TcpConnection&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpConnection& operator=(TcpConnection&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;
  ~TcpConnection() { close(); }

  bool open() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  static TcpConnection connect_loopback(std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw std::runtime_error("connect() to loopback failed");
    }
    return TcpConnection(fd);
  }

  void send(const Message& m, std::span<const double> payload) {
    const auto buf = encode_frame(m, payload);
    detail::write_all(fd_, buf.data(), buf.size());
  }

  std::pair<Message, std::vector<double>> receive() {
    std::uint8_t len_buf[4];
    detail::read_all(fd_, len_buf, 4);
    const std::uint32_t frame_len = (std::uint32_t(len_buf[0]) << 24) |
                                    (std::uint32_t(len_buf[1]) << 16) |
                                    (std::uint32_t(len_buf[2]) << 8) | std::uint32_t(len_buf[3]);
    if (frame_len < kMessageHeaderBytes || frame_len > (64u << 20))
      throw std::runtime_error("bad frame length");
    std::vector<std::uint8_t> frame(frame_len);
    detail::read_all(fd_, frame.data(), frame.size());
    return decode_frame(frame);
  }

 private:
  int fd_ = -1;
};

/// Loopback listener; binds an ephemeral port on 127.0.0.1.
class TcpListener {
 public:
  TcpListener() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd_, 16) != 0) {
      ::close(fd_);
      throw std::runtime_error("bind/listen on loopback failed");
    }
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
      ::close(fd_);
      throw std::runtime_error("getsockname failed");
    }
    port_ = ntohs(addr.sin_port);
  }
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }

  TcpConnection accept() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw std::runtime_error("accept() failed");
    return TcpConnection(fd);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace fedcirc
