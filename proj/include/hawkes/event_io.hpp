#pragma once

// EventLog serialization.
//
// Binary record, little-endian:
//   "HWKS" | version u16 | N u32 | T f64 | seed u64 | N x count u32 | all jump times f64
// Jump times are stored particle by particle in the order of the counts.
// The record does not carry the log kind; readers get LogKind::hawkes unless told otherwise.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "hawkes/engine.hpp"
#include "hawkes/error.hpp"

namespace hawkes {

constexpr std::uint16_t kEventLogVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t b = 0; b < sizeof(U); ++b) buf[b] = static_cast<unsigned char>(v >> (8 * b));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw Error("truncated event log record");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(buf[b]) << (8 * b);
  return v;
}

}  // namespace detail

inline void write_binary(std::ostream& os, const EventLog& log) {
  os.write("HWKS", 4);
  detail::put_le<std::uint16_t>(os, kEventLogVersion);
  detail::put_le<std::uint32_t>(os, log.N);
  detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(log.T));
  detail::put_le<std::uint64_t>(os, log.seed);
  for (const auto& j : log.jumps) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(j.size()));
  for (const auto& j : log.jumps)
    for (double t : j) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(t));
  if (!os) throw Error("failed writing event log record");
}

inline EventLog read_binary(std::istream& is, LogKind kind = LogKind::hawkes) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HWKS", 4) != 0) throw Error("not an HWKS event log");
  const auto version = detail::get_le<std::uint16_t>(is);
  if (version != kEventLogVersion) throw Error("unsupported event log version " + std::to_string(version));
  EventLog log;
  log.kind = kind;
  log.N = detail::get_le<std::uint32_t>(is);
  log.T = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
  log.seed = detail::get_le<std::uint64_t>(is);
  std::vector<std::uint32_t> counts(log.N);
  for (auto& c : counts) c = detail::get_le<std::uint32_t>(is);
  log.jumps.resize(log.N);
  for (std::uint32_t i = 0; i < log.N; ++i) {
    log.jumps[i].resize(counts[i]);
    for (auto& t : log.jumps[i]) t = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
  }
  return log;
}

// CSV `particle,jump_time`, rows ordered by particle then time.
inline void write_csv(std::ostream& os, const EventLog& log) {
  os << "particle,jump_time\n";
  char buf[64];
  for (std::uint32_t i = 0; i < log.N; ++i)
    for (double t : log.jumps[i]) {
      std::snprintf(buf, sizeof buf, "%u,%.17g\n", i, t);
      os << buf;
    }
}

}  // namespace hawkes
