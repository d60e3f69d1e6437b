#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uarm/kinematic_config.hpp"

namespace uarm {

inline constexpr int kRawMax = 4095;
inline constexpr double kEncoderSpanDeg = 270.0;
inline constexpr double kEncoderNeutralDeg = 135.0;
inline constexpr double kEnvelopeGuardDeg = 2.0;
inline constexpr std::size_t kFrameSize = 6;
inline constexpr std::uint8_t kHeaderByte = 0xFF;
inline constexpr int kMaxServoId = 253;

using Bytes = std::vector<std::uint8_t>;

struct RawFrame {
  int servo_id = 0;
  int raw_count = 0;
  std::int64_t timestamp_ns = 0;
  friend bool operator==(const RawFrame&, const RawFrame&) = default;
};

struct EnvelopeWarning {
  int joint = 0;               // 1-based
  double absolute_deg = 0.0;   // 0..270
};

struct EncoderFrame {
  ConfigId config = ConfigId::Config1;
  std::vector<double> angles_deg;  // neutral-relative, -135..+135
  std::int64_t timestamp_ns = 0;
  std::vector<EnvelopeWarning> warnings;
  std::uint64_t sequence = 0;  // poll cycle or virtual-leader message seq
};

// Absolute encoder angle in [0, 270] for a 12-bit count.
double raw_to_degrees(int raw);
// Rounding inverse of raw_to_degrees, saturating to [0, 4095].
int degrees_to_raw(double absolute_deg);

std::uint8_t frame_checksum(std::uint8_t id, std::uint8_t pos_hi, std::uint8_t pos_lo);
std::array<std::uint8_t, kFrameSize> encode_frame(int servo_id, int raw_count);

// Decodes exactly one frame from the start of `bytes`.
// Throws FramingError (bad header, bad id or count, short input) or ChecksumError.
RawFrame decode_frame(std::span<const std::uint8_t> bytes, std::int64_t timestamp_ns = 0);

// Incremental decoder for a byte stream carrying frames plus arbitrary noise.
// Scans for the 0xFF 0xFF header and resynchronizes one byte at a time after
// any rejected candidate. A checksum-valid candidate whose tail overlaps the
// header of another valid frame is treated as noise; when that decision needs
// bytes that have not arrived yet the candidate is held until the next feed()
// or flush().
class FrameDecoder {
 public:
  struct Stats {
    std::uint64_t frames = 0;
    std::uint64_t checksum_errors = 0;
    std::uint64_t framing_errors = 0;  // rejected header candidates (bad id/count)
    std::uint64_t bytes_discarded = 0;
  };

  std::vector<RawFrame> feed(std::span<const std::uint8_t> bytes, std::int64_t timestamp_ns = 0);
  // Resolves any held candidate and drops incomplete trailing bytes.
  std::vector<RawFrame> flush(std::int64_t timestamp_ns = 0);

  const Stats& stats() const { return stats_; }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  enum class Candidate { Valid, BadChecksum, BadFraming, Incomplete };
  Candidate classify(std::size_t pos) const;
  std::vector<RawFrame> drain(std::int64_t timestamp_ns, bool final);

  Bytes buffer_;
  Stats stats_;
};

// Groups one poll cycle of frames into an EncoderFrame.
// Joint j is read from servo id j. Throws IncompleteReading if a joint is missing.
EncoderFrame assemble_reading(std::span<const RawFrame> frames, const ConfigDescriptor& config);

// Script for the mock bus: keyframes of absolute encoder angles, linearly
// interpolated and held after the last keyframe.
struct ScriptKeyframe {
  double t_seconds = 0.0;
  std::vector<double> angles_deg;  // absolute, 0..270
};

class BusScript {
 public:
  BusScript() = default;
  explicit BusScript(std::vector<ScriptKeyframe> keyframes);

  static BusScript constant(std::size_t dof, double absolute_deg, double duration_s);
  static BusScript load(const std::filesystem::path& path);
  static BusScript from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::vector<double> sample(double t_seconds) const;
  double duration() const;
  std::size_t dof() const;
  const std::vector<ScriptKeyframe>& keyframes() const { return keyframes_; }

 private:
  std::vector<ScriptKeyframe> keyframes_;
};

struct BusFaults {
  double bit_flip_rate = 0.0;  // probability a frame gets one random bit flipped
  double drop_rate = 0.0;      // probability a frame is omitted
  std::uint64_t seed = 0;
};

// Deterministic bus simulator. Each poll() emits one frame per joint (ids 1..dof)
// for the script sampled at the next cycle time.
class MockBus {
 public:
  struct FaultLog {
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_flipped = 0;
    std::uint64_t header_flips = 0;   // flips landing in the 0xFF 0xFF header
    std::uint64_t payload_flips = 0;  // flips in id, position or checksum
    std::uint64_t frames_dropped = 0;
  };

  MockBus(BusScript script, double rate_hz, BusFaults faults = {});

  // Bytes for the next poll cycle; advances the cycle counter.
  Bytes poll();
  // Time of the cycle the next poll() will emit.
  double next_time() const;
  std::int64_t next_timestamp_ns() const;
  std::uint64_t cycle() const { return cycle_; }
  bool finished() const;

  const FaultLog& faults() const { return log_; }
  const BusScript& script() const { return script_; }

 private:
  double uniform();

  BusScript script_;
  double rate_hz_;
  BusFaults faults_;
  std::mt19937_64 rng_;
  std::uint64_t cycle_ = 0;
  FaultLog log_;
};

// Byte-stream source abstraction. read() returns whatever arrived since the
// previous call (possibly nothing).
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual Bytes read() = 0;
};

class MockByteSource : public ByteSource {
 public:
  explicit MockByteSource(MockBus& bus) : bus_(bus) {}
  Bytes read() override { return bus_.poll(); }

 private:
  MockBus& bus_;
};

// POSIX serial port in raw 8N1 mode.
class SerialByteSource : public ByteSource {
 public:
  SerialByteSource(const std::string& device, int baud);
  ~SerialByteSource() override;
  SerialByteSource(const SerialByteSource&) = delete;
  SerialByteSource& operator=(const SerialByteSource&) = delete;
  Bytes read() override;

 private:
  int fd_ = -1;
};

// Single-slot handoff between the bus reader and the control loop. A newer
// value overwrites an unconsumed older one.
template <typename T>
class LatestValue {
 public:
  void put(T value) {
    std::lock_guard lock(mutex_);
    if (slot_) ++overwritten_;
    slot_ = std::move(value);
  }
  std::optional<T> take() {
    std::lock_guard lock(mutex_);
    std::optional<T> out;
    out.swap(slot_);
    return out;
  }
  std::uint64_t overwritten() const {
    std::lock_guard lock(mutex_);
    return overwritten_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<T> slot_;
  std::uint64_t overwritten_ = 0;
};

}  // namespace uarm
