#include "uarm/encoder_bus.hpp"

#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "uarm/errors.hpp"

namespace uarm {

double raw_to_degrees(int raw) {
  if (raw < 0 || raw > kRawMax) {
    throw EncoderRangeError("raw count " + std::to_string(raw) + " outside [0, 4095]");
  }
  return raw * kEncoderSpanDeg / kRawMax;
}

int degrees_to_raw(double absolute_deg) {
  const double raw = std::round(absolute_deg * kRawMax / kEncoderSpanDeg);
  return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(kRawMax)));
}

std::uint8_t frame_checksum(std::uint8_t id, std::uint8_t pos_hi, std::uint8_t pos_lo) {
  return static_cast<std::uint8_t>(0xFF - ((id + pos_hi + pos_lo) & 0xFF));
}

std::array<std::uint8_t, kFrameSize> encode_frame(int servo_id, int raw_count) {
  if (servo_id < 0 || servo_id > kMaxServoId) throw FramingError("servo id out of range");
  if (raw_count < 0 || raw_count > kRawMax) throw EncoderRangeError("raw count out of range");
  const auto id = static_cast<std::uint8_t>(servo_id);
  const auto hi = static_cast<std::uint8_t>(raw_count >> 8);
  const auto lo = static_cast<std::uint8_t>(raw_count & 0xFF);
  return {kHeaderByte, kHeaderByte, id, hi, lo, frame_checksum(id, hi, lo)};
}

RawFrame decode_frame(std::span<const std::uint8_t> bytes, std::int64_t timestamp_ns) {
  if (bytes.size() < kFrameSize) throw FramingError("short frame");
  if (bytes[0] != kHeaderByte || bytes[1] != kHeaderByte) throw FramingError("bad header");
  const std::uint8_t id = bytes[2], hi = bytes[3], lo = bytes[4];
  if (id > kMaxServoId) throw FramingError("servo id out of range");
  if (frame_checksum(id, hi, lo) != bytes[5]) throw ChecksumError("checksum mismatch");
  const int raw = hi * 256 + lo;
  if (raw > kRawMax) throw FramingError("raw count out of range");
  return {id, raw, timestamp_ns};
}

// --- FrameDecoder ----------------------------------------------------------

FrameDecoder::Candidate FrameDecoder::classify(std::size_t pos) const {
  if (pos + kFrameSize > buffer_.size()) return Candidate::Incomplete;
  const std::uint8_t id = buffer_[pos + 2], hi = buffer_[pos + 3], lo = buffer_[pos + 4];
  if (id > kMaxServoId || hi > (kRawMax >> 8)) return Candidate::BadFraming;
  if (frame_checksum(id, hi, lo) != buffer_[pos + 5]) return Candidate::BadChecksum;
  return Candidate::Valid;
}

std::vector<RawFrame> FrameDecoder::feed(std::span<const std::uint8_t> bytes, std::int64_t timestamp_ns) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  return drain(timestamp_ns, false);
}

std::vector<RawFrame> FrameDecoder::flush(std::int64_t timestamp_ns) { return drain(timestamp_ns, true); }

std::vector<RawFrame> FrameDecoder::drain(std::int64_t timestamp_ns, bool final) {
  std::vector<RawFrame> out;
  const std::size_t size = buffer_.size();
  std::size_t pos = 0;
  std::size_t emitted_bytes = 0;

  while (pos < size) {
    if (buffer_[pos] != kHeaderByte) {
      ++pos;
      continue;
    }
    if (pos + 1 >= size) break;  // lone trailing 0xFF may start a header
    if (buffer_[pos + 1] != kHeaderByte) {
      pos += 2;
      continue;
    }
    if (pos + 2 < size && buffer_[pos + 2] == kHeaderByte) {
      // Run of 0xFF: the real header is the last two of them.
      ++pos;
      continue;
    }

    const Candidate c = classify(pos);
    if (c == Candidate::Incomplete) break;
    if (c == Candidate::BadFraming) {
      ++stats_.framing_errors;
      ++pos;
      continue;
    }
    if (c == Candidate::BadChecksum) {
      ++stats_.checksum_errors;
      ++pos;
      continue;
    }

    // Valid candidate: reject it if its tail carries the header of another
    // valid frame, which happens when a truncated frame precedes a real one.
    bool overlapped = false;
    bool undecided = false;
    for (std::size_t j = pos + 2; j <= pos + 5; ++j) {
      if (buffer_[j] != kHeaderByte) continue;
      if (j + 1 >= size) {
        undecided = !final;
        break;
      }
      if (buffer_[j + 1] != kHeaderByte) continue;
      if (j + 2 < size && buffer_[j + 2] == kHeaderByte) continue;
      const Candidate other = classify(j);
      if (other == Candidate::Valid) {
        overlapped = true;
        break;
      }
      if (other == Candidate::Incomplete && !final) {
        undecided = true;
        break;
      }
    }
    if (undecided) break;
    if (overlapped) {
      ++pos;
      continue;
    }

    const std::uint8_t hi = buffer_[pos + 3], lo = buffer_[pos + 4];
    out.push_back({buffer_[pos + 2], hi * 256 + lo, timestamp_ns});
    ++stats_.frames;
    pos += kFrameSize;
    emitted_bytes += kFrameSize;
  }

  if (final) pos = size;
  stats_.bytes_discarded += pos - emitted_bytes;
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

// --- assemble_reading ------------------------------------------------------

EncoderFrame assemble_reading(std::span<const RawFrame> frames, const ConfigDescriptor& config) {
  const int dof = static_cast<int>(config.dof);
  std::vector<const RawFrame*> chosen(config.dof, nullptr);
  for (const auto& f : frames) {
    if (f.servo_id < 1 || f.servo_id > dof) continue;
    auto& slot = chosen[static_cast<std::size_t>(f.servo_id - 1)];
    // Duplicates resolve to the newest frame, then the larger count, so the
    // result does not depend on arrival order.
    if (!slot || f.timestamp_ns > slot->timestamp_ns ||
        (f.timestamp_ns == slot->timestamp_ns && f.raw_count > slot->raw_count)) {
      slot = &f;
    }
  }

  EncoderFrame reading;
  reading.config = config.id;
  reading.angles_deg.reserve(config.dof);
  for (int j = 1; j <= dof; ++j) {
    const RawFrame* f = chosen[static_cast<std::size_t>(j - 1)];
    if (!f) throw IncompleteReading("no frame for joint " + std::to_string(j));
    const double absolute = raw_to_degrees(f->raw_count);
    if (absolute < kEnvelopeGuardDeg || absolute > kEncoderSpanDeg - kEnvelopeGuardDeg) {
      reading.warnings.push_back({j, absolute});
    }
    reading.angles_deg.push_back(absolute - kEncoderNeutralDeg);
    reading.timestamp_ns = std::max(reading.timestamp_ns, f->timestamp_ns);
  }
  return reading;
}

// --- BusScript -------------------------------------------------------------

BusScript::BusScript(std::vector<ScriptKeyframe> keyframes) : keyframes_(std::move(keyframes)) {
  if (keyframes_.empty()) throw ConfigError("bus script needs at least one keyframe");
  const std::size_t n = keyframes_.front().angles_deg.size();
  for (std::size_t i = 0; i < keyframes_.size(); ++i) {
    const auto& k = keyframes_[i];
    if (k.angles_deg.size() != n) throw ConfigError("bus script keyframes differ in joint count");
    if (i > 0 && !(k.t_seconds > keyframes_[i - 1].t_seconds)) {
      throw ConfigError("bus script times must be strictly increasing");
    }
    for (double a : k.angles_deg) {
      if (!(a >= 0.0 && a <= kEncoderSpanDeg)) {
        throw ConfigError("bus script angle " + std::to_string(a) + " outside the 0-270 encoder range");
      }
    }
  }
}

BusScript BusScript::constant(std::size_t dof, double absolute_deg, double duration_s) {
  std::vector<ScriptKeyframe> k{{0.0, std::vector<double>(dof, absolute_deg)}};
  if (duration_s > 0.0) k.push_back({duration_s, std::vector<double>(dof, absolute_deg)});
  return BusScript(std::move(k));
}

BusScript BusScript::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("bus script must be a JSON array");
  std::vector<ScriptKeyframe> k;
  try {
    for (const auto& e : doc) {
      k.push_back({e.at("t_seconds").get<double>(), e.at("angles_deg").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed bus script: ") + e.what());
  }
  return BusScript(std::move(k));
}

BusScript BusScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open script " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json BusScript::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& k : keyframes_) doc.push_back({{"t_seconds", k.t_seconds}, {"angles_deg", k.angles_deg}});
  return doc;
}

std::vector<double> BusScript::sample(double t) const {
  if (t <= keyframes_.front().t_seconds) return keyframes_.front().angles_deg;
  if (t >= keyframes_.back().t_seconds) return keyframes_.back().angles_deg;
  auto hi = std::upper_bound(keyframes_.begin(), keyframes_.end(), t,
                             [](double v, const ScriptKeyframe& k) { return v < k.t_seconds; });
  auto lo = std::prev(hi);
  const double u = (t - lo->t_seconds) / (hi->t_seconds - lo->t_seconds);
  std::vector<double> out(lo->angles_deg.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lo->angles_deg[i] + u * (hi->angles_deg[i] - lo->angles_deg[i]);
  }
  return out;
}

double BusScript::duration() const { return keyframes_.empty() ? 0.0 : keyframes_.back().t_seconds; }

std::size_t BusScript::dof() const { return keyframes_.empty() ? 0 : keyframes_.front().angles_deg.size(); }

// --- MockBus ---------------------------------------------------------------

MockBus::MockBus(BusScript script, double rate_hz, BusFaults faults)
    : script_(std::move(script)), rate_hz_(rate_hz), faults_(faults), rng_(faults.seed) {
  if (!(rate_hz > 0.0)) throw ConfigError("bus rate must be positive");
}

double MockBus::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

double MockBus::next_time() const { return static_cast<double>(cycle_) / rate_hz_; }

std::int64_t MockBus::next_timestamp_ns() const {
  return static_cast<std::int64_t>(std::llround(next_time() * 1e9));
}

bool MockBus::finished() const {
  const double cycles = std::ceil(script_.duration() * rate_hz_ - 1e-9);
  return static_cast<double>(cycle_) >= std::max(1.0, cycles);
}

Bytes MockBus::poll() {
  const auto angles = script_.sample(next_time());
  Bytes out;
  out.reserve(angles.size() * kFrameSize);
  for (std::size_t j = 0; j < angles.size(); ++j) {
    auto frame = encode_frame(static_cast<int>(j + 1), degrees_to_raw(angles[j]));
    ++log_.frames_sent;
    const double drop_draw = uniform();
    const double flip_draw = uniform();
    const std::uint64_t bit = rng_() % (kFrameSize * 8);
    if (drop_draw < faults_.drop_rate) {
      ++log_.frames_dropped;
      continue;
    }
    if (flip_draw < faults_.bit_flip_rate) {
      frame[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      ++log_.frames_flipped;
      if (bit / 8 < 2) {
        ++log_.header_flips;
      } else {
        ++log_.payload_flips;
      }
    }
    out.insert(out.end(), frame.begin(), frame.end());
  }
  ++cycle_;
  return out;
}

// --- SerialByteSource ------------------------------------------------------

namespace {

speed_t baud_constant(int baud) {
  static const std::map<int, speed_t> kRates{
      {9600, B9600},     {19200, B19200},   {38400, B38400},     {57600, B57600},
      {115200, B115200}, {230400, B230400}, {460800, B460800},   {500000, B500000},
      {576000, B576000}, {921600, B921600}, {1000000, B1000000}, {2000000, B2000000}};
  auto it = kRates.find(baud);
  if (it == kRates.end()) throw ConfigError("unsupported baud rate " + std::to_string(baud));
  return it->second;
}

}  // namespace

SerialByteSource::SerialByteSource(const std::string& device, int baud) {
  const speed_t speed = baud_constant(baud);
  fd_ = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw ConfigError("cannot open " + device + ": " + std::strerror(errno));
  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    ::close(fd_);
    throw ConfigError(device + " is not a serial device");
  }
  ::cfmakeraw(&tio);
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  tio.c_cflag |= CLOCAL | CREAD;
  ::tcsetattr(fd_, TCSANOW, &tio);
  ::tcflush(fd_, TCIFLUSH);
}

SerialByteSource::~SerialByteSource() {
  if (fd_ >= 0) ::close(fd_);
}

Bytes SerialByteSource::read() {
  Bytes out;
  std::uint8_t buf[512];
  for (;;) {
    const ssize_t n = ::read(fd_, buf, sizeof buf);
    if (n <= 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

}  // namespace uarm
