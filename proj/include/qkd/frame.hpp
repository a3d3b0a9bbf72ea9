#ifndef QKD_FRAME_HPP
#define QKD_FRAME_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace qkd {

/// Classical-channel message types. The classical channel is public and
/// assumed authenticated; KEY_DIGEST stands in for a real MAC.
enum class MsgType : uint8_t {
  Hello = 1,
  BasisAnnounce = 2,
  SiftMask = 3,
  SampleRequest = 4,
  SampleReveal = 5,
  ParityQuery = 6,
  ParityReply = 7,
  PaSeed = 8,
  KeyDigest = 9,
  Abort = 255,
};

bool is_known_msg_type(uint8_t t);
const char* to_string(MsgType t);

inline constexpr size_t kMaxPayload = 16u << 20;
/// Bytes of the length-covered header after the length field: type + session.
inline constexpr size_t kFrameOverhead = 9;
inline constexpr size_t kHeaderBytes = 4 + kFrameOverhead;

struct Frame {
  MsgType type = MsgType::Abort;
  uint64_t session_id = 0;
  std::vector<uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wire layout: [length u32 LE][type u8][session u64 LE][payload]
/// where length = payload size + 9. Throws FramingError on oversize payload.
std::vector<uint8_t> encode_frame(const Frame& frame);

/// Incremental decoder tolerant of arbitrary chunk boundaries.
/// feed() buffers bytes; next() yields complete frames in order and returns
/// nullopt when more bytes are needed, leaving partial input buffered.
/// A malformed length or unknown type throws FramingError and poisons the
/// decoder; the session layer answers with ABORT.
class FrameDecoder {
 public:
  void feed(std::span<const uint8_t> bytes);
  std::optional<Frame> next();
  bool poisoned() const { return poisoned_; }
  size_t buffered_bytes() const { return buffer_.size() - consumed_; }

 private:
  std::vector<uint8_t> buffer_;
  size_t consumed_ = 0;
  bool poisoned_ = false;
};

/// Little-endian payload cursor helpers shared by message codecs.
class PayloadWriter {
 public:
  std::vector<uint8_t> take() { return std::move(bytes_); }
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f64(double v);
  void raw(std::span<const uint8_t> data);

 private:
  std::vector<uint8_t> bytes_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}
  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  double f64();
  std::span<const uint8_t> raw(size_t n);
  bool done() const { return pos_ == bytes_.size(); }
  void expect_done() const;

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace qkd

#endif
