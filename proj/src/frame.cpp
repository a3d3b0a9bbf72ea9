#include "qkd/frame.hpp"

#include <cstring>

namespace qkd {

bool is_known_msg_type(uint8_t t) {
  switch (static_cast<MsgType>(t)) {
    case MsgType::Hello:
    case MsgType::BasisAnnounce:
    case MsgType::SiftMask:
    case MsgType::SampleRequest:
    case MsgType::SampleReveal:
    case MsgType::ParityQuery:
    case MsgType::ParityReply:
    case MsgType::PaSeed:
    case MsgType::KeyDigest:
    case MsgType::Abort:
      return true;
    default:
      return false;
  }
}

const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::Hello: return "HELLO";
    case MsgType::BasisAnnounce: return "BASIS_ANNOUNCE";
    case MsgType::SiftMask: return "SIFT_MASK";
    case MsgType::SampleRequest: return "SAMPLE_REQUEST";
    case MsgType::SampleReveal: return "SAMPLE_REVEAL";
    case MsgType::ParityQuery: return "PARITY_QUERY";
    case MsgType::ParityReply: return "PARITY_REPLY";
    case MsgType::PaSeed: return "PA_SEED";
    case MsgType::KeyDigest: return "KEY_DIGEST";
    case MsgType::Abort: return "ABORT";
    default: return "UNKNOWN";
  }
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload)
    throw FramingError("encode_frame: payload exceeds 16 MiB");
  std::vector<uint8_t> out;
  out.reserve(kHeaderBytes + frame.payload.size());
  put_u32(out, uint32_t(frame.payload.size() + kFrameOverhead));
  out.push_back(uint8_t(frame.type));
  put_u64(out, frame.session_id);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

void FrameDecoder::feed(std::span<const uint8_t> bytes) {
  if (consumed_ > 0 && consumed_ == buffer_.size()) {
    buffer_.clear();
    consumed_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameDecoder::next() {
  if (poisoned_) throw FramingError("FrameDecoder: poisoned stream");
  const size_t avail = buffer_.size() - consumed_;
  if (avail < 4) return std::nullopt;
  const uint8_t* p = buffer_.data() + consumed_;
  const uint32_t length = get_u32(p);
  if (length < kFrameOverhead || length > kMaxPayload + kFrameOverhead) {
    poisoned_ = true;
    throw FramingError("FrameDecoder: malformed frame length");
  }
  if (avail < 4 + size_t(length)) return std::nullopt;
  if (!is_known_msg_type(p[4])) {
    poisoned_ = true;
    throw FramingError("FrameDecoder: unknown message type");
  }
  Frame f;
  f.type = static_cast<MsgType>(p[4]);
  f.session_id = get_u64(p + 5);
  f.payload.assign(p + kHeaderBytes, p + 4 + length);
  consumed_ += 4 + length;
  if (consumed_ == buffer_.size()) {
    buffer_.clear();
    consumed_ = 0;
  }
  return f;
}

void PayloadWriter::u32(uint32_t v) { put_u32(bytes_, v); }
void PayloadWriter::u64(uint64_t v) { put_u64(bytes_, v); }
void PayloadWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(bytes_, bits);
}
void PayloadWriter::raw(std::span<const uint8_t> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

uint8_t PayloadReader::u8() {
  if (pos_ + 1 > bytes_.size()) throw FramingError("payload underrun");
  return bytes_[pos_++];
}
uint32_t PayloadReader::u32() {
  if (pos_ + 4 > bytes_.size()) throw FramingError("payload underrun");
  const uint32_t v = get_u32(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}
uint64_t PayloadReader::u64() {
  if (pos_ + 8 > bytes_.size()) throw FramingError("payload underrun");
  const uint64_t v = get_u64(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}
double PayloadReader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
std::span<const uint8_t> PayloadReader::raw(size_t n) {
  if (pos_ + n > bytes_.size()) throw FramingError("payload underrun");
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}
void PayloadReader::expect_done() const {
  if (!done()) throw FramingError("payload has trailing bytes");
}

}  // namespace qkd
