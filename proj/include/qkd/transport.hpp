#ifndef QKD_TRANSPORT_HPP
#define QKD_TRANSPORT_HPP

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "qkd/frame.hpp"

namespace qkd {

/// Reliable ordered byte stream. Loopback queues and TCP sockets implement
/// the same interface so sessions are transport-agnostic.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write(std::span<const uint8_t> data) = 0;
  /// Blocking; returns 0 only on end of stream.
  virtual size_t read_some(std::span<uint8_t> out) = 0;
  virtual void close() = 0;
};

/// Thread-safe in-process pipe (one direction).
class BlockingByteQueue {
 public:
  void write(std::span<const uint8_t> data);
  size_t read_some(std::span<uint8_t> out);
  void close();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<uint8_t> data_;
  bool closed_ = false;
};

/// Two endpoints of an in-process duplex connection.
struct LoopbackConnection {
  std::unique_ptr<ByteStream> alice;  // writes reach bob, reads come from bob
  std::unique_ptr<ByteStream> bob;
};
LoopbackConnection make_loopback();

class TcpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TcpStream : public ByteStream {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  void write(std::span<const uint8_t> data) override;
  size_t read_some(std::span<uint8_t> out) override;
  void close() override;

  static std::unique_ptr<TcpStream> connect(const std::string& host, uint16_t port);

 private:
  int fd_;
};

class TcpListener {
 public:
  explicit TcpListener(uint16_t port);  // port 0 picks an ephemeral port
  ~TcpListener();
  uint16_t port() const { return port_; }
  std::unique_ptr<TcpStream> accept();

 private:
  int fd_;
  uint16_t port_;
};

/// Read/write framed messages over a byte stream, with optional transcript
/// capture. send() appends to the transcript before the bytes hit the wire;
/// receive() after a full frame decodes, so a single-threaded alternating
/// session records frames in protocol order.
class FrameChannel {
 public:
  enum class Direction : uint8_t { AliceToBob = 0, BobToAlice = 1 };
  struct TranscriptEntry {
    Direction direction;
    std::vector<uint8_t> frame_bytes;
  };
  using Transcript = std::vector<TranscriptEntry>;

  FrameChannel(ByteStream& stream, Direction send_direction,
               std::shared_ptr<Transcript> transcript = nullptr,
               std::shared_ptr<std::mutex> transcript_mu = nullptr);

  void send(const Frame& frame);
  /// Blocks for the next frame; throws FramingError on malformed input or
  /// if the stream ends mid-frame.
  Frame receive();

 private:
  ByteStream& stream_;
  Direction send_direction_;
  FrameDecoder decoder_;
  std::shared_ptr<Transcript> transcript_;
  std::shared_ptr<std::mutex> transcript_mu_;

  void record(Direction d, std::vector<uint8_t> bytes);
};

/// Transcript file: "QKDT" magic, u32 version, then per frame one direction
/// byte followed by the raw frame bytes.
void write_transcript(const FrameChannel::Transcript& t, const std::string& path);
FrameChannel::Transcript read_transcript(const std::string& path);

/// Decode every frame of a transcript in order.
std::vector<Frame> replay_transcript(const FrameChannel::Transcript& t);

}  // namespace qkd

#endif
