#include "qkd/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

namespace qkd {

void BlockingByteQueue::write(std::span<const uint8_t> data) {
  {
    std::lock_guard lock(mu_);
    if (closed_) throw std::runtime_error("BlockingByteQueue: write after close");
    data_.insert(data_.end(), data.begin(), data.end());
  }
  cv_.notify_all();
}

size_t BlockingByteQueue::read_some(std::span<uint8_t> out) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !data_.empty() || closed_; });
  if (data_.empty()) return 0;
  const size_t n = std::min(out.size(), data_.size());
  std::copy_n(data_.begin(), n, out.begin());
  data_.erase(data_.begin(), data_.begin() + n);
  return n;
}

void BlockingByteQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

namespace {

class QueuePairStream : public ByteStream {
 public:
  QueuePairStream(std::shared_ptr<BlockingByteQueue> out,
                  std::shared_ptr<BlockingByteQueue> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  void write(std::span<const uint8_t> data) override { out_->write(data); }
  size_t read_some(std::span<uint8_t> buf) override { return in_->read_some(buf); }
  void close() override {
    out_->close();
    in_->close();
  }

 private:
  std::shared_ptr<BlockingByteQueue> out_;
  std::shared_ptr<BlockingByteQueue> in_;
};

}  // namespace

LoopbackConnection make_loopback() {
  auto a2b = std::make_shared<BlockingByteQueue>();
  auto b2a = std::make_shared<BlockingByteQueue>();
  LoopbackConnection c;
  c.alice = std::make_unique<QueuePairStream>(a2b, b2a);
  c.bob = std::make_unique<QueuePairStream>(b2a, a2b);
  return c;
}

TcpStream::TcpStream(int fd) : fd_(fd) {
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpStream::~TcpStream() { close(); }

void TcpStream::write(std::span<const uint8_t> data) {
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TcpError(std::string("send: ") + std::strerror(errno));
    }
    off += size_t(n);
  }
}

size_t TcpStream::read_some(std::span<uint8_t> out) {
  while (true) {
    const ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
    if (n >= 0) return size_t(n);
    if (errno == EINTR) continue;
    throw TcpError(std::string("recv: ") + std::strerror(errno));
  }
}

void TcpStream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<TcpStream> TcpStream::connect(const std::string& host, uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TcpError("socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TcpError("bad host address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd);
    throw TcpError(std::string("connect: ") + std::strerror(err));
  }
  return std::make_unique<TcpStream>(fd);
}

TcpListener::TcpListener(uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TcpError("socket failed");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(fd_, 1) != 0) {
    const int err = errno;
    ::close(fd_);
    throw TcpError(std::string("bind/listen: ") + std::strerror(err));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpListener::accept() {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TcpError(std::string("accept: ") + std::strerror(errno));
  return std::make_unique<TcpStream>(fd);
}

FrameChannel::FrameChannel(ByteStream& stream, Direction send_direction,
                           std::shared_ptr<Transcript> transcript,
                           std::shared_ptr<std::mutex> transcript_mu)
    : stream_(stream),
      send_direction_(send_direction),
      transcript_(std::move(transcript)),
      transcript_mu_(std::move(transcript_mu)) {}

void FrameChannel::record(Direction d, std::vector<uint8_t> bytes) {
  if (!transcript_) return;
  if (transcript_mu_) {
    std::lock_guard lock(*transcript_mu_);
    transcript_->push_back({d, std::move(bytes)});
  } else {
    transcript_->push_back({d, std::move(bytes)});
  }
}

void FrameChannel::send(const Frame& frame) {
  auto bytes = encode_frame(frame);
  record(send_direction_, bytes);
  stream_.write(bytes);
}

Frame FrameChannel::receive() {
  while (true) {
    if (auto f = decoder_.next()) {
      const Direction peer = send_direction_ == Direction::AliceToBob
                                 ? Direction::BobToAlice
                                 : Direction::AliceToBob;
      // Re-encoding is canonical, so the recorded bytes match the wire.
      record(peer, encode_frame(*f));
      return *std::move(f);
    }
    uint8_t buf[4096];
    const size_t n = stream_.read_some(buf);
    if (n == 0) throw FramingError("stream ended mid-frame");
    decoder_.feed({buf, n});
  }
}

void write_transcript(const FrameChannel::Transcript& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open transcript for writing: " + path);
  out.write("QKDT", 4);
  const char version[4] = {1, 0, 0, 0};  // u32 LE
  out.write(version, 4);
  for (const auto& e : t) {
    const uint8_t d = uint8_t(e.direction);
    out.write(reinterpret_cast<const char*>(&d), 1);
    out.write(reinterpret_cast<const char*>(e.frame_bytes.data()),
              std::streamsize(e.frame_bytes.size()));
  }
}

FrameChannel::Transcript read_transcript(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open transcript: " + path);
  char magic[4];
  uint8_t vbytes[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(vbytes), 4);
  const uint32_t version = uint32_t(vbytes[0]) | uint32_t(vbytes[1]) << 8 |
                           uint32_t(vbytes[2]) << 16 | uint32_t(vbytes[3]) << 24;
  if (!in || std::memcmp(magic, "QKDT", 4) != 0 || version != 1)
    throw std::runtime_error("bad transcript header: " + path);

  FrameChannel::Transcript t;
  while (true) {
    uint8_t d;
    if (!in.read(reinterpret_cast<char*>(&d), 1)) break;
    uint8_t head[4];
    if (!in.read(reinterpret_cast<char*>(head), 4))
      throw std::runtime_error("truncated transcript entry");
    const uint32_t length = uint32_t(head[0]) | uint32_t(head[1]) << 8 |
                            uint32_t(head[2]) << 16 | uint32_t(head[3]) << 24;
    if (length < kFrameOverhead || length > kMaxPayload + kFrameOverhead)
      throw std::runtime_error("corrupt transcript frame length");
    std::vector<uint8_t> bytes(head, head + 4);
    bytes.resize(4 + length);
    if (!in.read(reinterpret_cast<char*>(bytes.data() + 4), length))
      throw std::runtime_error("truncated transcript frame");
    t.push_back({static_cast<FrameChannel::Direction>(d), std::move(bytes)});
  }
  return t;
}

std::vector<Frame> replay_transcript(const FrameChannel::Transcript& t) {
  std::vector<Frame> frames;
  for (const auto& e : t) {
    FrameDecoder dec;
    dec.feed(e.frame_bytes);
    auto f = dec.next();
    if (!f || dec.buffered_bytes() != 0)
      throw FramingError("transcript entry is not exactly one frame");
    frames.push_back(*std::move(f));
  }
  return frames;
}

}  // namespace qkd
