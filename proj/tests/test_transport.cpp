#include <doctest.h>

#include <cstring>
#include <stdexcept>
#include <thread>

#include "qkd/frame.hpp"
#include "qkd/rng.hpp"
#include "qkd/transport.hpp"

using namespace qkd;

namespace {

Frame random_frame(RngStream& rng) {
  static const MsgType kTypes[] = {
      MsgType::Hello,        MsgType::BasisAnnounce, MsgType::SiftMask,
      MsgType::SampleRequest, MsgType::SampleReveal, MsgType::ParityQuery,
      MsgType::ParityReply,  MsgType::PaSeed,        MsgType::KeyDigest,
      MsgType::Abort,
  };
  Frame f;
  f.type = kTypes[rng.below(10)];
  f.session_id = rng.next_u64();
  const size_t len = rng.below(512);
  f.payload.resize(len);
  for (auto& b : f.payload) b = uint8_t(rng.next_u64());
  return f;
}

}  // namespace

TEST_CASE("empty abort frame is 13 bytes with the expected length prefix") {
  const auto bytes = encode_frame({MsgType::Abort, 0, {}});
  REQUIRE(bytes.size() == 13);
  CHECK(bytes[0] == 0x09);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x00);
  CHECK(bytes[3] == 0x00);
  CHECK(bytes[4] == 0xFF);  // ABORT
}

TEST_CASE("frame layout is little-endian with a 9-byte covered header") {
  Frame f{MsgType::KeyDigest, 0x0123456789abcdefull, {0xAA, 0xBB}};
  const auto bytes = encode_frame(f);
  REQUIRE(bytes.size() == 15);
  CHECK(bytes[0] == 11);  // payload 2 + 9
  CHECK(bytes[4] == 9);   // KEY_DIGEST
  CHECK(bytes[5] == 0xef);
  CHECK(bytes[12] == 0x01);
  CHECK(bytes[13] == 0xAA);
}

TEST_CASE("round trip of a random 1 KiB payload") {
  RngStream rng(21);
  Frame f{MsgType::PaSeed, 7, {}};
  f.payload.resize(1024);
  for (auto& b : f.payload) b = uint8_t(rng.next_u64());
  FrameDecoder dec;
  dec.feed(encode_frame(f));
  const auto out = dec.next();
  REQUIRE(out.has_value());
  CHECK(*out == f);
  CHECK(dec.buffered_bytes() == 0);
}

TEST_CASE("truncated input yields no frame and consumes nothing") {
  const auto bytes = encode_frame({MsgType::Hello, 1, {1, 2, 3, 4}});
  FrameDecoder dec;
  dec.feed({bytes.data(), bytes.size() - 1});
  CHECK(!dec.next().has_value());
  CHECK(dec.buffered_bytes() == bytes.size() - 1);
  dec.feed({bytes.data() + bytes.size() - 1, 1});
  CHECK(dec.next().has_value());
}

TEST_CASE("two frames split mid-header decode cleanly") {
  auto a = encode_frame({MsgType::Hello, 1, {0x11}});
  const auto b = encode_frame({MsgType::SiftMask, 2, {0x22, 0x33}});
  a.insert(a.end(), b.begin(), b.end());
  FrameDecoder dec;
  dec.feed({a.data(), 15});  // ends inside the second frame's length field
  REQUIRE(dec.next().has_value());
  CHECK(!dec.next().has_value());
  dec.feed({a.data() + 15, a.size() - 15});
  const auto second = dec.next();
  REQUIRE(second.has_value());
  CHECK(second->type == MsgType::SiftMask);
}

TEST_CASE("oversized declared length poisons the decoder") {
  std::vector<uint8_t> bytes(8, 0);
  const uint32_t bad = uint32_t(kMaxPayload + kFrameOverhead + 1);
  std::memcpy(bytes.data(), &bad, 4);
  FrameDecoder dec;
  dec.feed(bytes);
  CHECK_THROWS_AS(dec.next(), FramingError);
  CHECK(dec.poisoned());
  CHECK_THROWS_AS(dec.next(), FramingError);
}

TEST_CASE("unknown message type is a framing error") {
  auto bytes = encode_frame({MsgType::Hello, 1, {}});
  bytes[4] = 42;
  FrameDecoder dec;
  dec.feed(bytes);
  CHECK_THROWS_AS(dec.next(), FramingError);
}

TEST_CASE("undersized declared length is a framing error") {
  std::vector<uint8_t> bytes(13, 0);
  bytes[0] = 8;  // < type + session id
  FrameDecoder dec;
  dec.feed(bytes);
  CHECK_THROWS_AS(dec.next(), FramingError);
}

TEST_CASE("oversize payload cannot be encoded") {
  Frame f{MsgType::PaSeed, 0, {}};
  f.payload.resize(kMaxPayload + 1);
  CHECK_THROWS_AS(encode_frame(f), FramingError);
}

TEST_CASE("property: codec is a bijection and decoding ignores chunking") {
  RngStream rng(22, "transport-prop");
  const int kFrames = 2000;
  std::vector<Frame> frames;
  std::vector<uint8_t> wire;
  for (int i = 0; i < kFrames; ++i) {
    frames.push_back(random_frame(rng));
    const auto bytes = encode_frame(frames.back());
    FrameDecoder one;
    one.feed(bytes);
    REQUIRE(*one.next() == frames.back());
    wire.insert(wire.end(), bytes.begin(), bytes.end());
  }
  FrameDecoder dec;
  size_t pos = 0, seen = 0;
  while (pos < wire.size()) {
    const size_t chunk = std::min<size_t>(1 + rng.below(97), wire.size() - pos);
    dec.feed({wire.data() + pos, chunk});
    pos += chunk;
    while (auto f = dec.next()) {
      REQUIRE(*f == frames[seen]);
      ++seen;
    }
  }
  CHECK(seen == frames.size());
  CHECK(dec.buffered_bytes() == 0);
}

TEST_CASE("loopback queues carry framed traffic between threads") {
  auto conn = make_loopback();
  FrameChannel alice(*conn.alice, FrameChannel::Direction::AliceToBob);
  FrameChannel bob(*conn.bob, FrameChannel::Direction::BobToAlice);
  std::thread t([&] {
    for (int i = 0; i < 50; ++i) {
      Frame f = bob.receive();
      f.session_id += 1;
      bob.send(f);
    }
  });
  RngStream rng(23);
  for (int i = 0; i < 50; ++i) {
    Frame f = random_frame(rng);
    alice.send(f);
    const Frame echo = alice.receive();
    REQUIRE(echo.session_id == f.session_id + 1);
  }
  t.join();
}

TEST_CASE("transcript files round-trip and replay in order") {
  RngStream rng(24);
  FrameChannel::Transcript t;
  std::vector<Frame> frames;
  for (int i = 0; i < 20; ++i) {
    frames.push_back(random_frame(rng));
    t.push_back({i % 2 ? FrameChannel::Direction::BobToAlice
                       : FrameChannel::Direction::AliceToBob,
                 encode_frame(frames.back())});
  }
  const std::string path = "/tmp/qkd_test_transcript.bin";
  write_transcript(t, path);
  const auto loaded = read_transcript(path);
  REQUIRE(loaded.size() == t.size());
  const auto replayed = replay_transcript(loaded);
  for (size_t i = 0; i < frames.size(); ++i) {
    CHECK(loaded[i].direction == t[i].direction);
    REQUIRE(replayed[i] == frames[i]);
  }
}

TEST_CASE("tcp stream carries frames end to end") {
  TcpListener listener(0);
  std::unique_ptr<TcpStream> server;
  std::thread t([&] { server = listener.accept(); });
  auto client = TcpStream::connect("127.0.0.1", listener.port());
  t.join();
  REQUIRE(server);
  FrameChannel a(*client, FrameChannel::Direction::AliceToBob);
  FrameChannel b(*server, FrameChannel::Direction::BobToAlice);
  RngStream rng(25);
  for (int i = 0; i < 10; ++i) {
    const Frame f = random_frame(rng);
    a.send(f);
    REQUIRE(b.receive() == f);
  }
}
