#include <gtest/gtest.h>

#include <random>

#include "lanerob/protocol.hpp"

using namespace lanerob;
using namespace std::chrono_literals;

namespace {

constexpr int kW = 32;
constexpr int kH = 24;

Json hello_ack(const std::string& family, bool gradient = false) {
  return {{"type", "hello_ack"}, {"family", family}, {"input_w", kW}, {"input_h", kH}, {"gradient", gradient}};
}

ExternalOptions quick(std::chrono::milliseconds t = 300ms) {
  ExternalOptions o;
  o.timeout = t;
  return o;
}

std::vector<LaneRepresentation> one_of_each_family() {
  PointLanes p;
  p.lines.push_back({{8.25, 4}, {3.5, 20}});
  ProbMapLanes m;
  m.rows = 2;
  m.cols = 4;
  m.maps.push_back({0.1, 0.7, 0.2, 0.0, 0.0, 0.0, 0.5, 0.5});
  PolyLanes y{{{0.1, -0.2, 0.5}, {0.75}}, CoordUnits::normalized};
  AnchorLanes a;
  a.units = CoordUnits::pixels;
  a.anchors.push_back({0.8, {2, 10, 20}, {5, 6, 7}, {0.5, -0.5, 0}});
  return {{kW, kH, p}, {kW, kH, m}, {kW, kH, y}, {kW, kH, a}};
}

// gray-level mean of the whole frame as a constant polynomial; analytic gradient
class MeanDetector : public GrayDetector {
 public:
  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect_gray(const GrayImage& g) const override {
    double s = 0.0;
    for (double v : g.values) s += v;
    return {kW, kH, PolyLanes{{{s / g.values.size() / 255.0}}, CoordUnits::normalized}};
  }
  GrayImage gradient(const ImageFrame& in, AttackDirection dir, const PixelMask& region, const ErcOptions&) override {
    GrayImage g(in.width, in.height, 0.0);
    for (std::size_t i = 0; i < region.on.size(); ++i) {
      if (region.on[i]) g.values[i] = (dir == AttackDirection::right ? -1.0 : 1.0) * (1.0 + i % 7);
    }
    return g;
  }

 private:
  DetectorInfo info_{"mean", LaneFamily::poly, kW, kH, true};
};

ImageFrame gray_frame(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageFrame f(kW, kH);
  for (std::size_t i = 0; i < f.pixels.size(); i += 3) {
    const auto v = static_cast<std::uint8_t>(rng() & 0xff);
    f.pixels[i] = f.pixels[i + 1] = f.pixels[i + 2] = v;
  }
  return f;
}

std::unique_ptr<Transport> scripted(std::function<std::vector<std::string>(const Json&)> on_request) {
  return std::make_unique<LoopbackTransport>([on_request](const std::string& line) {
    const Json req = Json::parse(line);
    if (req.at("type") == "hello") return std::vector<std::string>{hello_ack("poly").dump()};
    return on_request(req);
  });
}

}  // namespace

TEST(Wire, Base64RoundTrip) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 0; n < 40; ++n) {
    std::string bytes(n, '\0');
    for (auto& c : bytes) c = static_cast<char>(rng() & 0xff);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  EXPECT_EQ(base64_encode("Man"), "TWFu");
  EXPECT_EQ(base64_encode("Ma"), "TWE=");
}

TEST(Wire, PgmCarriesGrayFrames) {
  const auto f = gray_frame(5);
  EXPECT_EQ(decode_frame(encode_pgm(f)), f);
  PixelMask m(kW, kH);
  m.set(3, 4);
  m.set(31, 23);
  const auto back = mask_from_pgm(mask_to_pgm(m));
  EXPECT_EQ(back.on, m.on);
}

TEST(Wire, LanesRoundTripEveryFamily) {
  for (const auto& rep : one_of_each_family()) {
    const Json j = lanes_to_wire(rep);
    const auto back = lanes_from_wire(Json::parse(j.dump()), kW, kH);
    EXPECT_EQ(back.family(), rep.family());
    EXPECT_EQ(lanes_to_wire(back), j) << to_string(rep.family());
  }
}

TEST(Wire, RejectsAmbiguousPayload) {
  Json j = lanes_to_wire(one_of_each_family()[0]);
  j["coeffs"] = Json::array();
  EXPECT_THROW(lanes_from_wire(j, kW, kH), ProtocolError);
}

TEST(Loopback, FixedDetectorRoundTrip) {
  for (const auto& rep : one_of_each_family()) {
    FixedDetector inner(rep);
    ExternalDetector ext(loopback_for(inner), quick());
    EXPECT_EQ(ext.info().family, rep.family());
    EXPECT_EQ(ext.info().input_width, kW);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(lanes_to_wire(ext.detect(gray_frame(k))), lanes_to_wire(rep));
  }
}

TEST(Loopback, GradientMatchesInProcess) {
  MeanDetector inner;
  ExternalDetector ext(loopback_for(inner), quick());
  ASSERT_TRUE(ext.info().gradient);
  PixelMask region(kW, kH);
  for (int x = 2; x < 20; x += 3) region.set(x, 7);
  region.set(0, 0);
  const auto f = gray_frame(1);
  const auto a = ext.gradient(f, AttackDirection::left, region, {});
  const auto b = inner.gradient(f, AttackDirection::left, region, {});
  EXPECT_EQ(a.values, b.values);
  const auto d = ext.detect(f);
  EXPECT_EQ(lanes_to_wire(d), lanes_to_wire(inner.detect(f)));
}

TEST(Loopback, WrongInputSizeRejectedLocally) {
  FixedDetector inner(one_of_each_family()[2]);
  ExternalDetector ext(loopback_for(inner), quick());
  EXPECT_THROW(ext.detect(ImageFrame(kW + 1, kH)), Error);
}

TEST(Protocol, DeclaredFamilyIsEnforced) {
  FixedDetector poly(one_of_each_family()[2]);
  auto transport = std::make_unique<LoopbackTransport>([&poly](const std::string& line) {
    if (Json::parse(line).at("type") == "hello") return std::vector<std::string>{hello_ack("anchors").dump()};
    return serve_detector_request(poly, line);
  });
  ExternalDetector ext(std::move(transport), quick());
  try {
    ext.detect(gray_frame(0));
    FAIL() << "expected a protocol violation";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("protocol violation"), std::string::npos);
  }
}

TEST(Protocol, SilentAdapterTimesOut) {
  ExternalDetector ext(scripted([](const Json&) { return std::vector<std::string>{}; }), quick(150ms));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(ext.detect(gray_frame(0)), TimeoutError);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, 140ms);
}

TEST(Protocol, DeadAdapterSurfacesAsTimeout) {
  ExternalDetector ext(scripted([](const Json&) -> std::vector<std::string> { throw StopServing{}; }), quick());
  EXPECT_THROW(ext.detect(gray_frame(0)), TimeoutError);
}

TEST(Protocol, RemoteErrorIsReported) {
  ExternalDetector ext(scripted([](const Json& req) {
                         return std::vector<std::string>{
                             Json{{"type", "error"}, {"id", req.at("id")}, {"msg", "out of memory"}}.dump()};
                       }),
                       quick());
  try {
    ext.detect(gray_frame(0));
    FAIL();
  } catch (const RemoteError& e) {
    EXPECT_NE(std::string(e.what()).find("out of memory"), std::string::npos);
  }
}

TEST(Protocol, StaleResponsesAreSkipped) {
  const Json lanes = lanes_to_wire(one_of_each_family()[2]);
  ExternalDetector ext(scripted([lanes](const Json& req) {
                         const auto id = req.at("id").get<std::int64_t>();
                         Json stale = lanes, fresh = lanes;
                         stale["type"] = fresh["type"] = "lanes";
                         stale["id"] = id - 1;
                         fresh["id"] = id;
                         return std::vector<std::string>{stale.dump(), fresh.dump()};
                       }),
                       quick());
  EXPECT_NO_THROW(ext.detect(gray_frame(0)));
  EXPECT_NO_THROW(ext.detect(gray_frame(1)));
}

TEST(Protocol, UnknownIdAndMalformedRepliesAreViolations) {
  ExternalDetector future(scripted([](const Json& req) {
                            return std::vector<std::string>{
                                Json{{"type", "lanes"}, {"id", req.at("id").get<int>() + 5}, {"coeffs", Json::array()}}
                                    .dump()};
                          }),
                          quick());
  EXPECT_THROW(future.detect(gray_frame(0)), ProtocolError);
  ExternalDetector garbage(scripted([](const Json&) { return std::vector<std::string>{"{not json"}; }), quick());
  EXPECT_THROW(garbage.detect(gray_frame(0)), ProtocolError);
}

TEST(Handshake, Failures) {
  auto reply = [](std::string s) {
    return std::make_unique<LoopbackTransport>([s](const std::string&) { return std::vector<std::string>{s}; });
  };
  EXPECT_THROW(ExternalDetector(reply("{\"type\":\"lanes\"}"), quick()), HandshakeError);
  EXPECT_THROW(ExternalDetector(reply("nonsense"), quick()), HandshakeError);
  EXPECT_THROW(ExternalDetector(reply(Json{{"type", "hello_ack"}, {"family", "splines"}, {"input_w", 4}, {"input_h", 4}}.dump()), quick()),
               HandshakeError);
  EXPECT_THROW(ExternalDetector(reply(Json{{"type", "hello_ack"}, {"family", "poly"}, {"input_w", 0}, {"input_h", 4}}.dump()), quick()),
               HandshakeError);
  auto silent = std::make_unique<LoopbackTransport>([](const std::string&) { return std::vector<std::string>{}; });
  EXPECT_THROW(ExternalDetector(std::move(silent), quick(100ms)), HandshakeError);
  auto dead = std::make_unique<LoopbackTransport>([](const std::string&) -> std::vector<std::string> { throw StopServing{}; });
  EXPECT_THROW(ExternalDetector(std::move(dead), quick()), HandshakeError);
}

TEST(ChildProcess, HandshakeThenSilence) {
  const std::string cmd = "read hello; echo '" + hello_ack("points").dump() + "'; cat > /dev/null";
  ExternalDetector ext(std::make_unique<ChildProcessTransport>(cmd), quick(200ms));
  EXPECT_EQ(ext.info().family, LaneFamily::points);
  EXPECT_THROW(ext.detect(gray_frame(0)), TimeoutError);
}

TEST(ChildProcess, ExitedAdapter) {
  EXPECT_THROW(ExternalDetector(std::make_unique<ChildProcessTransport>("exit 0"), quick()), HandshakeError);
}

TEST(Tcp, ServesOverLocalSocket) {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(srv, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(srv, 1), 0);
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);

  FixedDetector inner(one_of_each_family()[0]);
  std::thread server([&] {
    const int fd = ::accept(srv, nullptr, nullptr);
    std::string buf;
    char chunk[4096];
    ssize_t n;
    while ((n = ::read(fd, chunk, sizeof chunk)) > 0) {
      buf.append(chunk, static_cast<std::size_t>(n));
      for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
        for (const auto& reply : serve_detector_request(inner, buf.substr(0, nl))) {
          const std::string out = reply + "\n";
          ASSERT_EQ(::write(fd, out.data(), out.size()), static_cast<ssize_t>(out.size()));
        }
        buf.erase(0, nl + 1);
      }
    }
    ::close(fd);
  });
  {
    ExternalDetector ext(std::make_unique<TcpTransport>("127.0.0.1", port), quick());
    EXPECT_EQ(ext.info().family, LaneFamily::points);
    EXPECT_EQ(lanes_to_wire(ext.detect(gray_frame(2))), lanes_to_wire(one_of_each_family()[0]));
  }
  server.join();
  ::close(srv);
  EXPECT_THROW(TcpTransport("127.0.0.1", port), TransportError);
}
