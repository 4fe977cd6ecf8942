#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <netdb.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lanerob/detectors.hpp"
#include "lanerob/image.hpp"
#include "lanerob/lanes.hpp"

namespace lanerob {

// External detectors speak version 1 of a line-delimited JSON protocol over a byte stream:
//
//   -> {"type":"hello","proto":1}
//   <- {"type":"hello_ack","family":"points|probmap|poly|anchors","input_w":N,"input_h":N,"gradient":bool}
//   -> {"type":"detect","id":K,"image_pgm_b64":"..."}
//   <- {"type":"lanes","id":K, ...family payload...}
//   -> {"type":"gradient","id":K,"direction":"left|right","image_pgm_b64":"...","mask_pgm_b64":"..."}
//   <- {"type":"grad","id":K,"values":[...row-major over the mask...]}
//   <- {"type":"error","id":K,"msg":"..."}
//
// Family payloads: points {"lines":[[[x,y],...],...]}; probmap {"rows","cols","kind","maps":[[...],...]};
// poly {"units","coeffs":[[...],...]} (highest degree first); anchors {"units","anchors":[{"pi","ys","xs","deltas"}]}.

inline constexpr int kProtocolVersion = 1;

class TransportError : public Error {
 public:
  using Error::Error;
};
class HandshakeError : public Error {
 public:
  using Error::Error;
};
class TimeoutError : public Error {
 public:
  using Error::Error;
};
class ProtocolError : public Error {
 public:
  using Error::Error;
};
class RemoteError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Transports

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_line(const std::string& line) = 0;
  /// Next complete line, or nullopt if none arrives within `timeout`. Throws TransportError
  /// once the peer has closed the stream.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
};

/// Line transport over a pair of file descriptors (pipes or a socket).
class FdTransport : public Transport {
 public:
  FdTransport(int read_fd, int write_fd) : rfd_(read_fd), wfd_(write_fd) {}
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;
  ~FdTransport() override { close_fds(); }

  void write_line(const std::string& line) override {
    std::string data = line;
    data += '\n';
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(wfd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (eof_) throw TransportError("peer closed the stream");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{rfd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) return std::nullopt;
      char chunk[65536];
      const ssize_t n = ::read(rfd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        eof_ = true;
      } else {
        buf_.append(chunk, static_cast<std::size_t>(n));
      }
    }
  }

 protected:
  void close_fds() {
    if (rfd_ >= 0) ::close(rfd_);
    if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
    rfd_ = wfd_ = -1;
  }

  int rfd_ = -1;
  int wfd_ = -1;

 private:
  std::string buf_;
  bool eof_ = false;
};

/// Child process started with /bin/sh -c `command`, talking over its standard input and output.
/// SIGPIPE is ignored process-wide so a dead child surfaces as a write error.
class ChildProcessTransport : public FdTransport {
 public:
  explicit ChildProcessTransport(const std::string& command) : FdTransport(-1, -1) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw TransportError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    rfd_ = from_child[0];
    wfd_ = to_child[1];
  }

  ~ChildProcessTransport() override {
    close_fds();
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
};

class TcpTransport : public FdTransport {
 public:
  TcpTransport(const std::string& host, int port) : FdTransport(-1, -1) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
      throw TransportError("cannot resolve " + host);
    }
    int fd = -1;
    for (auto* a = res; a; a = a->ai_next) {
      fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
    rfd_ = wfd_ = fd;
  }
};

/// Server side of an in-process loopback: called once per request line, returns the reply
/// lines (none to stay silent). Throwing StopServing closes the server end of the stream.
using LineHandler = std::function<std::vector<std::string>(const std::string&)>;

struct StopServing {};

/// Socket pair whose far end is served by `handler` on a background thread.
class LoopbackTransport : public FdTransport {
 public:
  explicit LoopbackTransport(LineHandler handler) : FdTransport(-1, -1) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw TransportError("socketpair failed");
    rfd_ = wfd_ = sv[0];
    server_fd_ = sv[1];
    server_ = std::thread([fd = sv[1], h = std::move(handler)] { serve(fd, h); });
  }

  ~LoopbackTransport() override {
    ::shutdown(rfd_, SHUT_RDWR);
    if (server_.joinable()) server_.join();
    ::close(server_fd_);
  }

 private:
  static void serve(int fd, const LineHandler& handler) {
    std::string buf;
    char chunk[65536];
    for (;;) {
      const ssize_t n = ::read(fd, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        const std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        std::vector<std::string> replies;
        try {
          replies = handler(line);
        } catch (const StopServing&) {
          ::shutdown(fd, SHUT_RDWR);
          return;
        }
        for (auto& r : replies) {
          r += '\n';
          std::size_t off = 0;
          while (off < r.size()) {
            const ssize_t w = ::send(fd, r.data() + off, r.size() - off, MSG_NOSIGNAL);
            if (w <= 0) return;
            off += static_cast<std::size_t>(w);
          }
        }
      }
    }
  }

  int server_fd_ = -1;
  std::thread server_;
};

// ---------------------------------------------------------------------------
// Wire encoding

inline Json lanes_to_wire(const LaneRepresentation& rep) {
  Json j = Json::object();
  const auto units = [](CoordUnits u) { return u == CoordUnits::pixels ? "pixels" : "normalized"; };
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, PointLanes>) {
          Json lines = Json::array();
          for (const auto& l : d.lines) {
            Json pts = Json::array();
            for (const auto& p : l) pts.push_back({p.x, p.y});
            lines.push_back(std::move(pts));
          }
          j["lines"] = std::move(lines);
        } else if constexpr (std::is_same_v<T, ProbMapLanes>) {
          j["rows"] = d.rows;
          j["cols"] = d.cols;
          j["kind"] = d.kind == ProbMapKind::row_wise ? "row_wise" : "segmentation";
          j["maps"] = d.maps;
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          j["units"] = units(d.units);
          j["coeffs"] = d.coeffs;
        } else {
          j["units"] = units(d.units);
          Json arr = Json::array();
          for (const auto& a : d.anchors) arr.push_back({{"pi", a.prob}, {"ys", a.ys}, {"xs", a.xs}, {"deltas", a.offsets}});
          j["anchors"] = std::move(arr);
        }
      },
      rep.data);
  return j;
}

/// Parses a lanes payload; the family is identified by its payload key.
inline LaneRepresentation lanes_from_wire(const Json& j, int width, int height) {
  const auto units = [&](const Json& o) {
    const auto u = o.value("units", std::string("pixels"));
    if (u == "pixels") return CoordUnits::pixels;
    if (u == "normalized") return CoordUnits::normalized;
    throw ProtocolError("unknown coordinate units '" + u + "'");
  };
  LaneRepresentation rep;
  rep.image_width = width;
  rep.image_height = height;
  int keys = 0;
  for (const char* k : {"lines", "maps", "coeffs", "anchors"}) keys += j.contains(k) ? 1 : 0;
  if (keys != 1) throw ProtocolError("lanes message must carry exactly one family payload");
  if (j.contains("lines")) {
    PointLanes p;
    for (const auto& l : j.at("lines")) {
      std::vector<Vec2> pts;
      for (const auto& q : l) pts.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
      p.lines.push_back(std::move(pts));
    }
    rep.data = std::move(p);
  } else if (j.contains("maps")) {
    ProbMapLanes m;
    m.rows = j.at("rows").get<int>();
    m.cols = j.at("cols").get<int>();
    const auto kind = j.value("kind", std::string("segmentation"));
    if (kind != "segmentation" && kind != "row_wise") throw ProtocolError("unknown probmap kind '" + kind + "'");
    m.kind = kind == "row_wise" ? ProbMapKind::row_wise : ProbMapKind::segmentation;
    m.maps = j.at("maps").get<std::vector<std::vector<double>>>();
    rep.data = std::move(m);
  } else if (j.contains("coeffs")) {
    PolyLanes p;
    p.units = units(j);
    p.coeffs = j.at("coeffs").get<std::vector<std::vector<double>>>();
    rep.data = std::move(p);
  } else {
    AnchorLanes a;
    a.units = units(j);
    for (const auto& o : j.at("anchors")) {
      a.anchors.push_back({o.at("pi").get<double>(), o.at("ys").get<std::vector<double>>(),
                           o.at("xs").get<std::vector<double>>(), o.at("deltas").get<std::vector<double>>()});
    }
    rep.data = std::move(a);
  }
  return rep;
}

inline std::string mask_to_pgm(const PixelMask& m) {
  std::vector<std::uint8_t> g(m.on.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = m.on[i] ? 255 : 0;
  return encode_pgm(m.width, m.height, g);
}

inline PixelMask mask_from_pgm(std::string_view data) {
  const auto pnm = decode_pnm(data);
  if (pnm.channels != 1) throw ProtocolError("mask must be a gray map");
  PixelMask m(pnm.width, pnm.height);
  for (std::size_t i = 0; i < m.on.size(); ++i) m.on[i] = pnm.samples[i] > 127;
  return m;
}

// ---------------------------------------------------------------------------
// Host side

struct ExternalOptions {
  std::chrono::milliseconds timeout{5000};
  std::string name = "external";
};

/// Detector served by an adapter over a Transport. The handshake runs in the constructor;
/// one request is in flight at a time and responses are matched by id.
class ExternalDetector : public Detector {
 public:
  ExternalDetector(std::unique_ptr<Transport> transport, ExternalOptions opts = {})
      : transport_(std::move(transport)), opts_(std::move(opts)) {
    if (!transport_) throw Error("external detector: no transport");
    handshake();
  }

  const DetectorInfo& info() const override { return info_; }

  LaneRepresentation detect(const ImageFrame& input, const FrameContext* = nullptr) override {
    check_input(input);
    const auto id = next_id_++;
    send({{"type", "detect"}, {"id", id}, {"image_pgm_b64", base64_encode(encode_pgm(input))}});
    const Json r = await(id, "lanes");
    LaneRepresentation rep;
    try {
      rep = lanes_from_wire(r, info_.input_width, info_.input_height);
    } catch (const ProtocolError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProtocolError(std::string("malformed lanes payload: ") + e.what());
    }
    if (rep.family() != info_.family) {
      throw ProtocolError(std::string("protocol violation: declared family '") + to_string(info_.family) +
                          "' but received '" + to_string(rep.family()) + "'");
    }
    try {
      validate(rep);
    } catch (const Error& e) {
      throw ProtocolError(std::string("invalid lanes payload: ") + e.what());
    }
    return rep;
  }

  GrayImage gradient(const ImageFrame& input, AttackDirection dir, const PixelMask& region,
                     const ErcOptions&) override {
    if (!info_.gradient) throw Error("detector '" + info_.name + "' does not support gradient queries");
    check_input(input);
    if (region.width != input.width || region.height != input.height) throw Error("gradient: region size mismatch");
    const auto id = next_id_++;
    send({{"type", "gradient"},
          {"id", id},
          {"direction", to_string(dir)},
          {"image_pgm_b64", base64_encode(encode_pgm(input))},
          {"mask_pgm_b64", base64_encode(mask_to_pgm(region))}});
    const Json r = await(id, "grad");
    if (!r.contains("values") || !r.at("values").is_array()) throw ProtocolError("grad message without values");
    const auto& vals = r.at("values");
    if (vals.size() != region.count()) {
      throw ProtocolError("grad message has " + std::to_string(vals.size()) + " values for " +
                          std::to_string(region.count()) + " mask pixels");
    }
    GrayImage g(input.width, input.height, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < region.on.size(); ++i) {
      if (!region.on[i]) continue;
      if (!vals[k].is_number()) throw ProtocolError("grad values must be numbers");
      g.values[i] = vals[k++].get<double>();
    }
    return g;
  }

 private:
  void send(const Json& msg) { transport_->write_line(msg.dump()); }

  void handshake() {
    try {
      send({{"type", "hello"}, {"proto", kProtocolVersion}});
    } catch (const TransportError& e) {
      throw HandshakeError(std::string("handshake failed: ") + e.what());
    }
    std::optional<std::string> line;
    try {
      line = transport_->read_line(opts_.timeout);
    } catch (const TransportError& e) {
      throw HandshakeError(std::string("handshake failed: ") + e.what());
    }
    if (!line) throw HandshakeError("handshake failed: no hello_ack within timeout");
    Json j;
    try {
      j = Json::parse(*line);
      if (j.at("type").get<std::string>() != "hello_ack") throw HandshakeError("handshake failed: expected hello_ack");
      info_.name = opts_.name;
      info_.family = parse_family(j.at("family").get<std::string>());
      info_.input_width = j.at("input_w").get<int>();
      info_.input_height = j.at("input_h").get<int>();
      info_.gradient = j.value("gradient", false);
    } catch (const HandshakeError&) {
      throw;
    } catch (const std::exception& e) {
      throw HandshakeError(std::string("handshake failed: malformed hello_ack: ") + e.what());
    }
    if (info_.input_width <= 0 || info_.input_height <= 0) throw HandshakeError("handshake failed: bad input size");
  }

  Json await(std::int64_t id, const std::string& type) {
    const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      std::optional<std::string> line;
      try {
        line = left.count() > 0 ? transport_->read_line(left) : std::nullopt;
      } catch (const TransportError& e) {
        throw TimeoutError("no response to request " + std::to_string(id) + ": " + e.what());
      }
      if (!line) throw TimeoutError("no response to request " + std::to_string(id) + " within timeout");
      Json j;
      try {
        j = Json::parse(*line);
      } catch (const std::exception&) {
        throw ProtocolError("malformed message: " + line->substr(0, 80));
      }
      if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw ProtocolError("message without a type");
      }
      if (!j.contains("id") || !j.at("id").is_number_integer()) throw ProtocolError("message without an id");
      const auto rid = j.at("id").get<std::int64_t>();
      if (rid < id) continue;  // late answer to an abandoned request
      if (rid > id) throw ProtocolError("response to unknown request " + std::to_string(rid));
      const auto t = j.at("type").get<std::string>();
      if (t == "error") throw RemoteError("adapter error: " + j.value("msg", std::string("(no message)")));
      if (t != type) throw ProtocolError("expected '" + type + "' message, got '" + t + "'");
      return j;
    }
  }

  std::unique_ptr<Transport> transport_;
  ExternalOptions opts_;
  DetectorInfo info_;
  std::int64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// In-process adapters (server side), for loopback use

/// Answers protocol requests with `det`. Malformed requests get error replies.
inline std::vector<std::string> serve_detector_request(Detector& det, const std::string& line) {
  Json req;
  try {
    req = Json::parse(line);
  } catch (const std::exception&) {
    return {Json{{"type", "error"}, {"id", nullptr}, {"msg", "malformed request"}}.dump()};
  }
  const Json id = req.contains("id") ? req.at("id") : Json(nullptr);
  try {
    const auto type = req.at("type").get<std::string>();
    if (type == "hello") {
      const auto& i = det.info();
      return {Json{{"type", "hello_ack"}, {"family", to_string(i.family)}, {"input_w", i.input_width},
                   {"input_h", i.input_height}, {"gradient", i.gradient}}.dump()};
    }
    if (type == "detect") {
      const auto frame = decode_frame(base64_decode(req.at("image_pgm_b64").get<std::string>()));
      Json out = lanes_to_wire(det.detect(frame));
      out["type"] = "lanes";
      out["id"] = id;
      return {out.dump()};
    }
    if (type == "gradient") {
      const auto frame = decode_frame(base64_decode(req.at("image_pgm_b64").get<std::string>()));
      const auto mask = mask_from_pgm(base64_decode(req.at("mask_pgm_b64").get<std::string>()));
      ErcOptions erc;
      erc.ys = default_y_samples(frame.height);
      erc.empty_value = 0.5;
      const auto g = det.gradient(frame, parse_direction(req.at("direction").get<std::string>()), mask, erc);
      Json vals = Json::array();
      for (std::size_t i = 0; i < mask.on.size(); ++i) {
        if (mask.on[i]) vals.push_back(g.values[i]);
      }
      return {Json{{"type", "grad"}, {"id", id}, {"values", std::move(vals)}}.dump()};
    }
    return {Json{{"type", "error"}, {"id", id}, {"msg", "unknown message type '" + type + "'"}}.dump()};
  } catch (const std::exception& e) {
    return {Json{{"type", "error"}, {"id", id}, {"msg", e.what()}}.dump()};
  }
}

/// Loopback transport serving an in-process detector, which must outlive the transport.
inline std::unique_ptr<Transport> loopback_for(Detector& det) {
  return std::make_unique<LoopbackTransport>([&det](const std::string& line) { return serve_detector_request(det, line); });
}

/// Detector that always returns the same representation, whatever the frame.
class FixedDetector : public Detector {
 public:
  FixedDetector(LaneRepresentation rep, std::string name = "fixed")
      : info_{std::move(name), rep.family(), rep.image_width, rep.image_height, false}, rep_(std::move(rep)) {}

  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect(const ImageFrame& input, const FrameContext* = nullptr) override {
    check_input(input);
    return rep_;
  }

 private:
  DetectorInfo info_;
  LaneRepresentation rep_;
};

}  // namespace lanerob
