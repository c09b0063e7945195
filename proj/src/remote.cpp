/* Copyright 2026 The Patchforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "patchforge/remote.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "patchforge/errors.hpp"

namespace patchforge {
namespace {

constexpr char kMagic[4] = {'B', 'P', 'R', 'T'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Splits "http://host:port/prefix" into the scheme-host-port part and the
// path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("invalid config field 'endpoint': expected http://host:port");
  }
  const auto slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, slash), prefix};
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(std::span<const Tensor> items) {
  if (items.empty()) throw EncodeError("cannot encode an empty batch");
  const Tensor& first = items.front();
  if (first.empty()) throw EncodeError("cannot encode an empty tensor");
  std::vector<std::uint8_t> out;
  out.reserve(kWireHeaderSize + 4 * first.size() * items.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kWireVersion);
  out.push_back(kWireFloat32);
  put_u16(out, 0);
  put_u32(out, static_cast<std::uint32_t>(items.size()));
  put_u32(out, static_cast<std::uint32_t>(first.channels()));
  put_u32(out, static_cast<std::uint32_t>(first.height()));
  put_u32(out, static_cast<std::uint32_t>(first.width()));
  for (const Tensor& t : items) {
    if (t.channels() != first.channels() || t.height() != first.height() ||
        t.width() != first.width()) {
      throw EncodeError("batch items have different shapes");
    }
    for (double v : t.data()) {
      if (!std::isfinite(v)) throw EncodeError("cannot encode a non-finite value");
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

DecodedTensors decode_tensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWireHeaderSize) {
    throw TruncationError("message shorter than the " +
                          std::to_string(kWireHeaderSize) + "-byte header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ProtocolError("bad magic");
  if (bytes[4] != kWireVersion) {
    throw ProtocolError("unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != kWireFloat32) {
    throw ProtocolError("unsupported dtype " + std::to_string(bytes[5]));
  }
  DecodedTensors out;
  WireHeader& h = out.header;
  h.flags = get_u16(bytes.data() + 6);
  h.n = get_u32(bytes.data() + 8);
  h.c = get_u32(bytes.data() + 12);
  h.h = get_u32(bytes.data() + 16);
  h.w = get_u32(bytes.data() + 20);
  const std::uint64_t per_item = static_cast<std::uint64_t>(h.c) * h.h * h.w;
  const std::uint64_t expected = 4 * per_item * h.n;
  const std::uint64_t available = bytes.size() - kWireHeaderSize;
  if (available < expected) {
    throw TruncationError("payload holds " + std::to_string(available) +
                          " bytes, header promises " + std::to_string(expected));
  }
  if (available > expected) {
    throw ProtocolError("payload holds " + std::to_string(available - expected) +
                        " trailing bytes");
  }
  const std::uint8_t* p = bytes.data() + kWireHeaderSize;
  out.items.reserve(h.n);
  for (std::uint32_t i = 0; i < h.n; ++i) {
    std::vector<double> values(per_item);
    for (double& v : values) {
      const float f = std::bit_cast<float>(get_u32(p));
      p += 4;
      if (!std::isfinite(f)) throw DecodeError("payload contains a non-finite value");
      v = f;
    }
    out.items.emplace_back(static_cast<int>(h.c), static_cast<int>(h.h),
                           static_cast<int>(h.w), std::move(values));
  }
  return out;
}

Tensor stack_frames(const Sample& sample) {
  if (sample.frames.empty()) throw InvalidArgument("sample has no frames");
  const Image& f0 = sample.frames.front();
  Tensor out(3 * static_cast<int>(sample.frames.size()), f0.height(), f0.width());
  std::size_t off = 0;
  for (const Image& f : sample.frames) {
    if (f.channels() != 3 || f.height() != f0.height() || f.width() != f0.width()) {
      throw InvalidArgument("frames of a sample must share one 3-channel shape");
    }
    std::copy(f.data().begin(), f.data().end(), out.data().begin() + off);
    off += f.size();
  }
  return out;
}

Sample unstack_frames(const Tensor& stacked) {
  if (stacked.channels() == 0 || stacked.channels() % 3 != 0) {
    throw ProtocolError("channel count " + std::to_string(stacked.channels()) +
                        " is not a multiple of 3");
  }
  Sample s;
  const std::size_t plane = static_cast<std::size_t>(3) * stacked.height() * stacked.width();
  for (int f = 0; f < stacked.channels() / 3; ++f) {
    auto begin = stacked.data().begin() + f * plane;
    s.frames.emplace_back(3, stacked.height(), stacked.width(),
                          std::vector<double>(begin, begin + plane));
  }
  return s;
}

std::string format_info(const ModelInfo& info) {
  std::ostringstream os;
  os << "d=" << info.output_channels << " frames=" << info.frames << " H=" << info.height
     << " W=" << info.width;
  return os.str();
}

ModelInfo parse_info(const std::string& text) {
  ModelInfo info;
  bool seen[4] = {false, false, false, false};
  std::istringstream is(text);
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ProtocolError("malformed info token '" + token + "'");
    const std::string key = token.substr(0, eq);
    int value = 0;
    try {
      std::size_t used = 0;
      value = std::stoi(token.substr(eq + 1), &used);
      if (used != token.size() - eq - 1) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ProtocolError("malformed info value for '" + key + "'");
    }
    if (key == "d") {
      info.output_channels = value;
      seen[0] = true;
    } else if (key == "frames") {
      info.frames = value;
      seen[1] = true;
    } else if (key == "H") {
      info.height = value;
      seen[2] = true;
    } else if (key == "W") {
      info.width = value;
      seen[3] = true;
    }
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) {
    throw ProtocolError("info response must carry d, frames, H and W");
  }
  if (info.output_channels < 1 || info.output_channels > 2 || info.frames < 1 ||
      info.frames > 2 || info.height < 1 || info.width < 1) {
    throw ProtocolError("info response out of range: " + text);
  }
  return info;
}

// ---------------------------------------------------------------------------

struct RemoteOracle::Impl {
  std::unique_ptr<httplib::Client> client;
  std::string prefix;
};

namespace {

[[noreturn]] void throw_transport(httplib::Error err, const std::string& path) {
  const bool retryable = err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::Connection ||
                         err == httplib::Error::ConnectionTimeout;
  throw TransportError("request to " + path + " failed: " + httplib::to_string(err),
                       retryable);
}

}  // namespace

RemoteOracle::RemoteOracle(const std::string& endpoint, RemoteOptions options)
    : impl_(std::make_unique<Impl>()), options_(options) {
  if (!(options_.timeout_seconds > 0.0)) {
    throw ConfigError("invalid config field 'timeout_seconds': must be > 0");
  }
  if (options_.delay_seconds < 0.0) {
    throw ConfigError("invalid config field 'delay_seconds': must be >= 0");
  }
  auto [base, prefix] = split_endpoint(endpoint);
  impl_->prefix = prefix;
  impl_->client = std::make_unique<httplib::Client>(base);
  const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
  impl_->client->set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  impl_->client->set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  impl_->client->set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  const std::string path = impl_->prefix + "/v1/info";
  auto res = impl_->client->Get(path);
  if (!res) throw_transport(res.error(), path);
  if (res->status != 200) throw ServiceError(res->status, res->body);
  info_ = parse_info(res->body);
}

RemoteOracle::~RemoteOracle() = default;

std::vector<Tensor> RemoteOracle::evaluate(std::span<const Sample> batch) {
  if (batch.empty()) return {};
  std::vector<Tensor> stacked;
  stacked.reserve(batch.size());
  for (const Sample& s : batch) {
    if (static_cast<int>(s.frames.size()) != info_.frames) {
      throw InvalidArgument("sample has " + std::to_string(s.frames.size()) +
                            " frames, model expects " + std::to_string(info_.frames));
    }
    stacked.push_back(stack_frames(s));
  }
  const auto body = encode_tensors(stacked);
  if (options_.delay_seconds > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(options_.delay_seconds));
  }
  const std::string path = impl_->prefix + "/v1/predict";
  auto res = impl_->client->Post(path, reinterpret_cast<const char*>(body.data()),
                                 body.size(), "application/octet-stream");
  if (!res) throw_transport(res.error(), path);
  if (res->status != 200) throw ServiceError(res->status, res->body);
  last_flagged_ = -1;
  if (res->has_header(kFlagHeader)) {
    last_flagged_ = std::atoi(res->get_header_value(kFlagHeader).c_str());
  }
  DecodedTensors decoded = decode_tensors(as_bytes(res->body));
  const WireHeader& h = decoded.header;
  if (h.n != batch.size() || static_cast<int>(h.c) != info_.output_channels ||
      static_cast<int>(h.h) != stacked.front().height() ||
      static_cast<int>(h.w) != stacked.front().width()) {
    throw ProtocolError("response shape does not match the request");
  }
  return std::move(decoded.items);
}

std::vector<Tensor> GrayEchoOracle::evaluate(std::span<const Sample> batch) {
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (const Sample& s : batch) {
    const Image& f = s.frames.front();
    Tensor g(1, f.height(), f.width());
    for (int r = 0; r < f.height(); ++r) {
      for (int c = 0; c < f.width(); ++c) {
        g.at(0, r, c) = (f.at(0, r, c) + f.at(1, r, c) + f.at(2, r, c)) / 3.0;
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct OracleServer::Impl {
  Oracle* oracle = nullptr;
  ModelInfo info;
  ServerOptions options;
  httplib::Server server;
  FingerprintStore store;
  std::mutex eval_mutex;
  std::thread thread;
};

OracleServer::OracleServer(Oracle& oracle, ModelInfo info, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  if (options.detect) validate(options.detector);
  impl_->oracle = &oracle;
  impl_->info = info;
  impl_->options = options;
  Impl* self = impl_.get();

  self->server.Get("/v1/info", [self](const httplib::Request&, httplib::Response& res) {
    res.set_content(format_info(self->info), "text/plain");
  });

  self->server.Post("/v1/predict", [self](const httplib::Request& req,
                                          httplib::Response& res) {
    DecodedTensors in;
    try {
      in = decode_tensors(as_bytes(req.body));
    } catch (const ProtocolError& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
      return;
    }
    const WireHeader& h = in.header;
    if (h.n == 0 || static_cast<int>(h.n) > self->options.max_batch) {
      res.status = 413;
      res.set_content("batch size " + std::to_string(h.n) + " outside [1, " +
                          std::to_string(self->options.max_batch) + "]",
                      "text/plain");
      return;
    }
    if (static_cast<int>(h.c) != 3 * self->info.frames ||
        static_cast<int>(h.h) != self->info.height ||
        static_cast<int>(h.w) != self->info.width) {
      res.status = 400;
      res.set_content("expected c=" + std::to_string(3 * self->info.frames) +
                          " H=" + std::to_string(self->info.height) +
                          " W=" + std::to_string(self->info.width),
                      "text/plain");
      return;
    }
    std::vector<Sample> samples;
    samples.reserve(h.n);
    for (const Tensor& t : in.items) samples.push_back(unstack_frames(t));
    int flagged = 0;
    if (self->options.detect) {
      for (const Sample& s : samples) {
        if (self->store.detect(fingerprint_query(s, self->options.detector),
                               self->options.detector.threshold)
                .matched) {
          ++flagged;
        }
      }
      res.set_header(kFlagHeader, std::to_string(flagged));
    }
    try {
      std::vector<Tensor> outputs;
      {
        std::lock_guard lock(self->eval_mutex);
        outputs = self->oracle->evaluate(samples);
      }
      const auto body = encode_tensors(outputs);
      res.set_content(std::string(reinterpret_cast<const char*>(body.data()), body.size()),
                      "application/octet-stream");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(e.what(), "text/plain");
    }
  });
}

OracleServer::~OracleServer() { stop(); }

int OracleServer::start() {
  Impl* self = impl_.get();
  if (self->options.port == 0) {
    port_ = self->server.bind_to_any_port(self->options.host);
  } else {
    port_ = self->server.bind_to_port(self->options.host, self->options.port)
                ? self->options.port
                : -1;
  }
  if (port_ < 0) {
    throw IoError("cannot bind " + self->options.host + ":" +
                  std::to_string(self->options.port));
  }
  self->thread = std::thread([self] { self->server.listen_after_bind(); });
  self->server.wait_until_ready();
  return port_;
}

void OracleServer::run() {
  Impl* self = impl_.get();
  if (port_ == 0) {
    if (self->options.port == 0) {
      port_ = self->server.bind_to_any_port(self->options.host);
    } else if (self->server.bind_to_port(self->options.host, self->options.port)) {
      port_ = self->options.port;
    } else {
      port_ = -1;
    }
    if (port_ < 0) {
      throw IoError("cannot bind " + self->options.host + ":" +
                    std::to_string(self->options.port));
    }
  }
  self->server.listen_after_bind();
}

void OracleServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string OracleServer::endpoint() const {
  return "http://" + impl_->options.host + ":" + std::to_string(port_);
}

}  // namespace patchforge
