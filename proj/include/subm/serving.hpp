#pragma once
#include <condition_variable>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "subm/cache.hpp"
#include "subm/format.hpp"
#include "subm/model.hpp"

namespace subm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// On-disk store: one <speaker_id>.subm per speaker under a root directory.
// ---------------------------------------------------------------------------

class SubmodelStore {
 public:
  explicit SubmodelStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(uint64_t speaker_id) const {
    return root_ / (std::to_string(speaker_id) + ".subm");
  }

  bool contains(uint64_t speaker_id) const {
    return std::filesystem::exists(path_for(speaker_id));
  }

  std::vector<uint64_t> list() const {
    std::vector<uint64_t> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      if (entry.path().extension() != ".subm") continue;
      const std::string stem = entry.path().stem().string();
      if (stem.empty() || stem.find_first_not_of("0123456789") != std::string::npos) continue;
      ids.push_back(std::stoull(stem));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  Submodel load(uint64_t speaker_id, const BasemodelConfig* expected = nullptr) const {
    const auto path = path_for(speaker_id);
    require(std::filesystem::exists(path), ErrCode::unknown_speaker,
            "no submodel stored for speaker " + std::to_string(speaker_id));
    return load_submodel(path, expected);
  }

  void save(const Submodel& s) const { save_submodel(s, path_for(s.meta.speaker_id)); }

 private:
  std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// Serving core: resident basemodel + store + LRU cache. Protocol-level
// request handling lives here so it can be exercised without sockets.
// ---------------------------------------------------------------------------

struct ServingConfig {
  std::filesystem::path store_root;
  std::filesystem::path base_path;
  size_t cache_capacity = 8;
};

inline std::string protocol_code(ErrCode c) {
  switch (c) {
    case ErrCode::unknown_speaker: return "UNKNOWN_SPEAKER";
    case ErrCode::dim_mismatch: return "DIM_MISMATCH";
    case ErrCode::bad_request:
    case ErrCode::precondition: return "BAD_REQUEST";
    default: return "STORE_ERROR";
  }
}

class ServingCore {
 public:
  explicit ServingCore(const ServingConfig& cfg)
      : cfg_(cfg), store_(cfg.store_root), cache_(cfg.cache_capacity) {
    require(std::filesystem::is_directory(cfg.store_root), ErrCode::store_error,
            "store root " + cfg.store_root.string() + " is not a directory");
    base_ = load_basemodel(cfg.base_path);  // once per lifetime
    base_loads_.fetch_add(1);
  }

  const Basemodel& base() const { return base_; }
  uint64_t base_load_count() const { return base_loads_.load(); }
  const SubmodelStore& store() const { return store_; }
  SubmodelCache& cache() { return cache_; }

  /// Handles one parsed request record; never throws. Sets *shutdown when the
  /// record asks the server to stop.
  json handle(const json& req, bool* shutdown = nullptr) {
    requests_.fetch_add(1);
    try {
      require(req.is_object() && req.contains("type") && req["type"].is_string(),
              ErrCode::bad_request, "record needs a string 'type' field");
      const std::string type = req["type"];
      if (type == "infer") return handle_infer(req);
      if (type == "stats") return handle_stats();
      if (type == "evict") return handle_evict(req);
      if (type == "shutdown") {
        if (shutdown) *shutdown = true;
        return json{{"type", "ack"}};
      }
      fail(ErrCode::bad_request, "unknown request type '" + type + "'");
    } catch (const Error& e) {
      return json{{"type", "error"}, {"code", protocol_code(e.code())}, {"message", e.what()}};
    } catch (const std::exception& e) {
      return json{{"type", "error"}, {"code", "BAD_REQUEST"}, {"message", e.what()}};
    }
  }

  /// Loads (or fetches from cache) an activated submodel for a speaker.
  std::pair<std::shared_ptr<const Submodel>, LoadInfo> acquire(uint64_t speaker_id) {
    return cache_.get_or_load(speaker_id, [this](uint64_t id) {
      Submodel s = store_.load(id, &base_.config);
      // activation: the residual factor is forced to 1 regardless of the
      // stored value; a stored 0 is accepted but flagged
      for (auto& l : s.layers) {
        if (l.alpha == 0.0f)
          std::cerr << "warning: submodel " << id << " stored with alpha=0; forcing to 1\n";
        l.alpha = 1.0f;
      }
      return std::make_shared<const Submodel>(std::move(s));
    });
  }

 private:
  json handle_infer(const json& req) {
    require(req.contains("frames") && req["frames"].is_array() && !req["frames"].empty(),
            ErrCode::bad_request, "infer needs a non-empty 'frames' array");
    const auto& jframes = req["frames"];
    const size_t d = base_.config.d_in;
    const size_t n = jframes.size();
    Tensor x({n, d});
    for (size_t i = 0; i < n; ++i) {
      require(jframes[i].is_array(), ErrCode::bad_request, "frames must be arrays of numbers");
      require(jframes[i].size() == d, ErrCode::dim_mismatch,
              "frame " + std::to_string(i) + " has width " + std::to_string(jframes[i].size()) +
                  ", base expects " + std::to_string(d));
      for (size_t j = 0; j < d; ++j) {
        require(jframes[i][j].is_number(), ErrCode::bad_request, "frame values must be numbers");
        x.data[i * d + j] = static_cast<float>(jframes[i][j].get<double>());
      }
    }

    require(req.contains("speaker"), ErrCode::bad_request, "infer needs a 'speaker' field");
    const json& speaker = req["speaker"];
    Tensor out;
    bool cache_hit = false;
    uint64_t load_micros = 0;
    std::string submodel_label = "none";
    if (speaker.is_null()) {
      out = base_forward(base_, x);  // disabled-submodel path
    } else {
      require(speaker.is_string(), ErrCode::bad_request, "'speaker' must be a string or null");
      const std::string sid = speaker.get<std::string>();
      require(!sid.empty() && sid.find_first_not_of("0123456789") == std::string::npos,
              ErrCode::unknown_speaker, "speaker id '" + sid + "' is not a decimal id");
      const uint64_t id = std::stoull(sid);
      auto [sub, info] = acquire(id);
      out = forward_with_submodel(base_, sub.get(), x);
      cache_hit = info.hit;
      load_micros = info.load_micros;
      submodel_label = sid;
    }

    json jout = json::array();
    for (size_t i = 0; i < n; ++i) {
      json row = json::array();
      for (size_t j = 0; j < d; ++j) row.push_back(out.data[i * d + j]);
      jout.push_back(std::move(row));
    }
    return json{{"type", "result"},
                {"frames", std::move(jout)},
                {"cache_hit", cache_hit},
                {"load_micros", load_micros},
                {"submodel", submodel_label}};
  }

  json handle_stats() {
    CacheStats st = cache_.stats();
    json buckets = json::array();
    for (uint64_t b : st.cold_load_micros.buckets) buckets.push_back(b);
    return json{{"type", "stats"},
                {"requests", requests_.load()},
                {"base_loads", base_loads_.load()},
                {"hits", st.hits},
                {"misses", st.misses},
                {"evictions", st.evictions},
                {"resident", cache_.resident()},
                {"capacity", cache_.capacity()},
                {"cold_load_micros",
                 {{"count", st.cold_load_micros.count},
                  {"mean", st.cold_load_micros.mean()},
                  {"stdev", st.cold_load_micros.stdev()},
                  {"buckets", std::move(buckets)}}}};
  }

  json handle_evict(const json& req) {
    require(req.contains("speaker") && req["speaker"].is_string(), ErrCode::bad_request,
            "evict needs a string 'speaker' field");
    const std::string sid = req["speaker"].get<std::string>();
    require(!sid.empty() && sid.find_first_not_of("0123456789") == std::string::npos,
            ErrCode::bad_request, "speaker id '" + sid + "' is not a decimal id");
    const bool evicted = cache_.evict(std::stoull(sid));
    return json{{"type", "ack"}, {"evicted", evicted}};
  }

  ServingConfig cfg_;
  Basemodel base_;
  SubmodelStore store_;
  SubmodelCache cache_;
  std::atomic<uint64_t> base_loads_{0};
  std::atomic<uint64_t> requests_{0};
};

// ---------------------------------------------------------------------------
// Stream-socket server speaking one JSON record per line.
// ---------------------------------------------------------------------------

class Server {
 public:
  /// bind_addr is "host:port"; port 0 picks an ephemeral port.
  Server(ServingCore& core, const std::string& bind_addr) : core_(core) {
    const auto colon = bind_addr.rfind(':');
    require(colon != std::string::npos, ErrCode::precondition,
            "bind address must be host:port, got '" + bind_addr + "'");
    const std::string host = bind_addr.substr(0, colon);
    const int port = std::stoi(bind_addr.substr(colon + 1));

    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    require(listen_fd_ >= 0, ErrCode::io_error, "socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    require(::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1, ErrCode::precondition,
            "bad bind host '" + host + "'");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(listen_fd_);
      fail(ErrCode::io_error, "bind to " + bind_addr + " failed");
    }
    require(::listen(listen_fd_, 64) == 0, ErrCode::io_error, "listen() failed");
    sockaddr_in actual{};
    socklen_t len = sizeof(actual);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&actual), &len);
    port_ = ntohs(actual.sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~Server() { stop(); }

  uint16_t port() const { return port_; }

  /// Idempotent; safe to call from any thread, including the deferred
  /// shutdown-request path.
  void stop() {
    std::lock_guard serialize(stop_mu_);
    if (!stopping_.exchange(true)) {
      ::shutdown(listen_fd_, SHUT_RDWR);
      ::close(listen_fd_);
      {
        std::lock_guard lock(conn_mu_);
        for (int fd : open_conns_) ::shutdown(fd, SHUT_RDWR);
      }
      if (accept_thread_.joinable()) accept_thread_.join();
      std::vector<std::thread> workers;
      {
        std::lock_guard lock(conn_mu_);
        workers.swap(conn_threads_);
      }
      for (auto& t : workers)
        if (t.joinable()) t.join();
      {
        std::lock_guard lock(done_mu_);
        done_ = true;
      }
      done_cv_.notify_all();
    }
  }

  /// Blocks until the server has fully stopped.
  void wait() {
    std::unique_lock lock(done_mu_);
    done_cv_.wait(lock, [this] { return done_; });
  }

 private:
  void accept_loop() {
    while (!stopping_.load()) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) break;
      std::lock_guard lock(conn_mu_);
      if (stopping_.load()) {
        ::close(fd);
        break;
      }
      open_conns_.insert(fd);
      conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
  }

  void serve_connection(int fd) {
    std::string buffer;
    char chunk[4096];
    bool closing = false;
    while (!closing) {
      const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<size_t>(n));
      size_t pos;
      while (!closing && (pos = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, pos);
        buffer.erase(0, pos + 1);
        if (line.empty()) continue;
        json response;
        bool shutdown = false;
        json parsed = json::parse(line, nullptr, false);
        if (parsed.is_discarded()) {
          response = json{{"type", "error"},
                          {"code", "BAD_REQUEST"},
                          {"message", "record is not valid JSON"}};
        } else {
          response = core_.handle(parsed, &shutdown);
        }
        const std::string out = response.dump() + "\n";
        size_t sent = 0;
        while (sent < out.size()) {
          const ssize_t w = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
          if (w <= 0) {
            closing = true;
            break;
          }
          sent += static_cast<size_t>(w);
        }
        if (shutdown) {
          closing = true;
          // deferred stop: this thread is one of the workers stop() joins
          std::thread([this] { stop(); }).detach();
        }
      }
    }
    ::close(fd);
    std::lock_guard lock(conn_mu_);
    open_conns_.erase(fd);
  }

  ServingCore& core_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::set<int> open_conns_;
  std::vector<std::thread> conn_threads_;
  std::atomic<bool> stopping_{false};
  std::mutex stop_mu_;
  std::mutex done_mu_;
  std::condition_variable done_cv_;
  bool done_ = false;
};

/// Minimal blocking client for the line protocol (tests and tooling).
class LineClient {
 public:
  LineClient(const std::string& host, uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    require(fd_ >= 0, ErrCode::io_error, "socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    require(::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1, ErrCode::precondition,
            "bad host '" + host + "'");
    require(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0,
            ErrCode::io_error, "connect to " + host + ":" + std::to_string(port) + " failed");
  }

  ~LineClient() {
    if (fd_ >= 0) ::close(fd_);
  }

  LineClient(const LineClient&) = delete;
  LineClient& operator=(const LineClient&) = delete;

  std::string roundtrip(const std::string& line) {
    std::string out = line + "\n";
    size_t sent = 0;
    while (sent < out.size()) {
      const ssize_t w = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
      require(w > 0, ErrCode::io_error, "send failed");
      sent += static_cast<size_t>(w);
    }
    size_t pos;
    while ((pos = buffer_.find('\n')) == std::string::npos) {
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      require(n > 0, ErrCode::io_error, "connection closed while waiting for a response");
      buffer_.append(chunk, static_cast<size_t>(n));
    }
    std::string line_out = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    return line_out;
  }

  json roundtrip_json(const json& req) { return json::parse(roundtrip(req.dump())); }

 private:
  int fd_ = -1;
  std::string buffer_;
};

// ---------------------------------------------------------------------------
// Load-latency benchmark (cold submodel loads vs full basemodel reloads).
// ---------------------------------------------------------------------------

struct BenchReport {
  size_t k = 0;
  double submodel_cold_mean_us = 0, submodel_cold_std_us = 0;
  double submodel_warm_mean_us = 0, submodel_warm_std_us = 0;
  double base_reload_mean_us = 0, base_reload_std_us = 0;
  double ratio = 0;  // base_reload_mean / submodel_cold_mean
  uint64_t submodel_bytes = 0, base_bytes = 0;
  double size_ratio = 0;
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}
}  // namespace detail

/// Cold measurements evict the cache entry before each load so they isolate
/// disk + parse + activate cost; base_reload deserializes the full basemodel
/// each time.
inline BenchReport bench_load(const ServingConfig& cfg, size_t k) {
  require(k >= 10, ErrCode::precondition, "bench_load needs k >= 10");
  SubmodelStore store(cfg.store_root);
  const auto ids = store.list();
  require(!ids.empty(), ErrCode::store_error, "store is empty");
  Basemodel base = load_basemodel(cfg.base_path);

  SubmodelCache cache(cfg.cache_capacity);
  auto loader = [&](uint64_t id) {
    Submodel s = store.load(id, &base.config);
    for (auto& l : s.layers) l.alpha = 1.0f;
    return std::make_shared<const Submodel>(std::move(s));
  };

  using clock = std::chrono::steady_clock;
  auto us_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::micro>(clock::now() - t0).count();
  };

  std::vector<double> cold, warm, reload;
  for (size_t i = 0; i < k; ++i) {
    const uint64_t id = ids[i % ids.size()];
    cache.evict(id);
    auto t0 = clock::now();
    auto [sub, info] = cache.get_or_load(id, loader);
    cold.push_back(us_since(t0));
    require(!info.hit, ErrCode::store_error, "expected a cold load");
    t0 = clock::now();
    auto [sub2, info2] = cache.get_or_load(id, loader);
    warm.push_back(us_since(t0));
    require(info2.hit && info2.load_micros == 0, ErrCode::store_error, "expected a cache hit");
  }
  for (size_t i = 0; i < k; ++i) {
    const auto t0 = clock::now();
    Basemodel reloaded = load_basemodel(cfg.base_path);
    reload.push_back(us_since(t0));
    require(reloaded.config.d_model == base.config.d_model, ErrCode::store_error, "bad reload");
  }

  BenchReport r;
  r.k = k;
  std::tie(r.submodel_cold_mean_us, r.submodel_cold_std_us) = detail::mean_std(cold);
  std::tie(r.submodel_warm_mean_us, r.submodel_warm_std_us) = detail::mean_std(warm);
  std::tie(r.base_reload_mean_us, r.base_reload_std_us) = detail::mean_std(reload);
  r.ratio = r.base_reload_mean_us / r.submodel_cold_mean_us;
  r.submodel_bytes = std::filesystem::file_size(store.path_for(ids[0]));
  r.base_bytes = std::filesystem::file_size(cfg.base_path);
  r.size_ratio = static_cast<double>(r.base_bytes) / static_cast<double>(r.submodel_bytes);
  return r;
}

}  // namespace subm
