#include "cadaug/runner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <thread>

#include <fmt/format.h>

extern char** environ;

namespace cadaug::runner {

namespace {

using Clock = std::chrono::steady_clock;

std::optional<std::filesystem::path> opt_path(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  const auto s = j[key].get<std::string>();
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

nlohmann::json path_or_null(const std::optional<std::filesystem::path>& p) {
  return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
}

std::string real(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".eE") == std::string::npos) s += '.';
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::string_view status_name(ExecStatus s) {
  switch (s) {
    case ExecStatus::Ok:
      return "ok";
    case ExecStatus::ExecError:
      return "exec_error";
    case ExecStatus::Timeout:
      return "timeout";
  }
  return "exec_error";
}

void check_request(const ExecRequest& r) {
  if (r.program_text.empty()) throw std::invalid_argument("program_text is empty");
  if (!(r.timeout_s > 0.0)) throw std::invalid_argument("timeout_s must be positive");
}

nlohmann::json request_to_json(const ExecRequest& r) {
  return {{"program_text", r.program_text},
          {"timeout_s", r.timeout_s},
          {"workdir", r.workdir.string()},
          {"want_kernel_check", r.want_kernel_check}};
}

ExecRequest request_from_json(const nlohmann::json& j) {
  ExecRequest r;
  r.program_text = j.at("program_text").get<std::string>();
  r.timeout_s = j.at("timeout_s").get<double>();
  r.workdir = j.at("workdir").get<std::string>();
  r.want_kernel_check = j.value("want_kernel_check", false);
  return r;
}

nlohmann::json result_to_json(const ExecResult& r) {
  return {{"status", status_name(r.status)},
          {"step_path", path_or_null(r.step_path)},
          {"stl_path", path_or_null(r.stl_path)},
          {"stderr_tail", r.stderr_tail},
          {"kernel_valid", r.kernel_valid ? nlohmann::json(*r.kernel_valid) : nlohmann::json(nullptr)},
          {"wall_time", r.wall_time}};
}

ExecResult result_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ProtocolError("runner result is not a JSON object");
  const std::string status = j.value("status", "");
  ExecResult r;
  if (status == "ok") {
    r.status = ExecStatus::Ok;
  } else if (status == "exec_error") {
    r.status = ExecStatus::ExecError;
  } else if (status == "timeout") {
    r.status = ExecStatus::Timeout;
  } else if (status == "protocol_error") {
    std::string detail = j.value("error", j.value("stderr_tail", ""));
    throw ProtocolError("runner rejected the request: " + detail);
  } else {
    throw ProtocolError("unknown runner status '" + status + "'");
  }
  try {
    r.step_path = opt_path(j, "step_path");
    r.stl_path = opt_path(j, "stl_path");
    if (j.contains("stderr_tail") && !j["stderr_tail"].is_null()) r.stderr_tail = j["stderr_tail"].get<std::string>();
    if (j.contains("kernel_valid") && !j["kernel_valid"].is_null()) r.kernel_valid = j["kernel_valid"].get<bool>();
    if (j.contains("wall_time") && !j["wall_time"].is_null()) r.wall_time = j["wall_time"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed runner result: ") + e.what());
  }
  return r;
}

struct SubprocessRunner::Worker {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  std::string buffer;

  ~Worker() { stop(false); }

  void stop(bool graceful) {
    if (to_child >= 0) ::close(to_child);
    to_child = -1;
    if (pid > 0) {
      bool reaped = false;
      if (graceful) {
        // EOF on stdin ends the serve loop
        for (int i = 0; i < 100 && !reaped; ++i) {
          reaped = ::waitpid(pid, nullptr, WNOHANG) == pid;
          if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
      }
      if (!reaped) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
      }
      pid = -1;
    }
    if (from_child >= 0) ::close(from_child);
    from_child = -1;
  }

  void write_line(const std::string& line) {
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(to_child, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw RunnerUnavailable(std::string("cannot write to runner: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(Clock::time_point deadline) {
    for (;;) {
      const auto nl = buffer.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) throw RunnerUnavailable("runner did not answer before the deadline");
      pollfd pfd{from_child, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 60000)));
      if (rc < 0 && errno != EINTR) throw RunnerUnavailable(std::string("poll failed: ") + std::strerror(errno));
      if (rc <= 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(from_child, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw RunnerUnavailable(std::string("cannot read from runner: ") + std::strerror(errno));
      }
      if (n == 0) throw RunnerUnavailable("runner exited unexpectedly");
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
  }
};

SubprocessRunner::SubprocessRunner(SubprocessConfig config) : config_(std::move(config)) {
  if (config_.command.empty()) throw std::invalid_argument("runner command is empty");
  if (config_.pool_size == 0) config_.pool_size = 1;
  // a dead worker must surface as EPIPE, not kill the process
  ::signal(SIGPIPE, SIG_IGN);
}

SubprocessRunner::~SubprocessRunner() {
  std::lock_guard lock(mutex_);
  for (auto& w : idle_) w->stop(true);
}

std::size_t SubprocessRunner::spawned() const {
  std::lock_guard lock(mutex_);
  return spawned_;
}

std::unique_ptr<SubprocessRunner::Worker> SubprocessRunner::spawn() {
  int in[2];
  int out[2];
  if (::pipe2(in, O_CLOEXEC) != 0) throw RunnerUnavailable("pipe failed");
  if (::pipe2(out, O_CLOEXEC) != 0) {
    ::close(in[0]);
    ::close(in[1]);
    throw RunnerUnavailable("pipe failed");
  }
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, in[0], 0);
  posix_spawn_file_actions_adddup2(&fa, out[1], 1);

  std::vector<char*> argv;
  for (auto& a : config_.command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  auto w = std::make_unique<Worker>();
  const int rc = ::posix_spawnp(&w->pid, argv[0], &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  ::close(in[0]);
  ::close(out[1]);
  w->to_child = in[1];
  w->from_child = out[0];
  if (rc != 0) {
    w->pid = -1;
    throw RunnerUnavailable("cannot start runner '" + config_.command[0] + "': " + std::strerror(rc));
  }
  return w;
}

std::unique_ptr<SubprocessRunner::Worker> SubprocessRunner::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return !idle_.empty() || live_ < config_.pool_size; });
  if (!idle_.empty()) {
    auto w = std::move(idle_.back());
    idle_.pop_back();
    return w;
  }
  ++live_;
  ++spawned_;
  lock.unlock();
  try {
    return spawn();
  } catch (...) {
    lock.lock();
    --live_;
    cv_.notify_one();
    throw;
  }
}

void SubprocessRunner::release(std::unique_ptr<Worker> worker) {
  std::lock_guard lock(mutex_);
  if (worker) {
    idle_.push_back(std::move(worker));
  } else {
    --live_;
  }
  cv_.notify_one();
}

ExecResult SubprocessRunner::execute(const ExecRequest& request) {
  check_request(request);
  auto worker = acquire();
  try {
    worker->write_line(request_to_json(request).dump() + "\n");
    const auto deadline =
        Clock::now() + std::chrono::milliseconds(static_cast<long long>((request.timeout_s + config_.grace_s) * 1000));
    const std::string line = worker->read_line(deadline);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("runner wrote a non-JSON line: " + line.substr(0, 200));
    }
    ExecResult r = result_from_json(j);
    release(std::move(worker));
    return r;
  } catch (...) {
    worker->stop(false);
    worker.reset();
    release(nullptr);
    throw;
  }
}

std::string cube_step_text(double size, CubeDefect defect) {
  // vertex index = 4x + 2y + z
  const auto coord = [&](int v, int axis) { return ((v >> (2 - axis)) & 1) * size; };
  // outward counter-clockwise loops
  static constexpr int kFaces[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                       {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  static constexpr int kNormals[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};

  std::string data;
  int next = 1;
  const auto add = [&](const std::string& body) {
    data += fmt::format("#{}={};\n", next, body);
    return next++;
  };

  int point[8];
  int vertex[8];
  for (int v = 0; v < 8; ++v) {
    point[v] = add(fmt::format("CARTESIAN_POINT('',({},{},{}))", real(coord(v, 0)), real(coord(v, 1)), real(coord(v, 2))));
    vertex[v] = add(fmt::format("VERTEX_POINT('',#{})", point[v]));
  }

  std::map<std::pair<int, int>, int> edge;
  for (const auto& f : kFaces) {
    for (int k = 0; k < 4; ++k) {
      const int a = std::min(f[k], f[(k + 1) % 4]);
      const int b = std::max(f[k], f[(k + 1) % 4]);
      if (edge.count({a, b}) != 0) continue;
      const int dir = add(fmt::format("DIRECTION('',({},{},{}))", real(coord(b, 0) - coord(a, 0) != 0 ? 1 : 0),
                                      real(coord(b, 1) - coord(a, 1) != 0 ? 1 : 0),
                                      real(coord(b, 2) - coord(a, 2) != 0 ? 1 : 0)));
      const int vec = add(fmt::format("VECTOR('',#{},{})", dir, real(size)));
      const int line = add(fmt::format("LINE('',#{},#{})", point[a], vec));
      edge[{a, b}] = add(fmt::format("EDGE_CURVE('',#{},#{},#{},.T.)", vertex[a], vertex[b], line));
    }
  }

  std::vector<int> faces;
  bool flipped = false;
  for (int i = 0; i < 6; ++i) {
    const auto& f = kFaces[i];
    const auto& n = kNormals[i];
    const int normal = add(fmt::format("DIRECTION('',({},{},{}))", real(n[0]), real(n[1]), real(n[2])));
    const int ref = add(n[0] != 0 ? "DIRECTION('',(0.,1.,0.))" : "DIRECTION('',(1.,0.,0.))");
    const int axis = add(fmt::format("AXIS2_PLACEMENT_3D('',#{},#{},#{})", point[f[0]], normal, ref));
    const int plane = add(fmt::format("PLANE('',#{})", axis));
    std::string oes;
    for (int k = 0; k < 4; ++k) {
      const int from = f[k];
      const int to = f[(k + 1) % 4];
      bool sense = from < to;
      if (defect == CubeDefect::FlippedEdge && !flipped) {
        sense = !sense;
        flipped = true;
      }
      const int oe = add(fmt::format("ORIENTED_EDGE('',*,*,#{},{})", edge.at({std::min(from, to), std::max(from, to)}),
                                     sense ? ".T." : ".F."));
      oes += (k == 0 ? "#" : ",#") + std::to_string(oe);
    }
    const int loop = add(fmt::format("EDGE_LOOP('',({}))", oes));
    const int bound = add(fmt::format("FACE_OUTER_BOUND('',#{},.T.)", loop));
    faces.push_back(add(fmt::format("ADVANCED_FACE('',(#{}),#{},.T.)", bound, plane)));
  }
  if (defect == CubeDefect::MissingFace) faces.pop_back();
  std::string refs;
  for (std::size_t i = 0; i < faces.size(); ++i) refs += (i == 0 ? "#" : ",#") + std::to_string(faces[i]);
  const int shell = add(fmt::format("CLOSED_SHELL('',({}))", refs));
  add(fmt::format("MANIFOLD_SOLID_BREP('cube',#{})", shell));

  return "ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION(('mock runner cube'),'2;1');\n"
         "FILE_NAME('output.step','',(''),(''),'','','');\n"
         "FILE_SCHEMA(('AUTOMOTIVE_DESIGN { 1 0 10303 214 1 1 1 1 }'));\nENDSEC;\nDATA;\n" +
         data + "ENDSEC;\nEND-ISO-10303-21;\n";
}

ExecResult MockRunner::execute(const ExecRequest& request) {
  check_request(request);
  std::string directive = default_;
  std::string detail;
  constexpr std::string_view key = "# mock-runner:";
  if (const auto at = request.program_text.find(key); at != std::string::npos) {
    const auto eol = request.program_text.find('\n', at);
    std::string rest = request.program_text.substr(at + key.size(), eol == std::string::npos ? eol : eol - at - key.size());
    const auto b = rest.find_first_not_of(" \t");
    rest = b == std::string::npos ? "" : rest.substr(b);
    const auto sp = rest.find(' ');
    directive = rest.substr(0, sp);
    detail = sp == std::string::npos ? "" : rest.substr(sp + 1);
    while (!detail.empty() && (detail.back() == '\r' || detail.back() == ' ')) detail.pop_back();
  }

  ExecResult r;
  if (directive == "unreachable") throw RunnerUnavailable("mock runner configured as unreachable");
  if (directive == "timeout") {
    r.status = ExecStatus::Timeout;
    r.wall_time = request.timeout_s;
    return r;
  }
  if (directive == "exec_error") {
    r.status = ExecStatus::ExecError;
    r.stderr_tail = "Traceback (most recent call last):\n  File \"program.py\", line 1, in <module>\n" +
                    (detail.empty() ? std::string("RuntimeError: mock failure") : detail) + "\n";
    return r;
  }

  std::string step;
  if (directive == "ok" || directive == "kernel_invalid") {
    step = cube_step_text();
  } else if (directive == "missing_face") {
    step = cube_step_text(10.0, CubeDefect::MissingFace);
  } else if (directive == "flipped_edge") {
    step = cube_step_text(10.0, CubeDefect::FlippedEdge);
  } else if (directive == "garbage_step") {
    step = "this is not a STEP file\n";
  } else {
    r.status = ExecStatus::ExecError;
    r.stderr_tail = "mock-runner: unknown directive '" + directive + "'\n";
    return r;
  }

  std::filesystem::create_directories(request.workdir);
  r.status = ExecStatus::Ok;
  r.step_path = request.workdir / "output.step";
  r.stl_path = request.workdir / "output.stl";
  write_text(*r.step_path, step);
  write_text(*r.stl_path, "solid mock\nendsolid mock\n");
  if (request.want_kernel_check) r.kernel_valid = directive != "kernel_invalid";
  return r;
}

}  // namespace cadaug::runner
