#include "cli/serve.hpp"

#include "gaitlab/distill.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <set>

namespace gaitlab::cli {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

ClientMessage parse_client_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    return ProtocolError{"malformed JSON"};
  }
  if (!j.is_object()) return ProtocolError{"message must be a JSON object"};
  if (j.contains("schema_version") &&
      (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion))
    return ProtocolError{"unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")"};

  auto velocity = [](const json& v) -> ClientMessage {
    if (!v.is_number()) return ProtocolError{"set_velocity value must be a number"};
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < kMinCommandSpeed || x > kMaxCommandSpeed)
      return ProtocolError{"set_velocity value must lie in [0.375, 1.5] m/s"};
    return SetVelocity{x};
  };
  if (j.contains("type")) {
    if (!j["type"].is_string()) return ProtocolError{"type must be a string"};
    const auto type = j["type"].get<std::string>();
    if (type == "set_velocity") {
      if (!j.contains("value")) return ProtocolError{"set_velocity needs a value"};
      return velocity(j["value"]);
    }
    if (type == "reset") return Reset{};
    return ProtocolError{"unknown message type '" + type + "'"};
  }
  if (j.contains("set_velocity")) return velocity(j["set_velocity"]);
  return ProtocolError{"missing message type"};
}

std::string to_json(const StateFrame& f) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["type"] = "state";
  j["t"] = f.t;
  j["v_target"] = f.v_target;
  j["realized_v"] = f.realized_v;
  j["contacts"] = {f.contacts[0], f.contacts[1], f.contacts[2], f.contacts[3]};
  j["gait_label"] = f.gait_label;
  j["power_W"] = f.power_W;
  j["energy_per_meter"] = f.energy_per_meter;
  j["base_height"] = f.base_height;
  j["roll"] = f.roll;
  j["pitch"] = f.pitch;
  return j.dump();
}

std::string error_json(const std::string& message) {
  return json{{"schema_version", kSchemaVersion}, {"type", "error"}, {"message", message}}.dump();
}

RollingGait::RollingGait(double window, double sample_rate)
    : capacity_(static_cast<std::size_t>(std::lround(window * sample_rate))), sample_rate_(sample_rate) {}

void RollingGait::push(const ContactFlags& c, double vx, double power, double) {
  contacts_.push_back(c);
  speed_.push_back(vx);
  power_.push_back(power);
  if (contacts_.size() > capacity_) {
    contacts_.pop_front();
    speed_.pop_front();
    power_.pop_front();
  }
  // Reclassify twice a second; the classifier needs a few cycles of data.
  if (++since_classify_ >= static_cast<int>(sample_rate_ / 2) && contacts_.size() >= capacity_ / 2) {
    since_classify_ = 0;
    analysis::ContactTrace tr;
    tr.sample_rate = sample_rate_;
    tr.contacts.assign(contacts_.begin(), contacts_.end());
    label_ = analysis::to_string(analysis::gait_metrics(tr, RobotModel::a1_like()).label);
  }
}

void RollingGait::clear() {
  contacts_.clear();
  speed_.clear();
  power_.clear();
  label_ = "unstructured";
  since_classify_ = 0;
}

double RollingGait::energy_per_meter() const {
  double d = 0.0, e = 0.0;
  for (double v : speed_) d += v / sample_rate_;
  for (double p : power_) e += p / sample_rate_;
  return d >= 0.01 ? e / d : 0.0;
}

PolicySimulation::PolicySimulation(learn::Agent agent, env::EnvConfig config, std::uint64_t seed)
    : agent_(std::move(agent)), env_(std::move(config)), runner_(agent_), seed_(seed) {
  if (agent_.config().velocity_code) env_.set_v_target(std::clamp(env_.config().reward.v_target, kMinCommandSpeed, kMaxCommandSpeed));
  reset();
}

double PolicySimulation::control_dt() const { return env_.config().sim.dt * env_.config().substeps; }

void PolicySimulation::set_velocity(double v) {
  env_.set_v_target(v);
  frame_.v_target = v;
}

void PolicySimulation::reset() {
  env_.reset(mix_seed(seed_, episode_++));
  runner_.reset();
  gait_.clear();
  frame_.v_target = env_.config().reward.v_target;
}

void PolicySimulation::tick() {
  if (env_.done()) reset();
  std::optional<Eigen::Vector3d> code;
  if (agent_.config().velocity_code) code = distill::encode_velocity(env_.config().reward.v_target);
  const env::Action a = env::clamp_action(runner_.act(env_, nullptr, code));
  const env::StepResult s = env_.step(a);
  runner_.record(a);
  t_ += control_dt();
  gait_.push(s.obs.contacts, s.info.v_x, s.info.power, control_dt());
  frame_.t = t_;
  frame_.v_target = env_.config().reward.v_target;
  frame_.realized_v = env_.smoothed_velocity().x();
  frame_.contacts = s.obs.contacts;
  frame_.gait_label = gait_.label();
  frame_.power_W = s.info.power;
  frame_.energy_per_meter = gait_.energy_per_meter();
  frame_.base_height = env_.height_above_terrain();
  frame_.roll = s.obs.roll;
  frame_.pitch = s.obs.pitch;
}

namespace {

std::string gait_for(double v) {
  if (v < 0.6) return "walk";
  if (v < 1.2) return "trot";
  return "bounce";
}

double clamp_to_gait(const mpc::GaitScheduleConfig& g, double v) { return std::clamp(v, g.min_speed, g.max_speed); }

}  // namespace

ScriptedSimulation::ScriptedSimulation(double v0) : v_(v0), gait_(gait_for(v0)) { frame_.v_target = v0; }

void ScriptedSimulation::set_velocity(double v) {
  v_ = v;
  frame_.v_target = v;
}

void ScriptedSimulation::reset() {
  t_ = 0.0;
  gait_t_ = 0.0;
  gait_window_.clear();
  frame_ = StateFrame{};
  frame_.v_target = v_;
}

void ScriptedSimulation::tick() {
  const std::string g = gait_for(v_);
  if (g != gait_) {
    gait_ = g;
    gait_t_ = 0.0;
  }
  const auto cfg = mpc::GaitScheduleConfig::by_name(gait_);
  const auto modes = mpc::schedule_tick(cfg, clamp_to_gait(cfg, v_), gait_t_);
  ContactFlags c{};
  for (int i = 0; i < kNumLegs; ++i) c[static_cast<std::size_t>(i)] = modes[static_cast<std::size_t>(i)] == mpc::LegMode::Stance;
  t_ += control_dt();
  gait_t_ += control_dt();
  gait_window_.push(c, v_, 0.0, control_dt());
  frame_.t = t_;
  frame_.v_target = v_;
  frame_.realized_v = v_;
  frame_.contacts = c;
  frame_.gait_label = gait_window_.label();
  frame_.base_height = 0.30;
}

void CommandQueue::push(ClientMessage m) {
  std::lock_guard lock(mu_);
  q_.push_back(std::move(m));
}

std::vector<ClientMessage> CommandQueue::drain() {
  std::lock_guard lock(mu_);
  std::vector<ClientMessage> out;
  out.swap(q_);
  return out;
}

// ---------------------------------------------------------------------------
// Networking

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, CommandQueue& commands, std::set<std::shared_ptr<Session>>& registry)
      : ws_(std::move(socket)), commands_(commands), registry_(registry) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&Session::on_accept, shared_from_this()));
  }

  void send(std::shared_ptr<const std::string> msg) {
    if (!open_) return;
    // Slow clients lose the oldest frames rather than stalling the server.
    if (queue_.size() > 64) queue_.erase(queue_.begin() + 1);
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) do_write();
  }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return drop();
    open_ = true;
    registry_.insert(shared_from_this());
    do_read();
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&Session::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return drop();
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    ClientMessage m = parse_client_message(text);
    if (const auto* err = std::get_if<ProtocolError>(&m))
      send(std::make_shared<const std::string>(error_json(err->message)));
    else
      commands_.push(std::move(m));
    do_read();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), beast::bind_front_handler(&Session::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return drop();
    queue_.erase(queue_.begin());
    if (!queue_.empty()) do_write();
  }

  void drop() {
    open_ = false;
    queue_.clear();
    registry_.erase(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::vector<std::shared_ptr<const std::string>> queue_;
  CommandQueue& commands_;
  std::set<std::shared_ptr<Session>>& registry_;
  bool open_ = false;
};

}  // namespace

struct Server::Impl {
  std::unique_ptr<Simulation> sim;
  ServeOptions opt;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::set<std::shared_ptr<Session>> sessions;  // io thread only
  std::atomic<std::size_t> client_count{0};
  CommandQueue commands;
  std::thread io_thread, sim_thread;
  std::atomic<bool> running{false};
  unsigned short bound_port = 0;

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Session>(std::move(socket), commands, sessions)->start();
      do_accept();
    });
  }

  void broadcast(std::string frame) {
    auto msg = std::make_shared<const std::string>(std::move(frame));
    net::post(ioc, [this, msg] {
      client_count = sessions.size();
      for (const auto& s : sessions) s->send(msg);
    });
  }

  void sim_loop(std::atomic<long>& ticks) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    long n = 0;
    while (running) {
      for (auto& m : commands.drain()) {
        if (const auto* sv = std::get_if<SetVelocity>(&m)) sim->set_velocity(sv->value);
        else if (std::holds_alternative<Reset>(m)) sim->reset();
      }
      sim->tick();
      ++n;
      ticks = n;
      if (n % opt.frame_every == 0) broadcast(to_json(sim->state()));
      if (opt.realtime_factor > 0.0) {
        const auto due = start + std::chrono::duration_cast<clock::duration>(
                                     std::chrono::duration<double>(n * sim->control_dt() / opt.realtime_factor));
        std::this_thread::sleep_until(due);
      }
    }
  }
};

Server::Server(std::unique_ptr<Simulation> sim, ServeOptions opt) : impl_(std::make_unique<Impl>()) {
  impl_->sim = std::move(sim);
  impl_->opt = opt;
  if (impl_->opt.frame_every < 1) throw std::invalid_argument("serve: frame_every must be >= 1");
}

Server::~Server() { stop(); }

void Server::start() {
  auto& I = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(I.opt.address, ec);
  if (ec) throw std::runtime_error("serve: bad address '" + I.opt.address + "'");
  const tcp::endpoint ep{address, I.opt.port};
  I.acceptor.open(ep.protocol(), ec);
  if (!ec) I.acceptor.bind(ep, ec);
  if (!ec) I.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    I.acceptor.close();
    throw std::runtime_error("serve: cannot listen on " + I.opt.address + ":" + std::to_string(I.opt.port) + " (" +
                             ec.message() + ")");
  }
  I.bound_port = I.acceptor.local_endpoint().port();
  I.do_accept();
  I.running = true;
  I.io_thread = std::thread([&I] { I.ioc.run(); });
  I.sim_thread = std::thread([this] { impl_->sim_loop(ticks_); });
}

void Server::stop() {
  auto& I = *impl_;
  if (!I.running.exchange(false)) return;
  if (I.sim_thread.joinable()) I.sim_thread.join();
  net::post(I.ioc, [&I] {
    beast::error_code ec;
    I.acceptor.close(ec);
    for (const auto& s : std::set<std::shared_ptr<Session>>(I.sessions)) s->close();
    I.sessions.clear();
  });
  I.ioc.stop();
  if (I.io_thread.joinable()) I.io_thread.join();
}

void Server::wait() {
  if (impl_->sim_thread.joinable()) impl_->sim_thread.join();
}

unsigned short Server::port() const { return impl_->bound_port; }

std::size_t Server::clients() const { return impl_->client_count.load(); }

}  // namespace gaitlab::cli
