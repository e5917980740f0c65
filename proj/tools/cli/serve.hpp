#pragma once

#include "gaitlab/analysis.hpp"
#include "gaitlab/env.hpp"
#include "gaitlab/learn.hpp"
#include "gaitlab/mpc_baseline.hpp"
#include "gaitlab/rollout.hpp"

#include <atomic>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>

namespace gaitlab::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kMinCommandSpeed = 0.375;
inline constexpr double kMaxCommandSpeed = 1.5;

struct SetVelocity {
  double value = 0.0;
};
struct Reset {};
struct ProtocolError {
  std::string message;
};
using ClientMessage = std::variant<SetVelocity, Reset, ProtocolError>;

/// Accepts {"type":"set_velocity","value":v}, the short form {"set_velocity":v}
/// and {"type":"reset"}. A schema_version field, when present, must match.
ClientMessage parse_client_message(const std::string& text);

struct StateFrame {
  double t = 0.0;
  double v_target = 0.0;
  double realized_v = 0.0;
  ContactFlags contacts{};
  std::string gait_label = "unstructured";
  double power_W = 0.0;
  double energy_per_meter = 0.0;
  double base_height = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
};

std::string to_json(const StateFrame& f);
std::string error_json(const std::string& message);

/// Something that advances one 100 Hz control tick and reports its state.
class Simulation {
 public:
  virtual ~Simulation() = default;
  virtual void set_velocity(double v) = 0;
  virtual void reset() = 0;
  virtual void tick() = 0;
  virtual StateFrame state() const = 0;
  virtual double control_dt() const { return 0.01; }
};

/// Rolling window shared by both simulations: gait label over the last
/// `window` seconds and energy per meter over the same span.
class RollingGait {
 public:
  explicit RollingGait(double window = 4.0, double sample_rate = 100.0);
  void push(const ContactFlags& c, double vx, double power, double dt);
  void clear();
  std::string label() const { return label_; }
  double energy_per_meter() const;

 private:
  std::size_t capacity_;
  double sample_rate_;
  std::deque<ContactFlags> contacts_;
  std::deque<double> speed_, power_;
  std::string label_ = "unstructured";
  int since_classify_ = 0;
};

/// Policy on the simulator. Velocity-conditioned agents get the code of the
/// commanded speed; others just see the new reward target.
class PolicySimulation : public Simulation {
 public:
  PolicySimulation(learn::Agent agent, env::EnvConfig config, std::uint64_t seed);
  void set_velocity(double v) override;
  void reset() override;
  void tick() override;
  StateFrame state() const override { return frame_; }
  double control_dt() const override;

 private:
  learn::Agent agent_;
  env::Env env_;
  rollout::PolicyRunner runner_;
  std::uint64_t seed_;
  std::uint64_t episode_ = 0;
  double t_ = 0.0;
  RollingGait gait_;
  StateFrame frame_;
};

/// Scripted stand-in: contacts from the gait scheduler (walk below 0.6 m/s,
/// trot below 1.2 m/s, bounce above), speed equal to the command. No physics.
class ScriptedSimulation : public Simulation {
 public:
  explicit ScriptedSimulation(double v0 = kMinCommandSpeed);
  void set_velocity(double v) override;
  void reset() override;
  void tick() override;
  StateFrame state() const override { return frame_; }

 private:
  double v_;
  double t_ = 0.0;
  double gait_t_ = 0.0;
  std::string gait_;
  RollingGait gait_window_;
  StateFrame frame_;
};

/// Single-consumer queue: connection handlers push, the simulation loop drains
/// at control-tick boundaries (last writer wins on the velocity).
class CommandQueue {
 public:
  void push(ClientMessage m);
  std::vector<ClientMessage> drain();

 private:
  std::mutex mu_;
  std::vector<ClientMessage> q_;
};

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double realtime_factor = 1.0;  // 0: run as fast as possible
  int frame_every = 5;           // ticks per state frame (20 Hz at 100 Hz control)
};

/// Websocket server: one simulation thread, one io thread running every
/// connection handler.
class Server {
 public:
  Server(std::unique_ptr<Simulation> sim, ServeOptions opt);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts both threads. Throws std::runtime_error when the port is taken.
  void start();
  void stop();
  void wait();
  unsigned short port() const;
  long ticks() const { return ticks_.load(); }
  std::size_t clients() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<long> ticks_{0};
};

}  // namespace gaitlab::cli
