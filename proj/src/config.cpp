#include "ccmpc/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ccmpc {

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

[[noreturn]] void fail(const std::string& key, const YAML::Node& node, const std::string& what) {
  const int line = line_of(node);
  throw ConfigError("config key '" + key + "' (line " + std::to_string(line) + "): " + what, key, line);
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key, const char* expected) {
  if (!node.IsScalar()) fail(key, node, std::string("expected ") + expected);
  try {
    return node.as<T>();
  } catch (const YAML::BadConversion&) {
    fail(key, node, std::string("expected ") + expected);
  }
}

double number(const YAML::Node& n, const std::string& key) { return scalar<double>(n, key, "a number"); }

/// Fixed-length list; a scalar is broadcast when `broadcast` is set.
template <int Size>
Eigen::Matrix<double, Size, 1> vec(const YAML::Node& n, const std::string& key, bool broadcast = false) {
  Eigen::Matrix<double, Size, 1> v;
  if (broadcast && n.IsScalar()) {
    v.setConstant(number(n, key));
    return v;
  }
  if (!n.IsSequence() || n.size() != static_cast<std::size_t>(Size))
    fail(key, n, "expected a list of " + std::to_string(Size) + " numbers");
  for (int i = 0; i < Size; ++i) v(i) = number(n[static_cast<std::size_t>(i)], key);
  return v;
}

std::vector<std::string> string_list(const YAML::Node& n, const std::string& key) {
  std::vector<std::string> out;
  if (n.IsScalar()) {
    out.push_back(n.as<std::string>());
    return out;
  }
  if (!n.IsSequence()) fail(key, n, "expected a list of names");
  for (const auto& item : n) out.push_back(scalar<std::string>(item, key, "a name"));
  return out;
}

struct Field {
  std::string name;
  std::function<void(const YAML::Node&, const std::string&)> read;
  std::function<void(YAML::Emitter&)> write;
};

struct Section {
  std::string name;
  std::vector<Field> fields;
};

template <typename Derived>
void emit_list(YAML::Emitter& out, const Eigen::MatrixBase<Derived>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v(i);
  out << YAML::EndSeq;
}

// Wraps a setter that may throw InvalidArgument so the message carries the key.
template <typename F>
void guarded(const std::string& key, const YAML::Node& n, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    fail(key, n, e.what());
  }
}

std::vector<Section> schema(RunConfig& c) {
  EpisodeConfig& ep = c.episode;
  MpcConfig& mpc = ep.mpc;
  UncertaintySettings& un = c.uncertainty;
  MonteCarloSettings& mc = c.montecarlo;

  auto num = [](double& target) {
    return Field{"", [&target](const YAML::Node& n, const std::string& k) { target = number(n, k); },
                 [&target](YAML::Emitter& out) { out << target; }};
  };
  auto named = [](std::string name, Field f) {
    f.name = std::move(name);
    return f;
  };
  auto v3 = [](Eigen::Vector3d& target) {
    return Field{"", [&target](const YAML::Node& n, const std::string& k) { target = vec<3>(n, k); },
                 [&target](YAML::Emitter& out) { emit_list(out, target); }};
  };

  std::vector<Section> s;

  s.push_back({"mpc",
               {
                   named("horizon", {"",
                                     [&mpc](const YAML::Node& n, const std::string& k) {
                                       mpc.horizon = scalar<int>(n, k, "an integer");
                                     },
                                     [&mpc](YAML::Emitter& out) { out << mpc.horizon; }}),
                   named("dt", {"",
                                [&mpc](const YAML::Node& n, const std::string& k) {
                                  mpc.dt = number(n, k);
                                  mpc.model.dt = mpc.dt;
                                },
                                [&mpc](YAML::Emitter& out) { out << mpc.dt; }}),
                   named("q_weights", {"",
                                       [&mpc](const YAML::Node& n, const std::string& k) { mpc.Q_diag = vec<13>(n, k); },
                                       [&mpc](YAML::Emitter& out) { emit_list(out, mpc.Q_diag); }}),
                   named("r_weights", {"",
                                       [&mpc](const YAML::Node& n, const std::string& k) {
                                         mpc.R_diag = vec<12>(n, k, true);
                                       },
                                       [&mpc](YAML::Emitter& out) { emit_list(out, mpc.R_diag); }}),
                   named("mode", {"",
                                  [&mpc](const YAML::Node& n, const std::string& k) {
                                    guarded(k, n, [&] {
                                      mpc.mode = mode_from_string(scalar<std::string>(n, k, "a mode name"));
                                    });
                                  },
                                  [&mpc](YAML::Emitter& out) { out << std::string(to_string(mpc.mode)); }}),
                   named("epsilon", num(mpc.epsilon)),
                   named("mass", num(mpc.model.mass)),
                   named("inertia", v3(mpc.model.inertia_diag)),
                   named("mu", num(mpc.model.friction_mu)),
                   named("fz_min", num(mpc.model.fz_min)),
                   named("fz_max", num(mpc.model.fz_max)),
                   named("hmpc_max_payload", num(ep.hmpc_max_payload)),
                   named("hmpc_max_accel", num(ep.hmpc_max_accel)),
                   named("hmpc_offsets", {"",
                                          [&ep](const YAML::Node& n, const std::string& k) {
                                            if (n.IsNull()) {
                                              ep.hmpc_offsets.reset();
                                            } else {
                                              ep.hmpc_offsets = vec<20>(n, k);
                                            }
                                          },
                                          [&ep](YAML::Emitter& out) {
                                            if (ep.hmpc_offsets) {
                                              emit_list(out, *ep.hmpc_offsets);
                                            } else {
                                              out << YAML::Null;
                                            }
                                          }}),
                   named("qp_max_iterations", {"",
                                               [&ep](const YAML::Node& n, const std::string& k) {
                                                 ep.qp.max_iterations = scalar<int>(n, k, "an integer");
                                               },
                                               [&ep](YAML::Emitter& out) { out << ep.qp.max_iterations; }}),
               }});

  s.push_back({"uncertainty",
               {
                   named("sigma_mass", num(un.sigma_mass)),
                   named("sigma_inertia", v3(un.sigma_inertia)),
                   named("sigma_contact", {"",
                                           [&un](const YAML::Node& n, const std::string& k) {
                                             un.sigma_contact = vec<12>(n, k, true);
                                           },
                                           [&un](YAML::Emitter& out) { emit_list(out, un.sigma_contact); }}),
                   named("sigma_angular_velocity", v3(un.sigma_angular_velocity)),
                   named("sigma_linear_velocity", v3(un.sigma_linear_velocity)),
                   named("time_basis", {"",
                                        [&un](const YAML::Node& n, const std::string& k) {
                                          const auto v = scalar<std::string>(n, k, "per_step or per_second");
                                          if (v == "per_step") {
                                            un.time_basis = TimeBasis::PerStep;
                                          } else if (v == "per_second") {
                                            un.time_basis = TimeBasis::PerSecond;
                                          } else {
                                            fail(k, n, "expected per_step or per_second");
                                          }
                                        },
                                        [&un](YAML::Emitter& out) { out << std::string(to_string(un.time_basis)); }}),
                   named("dare_r", num(un.dare_r)),
                   named("dare_q_floor", num(un.dare_q_floor)),
                   named("gain_cache_tolerance", num(un.gain_cache_tolerance)),
               }});

  s.push_back({"gait",
               {
                   named("name", {"",
                                  [&ep](const YAML::Node& n, const std::string& k) {
                                    const auto name = scalar<std::string>(n, k, "a gait name");
                                    guarded(k, n, [&] { ep.gait = GaitSchedule::by_name(name); });
                                  },
                                  [&ep](YAML::Emitter& out) { out << ep.gait.name; }}),
                   named("stepping_frequency", num(ep.gait.stepping_frequency)),
                   named("duty_factor", num(ep.gait.duty_factor)),
                   named("phase_offsets", {"",
                                           [&ep](const YAML::Node& n, const std::string& k) {
                                             const Eigen::Vector4d v = vec<4>(n, k);
                                             for (int i = 0; i < 4; ++i) ep.gait.phase_offsets[static_cast<std::size_t>(i)] = v(i);
                                           },
                                           [&ep](YAML::Emitter& out) {
                                             out << YAML::Flow << YAML::BeginSeq;
                                             for (double o : ep.gait.phase_offsets) out << o;
                                             out << YAML::EndSeq;
                                           }}),
                   named("foot_height", num(ep.footholds.foot_height)),
                   named("raibert_gain", num(ep.footholds.raibert_gain)),
                   named("nominal_height", num(ep.body.nominal_height)),
                   named("leg_length_max", num(ep.body.leg_length_max)),
               }});

  s.push_back({"terrain",
               {
                   named("mu_true", num(ep.terrain.mu_true)),
                   named("slope", num(ep.terrain.slope)),
                   named("planks", {"",
                                    [&ep](const YAML::Node& n, const std::string& k) {
                                      ep.terrain.planks.clear();
                                      if (n.IsNull()) return;
                                      if (!n.IsSequence()) fail(k, n, "expected a list of [x_start, x_end, height]");
                                      for (const auto& item : n) {
                                        const Eigen::Vector3d p = vec<3>(item, k);
                                        ep.terrain.planks.push_back({p(0), p(1), p(2)});
                                      }
                                    },
                                    [&ep](YAML::Emitter& out) {
                                      out << YAML::BeginSeq;
                                      for (const auto& p : ep.terrain.planks)
                                        out << YAML::Flow << YAML::BeginSeq << p.x_start << p.x_end << p.height
                                            << YAML::EndSeq;
                                      out << YAML::EndSeq;
                                    }}),
               }});

  s.push_back({"episode",
               {
                   named("payload_mass", num(ep.payload_mass)),
                   named("payload_offset", v3(ep.payload_offset)),
                   named("velocity", {"",
                                      [&ep](const YAML::Node& n, const std::string& k) {
                                        const Eigen::Vector2d v = vec<2>(n, k);
                                        ep.velocity_command = Eigen::Vector3d(v(0), v(1), 0.0);
                                      },
                                      [&ep](YAML::Emitter& out) { emit_list(out, ep.velocity_command.head<2>()); }}),
                   named("yaw_rate", num(ep.yaw_rate_command)),
                   named("duration", num(ep.duration)),
                   named("seed", {"",
                                  [&ep](const YAML::Node& n, const std::string& k) {
                                    ep.seed = scalar<std::uint64_t>(n, k, "a nonnegative integer");
                                  },
                                  [&ep](YAML::Emitter& out) { out << ep.seed; }}),
                   named("sim_dt", num(ep.world.sim_dt)),
                   named("force_noise_std", num(ep.world.force_noise_std)),
                   named("disturbance_force_std", v3(ep.world.disturbance_force_std)),
                   named("disturbance_torque_std", v3(ep.world.disturbance_torque_std)),
               }});

  s.push_back({"montecarlo",
               {
                   named("episodes", {"",
                                      [&mc](const YAML::Node& n, const std::string& k) {
                                        mc.episodes = scalar<int>(n, k, "an integer");
                                      },
                                      [&mc](YAML::Emitter& out) { out << mc.episodes; }}),
                   named("seed", {"",
                                  [&mc](const YAML::Node& n, const std::string& k) {
                                    mc.seed = scalar<std::uint64_t>(n, k, "a nonnegative integer");
                                  },
                                  [&mc](YAML::Emitter& out) { out << mc.seed; }}),
                   named("payload_range", {"",
                                           [&mc](const YAML::Node& n, const std::string& k) {
                                             const Eigen::Vector2d v = vec<2>(n, k);
                                             mc.payload_min = v(0);
                                             mc.payload_max = v(1);
                                           },
                                           [&mc](YAML::Emitter& out) {
                                             emit_list(out, Eigen::Vector2d(mc.payload_min, mc.payload_max));
                                           }}),
                   named("plank_height_max", num(mc.plank_height_max)),
                   named("plank_length", num(mc.plank_length)),
                   named("plank_start", num(mc.plank_start)),
                   named("modes", {"",
                                   [&mc](const YAML::Node& n, const std::string& k) {
                                     mc.modes.clear();
                                     for (const auto& m : string_list(n, k))
                                       guarded(k, n, [&] { mc.modes.push_back(mode_from_string(m)); });
                                   },
                                   [&mc](YAML::Emitter& out) {
                                     out << YAML::Flow << YAML::BeginSeq;
                                     for (auto m : mc.modes) out << std::string(to_string(m));
                                     out << YAML::EndSeq;
                                   }}),
                   named("gaits", {"",
                                   [&mc](const YAML::Node& n, const std::string& k) { mc.gaits = string_list(n, k); },
                                   [&mc](YAML::Emitter& out) {
                                     out << YAML::Flow << YAML::BeginSeq;
                                     for (const auto& g : mc.gaits) out << g;
                                     out << YAML::EndSeq;
                                   }}),
                   named("workers", {"",
                                     [&mc](const YAML::Node& n, const std::string& k) {
                                       mc.workers = scalar<int>(n, k, "an integer");
                                     },
                                     [&mc](YAML::Emitter& out) { out << mc.workers; }}),
               }});

  s.push_back({"output",
               {
                   named("dir", {"",
                                 [&c](const YAML::Node& n, const std::string& k) {
                                   c.output_dir = scalar<std::string>(n, k, "a path");
                                 },
                                 [&c](YAML::Emitter& out) { out << c.output_dir; }}),
               }});
  return s;
}

void apply(RunConfig& config, const YAML::Node& root) {
  if (!root || root.IsNull()) return;
  if (!root.IsMap()) fail("<root>", root, "expected a mapping of sections");
  std::vector<Section> sections = schema(config);

  // The gait name resets the schedule, so it is applied before the other gait keys.
  for (const auto& entry : root) {
    const auto section_name = entry.first.as<std::string>();
    if (section_name == "gait" && entry.second.IsMap() && entry.second["name"]) {
      for (auto& sec : sections) {
        if (sec.name != "gait") continue;
        sec.fields.front().read(entry.second["name"], "gait.name");
      }
    }
  }

  for (const auto& entry : root) {
    const auto section_name = entry.first.as<std::string>();
    auto sec = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == section_name; });
    if (sec == sections.end()) fail(section_name, entry.first, "unknown section");
    if (entry.second.IsNull()) continue;
    if (!entry.second.IsMap()) fail(section_name, entry.second, "expected a mapping");
    for (const auto& kv : entry.second) {
      const auto key = kv.first.as<std::string>();
      const std::string full = section_name + "." + key;
      auto field = std::find_if(sec->fields.begin(), sec->fields.end(), [&](const Field& f) { return f.name == key; });
      if (field == sec->fields.end()) fail(full, kv.first, "unknown key");
      if (full == "gait.name") continue;
      field->read(kv.second, full);
    }
  }
}

void validate(const RunConfig& c) {
  try {
    c.resolved_episode().validate();
    const MonteCarloSettings& mc = c.montecarlo;
    if (mc.episodes < 1) throw InvalidArgument("montecarlo.episodes must be at least 1");
    if (!(mc.payload_min >= 0 && mc.payload_max >= mc.payload_min))
      throw InvalidArgument("montecarlo.payload_range must be nonnegative and ordered");
    if (!(mc.plank_height_max >= 0 && mc.plank_length > 0)) throw InvalidArgument("montecarlo plank settings out of range");
    if (mc.workers < 1) throw InvalidArgument("montecarlo.workers must be at least 1");
    if (mc.modes.empty() || mc.gaits.empty()) throw InvalidArgument("montecarlo needs at least one mode and one gait");
    for (const auto& g : mc.gaits) {
      if (g != c.episode.gait.name) GaitSchedule::by_name(g);
    }
    const UncertaintySettings& u = c.uncertainty;
    if (!(u.dare_r > 0)) throw InvalidArgument("uncertainty.dare_r must be positive");
    if (!(u.dare_q_floor >= 0 && u.gain_cache_tolerance >= 0))
      throw InvalidArgument("uncertainty.dare_q_floor and gain_cache_tolerance must be nonnegative");
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

}  // namespace

std::string_view to_string(TimeBasis basis) { return basis == TimeBasis::PerStep ? "per_step" : "per_second"; }

DisturbanceModel<double> UncertaintySettings::model(double dt, double epsilon) const {
  const double scale = time_basis == TimeBasis::PerSecond ? dt : 1.0;
  DisturbanceModel<double> m;
  m.sigma_delta(pidx::kMass) = sigma_mass;
  m.sigma_delta.segment<3>(pidx::kInertia) = sigma_inertia;
  m.sigma_delta.segment<12>(pidx::kFeet) = sigma_contact;
  m.sigma_delta *= scale;
  m.sigma_w.segment<3>(idx::kOmega) = sigma_angular_velocity * scale;
  m.sigma_w.segment<3>(idx::kVel) = sigma_linear_velocity * scale;
  m.epsilon = epsilon;
  return m;
}

FeedbackDesign<double> UncertaintySettings::feedback(const MpcConfig& mpc) const {
  FeedbackDesign<double> f;
  f.Q_diag = mpc.Q_diag;
  f.R_diag.setConstant(dare_r);
  f.q_floor = dare_q_floor;
  f.cache_tolerance = gain_cache_tolerance;
  return f;
}

EpisodeConfig RunConfig::resolved_episode() const {
  EpisodeConfig ep = episode;
  ep.mpc.model.dt = ep.mpc.dt;
  ep.disturbance = uncertainty.model(ep.mpc.dt, ep.mpc.epsilon);
  ep.feedback = uncertainty.feedback(ep.mpc);
  return ep;
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    const int line = e.mark.line >= 0 ? e.mark.line + 1 : 0;
    throw ConfigError("config parse error (line " + std::to_string(line) + "): " + e.msg, {}, line);
  }
  RunConfig config;
  apply(config, root);
  validate(config);
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_yaml(const RunConfig& config) {
  RunConfig copy = config;
  std::vector<Section> sections = schema(copy);
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  for (const auto& sec : sections) {
    out << YAML::Key << sec.name << YAML::Value << YAML::BeginMap;
    for (const auto& f : sec.fields) {
      out << YAML::Key << f.name << YAML::Value;
      f.write(out);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_yaml(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace ccmpc
