#include "cryoctl/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "cryoctl/error.hpp"

namespace cryoctl::scenario {

namespace {

using Kind = ScheduleEntry::Kind;

// Shared by every reader so messages carry file and line.
struct Context {
  std::string origin;

  [[noreturn]] void fail(const YAML::Node& at, const std::string& path, const std::string& msg) const {
    const int line = at.IsDefined() ? at.Mark().line : -1;
    if (line >= 0) throw Error(ErrorKind::kInvalidScenario, fmt::format("{}:{}: {}: {}", origin, line + 1, path, msg));
    throw Error(ErrorKind::kInvalidScenario, fmt::format("{}: {}: {}", origin, path, msg));
  }
};

int line_of(const YAML::Node& n) { return n.IsDefined() && n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

double to_double(const Context& cx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) cx.fail(n, path, "expected a number");
  std::string_view s = n.Scalar();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
    cx.fail(n, path, fmt::format("expected a number, got '{}'", n.Scalar()));
  }
  return v;
}

long long to_integer(const Context& cx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) cx.fail(n, path, "expected an integer");
  std::string_view s = n.Scalar();
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  long long v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size()) {
    cx.fail(n, path, fmt::format("expected an integer, got '{}'", n.Scalar()));
  }
  return neg ? -v : v;
}

bool to_bool(const Context& cx, const YAML::Node& n, const std::string& path) {
  if (n.IsScalar()) {
    if (n.Scalar() == "true") return true;
    if (n.Scalar() == "false") return false;
  }
  cx.fail(n, path, "expected true or false");
}

std::string to_string(const Context& cx, const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) cx.fail(n, path, "expected a string");
  return n.Scalar();
}

// A mapping section. Tracks consumed keys so leftovers are reported.
class Section {
 public:
  Section(const Context& cx, YAML::Node node, std::string path) : cx_(cx), node_(std::move(node)), path_(std::move(path)) {
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) cx_.fail(node_, path_, "expected a mapping");
  }

  bool has(const std::string& key) const { return present(key).IsDefined(); }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return present(key);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double num(const std::string& key, double def) {
    auto n = raw(key);
    return n.IsDefined() && !n.IsNull() ? to_double(cx_, n, sub(key)) : def;
  }

  std::optional<double> opt_num(const std::string& key) {
    auto n = raw(key);
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    return to_double(cx_, n, sub(key));
  }

  long long integer(const std::string& key, long long def) {
    auto n = raw(key);
    return n.IsDefined() && !n.IsNull() ? to_integer(cx_, n, sub(key)) : def;
  }

  std::optional<int> opt_int(const std::string& key) {
    auto n = raw(key);
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    return static_cast<int>(to_integer(cx_, n, sub(key)));
  }

  bool flag(const std::string& key, bool def) {
    auto n = raw(key);
    return n.IsDefined() && !n.IsNull() ? to_bool(cx_, n, sub(key)) : def;
  }

  std::string str(const std::string& key, const std::string& def) {
    auto n = raw(key);
    return n.IsDefined() && !n.IsNull() ? to_string(cx_, n, sub(key)) : def;
  }

  std::vector<double> nums(const std::string& key) {
    auto n = raw(key);
    std::vector<double> out;
    if (!n.IsDefined() || n.IsNull()) return out;
    if (!n.IsSequence()) cx_.fail(n, sub(key), "expected a list of numbers");
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(to_double(cx_, n[i], fmt::format("{}.{}", sub(key), i)));
    return out;
  }

  void finish() const {
    if (!node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.Scalar();
      if (!seen_.count(key)) cx_.fail(kv.first, sub(key), "unknown key");
    }
  }

  const YAML::Node& node() const { return node_; }

 private:
  YAML::Node present(const std::string& key) const {
    if (!node_.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& c = node_;
    YAML::Node found = c[key];
    // A missing key yields an invalid node; hand back a plain undefined one.
    return found.IsDefined() ? found : YAML::Node(YAML::NodeType::Undefined);
  }

  const Context& cx_;
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

// Module validation failures become scenario errors tagged with the field.
template <class F>
void checked(const Context& cx, const YAML::Node& at, const std::string& path, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    cx.fail(at, path, std::string(e.what()));
  }
}

std::uint8_t register_address(const Context& cx, const YAML::Node& n, const std::string& path) {
  const auto name = to_string(cx, n, path);
  std::uint8_t addr = 0;
  checked(cx, n, path, [&] { addr = protocol::address_from_name(name); });
  return addr;
}

ScheduleEntry parse_entry(const Context& cx, const YAML::Node& node, const std::string& path) {
  Section s(cx, node, path);
  if (!node.IsMap()) cx.fail(node, path, "expected a mapping with 't' and one action");
  ScheduleEntry e;
  e.line = line_of(node);
  if (!s.has("t")) cx.fail(node, path, "missing 't'");
  e.time_s = s.num("t", 0.0);

  int actions = 0;
  for (const char* k : {"frame", "write", "exec", "read", "hold", "gate"}) actions += s.has(k) ? 1 : 0;
  if (actions != 1) cx.fail(node, path, "needs exactly one of frame, write, exec, read, hold, gate");

  if (s.has("frame")) {
    auto n = s.raw("frame");
    const auto text = to_string(cx, n, s.sub("frame"));
    const bool hex = text.size() == 8 && std::all_of(text.begin(), text.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
    if (!hex) cx.fail(n, s.sub("frame"), fmt::format("expected 8 hex digits, got '{}'", text));
    e.kind = Kind::kFrame;
    checked(cx, n, s.sub("frame"), [&] { e.frame = protocol::decode_frame(static_cast<std::uint32_t>(std::stoul(text, nullptr, 16))); });
  } else if (s.has("write")) {
    Section w(cx, s.raw("write"), s.sub("write"));
    if (!w.has("reg") || !w.has("value")) cx.fail(w.node(), w.sub(""), "write needs 'reg' and 'value'");
    e.kind = Kind::kWrite;
    e.frame.opcode = static_cast<std::uint8_t>(protocol::Opcode::kWrite);
    e.frame.address = register_address(cx, w.raw("reg"), w.sub("reg"));
    const auto value = w.integer("value", 0);
    if (value < 0 || value > 0xFFFF) cx.fail(w.raw("value"), w.sub("value"), "value must fit in 16 bits");
    e.frame.data = static_cast<std::uint16_t>(value);
    checked(cx, w.raw("value"), w.sub("value"), [&] { protocol::apply_write({}, e.frame.address, e.frame.data); });
    w.finish();
  } else if (s.has("exec")) {
    auto n = s.raw("exec");
    const auto what = to_string(cx, n, s.sub("exec"));
    e.kind = Kind::kExec;
    e.frame.opcode = static_cast<std::uint8_t>(protocol::Opcode::kExec);
    if (what == "GO") {
      e.frame.address = protocol::exec::kGo;
    } else if (what == "REFRESH") {
      e.frame.address = protocol::exec::kRefresh;
    } else if (what == "HALT") {
      e.frame.address = protocol::exec::kHalt;
    } else {
      cx.fail(n, s.sub("exec"), fmt::format("expected GO, REFRESH or HALT, got '{}'", what));
    }
  } else if (s.has("read")) {
    e.kind = Kind::kRead;
    e.frame.opcode = static_cast<std::uint8_t>(protocol::Opcode::kRead);
    e.frame.address = register_address(cx, s.raw("read"), s.sub("read"));
  } else if (s.has("hold")) {
    e.kind = Kind::kHold;
    e.volts = s.num("hold", 0.0);
  } else {
    Section g(cx, s.raw("gate"), s.sub("gate"));
    if (!g.has("name") || !g.has("volts")) cx.fail(g.node(), g.sub(""), "gate needs 'name' and 'volts'");
    e.kind = Kind::kGate;
    e.gate = g.str("name", "");
    e.volts = g.num("volts", 0.0);
    g.finish();
  }
  s.finish();
  return e;
}

void validate(const Context& cx, const Scenario& s, const YAML::Node& root) {
  const YAML::Node& r = root;
  auto at = [&](const std::string& key) -> YAML::Node {
    return r.IsMap() && r[key].IsDefined() ? YAML::Node(r[key]) : YAML::Node(root);
  };

  if (s.schema_version != kSchemaVersion) {
    cx.fail(at("schema_version"), "schema_version", fmt::format("unsupported version {} (expected {})", s.schema_version, kSchemaVersion));
  }
  if (!(s.chip.master_freq_hz > 0.0)) cx.fail(at("chip"), "chip.master_freq_hz", "must be > 0");
  if (!(s.chip.refresh_dwell_s > 0.0)) cx.fail(at("chip"), "chip.refresh_dwell_s", "must be > 0");
  if (s.chip.refresh_cells < 1 || s.chip.refresh_cells > fsm::kNumCells) cx.fail(at("chip"), "chip.refresh_cells", "must be in 1..32");
  checked(cx, at("analog"), "analog", [&] { analog::make_cell(s.cell); });
  checked(cx, at("rails"), "rails", [&] { analog::validate(s.rails); });
  checked(cx, at("device"), "device", [&] { device::validate(s.device.dot()); });

  auto cell_ok = [](int c) { return c >= 0 && c < fsm::kNumCells; };
  for (const auto& [name, g] : s.device.gates) {
    if (g.cell && !cell_ok(*g.cell)) cx.fail(at("device"), "device.gates." + name + ".cell", "cell must be in 0..31");
  }
  auto dac_gate = [&](const std::string& name) {
    auto it = s.device.gates.find(name);
    return it != s.device.gates.end() && !it->second.cell;
  };

  const auto& tr = s.traces;
  if (!(tr.duration_s > 0.0)) cx.fail(at("traces"), "traces.duration_s", "must be > 0");
  if (tr.start_s < 0.0 || tr.start_s > tr.duration_s) cx.fail(at("traces"), "traces.start_s", "must be within [0, duration_s]");
  if (tr.sample_period_s < 0.0) cx.fail(at("traces"), "traces.sample_period_s", "must be >= 0");
  if (!tr.cells.empty() && tr.sample_period_s == 0.0) cx.fail(at("traces"), "traces.sample_period_s", "needed when cells are traced");
  for (int c : tr.cells) {
    if (!cell_ok(c)) cx.fail(at("traces"), "traces.cells", fmt::format("cell {} out of range 0..31", c));
  }

  for (const auto& [c, v] : s.host.targets) {
    if (!cell_ok(c)) cx.fail(at("host"), "host.targets", fmt::format("cell {} out of range 0..31", c));
  }

  const auto& ro = s.readout;
  if (ro.enabled) {
    checked(cx, at("readout"), "readout", [&] { device::check_sample_rate(ro.tank); });
    if (!(ro.start_s >= 0.0 && ro.stop_s > ro.start_s && ro.stop_s <= tr.duration_s)) {
      cx.fail(at("readout"), "readout.stop_s", "need 0 <= start_s < stop_s <= traces.duration_s");
    }
    if (!s.device.gates.count(ro.axis_gate)) cx.fail(at("readout"), "readout.axis_gate", fmt::format("unknown gate '{}'", ro.axis_gate));
    if (ro.export_every < 1) cx.fail(at("readout"), "readout.export_every", "must be >= 1");
    if (ro.envelope_cell) {
      if (!cell_ok(*ro.envelope_cell)) cx.fail(at("readout"), "readout.envelope_cell", "cell must be in 0..31");
      bool driven = false;
      for (const auto& [name, g] : s.device.gates) driven |= g.cell == ro.envelope_cell;
      if (!driven) cx.fail(at("readout"), "readout.envelope_cell", "no device gate is driven by this cell");
    }
  }

  checked(cx, at("power"), "power", [&] {
    thermal::validate(s.power_model());
    (void)s.calibration();
    thermal::validate(s.power.budget);
  });

  const YAML::Node sched = r.IsMap() ? YAML::Node(r["schedule"]) : YAML::Node();
  double last = 0.0;
  for (std::size_t i = 0; i < s.schedule.size(); ++i) {
    const auto& e = s.schedule[i];
    const auto node = sched.IsSequence() ? YAML::Node(sched[i]) : YAML::Node(root);
    const auto path = fmt::format("schedule.{}", i);
    if (e.time_s < 0.0 || e.time_s > tr.duration_s) cx.fail(node, path, "time outside [0, traces.duration_s]");
    if (e.time_s < last) cx.fail(node, path, fmt::format("time {} is earlier than the previous entry ({})", e.time_s, last));
    last = e.time_s;
    if (e.kind == Kind::kGate && !dac_gate(e.gate)) cx.fail(node, path, fmt::format("'{}' is not a DAC-driven device gate", e.gate));
  }

  const YAML::Node ramps = r.IsMap() ? YAML::Node(r["ramps"]) : YAML::Node();
  for (std::size_t i = 0; i < s.ramps.size(); ++i) {
    const auto& rp = s.ramps[i];
    const auto node = ramps.IsSequence() ? YAML::Node(ramps[i]) : YAML::Node(root);
    const auto path = fmt::format("ramps.{}", i);
    if (rp.target != "hold" && !dac_gate(rp.target)) cx.fail(node, path, fmt::format("target '{}' is neither 'hold' nor a DAC gate", rp.target));
    if (rp.steps < 1) cx.fail(node, path, "steps must be >= 1");
    if (rp.dwell_s < 0.0 || rp.start_s < 0.0) cx.fail(node, path, "start_s and dwell_s must be >= 0");
    if (rp.start_s + (rp.steps - 1) * rp.dwell_s > tr.duration_s) cx.fail(node, path, "ramp runs past traces.duration_s");
  }

  if (s.projection) {
    const auto& p = *s.projection;
    for (double n : p.n_cells) {
      if (n < 0.0) cx.fail(at("projection"), "projection.n_cells", "must be >= 0");
    }
    for (double f : p.f_hz) {
      if (f < 0.0) cx.fail(at("projection"), "projection.f_hz", "must be >= 0");
    }
    if (!(p.swing > 0.0)) cx.fail(at("projection"), "projection.swing", "must be > 0");
  }
  if (s.sweep && s.sweep->values.empty()) cx.fail(at("sweep"), "sweep.values", "must not be empty");
}

Scenario from_node(const Context& cx, const YAML::Node& root) {
  if (!root.IsMap()) cx.fail(root, "<root>", "expected a mapping");
  Section top(cx, root, "");
  Scenario s;
  s.origin = cx.origin;
  if (!top.has("schema_version")) cx.fail(root, "schema_version", "missing");
  s.schema_version = static_cast<int>(top.integer("schema_version", 0));
  s.name = top.str("name", std::filesystem::path(cx.origin).stem().string());

  {
    Section c(cx, top.raw("chip"), "chip");
    s.chip.master_freq_hz = c.num("master_freq_hz", s.chip.master_freq_hz);
    s.chip.refresh_dwell_s = c.num("refresh_dwell_s", s.chip.refresh_dwell_s);
    s.chip.refresh_cells = static_cast<int>(c.integer("refresh_cells", s.chip.refresh_cells));
    c.finish();
  }
  {
    Section a(cx, top.raw("analog"), "analog");
    s.cell.c_pulse = a.num("c_pulse", s.cell.c_pulse);
    s.cell.c_p = a.num("c_p", s.cell.c_p);
    s.cell.c_ds = a.num("c_ds", s.cell.c_ds);
    s.cell.r_switch = a.num("r_switch", s.cell.r_switch);
    s.cell.leak_rate = a.num("leak_rate", s.cell.leak_rate);
    s.cell.q_inj = a.num("q_inj", s.cell.q_inj);
    a.finish();
  }
  {
    Section r(cx, top.raw("rails"), "rails");
    s.rails.v_high = r.num("v_high", s.rails.v_high);
    s.rails.v_low = r.num("v_low", s.rails.v_low);
    s.rails.v_hold = r.num("v_hold", s.rails.v_hold);
    r.finish();
  }
  {
    Section d(cx, top.raw("device"), "device");
    s.device.peak_spacing = d.num("peak_spacing", s.device.peak_spacing);
    s.device.peak_width = d.num("peak_width", s.device.peak_width);
    s.device.g_max = d.num("g_max", s.device.g_max);
    s.device.v_offset = d.num("v_offset", s.device.v_offset);
    auto gates = d.raw("gates");
    if (gates.IsDefined() && !gates.IsNull()) {
      if (!gates.IsMap()) cx.fail(gates, "device.gates", "expected a mapping of gate name to {lever, cell | volts}");
      for (const auto& kv : gates) {
        const auto name = kv.first.Scalar();
        Section g(cx, kv.second, "device.gates." + name);
        GateConfig gc;
        if (!g.has("lever")) cx.fail(kv.second, g.sub("lever"), "missing");
        gc.lever = g.num("lever", 0.0);
        gc.cell = g.opt_int("cell");
        const auto volts = g.opt_num("volts");
        if (gc.cell && volts) cx.fail(kv.second, g.sub(""), "a gate is driven either by a cell or by 'volts', not both");
        gc.volts = volts.value_or(0.0);
        g.finish();
        s.device.gates[name] = gc;
      }
    }
    d.finish();
  }
  {
    Section r(cx, top.raw("readout"), "readout");
    s.readout.enabled = r.flag("enabled", false);
    s.readout.tank.bandwidth_hz = r.num("bandwidth_hz", s.readout.tank.bandwidth_hz);
    s.readout.tank.sample_rate_hz = r.num("sample_rate_hz", s.readout.tank.sample_rate_hz);
    s.readout.start_s = r.num("start_s", 0.0);
    s.readout.stop_s = r.num("stop_s", 0.0);
    s.readout.axis_gate = r.str("axis_gate", "");
    s.readout.export_every = static_cast<int>(r.integer("export_every", 1));
    s.readout.envelope_cell = r.opt_int("envelope_cell");
    r.finish();
  }
  {
    Section p(cx, top.raw("power"), "power");
    s.power.cell_energy_per_cycle = p.opt_num("cell_energy_per_cycle");
    s.power.reference_swing = p.num("reference_swing", s.power.reference_swing);
    s.power.fsm_coeff = p.num("fsm_coeff", 0.0);
    s.power.clock_coeff = p.num("clock_coeff", 0.0);
    s.power.static_floor = p.num("static_floor", 0.0);
    s.power.base_temperature_k = p.num("base_temperature_k", s.power.base_temperature_k);
    auto cal = p.raw("calibration");
    if (cal.IsDefined() && !cal.IsNull()) {
      if (!cal.IsSequence()) cx.fail(cal, "power.calibration", "expected a list of [watts, kelvin] pairs");
      s.power.calibration.clear();
      for (std::size_t i = 0; i < cal.size(); ++i) {
        const auto path = fmt::format("power.calibration.{}", i);
        if (!cal[i].IsSequence() || cal[i].size() != 2) cx.fail(cal[i], path, "expected [watts, kelvin]");
        s.power.calibration.emplace_back(to_double(cx, cal[i][0], path + ".0"), to_double(cx, cal[i][1], path + ".1"));
      }
    }
    s.power.budget.budget_watts_at_100mK = p.num("budget_watts_at_100mK", s.power.budget.budget_watts_at_100mK);
    s.power.budget.coax_power_per_line = p.opt_num("coax_power_per_line");
    p.finish();
  }
  {
    Section h(cx, top.raw("host"), "host");
    s.host.compensate_injection = h.flag("compensate_injection", false);
    auto targets = h.raw("targets");
    if (targets.IsDefined() && !targets.IsNull()) {
      if (!targets.IsMap()) cx.fail(targets, "host.targets", "expected a mapping of cell to volts");
      for (const auto& kv : targets) {
        const auto cell = static_cast<int>(to_integer(cx, kv.first, "host.targets"));
        s.host.targets[cell] = to_double(cx, kv.second, fmt::format("host.targets.{}", cell));
      }
    }
    h.finish();
  }
  {
    Section t(cx, top.raw("traces"), "traces");
    s.traces.duration_s = t.num("duration_s", 0.0);
    s.traces.start_s = t.num("start_s", 0.0);
    s.traces.sample_period_s = t.num("sample_period_s", 0.0);
    for (double c : t.nums("cells")) {
      if (c != std::floor(c)) cx.fail(t.raw("cells"), "traces.cells", "cell indices must be integers");
      s.traces.cells.push_back(static_cast<int>(c));
    }
    s.traces.events = t.flag("events", true);
    t.finish();
  }
  {
    auto sched = top.raw("schedule");
    if (sched.IsDefined() && !sched.IsNull()) {
      if (!sched.IsSequence()) cx.fail(sched, "schedule", "expected a list");
      for (std::size_t i = 0; i < sched.size(); ++i) s.schedule.push_back(parse_entry(cx, sched[i], fmt::format("schedule.{}", i)));
    }
  }
  {
    auto ramps = top.raw("ramps");
    if (ramps.IsDefined() && !ramps.IsNull()) {
      if (!ramps.IsSequence()) cx.fail(ramps, "ramps", "expected a list");
      for (std::size_t i = 0; i < ramps.size(); ++i) {
        Section r(cx, ramps[i], fmt::format("ramps.{}", i));
        Ramp rp;
        rp.line = line_of(ramps[i]);
        rp.target = r.str("target", "");
        rp.start_s = r.num("start_s", 0.0);
        rp.from = r.num("from", 0.0);
        rp.to = r.num("to", 0.0);
        rp.steps = static_cast<int>(r.integer("steps", 1));
        rp.dwell_s = r.num("dwell_s", 0.0);
        r.finish();
        s.ramps.push_back(rp);
      }
    }
  }
  if (top.has("projection") && !top.raw("projection").IsNull()) {
    Section p(cx, top.raw("projection"), "projection");
    ProjectionConfig pc;
    pc.n_cells = p.nums("n_cells");
    pc.f_hz = p.nums("f_hz");
    pc.swing = p.num("swing", pc.swing);
    pc.amplitudes = p.nums("amplitudes");
    p.finish();
    s.projection = pc;
  }
  top.raw("projection");
  if (top.has("sweep") && !top.raw("sweep").IsNull()) {
    Section w(cx, top.raw("sweep"), "sweep");
    SweepConfig sc;
    sc.axis = w.str("axis", "");
    sc.values = w.nums("values");
    w.finish();
    s.sweep = sc;
  }
  top.raw("sweep");
  top.finish();

  validate(cx, s, root);
  return s;
}

YAML::Node load_yaml(const std::string& text, const std::string& origin) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    const int line = e.mark.line >= 0 ? e.mark.line + 1 : 0;
    throw Error(ErrorKind::kInvalidScenario, fmt::format("{}:{}: {}", origin, line, e.msg));
  }
}

std::string num(double v) { return fmt::format("{}", v); }

void emit_numbers(YAML::Emitter& out, const std::vector<double>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double x : v) out << num(x);
  out << YAML::EndSeq;
}

void emit_optional(YAML::Emitter& out, const std::optional<double>& v) {
  if (v) {
    out << num(*v);
  } else {
    out << YAML::Null;
  }
}

const char* exec_name(std::uint8_t sub) {
  switch (sub) {
    case protocol::exec::kGo: return "GO";
    case protocol::exec::kRefresh: return "REFRESH";
    default: return "HALT";
  }
}

}  // namespace

device::DotDevice DeviceConfig::dot() const {
  device::DotDevice d;
  for (const auto& [name, g] : gates) d.gate_levers[name] = g.lever;
  d.peak_spacing = peak_spacing;
  d.peak_width = peak_width;
  d.g_max = g_max;
  d.v_offset = v_offset;
  return d;
}

thermal::PowerModel Scenario::power_model() const {
  thermal::PowerModel m;
  const double drive = rails.v_high - rails.v_low;
  if (power.cell_energy_per_cycle) {
    m.cell_energy_per_cycle = *power.cell_energy_per_cycle;
    m.reference_swing = power.reference_swing;
  } else if (drive > 0.0) {
    m = thermal::PowerModel::from_cell(cell.c_pulse, cell.c_p, drive);
  } else {
    m.cell_energy_per_cycle = 0.0;
    m.reference_swing = power.reference_swing;
  }
  m.fsm_coeff = power.fsm_coeff;
  m.clock_coeff = power.clock_coeff;
  m.static_floor = power.static_floor;
  return m;
}

thermal::ThermalCalibration Scenario::calibration() const {
  return thermal::ThermalCalibration(power.calibration, power.base_temperature_k);
}

Scenario parse(const std::string& text, const std::string& origin) {
  Context cx{origin};
  return from_node(cx, load_yaml(text, origin));
}

Scenario load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInvalidScenario, fmt::format("{}: cannot open", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string canonical_yaml(const Scenario& s) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << s.schema_version;
  out << YAML::Key << "name" << YAML::Value << s.name;

  out << YAML::Key << "chip" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "master_freq_hz" << YAML::Value << num(s.chip.master_freq_hz);
  out << YAML::Key << "refresh_dwell_s" << YAML::Value << num(s.chip.refresh_dwell_s);
  out << YAML::Key << "refresh_cells" << YAML::Value << s.chip.refresh_cells;
  out << YAML::EndMap;

  out << YAML::Key << "analog" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "c_pulse" << YAML::Value << num(s.cell.c_pulse);
  out << YAML::Key << "c_p" << YAML::Value << num(s.cell.c_p);
  out << YAML::Key << "c_ds" << YAML::Value << num(s.cell.c_ds);
  out << YAML::Key << "r_switch" << YAML::Value << num(s.cell.r_switch);
  out << YAML::Key << "leak_rate" << YAML::Value << num(s.cell.leak_rate);
  out << YAML::Key << "q_inj" << YAML::Value << num(s.cell.q_inj);
  out << YAML::EndMap;

  out << YAML::Key << "rails" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "v_high" << YAML::Value << num(s.rails.v_high);
  out << YAML::Key << "v_low" << YAML::Value << num(s.rails.v_low);
  out << YAML::Key << "v_hold" << YAML::Value << num(s.rails.v_hold);
  out << YAML::EndMap;

  out << YAML::Key << "device" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "peak_spacing" << YAML::Value << num(s.device.peak_spacing);
  out << YAML::Key << "peak_width" << YAML::Value << num(s.device.peak_width);
  out << YAML::Key << "g_max" << YAML::Value << num(s.device.g_max);
  out << YAML::Key << "v_offset" << YAML::Value << num(s.device.v_offset);
  out << YAML::Key << "gates" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, g] : s.device.gates) {
    out << YAML::Key << name << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "lever" << YAML::Value << num(g.lever);
    if (g.cell) {
      out << YAML::Key << "cell" << YAML::Value << *g.cell;
    } else {
      out << YAML::Key << "volts" << YAML::Value << num(g.volts);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "readout" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << s.readout.enabled;
  out << YAML::Key << "bandwidth_hz" << YAML::Value << num(s.readout.tank.bandwidth_hz);
  out << YAML::Key << "sample_rate_hz" << YAML::Value << num(s.readout.tank.sample_rate_hz);
  out << YAML::Key << "start_s" << YAML::Value << num(s.readout.start_s);
  out << YAML::Key << "stop_s" << YAML::Value << num(s.readout.stop_s);
  out << YAML::Key << "axis_gate" << YAML::Value << s.readout.axis_gate;
  out << YAML::Key << "export_every" << YAML::Value << s.readout.export_every;
  out << YAML::Key << "envelope_cell" << YAML::Value;
  if (s.readout.envelope_cell) {
    out << *s.readout.envelope_cell;
  } else {
    out << YAML::Null;
  }
  out << YAML::EndMap;

  out << YAML::Key << "power" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "cell_energy_per_cycle" << YAML::Value;
  emit_optional(out, s.power.cell_energy_per_cycle);
  out << YAML::Key << "reference_swing" << YAML::Value << num(s.power.reference_swing);
  out << YAML::Key << "fsm_coeff" << YAML::Value << num(s.power.fsm_coeff);
  out << YAML::Key << "clock_coeff" << YAML::Value << num(s.power.clock_coeff);
  out << YAML::Key << "static_floor" << YAML::Value << num(s.power.static_floor);
  out << YAML::Key << "base_temperature_k" << YAML::Value << num(s.power.base_temperature_k);
  out << YAML::Key << "calibration" << YAML::Value << YAML::BeginSeq;
  for (const auto& [p, t] : s.power.calibration) emit_numbers(out, {p, t});
  out << YAML::EndSeq;
  out << YAML::Key << "budget_watts_at_100mK" << YAML::Value << num(s.power.budget.budget_watts_at_100mK);
  out << YAML::Key << "coax_power_per_line" << YAML::Value;
  emit_optional(out, s.power.budget.coax_power_per_line);
  out << YAML::EndMap;

  out << YAML::Key << "host" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "compensate_injection" << YAML::Value << s.host.compensate_injection;
  out << YAML::Key << "targets" << YAML::Value << YAML::BeginMap;
  for (const auto& [c, v] : s.host.targets) out << YAML::Key << c << YAML::Value << num(v);
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "traces" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "duration_s" << YAML::Value << num(s.traces.duration_s);
  out << YAML::Key << "start_s" << YAML::Value << num(s.traces.start_s);
  out << YAML::Key << "sample_period_s" << YAML::Value << num(s.traces.sample_period_s);
  out << YAML::Key << "cells" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (int c : s.traces.cells) out << c;
  out << YAML::EndSeq;
  out << YAML::Key << "events" << YAML::Value << s.traces.events;
  out << YAML::EndMap;

  out << YAML::Key << "schedule" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : s.schedule) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "t" << YAML::Value << num(e.time_s);
    switch (e.kind) {
      case Kind::kFrame:
        out << YAML::Key << "frame" << YAML::Value << protocol::format_word(protocol::encode_frame(e.frame));
        break;
      case Kind::kWrite:
        out << YAML::Key << "write" << YAML::Value << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "reg" << YAML::Value << protocol::name_from_address(e.frame.address);
        out << YAML::Key << "value" << YAML::Value << fmt::format("0x{:04X}", e.frame.data);
        out << YAML::EndMap;
        break;
      case Kind::kExec:
        out << YAML::Key << "exec" << YAML::Value << exec_name(e.frame.address);
        break;
      case Kind::kRead:
        out << YAML::Key << "read" << YAML::Value << protocol::name_from_address(e.frame.address);
        break;
      case Kind::kHold:
        out << YAML::Key << "hold" << YAML::Value << num(e.volts);
        break;
      case Kind::kGate:
        out << YAML::Key << "gate" << YAML::Value << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << e.gate;
        out << YAML::Key << "volts" << YAML::Value << num(e.volts);
        out << YAML::EndMap;
        break;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "ramps" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : s.ramps) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "target" << YAML::Value << r.target;
    out << YAML::Key << "start_s" << YAML::Value << num(r.start_s);
    out << YAML::Key << "from" << YAML::Value << num(r.from);
    out << YAML::Key << "to" << YAML::Value << num(r.to);
    out << YAML::Key << "steps" << YAML::Value << r.steps;
    out << YAML::Key << "dwell_s" << YAML::Value << num(r.dwell_s);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  if (s.projection) {
    out << YAML::Key << "projection" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "n_cells" << YAML::Value;
    emit_numbers(out, s.projection->n_cells);
    out << YAML::Key << "f_hz" << YAML::Value;
    emit_numbers(out, s.projection->f_hz);
    out << YAML::Key << "swing" << YAML::Value << num(s.projection->swing);
    out << YAML::Key << "amplitudes" << YAML::Value;
    emit_numbers(out, s.projection->amplitudes);
    out << YAML::EndMap;
  }
  if (s.sweep) {
    out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "axis" << YAML::Value << s.sweep->axis;
    out << YAML::Key << "values" << YAML::Value;
    emit_numbers(out, s.sweep->values);
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

Scenario with_override(const Scenario& s, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kInvalidScenario, fmt::format("override '{}': expected path=value", assignment));
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  YAML::Node root = YAML::Load(canonical_yaml(s));
  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  YAML::Node cur = root;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& key = parts[i];
    YAML::Node next;
    if (cur.IsMap()) {
      const YAML::Node& c = cur;
      if (!c[key].IsDefined()) throw Error(ErrorKind::kUnknownAxis, fmt::format("'{}' has no key '{}'", path, key));
      next = cur[key];
    } else if (cur.IsSequence()) {
      std::size_t idx = 0;
      const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (ec != std::errc{} || end != key.data() + key.size() || idx >= cur.size()) {
        throw Error(ErrorKind::kUnknownAxis, fmt::format("'{}': no element '{}'", path, key));
      }
      next = cur[idx];
    } else {
      throw Error(ErrorKind::kUnknownAxis, fmt::format("'{}': '{}' is not a section", path, key));
    }
    cur.reset(next);
  }

  YAML::Node replacement;
  try {
    replacement = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kInvalidScenario, fmt::format("override '{}': {}", assignment, e.msg));
  }
  const bool same_shape = cur.Type() == replacement.Type() || cur.IsNull() || (cur.IsScalar() && replacement.IsNull());
  if (!same_shape || cur.IsMap()) {
    throw Error(ErrorKind::kInvalidScenario, fmt::format("override '{}': value does not match the shape of '{}'", assignment, path));
  }
  cur = replacement;

  std::ostringstream text;
  text << root;
  Scenario out;
  try {
    out = parse(text.str(), s.origin);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("override '{}': {}", assignment, e.message()));
  }
  out.origin = s.origin;
  out.overrides = s.overrides;
  out.overrides.push_back(assignment);
  return out;
}

Scenario with_overrides(Scenario s, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) s = with_override(s, a);
  return s;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kInvalidParameter, "SHA-256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string config_hash(const Scenario& s) { return sha256_hex(canonical_yaml(s)); }

std::vector<ScheduleEntry> timeline(const Scenario& s) {
  std::vector<ScheduleEntry> out = s.schedule;
  for (const auto& r : s.ramps) {
    for (int i = 0; i < r.steps; ++i) {
      ScheduleEntry e;
      e.time_s = r.start_s + i * r.dwell_s;
      e.kind = r.target == "hold" ? Kind::kHold : Kind::kGate;
      e.gate = r.target == "hold" ? std::string() : r.target;
      e.volts = r.steps == 1 ? r.from : r.from + (r.to - r.from) * i / (r.steps - 1);
      e.line = r.line;
      out.push_back(e);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  return out;
}

}  // namespace cryoctl::scenario
