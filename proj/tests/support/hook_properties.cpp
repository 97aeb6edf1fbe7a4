#include "hook_properties.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "decoy/hooking.hpp"

namespace decoy::testing {
namespace {

enum class Before { None, Pass, ShortCircuit, Throw };
enum class After { None, Tag, Throw };

struct HookSpec {
  int priority = 0;
  Before before = Before::None;
  After after = After::None;
};

std::string tag(std::size_t i) { return "<" + std::to_string(i) + ">"; }

struct Expected {
  std::string value;
  AccessAction action = AccessAction::Original;
  int original_runs = 0;
  int faults = 0;
};

/// Reference model over the installation order `specs` (index = install order).
Expected model(const std::vector<HookSpec>& specs, const std::vector<std::size_t>& live, const std::string& truth) {
  // Chain order: priority descending, later installs first among equals.
  std::vector<std::size_t> order = live;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (specs[a].priority != specs[b].priority) return specs[a].priority > specs[b].priority;
    return a > b;
  });

  Expected e;
  std::size_t entered = 0;
  bool early = false;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& s = specs[order[k]];
    if (s.before == Before::Throw) return {truth, AccessAction::Original, 1, 1};
    entered = k + 1;
    if (s.before == Before::ShortCircuit) {
      early = true;
      e.value = "early" + tag(order[k]);
      break;
    }
  }
  if (!early) {
    e.value = truth;
    e.original_runs = 1;
  }
  for (std::size_t k = entered; k-- > 0;) {
    const auto& s = specs[order[k]];
    if (s.after == After::Throw) return {truth, AccessAction::Original, 1, 1};
    if (s.after == After::Tag) e.value += tag(order[k]);
  }
  e.action = early ? AccessAction::Blocked : (e.value == truth ? AccessAction::Original : AccessAction::Spoofed);
  return e;
}

HookDescriptor make_hook(const HookSpec& s, std::size_t index) {
  HookDescriptor d;
  d.target = std::string(methods::kGetSerial);
  d.owner = "prop";
  d.priority = s.priority;
  switch (s.before) {
    case Before::None: break;
    case Before::Pass: d.before = [](MethodHookParam&) {}; break;
    case Before::ShortCircuit: d.before = [index](MethodHookParam& p) { p.result = Value{"early" + tag(index)}; }; break;
    case Before::Throw: d.before = [](MethodHookParam&) { throw std::runtime_error("before fault"); }; break;
  }
  switch (s.after) {
    case After::None: break;
    case After::Tag:
      d.after = [index](MethodHookParam& p) {
        if (auto* str = p.result ? std::get_if<std::string>(&*p.result) : nullptr) *str += tag(index);
      };
      break;
    case After::Throw: d.after = [](MethodHookParam&) { throw std::runtime_error("after fault"); }; break;
  }
  if (!d.before && !d.after) d.before = [](MethodHookParam&) {};
  return d;
}

}  // namespace

PropertyReport run_hook_properties(std::uint64_t seed, int cases) {
  PropertyReport report;
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const AppManifest manifest{"prop.app", {PermissionKind::DeviceInfo}, {{"about", {PermissionKind::DeviceInfo}}}};
  const AppManifest bystander{"prop.bystander", {PermissionKind::DeviceInfo}, {{"about", {PermissionKind::DeviceInfo}}}};

  for (int c = 0; c < cases; ++c) {
    ++report.cases;
    auto fail = [&](const std::string& what) {
      std::ostringstream msg;
      msg << "case " << c << " (seed " << seed << "): " << what;
      report.failures.push_back(msg.str());
    };
    auto check = [&](bool cond, const std::string& what) {
      ++report.checks;
      if (!cond) fail(what);
      return cond;
    };

    VirtualDevice device;
    HookEngine engine(device);
    auto& app = device.spawn_process(manifest);
    auto& other = device.spawn_process(bystander);
    const std::string truth = device.truth().serial();

    std::vector<HookSpec> specs(static_cast<std::size_t>(pick(0, 6)));
    for (auto& s : specs) {
      s.priority = pick(-2, 2);
      const int b = pick(0, 9);
      s.before = b < 4 ? Before::None : b < 7 ? Before::Pass : b < 9 ? Before::ShortCircuit : Before::Throw;
      const int a = pick(0, 9);
      s.after = a < 3 ? After::None : a < 9 ? After::Tag : After::Throw;
    }
    std::vector<HookHandle> handles;
    for (std::size_t i = 0; i < specs.size(); ++i) handles.push_back(engine.install_hook(app, make_hook(specs[i], i)));
    std::vector<std::size_t> live(specs.size());
    std::iota(live.begin(), live.end(), 0);

    auto call_and_compare = [&](const std::string& phase) {
      const auto expected = model(specs, live, truth);
      const auto reads_before = device.truth().reads(PermissionKind::DeviceInfo);
      const auto faults_before = device.hook_faults().size();
      Value got;
      try {
        got = device.invoke(app, methods::kGetSerial);
      } catch (const std::exception& e) {
        fail(phase + ": invoke threw " + e.what());
        return;
      }
      const auto* s = std::get_if<std::string>(&got);
      check(s && *s == expected.value, phase + ": value " + (s ? *s : std::string(kind_name(got))) + " != " + expected.value);
      const auto& last = device.log().snapshot().back();
      check(last.action == expected.action, phase + ": action " + std::string(to_string(last.action)));
      check(device.truth().reads(PermissionKind::DeviceInfo) - reads_before ==
                static_cast<std::uint64_t>(expected.original_runs),
            phase + ": original side effects");
      check(device.hook_faults().size() - faults_before == static_cast<std::size_t>(expected.faults),
            phase + ": fault count");
      // The bystander never sees another process's hooks.
      const auto theirs = device.invoke(other, methods::kGetSerial);
      check(theirs == Value{truth}, phase + ": bystander value changed");
      check(other.table.find(methods::kGetSerial)->hook_chain.empty(), phase + ": bystander chain not empty");
    };

    call_and_compare("installed");

    // Uninstall a random subset, then everything; each step must match the model of what remains.
    std::shuffle(live.begin(), live.end(), rng);
    while (!live.empty()) {
      const auto drop = static_cast<std::size_t>(pick(1, static_cast<int>(live.size())));
      for (std::size_t k = 0; k < drop; ++k) {
        engine.uninstall_hook(handles[live.back()]);
        live.pop_back();
      }
      std::sort(live.begin(), live.end());
      call_and_compare("after uninstall, " + std::to_string(live.size()) + " left");
      std::shuffle(live.begin(), live.end(), rng);
    }
    check(app.table.find(methods::kGetSerial)->hook_chain.empty(), "chain not empty after uninstalling all");
    check(engine.installed() == 0, "engine still tracks hooks");
  }
  return report;
}

}  // namespace decoy::testing
