// pbill: key generation, party processes, in-process simulation, tamper
// drills and verification benchmarks.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "pbill/pbill.hpp"

namespace {

using namespace pbill;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

struct Globals {
  bool test_mode = false;
  std::string log_level = "info";
};

// Seeds are a test-mode feature; production runs always draw from the OS.
std::optional<std::uint64_t> checked_seed(const Globals& g, const CLI::Option* opt,
                                          std::uint64_t value) {
  if (opt->count() == 0) return std::nullopt;
  if (!g.test_mode) throw Error(ErrorCode::kConfig, "--seed requires --test-mode");
  return value;
}

std::unique_ptr<RandomSource> make_rng(const std::optional<std::uint64_t>& seed,
                                       std::string_view label) {
  if (seed) return std::make_unique<SeededRandom>(*seed, label);
  return std::make_unique<SystemRandom>();
}

// ---------------------------------------------------------------------------
// keygen

struct KeygenArgs {
  std::string out_dir;
  std::string meter_id = "meter-0";
  std::string group_id = std::string(Ristretto255::kId);
  std::string domain_tag = std::string(kDefaultDomainTag);
  bool force = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_keygen(const Globals& g, const KeygenArgs& a) {
  auto seed = checked_seed(g, a.seed_opt, a.seed);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  auto rng = make_rng(seed, "keygen");
  MeterKeypair keys = MeterKeypair::generate(a.meter_id, *rng);

  nlohmann::ordered_json params = with_group(a.group_id, [&]<class G>(std::type_identity<G>) {
    return params_json(derive_params<G>(a.domain_tag));
  });

  const fs::path key_path = dir / "meter.key";
  const fs::path pub_path = dir / "meter.pub";
  const fs::path params_path = dir / "params.json";
  if (!a.force) {
    for (const auto& p : {key_path, pub_path, params_path}) {
      if (fs::exists(p)) {
        throw Error(ErrorCode::kIo, p.string() + " exists; pass --force to overwrite");
      }
    }
  }
  write_text_file(key_path, secret_key_json(keys).dump(2) + "\n", a.force,
                  fs::perms::owner_read | fs::perms::owner_write);
  write_text_file(pub_path, public_key_json(keys).dump(2) + "\n", a.force);
  write_text_file(params_path, params.dump(2) + "\n", a.force);
  fmt::print("wrote {}\nwrote {}\nwrote {}\n", key_path.string(), pub_path.string(),
             params_path.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string role;
  std::string config;
  bool pass_through = false;
  std::uint32_t reports = 1;
  std::uint64_t start_day = 0;
  std::string profile_csv;
};

template <PrimeOrderGroup G>
int run_bs(const Config& c) {
  std::unique_ptr<BillingLedger> ledger =
      c.ledger ? std::make_unique<BillingLedger>(c.ledger->string())
               : std::make_unique<BillingLedger>();
  Backend<G> backend(derive_params<G>(c.domain_tag), *ledger,
                     TariffSchedule::time_of_use(c.intervals_per_day));
  for (const auto& path : c.meter_public_keys) {
    auto pk = load_public_key(path);
    backend.register_meter(pk.meter_id, pk.key);
    spdlog::info("step=register meter={}", pk.meter_id);
  }
  BackendServer<G> server(backend, net::Listener(*c.bs_endpoint));
  server.run(g_stop);
  spdlog::info("step=shutdown role=bs ledger_records={}", ledger->size());
  return kExitOk;
}

template <PrimeOrderGroup G>
int run_pc(const Config& c, bool pass_through) {
  ProxyOptions options;
  options.backend = *c.bs_endpoint;
  options.tariff_endpoint = c.tariff_endpoint;
  options.pass_through = pass_through;
  PrivacyProxy<G> proxy(derive_params<G>(c.domain_tag), options, net::Listener(*c.pc_endpoint));
  proxy.run(g_stop);
  spdlog::info("step=shutdown role=pc buffered={}", proxy.pending());
  return kExitOk;
}

template <PrimeOrderGroup G>
int run_meter(const Config& c, const RunArgs& a) {
  MeterKeypair keys = load_secret_key(*c.secret_key);
  const net::Endpoint target = c.meter_endpoint.value_or(*c.pc_endpoint);
  ProfileSource source = ConstantSource{0};
  if (!a.profile_csv.empty()) {
    source = CsvSource::load(a.profile_csv);
  } else {
    auto household_rng = make_rng(c.seed, "household");
    source = SyntheticHousehold{household_rng->next_u64(), c.intervals_per_day};
  }
  SmartMeter<G> meter(derive_params<G>(c.domain_tag), keys, make_rng(c.seed, "blinding"));

  int status = kExitOk;
  for (std::uint32_t i = 0; i < a.reports && !g_stop; ++i) {
    const IntervalIndex i0 = (a.start_day + i) * c.intervals_per_day;
    ConsumptionProfile profile = generate_profile(source, i0, c.intervals_per_day);
    meter.precompute_blinding(profile.size());
    auto report = meter.report(profile);
    spdlog::info("step=report meter={} i0={} n={} target={}", report.meter_id, i0,
                 report.rows.size(), target.str());
    wire::Message reply = send_report(target, report);
    if (auto* ack = std::get_if<wire::AckMessage>(&reply)) {
      spdlog::info("step=ack meter={} i0={} status={}", ack->meter_id, ack->i0, ack->status);
    } else if (auto* v = std::get_if<wire::VerdictMessage>(&reply)) {
      spdlog::info("step=verdict meter={} i0={} accepted={} reason={}", v->meter_id, v->i0,
                   v->accepted, v->reason);
      if (!v->accepted) status = kExitFailed;
    } else if (auto* e = std::get_if<wire::ErrorMessage>(&reply)) {
      spdlog::error("step=report meter={} i0={} error={} \"{}\"", report.meter_id, i0, e->code,
                    e->message);
      status = kExitFailed;
    }
  }
  return status;
}

int cmd_run(const Globals& g, const RunArgs& a) {
  Config c = load_config(a.config);
  if (c.seed && !g.test_mode) throw Error(ErrorCode::kConfig, "config seed requires --test-mode");
  if (a.pass_through && !g.test_mode) {
    throw Error(ErrorCode::kConfig, "--pass-through is a test-harness flag and requires --test-mode");
  }
  const Role role = a.role == "meter" ? Role::kMeter : a.role == "pc" ? Role::kPc : Role::kBs;
  validate_for_role(c, role);
  install_signal_handlers();
  return with_group(c.group_id, [&]<class G>(std::type_identity<G>) {
    switch (role) {
      case Role::kMeter: return run_meter<G>(c, a);
      case Role::kPc: return run_pc<G>(c, a.pass_through);
      case Role::kBs: return run_bs<G>(c);
    }
    return kExitUsage;
  });
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::uint32_t days = 7;
  std::uint32_t meters = 10;
  std::uint32_t intervals_per_day = kIntervalsPerDay;
  std::size_t workers = 1;
  std::string group_id = std::string(Ristretto255::kId);
  std::string ledger;
  bool json = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  SimulationOptions options;
  options.days = a.days;
  options.meters = a.meters;
  options.intervals_per_day = a.intervals_per_day;
  options.workers = a.workers;
  options.seed = checked_seed(g, a.seed_opt, a.seed);

  std::unique_ptr<BillingLedger> ledger = a.ledger.empty()
                                              ? std::make_unique<BillingLedger>()
                                              : std::make_unique<BillingLedger>(a.ledger);
  SimulationSummary s = with_group(a.group_id, [&]<class G>(std::type_identity<G>) {
    return run_simulation(derive_params<G>(), options, *ledger);
  });

  if (a.json) {
    std::cout << to_json(s).dump(2) << "\n";
  } else {
    fmt::print("group            {}\n", a.group_id);
    fmt::print("sessions         {} ({} meters x {} days, n={})\n", s.sessions, a.meters, a.days,
               a.intervals_per_day);
    fmt::print("accepted         {}\n", s.accepted);
    fmt::print("rejected         {}\n", s.rejected);
    fmt::print("acceptance       {:.2f}%\n",
               s.sessions ? 100.0 * static_cast<double>(s.accepted) / s.sessions : 0.0);
    fmt::print("mean ms/session  sm={:.3f} pc={:.3f} bs={:.3f} (sm offline {:.3f})\n", s.mean.sm_ms,
               s.mean.pc_ms, s.mean.bs_ms, s.mean.sm_offline_ms);
    fmt::print("transcript       {}\n", s.transcript_digest);
    for (const auto& r : s.rejections) fmt::print("rejected: {}\n", r);
  }
  return s.rejected == 0 ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// tamper

struct TamperArgs {
  std::string scenario = "all";
  std::string group_id = "all";
  std::size_t samples = 1000;
  std::size_t sessions_per_n = 300;
  bool json = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void print_tally(std::string_view title, const analysis::SoundnessTally& t) {
  fmt::print("{}\n", title);
  fmt::print("  {:<8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}\n", "field", "attempted", "rejected",
             "wrong", "accepted", "vacuous", "collision");
  auto row = [](std::string_view name, const analysis::SoundnessTally::Row& r) {
    fmt::print("  {:<8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}\n", name, r.attempted, r.rejected,
               r.wrong_reason, r.accepted, r.vacuous, r.binding_collisions);
  };
  for (const auto& [field, r] : t.rows) row(analysis::to_string(field), r);
  row("total", t.total());
  for (const auto& f : t.failures) fmt::print("  FAIL {}\n", f);
}

nlohmann::ordered_json tally_json(const analysis::SoundnessTally& t) {
  nlohmann::ordered_json j;
  for (const auto& [field, r] : t.rows) {
    j["fields"][std::string(analysis::to_string(field))] = {
        {"attempted", r.attempted}, {"rejected", r.rejected},
        {"wrong_reason", r.wrong_reason}, {"accepted", r.accepted},
        {"vacuous", r.vacuous},     {"binding_collisions", r.binding_collisions}};
  }
  j["sound"] = t.sound();
  j["failures"] = t.failures;
  return j;
}

int cmd_tamper(const Globals& g, const TamperArgs& a) {
  std::vector<analysis::TamperField> fields;
  if (a.scenario == "all") {
    fields.assign(std::begin(analysis::kAllTamperFields), std::end(analysis::kAllTamperFields));
  } else if (auto f = analysis::tamper_field_from_string(a.scenario)) {
    fields.push_back(*f);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown scenario '" + a.scenario + "'");
  }
  auto seed = checked_seed(g, a.seed_opt, a.seed);
  auto rng = make_rng(seed, "tamper");

  bool sound = true;
  std::uint64_t collisions = 0;
  nlohmann::ordered_json report;
  if (a.group_id == "all" || a.group_id == TestGroup23::kId) {
    auto t = analysis::exhaustive_soundness(derive_params<TestGroup23>(), fields,
                                            a.sessions_per_n, *rng);
    sound = sound && t.sound();
    collisions += t.total().binding_collisions;
    if (a.json) {
      report[std::string(TestGroup23::kId)] = tally_json(t);
    } else {
      print_tally("test23: exhaustive, n in {1,2,3}", t);
    }
  }
  if (a.group_id == "all" || a.group_id == Ristretto255::kId) {
    auto t = analysis::sampled_soundness(derive_params<Ristretto255>(), fields, a.samples, 10,
                                         kIntervalsPerDay, *rng);
    // A collision needs a row committing to the identity: never expected here.
    sound = sound && t.sound() && t.total().binding_collisions == 0;
    if (a.json) {
      report[std::string(Ristretto255::kId)] = tally_json(t);
    } else {
      print_tally(fmt::format("ristretto255: {} sampled mutations, n in [1,96]", a.samples), t);
    }
  }
  if (a.group_id != "all" && !find_group(a.group_id)) {
    throw Error(ErrorCode::kUnknownGroup, "unknown group id '" + a.group_id + "'");
  }
  // Exit status follows `sound`; accepted collisions are always reported.
  if (a.json) {
    report["sound"] = sound;
    report["accepted_binding_collisions"] = collisions;
    std::cout << report.dump(2) << "\n";
  } else if (!sound) {
    fmt::print("SOME TAMPERED REPORTS SLIPPED\n");
  } else if (collisions > 0) {
    fmt::print("every mutation rejected except {} test23 binding collisions "
               "(tariff change at a row committing to the identity)\n",
               collisions);
  } else {
    fmt::print("all tampered reports rejected\n");
  }
  return sound ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::size_t batch = 1000;
  std::size_t n = kIntervalsPerDay;
  std::size_t workers = 1;
  double sampling = 1.0;
  std::string group_id = std::string(Ristretto255::kId);
  bool json = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  if (!(a.sampling > 0.0 && a.sampling <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "--sampling must be in (0, 1]");
  }
  auto seed = checked_seed(g, a.seed_opt, a.seed);
  auto rng = make_rng(seed, "bench");
  BenchOptions options{a.workers, a.sampling, seed};
  BenchReport r = with_group(a.group_id, [&]<class G>(std::type_identity<G>) {
    auto params = derive_params<G>();
    spdlog::info("step=prepare batch={} n={}", a.batch, a.n);
    auto items = make_bench_batch(params, a.batch, a.n, *rng);
    return bench_verify(params, std::span<const BenchItem<G>>(items), options);
  });

  if (a.json) {
    nlohmann::ordered_json j{{"group", a.group_id},
                             {"n", a.n},
                             {"attempted", r.attempted},
                             {"verified", r.verified},
                             {"skipped", r.skipped},
                             {"accepted", r.accepted},
                             {"rejected", r.rejected},
                             {"workers", r.workers},
                             {"wall_seconds", r.wall_seconds},
                             {"verifications_per_second", r.verifications_per_second},
                             {"per_day_equivalent", r.per_day_equivalent},
                             {"mean_ms", r.mean_ms},
                             {"p50_ms", r.p50_ms},
                             {"p90_ms", r.p90_ms},
                             {"p99_ms", r.p99_ms},
                             {"max_ms", r.max_ms}};
    std::cout << j.dump(2) << "\n";
  } else {
    fmt::print("group           {}  n={}  workers={}  sampling={}\n", a.group_id, a.n, r.workers,
               a.sampling);
    fmt::print("verified        {} of {} ({} skipped)\n", r.verified, r.attempted, r.skipped);
    fmt::print("accepted        {}  rejected {}\n", r.accepted, r.rejected);
    fmt::print("mean verify     {:.3f} ms  (p50 {:.3f}, p90 {:.3f}, p99 {:.3f}, max {:.3f})\n",
               r.mean_ms, r.p50_ms, r.p90_ms, r.p99_ms, r.max_ms);
    fmt::print("throughput      {:.1f}/s  = {:.0f}/day\n", r.verifications_per_second,
               r.per_day_equivalent);
  }
  return r.rejected == 0 ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pbill: privacy-preserving verifiable billing"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--test-mode", g.test_mode,
               "Allow deterministic seeds and test-harness flags (never in production)");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  KeygenArgs keygen;
  auto* keygen_cmd = app.add_subcommand("keygen", "Create a meter keypair and the public params file");
  keygen_cmd->add_option("--out", keygen.out_dir, "Output directory")->required();
  keygen_cmd->add_option("--meter-id", keygen.meter_id, "Meter identifier");
  keygen_cmd->add_option("--group", keygen.group_id, "Group id")
      ->check(CLI::IsMember({std::string(TestGroup23::kId), std::string(Ristretto255::kId)}));
  keygen_cmd->add_option("--domain-tag", keygen.domain_tag, "Tag used to derive h");
  keygen_cmd->add_flag("--force", keygen.force, "Overwrite existing files");
  keygen.seed_opt = keygen_cmd->add_option("--seed", keygen.seed, "Deterministic seed (test mode)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one party until interrupted");
  run_cmd->add_option("--role", run.role, "meter, pc or bs")
      ->required()
      ->check(CLI::IsMember({"meter", "pc", "bs"}));
  run_cmd->add_option("--config", run.config, "JSON config file")->required();
  run_cmd->add_flag("--pass-through", run.pass_through,
                    "PC forwards unstripped tables (test mode; not private)");
  run_cmd->add_option("--reports", run.reports, "Meter: number of daily reports to send");
  run_cmd->add_option("--start-day", run.start_day, "Meter: first day index");
  run_cmd->add_option("--profile-csv", run.profile_csv, "Meter: readings as interval,value CSV");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "In-process meters x days billing run");
  sim_cmd->add_option("--days", sim.days, "Days per meter");
  sim_cmd->add_option("--meters", sim.meters, "Number of meters");
  sim_cmd->add_option("--intervals-per-day", sim.intervals_per_day, "Intervals per day")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--workers", sim.workers, "Threads over meters")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--group", sim.group_id, "Group id");
  sim_cmd->add_option("--ledger", sim.ledger, "Persist verdicts to this file");
  sim_cmd->add_flag("--json", sim.json, "Machine-readable summary");
  sim.seed_opt = sim_cmd->add_option("--seed", sim.seed, "Deterministic seed (test mode)");

  TamperArgs tamper;
  auto* tamper_cmd = app.add_subcommand("tamper", "Mutate honest sessions; expect rejection");
  tamper_cmd->add_option("--scenario", tamper.scenario, "all, price, r_prime, comm, i0, tariff");
  tamper_cmd->add_option("--group", tamper.group_id, "all, test23 or ristretto255");
  tamper_cmd->add_option("--samples", tamper.samples, "Sampled mutations in ristretto255");
  tamper_cmd->add_option("--sessions-per-n", tamper.sessions_per_n,
                         "test23: random sessions for n = 2 and n = 3");
  tamper_cmd->add_flag("--json", tamper.json, "Machine-readable verdict table");
  tamper.seed_opt = tamper_cmd->add_option("--seed", tamper.seed, "Deterministic seed (test mode)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Verification throughput");
  bench_cmd->add_option("--batch", bench.batch, "Reports to verify")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--n", bench.n, "Intervals per report")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--workers", bench.workers, "Verification threads")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--sampling", bench.sampling, "Fraction of reports verified");
  bench_cmd->add_option("--group", bench.group_id, "Group id");
  bench_cmd->add_flag("--json", bench.json, "Machine-readable report");
  bench.seed_opt = bench_cmd->add_option("--seed", bench.seed, "Deterministic seed (test mode)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  auto logger = spdlog::stderr_color_mt("pbill");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*keygen_cmd) return cmd_keygen(g, keygen);
    if (*run_cmd) return cmd_run(g, run);
    if (*sim_cmd) return cmd_simulate(g, sim);
    if (*tamper_cmd) return cmd_tamper(g, tamper);
    if (*bench_cmd) return cmd_bench(g, bench);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kInvalidArgument ||
                   e.code() == ErrorCode::kUnknownGroup
               ? kExitUsage
               : kExitFailed;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailed;
  }
  return kExitUsage;
}
