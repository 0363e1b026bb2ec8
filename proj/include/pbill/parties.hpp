#pragma once

#include <spdlog/spdlog.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include "pbill/backend.hpp"
#include "pbill/net.hpp"
#include "pbill/privacy.hpp"
#include "pbill/wire.hpp"

namespace pbill {

inline constexpr std::chrono::milliseconds kPollSlice{200};

inline wire::VerdictMessage to_message(const std::string& meter_id, IntervalIndex i0,
                                       const Verdict& v) {
  return {meter_id, i0, v.accepted, std::string(to_string(v.reason)), v.detail};
}

inline wire::ErrorMessage to_message(const Error& e) {
  return {std::string(to_string(e.code())), e.what()};
}

// Tariffs fetched in-process, straight from a back-end object.
template <PrimeOrderGroup G>
class LocalTariffSource final : public TariffSource {
 public:
  explicit LocalTariffSource(Backend<G>& backend) : backend_(backend) {}
  Tariff fetch(const std::string& meter_id, IntervalIndex i0, std::size_t n) override {
    return backend_.serve_tariff(meter_id, i0, n);
  }

 private:
  Backend<G>& backend_;
};

// Tariffs fetched over the wire, from the back-end or any endpoint that
// speaks the same schema.
class RemoteTariffSource final : public TariffSource {
 public:
  explicit RemoteTariffSource(net::Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

  Tariff fetch(const std::string& meter_id, IntervalIndex i0, std::size_t n) override {
    auto conn = net::Connection::connect(endpoint_);
    wire::Message reply;
    try {
      reply = conn.exchange(wire::TariffRequest{meter_id, i0, static_cast<std::uint32_t>(n)});
    } catch (const DecodeError& e) {
      throw Error(ErrorCode::kProtocol, std::string("malformed tariff reply: ") + e.what());
    }
    if (auto* t = std::get_if<wire::TariffMessage>(&reply)) {
      if (t->meter_id != meter_id) throw Error(ErrorCode::kProtocol, "tariff for another meter");
      return t->tariff;
    }
    if (auto* e = std::get_if<wire::ErrorMessage>(&reply)) {
      throw Error(ErrorCode::kUnknownTariff, "tariff server: " + e->message);
    }
    throw Error(ErrorCode::kProtocol, "unexpected reply to tariff request");
  }

 private:
  net::Endpoint endpoint_;
};

// ---------------------------------------------------------------------------
// Back-end server

template <PrimeOrderGroup G>
class BackendServer {
 public:
  BackendServer(Backend<G>& backend, net::Listener listener)
      : backend_(backend), listener_(std::move(listener)) {}

  const net::Endpoint& endpoint() const { return listener_.endpoint(); }

  // Answers one request. Every report gets a verdict; everything else a
  // reply of matching kind or an error message.
  wire::Message handle(const wire::Message& request) {
    if (auto* req = std::get_if<wire::TariffRequest>(&request)) {
      try {
        Tariff t = backend_.serve_tariff(req->meter_id, req->i0, req->n);
        spdlog::info("step=serve_tariff meter={} i0={} n={}", req->meter_id, req->i0, req->n);
        return wire::TariffMessage{req->meter_id, std::move(t)};
      } catch (const Error& e) {
        spdlog::warn("step=serve_tariff meter={} i0={} error=\"{}\"", req->meter_id, req->i0,
                     e.what());
        return to_message(e);
      }
    }
    if (auto* table = std::get_if<wire::PrivacyTable>(&request)) {
      Verdict v = receive_table(*table);
      return to_message(table->meter_id, table->i0, v);
    }
    if (auto* table = std::get_if<wire::MeterTable>(&request)) {
      Verdict v = receive_table(*table);
      return to_message(table->meter_id, table->i0, v);
    }
    return wire::ErrorMessage{"protocol", "unexpected message kind for the back-end"};
  }

  void run(const std::atomic<bool>& stop) {
    spdlog::info("step=listen role=bs endpoint={}", endpoint().str());
    std::vector<std::thread> links;
    while (!stop) {
      auto fd = listener_.accept(kPollSlice);
      if (!fd) continue;
      links.emplace_back([this, &stop, fd = std::move(*fd)]() mutable {
        serve_link(net::Connection(std::move(fd)), stop);
      });
    }
    for (auto& t : links) t.join();
  }

 private:
  template <class Table>
  Verdict receive_table(const Table& table) {
    const bool privacy_form = std::is_same_v<Table, wire::PrivacyTable>;
    Verdict v;
    try {
      if constexpr (std::is_same_v<Table, wire::PrivacyTable>) {
        v = backend_.receive(wire::billing_report_from<G>(table));
      } else {
        v = backend_.receive_pass_through(wire::commitment_report_from<G>(table));
      }
    } catch (const DecodeError& e) {
      v = Verdict::reject(RejectReason::kMalformed, e.what());
    } catch (const Error& e) {
      v = Verdict::reject(e.code() == ErrorCode::kProtocol ? RejectReason::kGroupMismatch
                                                           : RejectReason::kMalformed,
                          e.what());
    }
    spdlog::info("step=verify meter={} i0={} n={} mode={} accepted={} reason={}", table.meter_id,
                 table.i0, table.commitments.size(), privacy_form ? "privacy" : "pass-through",
                 v.accepted, to_string(v.reason));
    return v;
  }

  void serve_link(net::Connection conn, const std::atomic<bool>& stop) {
    try {
      while (!stop) {
        if (!conn.readable(kPollSlice)) continue;
        std::optional<wire::Message> request;
        try {
          request = conn.receive();
        } catch (const DecodeError& e) {
          spdlog::warn("step=decode role=bs error=\"{}\"", e.what());
          conn.send(wire::ErrorMessage{"decode", e.what()});
          return;
        }
        if (!request) return;
        conn.send(handle(*request));
      }
    } catch (const Error& e) {
      spdlog::warn("step=link role=bs error=\"{}\"", e.what());
    }
  }

  Backend<G>& backend_;
  net::Listener listener_;
};

// ---------------------------------------------------------------------------
// Privacy component proxy

struct ProxyOptions {
  net::Endpoint backend;
  std::optional<net::Endpoint> tariff_endpoint;  // defaults to the back-end
  bool check_rows = true;
  // Test harness only: forward meter tables untouched. Not private.
  bool pass_through = false;
  std::chrono::milliseconds retry_interval{500};
};

// Visible proxy: meters connect to it; it forwards billing reports to the
// back-end. Reports are buffered in arrival order and retried while the
// back-end is unreachable.
template <PrimeOrderGroup G>
class PrivacyProxy {
 public:
  PrivacyProxy(GroupParams<G> params, ProxyOptions options, net::Listener listener)
      : options_(std::move(options)),
        tariffs_(options_.tariff_endpoint.value_or(options_.backend)),
        component_(std::move(params), tariffs_, options_.check_rows),
        listener_(std::move(listener)) {
    if (options_.pass_through) {
      spdlog::warn("step=config role=pc pass_through=true: meter tables are forwarded unstripped");
    }
  }

  const net::Endpoint& endpoint() const { return listener_.endpoint(); }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return incoming_.size() + in_component_;
  }

  std::vector<wire::VerdictMessage> verdicts() const {
    std::lock_guard lock(mu_);
    return verdicts_;
  }

  // Decodes and buffers one meter table; the reply is the meter's ack.
  wire::Message accept_report(const wire::Message& msg) {
    auto* table = std::get_if<wire::MeterTable>(&msg);
    if (!table) return wire::ErrorMessage{"protocol", "the privacy component expects meter tables"};
    CommitmentReport<G> report;
    try {
      report = wire::commitment_report_from<G>(*table);
    } catch (const Error& e) {
      spdlog::warn("step=intercept meter={} error=\"{}\"", table->meter_id, e.what());
      return to_message(e);
    }
    spdlog::info("step=intercept meter={} i0={} n={}", report.meter_id, report.i0,
                 report.rows.size());
    {
      std::lock_guard lock(mu_);
      incoming_.push_back(std::move(report));
    }
    cv_.notify_all();
    return wire::AckMessage{table->meter_id, table->i0, "queued"};
  }

  void run(const std::atomic<bool>& stop) {
    spdlog::info("step=listen role=pc endpoint={} backend={}", endpoint().str(),
                 options_.backend.str());
    std::thread forwarder([&] { forward_loop(stop); });
    std::vector<std::thread> links;
    while (!stop) {
      auto fd = listener_.accept(kPollSlice);
      if (!fd) continue;
      links.emplace_back([this, &stop, fd = std::move(*fd)]() mutable {
        serve_link(net::Connection(std::move(fd)), stop);
      });
    }
    cv_.notify_all();
    for (auto& t : links) t.join();
    forwarder.join();
  }

 private:
  void serve_link(net::Connection conn, const std::atomic<bool>& stop) {
    try {
      while (!stop) {
        if (!conn.readable(kPollSlice)) continue;
        std::optional<wire::Message> msg;
        try {
          msg = conn.receive();
        } catch (const DecodeError& e) {
          conn.send(wire::ErrorMessage{"decode", e.what()});
          return;
        }
        if (!msg) return;
        conn.send(accept_report(*msg));
      }
    } catch (const Error& e) {
      spdlog::warn("step=link role=pc error=\"{}\"", e.what());
    }
  }

  void deliver(const wire::Message& msg, const std::string& meter_id, IntervalIndex i0) {
    auto conn = net::Connection::connect(options_.backend);
    wire::Message reply;
    try {
      reply = conn.exchange(msg);
    } catch (const DecodeError& e) {
      throw Error(ErrorCode::kProtocol, std::string("malformed verdict: ") + e.what());
    }
    if (auto* v = std::get_if<wire::VerdictMessage>(&reply)) {
      spdlog::info("step=forwarded meter={} i0={} accepted={} reason={}", meter_id, i0,
                   v->accepted, v->reason);
      std::lock_guard lock(mu_);
      verdicts_.push_back(*v);
      return;
    }
    if (auto* e = std::get_if<wire::ErrorMessage>(&reply)) {
      throw Error(ErrorCode::kProtocol, "back-end error: " + e->message);
    }
    throw Error(ErrorCode::kProtocol, "unexpected reply from back-end");
  }

  void forward_loop(const std::atomic<bool>& stop) {
    std::deque<CommitmentReport<G>> raw;  // pass-through buffer
    while (!stop) {
      {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, kPollSlice, [&] { return !incoming_.empty() || stop; });
        while (!incoming_.empty()) {
          if (options_.pass_through) {
            raw.push_back(std::move(incoming_.front()));
          } else {
            component_.enqueue(std::move(incoming_.front()));
          }
          incoming_.pop_front();
          ++in_component_;
        }
      }
      bool progressed = true;
      while (!stop && progressed) {
        progressed = options_.pass_through ? forward_raw(raw) : forward_private();
      }
      if (!stop && (component_.pending() > 0 || !raw.empty())) {
        spdlog::warn("step=retry role=pc buffered={} wait_ms={}",
                     component_.pending() + raw.size(), options_.retry_interval.count());
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, options_.retry_interval, [&] { return stop.load(); });
      }
    }
  }

  bool forward_private() {
    if (component_.pending() == 0) return false;
    const std::size_t failed_before = component_.failed().size();
    bool consumed = false;
    try {
      consumed = component_.process_next([&](const TransformResult<G>& result) {
        if (!result.inconsistent_rows.empty()) {
          spdlog::warn("step=self_check meter={} i0={} inconsistent_rows={}",
                       result.report.meter_id, result.report.i0, result.inconsistent_rows.size());
        }
        deliver(wire::to_table(result.report), result.report.meter_id, result.report.i0);
      });
    } catch (const Error& e) {
      spdlog::warn("step=forward error=\"{}\"", e.what());
    }
    if (component_.failed().size() > failed_before) {
      const auto& f = component_.failed().back();
      spdlog::error("step=forward meter={} i0={} dropped=\"{}\"", f.report.meter_id, f.report.i0,
                    f.reason);
    }
    if (consumed) {
      std::lock_guard lock(mu_);
      --in_component_;
    }
    return consumed;
  }

  bool forward_raw(std::deque<CommitmentReport<G>>& raw) {
    if (raw.empty()) return false;
    const auto& head = raw.front();
    try {
      deliver(wire::to_table(head), head.meter_id, head.i0);
    } catch (const Error& e) {
      if (e.retriable()) {
        spdlog::warn("step=forward error=\"{}\"", e.what());
        return false;
      }
      spdlog::error("step=forward meter={} i0={} dropped=\"{}\"", head.meter_id, head.i0,
                    e.what());
    }
    raw.pop_front();
    std::lock_guard lock(mu_);
    --in_component_;
    return true;
  }

  ProxyOptions options_;
  RemoteTariffSource tariffs_;
  PrivacyComponent<G> component_;
  net::Listener listener_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<CommitmentReport<G>> incoming_;
  std::size_t in_component_ = 0;
  std::vector<wire::VerdictMessage> verdicts_;
};

// ---------------------------------------------------------------------------
// Meter side

// Sends one report to the privacy component (or straight to a back-end)
// and returns the reply.
template <PrimeOrderGroup G>
wire::Message send_report(const net::Endpoint& endpoint, const CommitmentReport<G>& report) {
  auto conn = net::Connection::connect(endpoint);
  return conn.exchange(wire::to_table(report));
}

}  // namespace pbill
