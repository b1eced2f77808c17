// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "r2ai/config.hpp"

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace r2ai {

/// ceil(bytes / 4). Deterministic and monotone in the input length.
std::size_t estimate_tokens(std::string_view text);

/// USD as a fixed-point count of 1e-10 dollars, the resolution the status
/// line prints.
class Money {
public:
    static constexpr std::int64_t kUnitsPerDollar = 10'000'000'000;

    constexpr Money() = default;
    static constexpr Money from_units(std::int64_t units) { return Money(units); }
    /// Parses a non-negative decimal such as "3", "0.25" or "$0.0153540000".
    static Money parse(std::string_view decimal);

    constexpr std::int64_t units() const { return units_; }
    /// "0.0153540000": ten fractional digits, no currency sign.
    std::string to_string() const;

    constexpr Money& operator+=(Money other) {
        units_ += other.units_;
        return *this;
    }
    friend constexpr Money operator+(Money a, Money b) { return Money(a.units_ + b.units_); }
    friend constexpr auto operator<=>(Money, Money) = default;

private:
    constexpr explicit Money(std::int64_t units) : units_(units) {}
    std::int64_t units_ = 0;
};

struct Price {
    Money input_per_million;
    Money output_per_million;
};

/// Per-model token prices. A row whose model is "*" is the fallback for
/// every model of that provider.
class PriceTable {
public:
    void set(Provider provider, std::string model, Price price);
    std::optional<Price> lookup(const ModelRef& model) const;
    std::size_t size() const { return prices_.size(); }

    /// Format: `provider,model,input_per_1M,output_per_1M` rows, '#'
    /// comments, blank lines ignored, an optional header row.
    static PriceTable parse(std::string_view csv);
    static PriceTable load(const std::filesystem::path& path);

private:
    std::map<std::pair<Provider, std::string>, Price> prices_;
};

/// Path of the pricing table shipped with the project.
std::filesystem::path bundled_pricing_path();

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    /// Set when the counts came from estimate_tokens rather than the provider.
    bool estimated = false;
};

/// Cost of `usage` at `price`, rounded half up to the nearest unit.
Money price_usage(const TokenUsage& usage, const Price& price);

/// Spending for the session (`total_*`) and for the current run, where a run
/// is one direct command or one auto query.
struct CostLedger {
    Money total_cost;
    Money run_cost;
    std::int64_t run_count = 0;
    std::int64_t max_runs = 0;
    std::chrono::seconds run_elapsed{0};
    std::chrono::seconds total_elapsed{0};
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    bool estimated = false;
};

/// Owns a CostLedger and keeps its invariants: total >= run >= 0, counters
/// never decrease, run_count <= max_runs.
class CostMeter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit CostMeter(Clock clock = [] { return std::chrono::steady_clock::now(); });

    /// Starts a run: zeroes the run cost, counter and run time.
    void begin_run(std::int64_t max_runs);

    /// Adds the cost of one model interaction and counts it against the run.
    /// Returns a warning the first time a model has no price; its tokens are
    /// recorded at zero cost and the ledger is marked estimated.
    std::optional<std::string> record_usage(const TokenUsage& usage, const ModelRef& model, const PriceTable& table);

    /// Refreshes the elapsed-time fields from the clock.
    void tick();

    const CostLedger& ledger() const { return ledger_; }

private:
    Clock clock_;
    CostLedger ledger_;
    std::chrono::steady_clock::time_point run_start_;
    std::chrono::seconds previous_runs_{0};
    bool in_run_ = false;
    std::set<std::string> warned_;
};

/// "provider/model | total: $X | run: $Y | N / MAX | Rs / Ts"
std::string render_status(const CostLedger& ledger, const ModelRef& model);

} // namespace r2ai
