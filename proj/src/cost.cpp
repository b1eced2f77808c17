// SPDX-License-Identifier: Apache-2.0

#include "r2ai/cost.hpp"

#include "r2ai/error.hpp"
#include "r2ai/text.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#ifndef R2AI_DATA_DIR
#define R2AI_DATA_DIR "data"
#endif

namespace r2ai {

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

Money Money::parse(std::string_view decimal) {
    auto s = text::trim(decimal);
    if (!s.empty() && s.front() == '$') {
        s.remove_prefix(1);
    }
    const auto fail = [&]() -> Money {
        throw Error(ErrorCode::parse_failure, "invalid amount '" + std::string(decimal) + "'");
    };
    if (s.empty()) {
        return fail();
    }
    const auto dot = s.find('.');
    const auto whole = s.substr(0, dot);
    const auto frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if ((whole.empty() && frac.empty()) || frac.size() > 10 || whole.size() > 8) {
        return fail();
    }
    std::int64_t units = 0;
    for (const char c : whole) {
        if (c < '0' || c > '9') {
            return fail();
        }
        units = units * 10 + (c - '0');
    }
    units *= kUnitsPerDollar;
    std::int64_t scale = kUnitsPerDollar / 10;
    for (const char c : frac) {
        if (c < '0' || c > '9') {
            return fail();
        }
        units += (c - '0') * scale;
        scale /= 10;
    }
    return Money(units);
}

std::string Money::to_string() const {
    const auto whole = units_ / kUnitsPerDollar;
    const auto frac = units_ % kUnitsPerDollar;
    std::string f = std::to_string(frac);
    return std::to_string(whole) + "." + std::string(10 - f.size(), '0') + f;
}

void PriceTable::set(Provider provider, std::string model, Price price) {
    prices_[{provider, std::move(model)}] = price;
}

std::optional<Price> PriceTable::lookup(const ModelRef& model) const {
    if (const auto it = prices_.find({model.provider, model.name}); it != prices_.end()) {
        return it->second;
    }
    if (const auto it = prices_.find({model.provider, "*"}); it != prices_.end()) {
        return it->second;
    }
    return std::nullopt;
}

PriceTable PriceTable::parse(std::string_view csv) {
    PriceTable table;
    int lineno = 0;
    for (const auto& raw : text::split(csv, '\n')) {
        ++lineno;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto cols = text::split(line, ',');
        if (cols.size() != 4) {
            throw Error(ErrorCode::parse_failure,
                        "pricing line " + std::to_string(lineno) + ": expected provider,model,input_per_1M,output_per_1M");
        }
        const auto provider_name = text::trim(cols[0]);
        if (provider_name == "provider") {
            continue;
        }
        const auto provider = parse_provider(provider_name);
        if (!provider) {
            throw Error(ErrorCode::unknown_provider,
                        "pricing line " + std::to_string(lineno) + ": unknown provider '" + std::string(provider_name) + "'");
        }
        table.set(*provider, std::string(text::trim(cols[1])),
                  Price{Money::parse(cols[2]), Money::parse(cols[3])});
    }
    return table;
}

PriceTable PriceTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read pricing table " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::filesystem::path bundled_pricing_path() { return std::filesystem::path(R2AI_DATA_DIR) / "pricing.csv"; }

Money price_usage(const TokenUsage& usage, const Price& price) {
    const __int128 numerator = static_cast<__int128>(usage.input_tokens) * price.input_per_million.units() +
                               static_cast<__int128>(usage.output_tokens) * price.output_per_million.units();
    const __int128 million = 1'000'000;
    return Money::from_units(static_cast<std::int64_t>((numerator + million / 2) / million));
}

CostMeter::CostMeter(Clock clock) : clock_(std::move(clock)), run_start_(clock_()) {}

void CostMeter::begin_run(std::int64_t max_runs) {
    tick();
    if (in_run_) {
        previous_runs_ += ledger_.run_elapsed;
    }
    in_run_ = true;
    run_start_ = clock_();
    ledger_.run_cost = Money{};
    ledger_.run_count = 0;
    ledger_.max_runs = max_runs;
    ledger_.run_elapsed = std::chrono::seconds{0};
    ledger_.total_elapsed = previous_runs_;
}

std::optional<std::string> CostMeter::record_usage(const TokenUsage& usage, const ModelRef& model,
                                                   const PriceTable& table) {
    if (!in_run_) {
        begin_run(1);
    }
    std::optional<std::string> warning;
    Money delta;
    if (const auto price = table.lookup(model)) {
        delta = price_usage(usage, *price);
    } else {
        ledger_.estimated = true;
        if (warned_.insert(model.to_string()).second) {
            warning = "no price known for " + model.display() + "; recording tokens at zero cost";
        }
    }
    ledger_.run_cost += delta;
    ledger_.total_cost += delta;
    ledger_.input_tokens += std::max<std::int64_t>(usage.input_tokens, 0);
    ledger_.output_tokens += std::max<std::int64_t>(usage.output_tokens, 0);
    ledger_.estimated = ledger_.estimated || usage.estimated;
    if (ledger_.run_count < ledger_.max_runs) {
        ++ledger_.run_count;
    }
    tick();
    return warning;
}

void CostMeter::tick() {
    if (!in_run_) {
        return;
    }
    const auto run = std::chrono::duration_cast<std::chrono::seconds>(clock_() - run_start_);
    ledger_.run_elapsed = std::max(ledger_.run_elapsed, run);
    ledger_.total_elapsed = std::max(ledger_.total_elapsed, previous_runs_ + ledger_.run_elapsed);
}

std::string render_status(const CostLedger& ledger, const ModelRef& model) {
    std::ostringstream os;
    os << model.display() << " | total: $" << ledger.total_cost.to_string() << " | run: $"
       << ledger.run_cost.to_string() << " | " << ledger.run_count << " / " << ledger.max_runs << " | "
       << ledger.run_elapsed.count() << "s / " << ledger.total_elapsed.count() << "s";
    return os.str();
}

} // namespace r2ai
