// SPDX-License-Identifier: Apache-2.0

#include "r2ai/cost.hpp"

#include "r2ai/error.hpp"

#include <random>

#include <gtest/gtest.h>

using namespace r2ai;

namespace {

const ModelRef kClaude{Provider::anthropic, "claude-3-7-sonnet-20250219"};

struct FakeClock {
    std::chrono::steady_clock::time_point now{};
    CostMeter::Clock fn() {
        return [this] { return now; };
    }
};

} // namespace

TEST(Cost, EstimateTokensIsCeilBytesOverFour) {
    EXPECT_EQ(estimate_tokens(""), 0u);
    EXPECT_EQ(estimate_tokens("abc"), 1u);
    EXPECT_EQ(estimate_tokens("abcd"), 1u);
    EXPECT_EQ(estimate_tokens("abcde"), 2u);
}

TEST(Cost, MoneyParseAndFormat) {
    EXPECT_EQ(Money::parse("$0.0153540000").to_string(), "0.0153540000");
    EXPECT_EQ(Money::parse("3").units(), 3 * Money::kUnitsPerDollar);
    EXPECT_EQ(Money::parse("0.075").to_string(), "0.0750000000");
    EXPECT_THROW(Money::parse("abc"), Error);
    EXPECT_THROW(Money::parse("0.00000000001"), Error);
    EXPECT_THROW(Money::parse(""), Error);
}

// Paper figure: claude 3.7 sonnet at $3 / $15 per million tokens, one
// interaction costing $0.015354.
TEST(Cost, StatusLineGolden) {
    CostLedger ledger;
    ledger.total_cost = Money::parse("0.0153540000");
    ledger.run_cost = Money::parse("0.0153540000");
    ledger.run_count = 1;
    ledger.max_runs = 100;
    ledger.run_elapsed = std::chrono::seconds(7);
    ledger.total_elapsed = std::chrono::seconds(7);
    EXPECT_EQ(render_status(ledger, kClaude),
              "anthropic/claude-3-7-sonnet-20250219 | total: $0.0153540000 | run: $0.0153540000 | 1 / 100 | 7s / 7s");
}

TEST(Cost, PriceUsageIsExact) {
    const Price p{Money::parse("3"), Money::parse("15")};
    EXPECT_EQ(price_usage({4118, 200, false}, p).to_string(), "0.0153540000");
    EXPECT_EQ(price_usage({0, 0, false}, p).units(), 0);
    EXPECT_EQ(price_usage({1, 0, false}, p).to_string(), "0.0000030000");
}

TEST(Cost, PriceUsageIsAdditive) {
    std::mt19937 rng(3);
    const Price p{Money::parse("0.59"), Money::parse("0.79")};
    for (int i = 0; i < 1000; ++i) {
        // Multiples of 1000 tokens keep every partial exact at 1e-10 USD.
        const TokenUsage a{static_cast<std::int64_t>(rng() % 5000) * 1000, static_cast<std::int64_t>(rng() % 500) * 1000};
        const TokenUsage b{static_cast<std::int64_t>(rng() % 5000) * 1000, static_cast<std::int64_t>(rng() % 500) * 1000};
        const TokenUsage sum{a.input_tokens + b.input_tokens, a.output_tokens + b.output_tokens};
        EXPECT_EQ((price_usage(a, p) + price_usage(b, p)).units(), price_usage(sum, p).units());
    }
}

TEST(Cost, PriceTableParsing) {
    const auto t = PriceTable::parse(
        "# comment\nprovider,model,input_per_1M,output_per_1M\nanthropic,claude-3-7-sonnet-20250219,3,15\nollama,*,0,0\n");
    ASSERT_TRUE(t.lookup(kClaude));
    EXPECT_EQ(t.lookup(kClaude)->output_per_million.to_string(), "15.0000000000");
    EXPECT_TRUE(t.lookup({Provider::ollama, "llama3"}));
    EXPECT_FALSE(t.lookup({Provider::openai, "gpt-4"}));
    EXPECT_THROW(PriceTable::parse("anthropic,x,1\n"), Error);
    EXPECT_THROW(PriceTable::parse("nosuch,x,1,2\n"), Error);
}

TEST(Cost, BundledPricingLoads) {
    const auto t = PriceTable::load(bundled_pricing_path());
    EXPECT_TRUE(t.lookup(kClaude));
    EXPECT_GE(t.size(), 10u);
}

TEST(Cost, MeterReproducesStatusFigure) {
    FakeClock clock;
    CostMeter meter(clock.fn());
    PriceTable table;
    table.set(Provider::anthropic, kClaude.name, {Money::parse("3"), Money::parse("15")});
    meter.begin_run(100);
    clock.now += std::chrono::milliseconds(7400);
    EXPECT_FALSE(meter.record_usage({4118, 200, false}, kClaude, table));
    EXPECT_EQ(render_status(meter.ledger(), kClaude),
              "anthropic/claude-3-7-sonnet-20250219 | total: $0.0153540000 | run: $0.0153540000 | 1 / 100 | 7s / 7s");
}

TEST(Cost, RunsResetRunFieldsOnly) {
    FakeClock clock;
    CostMeter meter(clock.fn());
    PriceTable table;
    table.set(Provider::anthropic, kClaude.name, {Money::parse("3"), Money::parse("15")});
    meter.begin_run(15);
    clock.now += std::chrono::seconds(3);
    meter.record_usage({1000, 100, false}, kClaude, table);
    meter.begin_run(15);
    clock.now += std::chrono::seconds(2);
    meter.record_usage({1000, 100, false}, kClaude, table);
    const auto& l = meter.ledger();
    EXPECT_EQ(l.run_count, 1);
    EXPECT_EQ(l.run_cost.to_string(), "0.0045000000");
    EXPECT_EQ(l.total_cost.to_string(), "0.0090000000");
    EXPECT_EQ(l.run_elapsed.count(), 2);
    EXPECT_EQ(l.total_elapsed.count(), 5);
    EXPECT_EQ(l.input_tokens, 2000);
}

TEST(Cost, RunCountNeverExceedsMax) {
    CostMeter meter;
    PriceTable table;
    meter.begin_run(3);
    for (int i = 0; i < 10; ++i) {
        meter.record_usage({1, 1, false}, kClaude, table);
    }
    EXPECT_EQ(meter.ledger().run_count, 3);
}

TEST(Cost, UnknownPriceWarnsOnceAndFlagsEstimate) {
    CostMeter meter;
    PriceTable table;
    meter.begin_run(5);
    EXPECT_TRUE(meter.record_usage({10, 10, false}, kClaude, table));
    EXPECT_FALSE(meter.record_usage({10, 10, false}, kClaude, table));
    EXPECT_TRUE(meter.ledger().estimated);
    EXPECT_EQ(meter.ledger().total_cost.units(), 0);
}

TEST(Cost, CostsAreMonotone) {
    std::mt19937 rng(5);
    CostMeter meter;
    PriceTable table;
    table.set(Provider::anthropic, kClaude.name, {Money::parse("3"), Money::parse("15")});
    Money last;
    for (int i = 0; i < 200; ++i) {
        if (i % 17 == 0) {
            meter.begin_run(50);
        }
        meter.record_usage({static_cast<std::int64_t>(rng() % 10000), static_cast<std::int64_t>(rng() % 1000), false},
                           kClaude, table);
        EXPECT_GE(meter.ledger().total_cost, last);
        EXPECT_LE(meter.ledger().run_cost, meter.ledger().total_cost);
        last = meter.ledger().total_cost;
    }
}
