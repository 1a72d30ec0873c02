#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "icsim/common.hpp"

namespace icsim {

using Price = std::int64_t;   // integer ticks
using Volume = std::int64_t;  // shares
using OrderId = std::int64_t;
using AgentId = std::int32_t;

enum class Side : std::uint8_t { Bid = 0, Ask = 1 };
enum class OrderKind : std::uint8_t { Limit = 0, Market = 1, Cancel = 2, Replace = 3 };

inline Side opposite(Side s) { return s == Side::Bid ? Side::Ask : Side::Bid; }

struct Order {
  OrderId id = 0;
  AgentId owner = 0;
  Side side = Side::Bid;
  OrderKind kind = OrderKind::Limit;
  std::optional<Price> price;
  Volume volume = 0;
  std::int64_t timestamp = 0;  // assigned by the book on arrival
  std::optional<OrderId> target_id;

  static Order limit(OrderId id, AgentId owner, Side side, Price price, Volume volume);
  static Order market(OrderId id, AgentId owner, Side side, Volume volume);
  static Order cancel(OrderId id, AgentId owner, OrderId target);
  static Order replace(OrderId id, AgentId owner, OrderId target, Price price, Volume volume);

  friend bool operator==(const Order&, const Order&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(id, owner, side, kind, price, volume, timestamp, target_id);
  }
};

struct Execution {
  OrderId taker_order_id = 0;
  OrderId maker_order_id = 0;
  AgentId taker_owner = 0;
  AgentId maker_owner = 0;
  Side taker_side = Side::Bid;
  Price price = 0;
  Volume volume = 0;
  std::int64_t event_clock = 0;

  friend bool operator==(const Execution&, const Execution&) = default;
};

struct Level {
  Price price = 0;
  Volume volume = 0;
  friend bool operator==(const Level&, const Level&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(price, volume);
  }
};

/// Price-time priority limit order book over integer ticks.
///
/// Bids are kept best-first (descending), asks best-first (ascending); each
/// price level is a FIFO queue. `submit` is the only mutator and leaves the
/// book uncrossed.
class Book {
public:
  explicit Book(Price tick_size = 1);

  std::vector<Execution> submit(const Order& order);

  std::optional<Price> best_bid() const;
  std::optional<Price> best_ask() const;
  std::optional<Price> best(Side side) const { return side == Side::Bid ? best_bid() : best_ask(); }

  /// Top `k` aggregated levels of one side, best first. k = 0 returns all.
  std::vector<Level> levels(Side side, std::size_t k = 0) const;
  std::size_t level_count(Side side) const;

  /// Resting orders at one price level in queue order.
  std::vector<Order> queue_at(Side side, Price price) const;

  bool contains(OrderId id) const { return index_.count(id) != 0; }
  const Order* find(OrderId id) const;

  Price tick_size() const { return tick_size_; }
  std::optional<Price> last_trade_price() const { return last_trade_price_; }
  std::int64_t event_clock() const { return event_clock_; }
  Volume total_volume(Side side) const;
  std::size_t resting_count() const { return index_.size(); }

  /// Structural check of every book invariant; used by property tests.
  bool invariants_hold() const;

  friend bool operator==(const Book&, const Book&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(bids_, asks_, index_, tick_size_, last_trade_price_, event_clock_);
  }

private:
  using BidMap = std::map<Price, std::deque<Order>, std::greater<Price>>;
  using AskMap = std::map<Price, std::deque<Order>, std::less<Price>>;

  template <class Map>
  void match(Order& incoming, Map& opposite, std::vector<Execution>& out);
  void rest(const Order& order);
  void remove(OrderId id);

  BidMap bids_;
  AskMap asks_;
  std::map<OrderId, std::pair<Side, Price>> index_;
  Price tick_size_;
  std::optional<Price> last_trade_price_;
  std::int64_t event_clock_ = 0;
};

/// Functional form: returns the post-submit book and the executions.
std::pair<Book, std::vector<Execution>> submit(Book book, const Order& order);

/// Per-snapshot market descriptors. Price-valued fields are in ticks and are
/// absent when a book side is empty.
struct StylizedFacts {
  std::optional<double> mid;
  std::optional<double> spread;
  std::optional<double> log_return;
  std::optional<double> price_impact;
  std::vector<int> levels;  // n per entry; 0 means all levels
  std::vector<double> imbalance;
  std::vector<Volume> volume;
  std::vector<Volume> volume_bid;
  std::vector<Volume> volume_ask;
  std::optional<double> depth;
  int direction = 0;

  /// Index of level `n` in the per-level vectors; throws if not configured.
  std::size_t level_index(int n) const;
  double imbalance_at(int n) const { return imbalance[level_index(n)]; }

  friend bool operator==(const StylizedFacts&, const StylizedFacts&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(mid, spread, log_return, price_impact, levels, imbalance, volume, volume_bid, volume_ask, depth,
       direction);
  }
};

/// Mid-price in ticks, or empty when either side is empty.
std::optional<double> mid_price(const Book& book);

/// Computes the stylized facts of `book`. Empty-side books yield a snapshot
/// with mid/spread/returns unavailable and imbalance 0 (no bids), 1 (no asks)
/// or 0.5 (empty book).
StylizedFacts snapshot_facts(const Book& book, double scenario_start_mid, double prev_mid,
                             std::span<const int> levels);

enum class DepthConvention { Corrected, Literal };

/// Depth of a limit order relative to the same-side best price. The literal
/// ask-side form is best_ask + price; the corrected form is price - best_ask.
Price depth_of(const Book& book, const Order& order, DepthConvention convention = DepthConvention::Corrected);

}  // namespace icsim
