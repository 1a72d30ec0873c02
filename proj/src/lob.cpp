#include "icsim/lob.hpp"

#include <algorithm>
#include <cmath>

namespace icsim {

Order Order::limit(OrderId id, AgentId owner, Side side, Price price, Volume volume) {
  Order o;
  o.id = id;
  o.owner = owner;
  o.side = side;
  o.kind = OrderKind::Limit;
  o.price = price;
  o.volume = volume;
  return o;
}

Order Order::market(OrderId id, AgentId owner, Side side, Volume volume) {
  Order o;
  o.id = id;
  o.owner = owner;
  o.side = side;
  o.kind = OrderKind::Market;
  o.volume = volume;
  return o;
}

Order Order::cancel(OrderId id, AgentId owner, OrderId target) {
  Order o;
  o.id = id;
  o.owner = owner;
  o.kind = OrderKind::Cancel;
  o.target_id = target;
  return o;
}

Order Order::replace(OrderId id, AgentId owner, OrderId target, Price price, Volume volume) {
  Order o;
  o.id = id;
  o.owner = owner;
  o.kind = OrderKind::Replace;
  o.target_id = target;
  o.price = price;
  o.volume = volume;
  return o;
}

Book::Book(Price tick_size) : tick_size_(tick_size) {
  if (tick_size <= 0) throw Error(Errc::ConfigError, "tick size must be positive");
}

std::optional<Price> Book::best_bid() const {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<Price> Book::best_ask() const {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

namespace {

template <class Map>
std::vector<Level> aggregate(const Map& side, std::size_t k) {
  std::vector<Level> out;
  for (const auto& [price, queue] : side) {
    if (k != 0 && out.size() == k) break;
    Volume v = 0;
    for (const auto& o : queue) v += o.volume;
    out.push_back({price, v});
  }
  return out;
}

template <class Map>
bool side_ok(const Map& side, const std::map<OrderId, std::pair<Side, Price>>& index, Side s) {
  for (const auto& [price, queue] : side) {
    if (queue.empty()) return false;
    std::int64_t last_ts = -1;
    for (const auto& o : queue) {
      if (o.volume <= 0 || o.side != s || o.price != price) return false;
      if (o.timestamp < last_ts) return false;
      last_ts = o.timestamp;
      auto it = index.find(o.id);
      if (it == index.end() || it->second != std::make_pair(s, price)) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Level> Book::levels(Side side, std::size_t k) const {
  return side == Side::Bid ? aggregate(bids_, k) : aggregate(asks_, k);
}

std::size_t Book::level_count(Side side) const { return side == Side::Bid ? bids_.size() : asks_.size(); }

std::vector<Order> Book::queue_at(Side side, Price price) const {
  if (side == Side::Bid) {
    auto it = bids_.find(price);
    return it == bids_.end() ? std::vector<Order>{} : std::vector<Order>(it->second.begin(), it->second.end());
  }
  auto it = asks_.find(price);
  return it == asks_.end() ? std::vector<Order>{} : std::vector<Order>(it->second.begin(), it->second.end());
}

const Order* Book::find(OrderId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  const auto& [side, price] = it->second;
  const std::deque<Order>& q = side == Side::Bid ? bids_.at(price) : asks_.at(price);
  for (const auto& o : q)
    if (o.id == id) return &o;
  return nullptr;
}

Volume Book::total_volume(Side side) const {
  Volume v = 0;
  for (const auto& l : levels(side)) v += l.volume;
  return v;
}

bool Book::invariants_hold() const {
  if (!side_ok(bids_, index_, Side::Bid) || !side_ok(asks_, index_, Side::Ask)) return false;
  std::size_t n = 0;
  for (const auto& [p, q] : bids_) n += q.size();
  for (const auto& [p, q] : asks_) n += q.size();
  if (n != index_.size()) return false;
  auto bb = best_bid();
  auto ba = best_ask();
  return !(bb && ba && *bb >= *ba);
}

template <class Map>
void Book::match(Order& incoming, Map& opposite, std::vector<Execution>& out) {
  const bool is_market = incoming.kind == OrderKind::Market;
  while (incoming.volume > 0 && !opposite.empty()) {
    auto level = opposite.begin();
    const Price level_price = level->first;
    if (!is_market) {
      const bool crosses =
          incoming.side == Side::Bid ? *incoming.price >= level_price : *incoming.price <= level_price;
      if (!crosses) break;
    }
    auto& queue = level->second;
    Order& maker = queue.front();
    const Volume fill = std::min(incoming.volume, maker.volume);
    out.push_back(Execution{incoming.id, maker.id, incoming.owner, maker.owner, incoming.side, level_price, fill,
                            event_clock_});
    incoming.volume -= fill;
    maker.volume -= fill;
    last_trade_price_ = level_price;
    if (maker.volume == 0) {
      index_.erase(maker.id);
      queue.pop_front();
      if (queue.empty()) opposite.erase(level);
    }
  }
}

void Book::rest(const Order& order) {
  Order o = order;
  o.kind = OrderKind::Limit;
  o.target_id.reset();
  o.timestamp = event_clock_;
  index_[o.id] = {o.side, *o.price};
  if (o.side == Side::Bid)
    bids_[*o.price].push_back(o);
  else
    asks_[*o.price].push_back(o);
}

void Book::remove(OrderId id) {
  auto it = index_.find(id);
  const auto [side, price] = it->second;
  auto erase_from = [id](auto& map, Price p) {
    auto lvl = map.find(p);
    auto& q = lvl->second;
    q.erase(std::find_if(q.begin(), q.end(), [id](const Order& o) { return o.id == id; }));
    if (q.empty()) map.erase(lvl);
  };
  if (side == Side::Bid)
    erase_from(bids_, price);
  else
    erase_from(asks_, price);
  index_.erase(it);
}

std::vector<Execution> Book::submit(const Order& order) {
  std::vector<Execution> out;
  switch (order.kind) {
    case OrderKind::Limit:
    case OrderKind::Market: {
      if (order.volume <= 0) throw Error(Errc::InvalidOrder, "order volume must be positive");
      if (order.kind == OrderKind::Limit && !order.price)
        throw Error(Errc::InvalidOrder, "limit order without a price");
      if (order.kind == OrderKind::Market && order.price)
        throw Error(Errc::InvalidOrder, "market order with a price");
      if (index_.count(order.id)) throw Error(Errc::InvalidOrder, "duplicate order id");
      ++event_clock_;
      Order incoming = order;
      incoming.timestamp = event_clock_;
      if (incoming.side == Side::Bid)
        match(incoming, asks_, out);
      else
        match(incoming, bids_, out);
      // residual market volume is discarded
      if (incoming.kind == OrderKind::Limit && incoming.volume > 0) rest(incoming);
      break;
    }
    case OrderKind::Cancel:
    case OrderKind::Replace: {
      if (!order.target_id || !index_.count(*order.target_id))
        throw Error(Errc::UnknownTarget, "no resting order with the target id");
      const Order* target = find(*order.target_id);
      if (target->owner != order.owner) throw Error(Errc::SelfReference, "target order owned by another agent");
      if (order.kind == OrderKind::Cancel) {
        ++event_clock_;
        remove(*order.target_id);
        break;
      }
      if (!order.price || order.volume <= 0) throw Error(Errc::InvalidOrder, "replace needs a price and volume");
      if (order.id != *order.target_id && index_.count(order.id))
        throw Error(Errc::InvalidOrder, "duplicate order id");
      const Side side = target->side;
      remove(*order.target_id);
      ++event_clock_;
      Order fresh = order;
      fresh.kind = OrderKind::Limit;
      fresh.side = side;
      fresh.target_id.reset();
      fresh.timestamp = event_clock_;
      if (side == Side::Bid)
        match(fresh, asks_, out);
      else
        match(fresh, bids_, out);
      if (fresh.volume > 0) rest(fresh);
      break;
    }
  }
  return out;
}

std::pair<Book, std::vector<Execution>> submit(Book book, const Order& order) {
  auto execs = book.submit(order);
  return {std::move(book), std::move(execs)};
}

std::size_t StylizedFacts::level_index(int n) const {
  auto it = std::find(levels.begin(), levels.end(), n);
  if (it == levels.end()) throw Error(Errc::ConfigError, "imbalance level not configured: " + std::to_string(n));
  return static_cast<std::size_t>(it - levels.begin());
}

std::optional<double> mid_price(const Book& book) {
  auto bb = book.best_bid();
  auto ba = book.best_ask();
  if (!bb || !ba) return std::nullopt;
  return 0.5 * static_cast<double>(*bb + *ba);
}

StylizedFacts snapshot_facts(const Book& book, double scenario_start_mid, double prev_mid,
                             std::span<const int> levels) {
  StylizedFacts f;
  f.levels.assign(levels.begin(), levels.end());
  const auto bids = book.levels(Side::Bid);
  const auto asks = book.levels(Side::Ask);
  for (int n : levels) {
    Volume vb = 0, va = 0;
    const std::size_t lim = n == 0 ? std::max(bids.size(), asks.size()) : static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < lim && i < bids.size(); ++i) vb += bids[i].volume;
    for (std::size_t i = 0; i < lim && i < asks.size(); ++i) va += asks[i].volume;
    f.volume_bid.push_back(vb);
    f.volume_ask.push_back(va);
    f.volume.push_back(vb + va);
    f.imbalance.push_back(vb + va == 0 ? 0.5 : static_cast<double>(vb) / static_cast<double>(vb + va));
  }
  if (!bids.empty() && !asks.empty()) {
    const double mid = 0.5 * static_cast<double>(bids.front().price + asks.front().price);
    f.mid = mid;
    f.spread = static_cast<double>(asks.front().price - bids.front().price);
    f.log_return = std::log(mid / prev_mid);
    f.price_impact = std::log(mid / scenario_start_mid);
    f.direction = mid > prev_mid ? 1 : (mid < prev_mid ? -1 : 0);
  }
  return f;
}

Price depth_of(const Book& book, const Order& order, DepthConvention convention) {
  if (order.kind != OrderKind::Limit || !order.price) throw Error(Errc::NotLimit, "depth is defined for limit orders");
  const auto best = book.best(order.side);
  if (!best) throw Error(Errc::EmptySide, "no same-side best price");
  if (order.side == Side::Bid) return *best - *order.price;
  return convention == DepthConvention::Literal ? *best + *order.price : *order.price - *best;
}

}  // namespace icsim
