//! Blind double-auction settlement.
//!
//! Every participant prices with the same supply/demand heuristic, so a round
//! clears at one uniform price. The short side of the book is filled
//! completely, the long side is rationed pro rata by quantity, and whatever
//! is left over settles with the grid at the tariff prices.

use serde::Serialize;

use crate::domain::GridTariff;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Order {
    pub price: f64,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidAsk {
    pub building_id: String,
    pub bid: Order,
    pub ask: Order,
}

/// Where one building's energy went in a round (all kWh, non-negative).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Allocation {
    pub market_buy: f64,
    pub market_sell: f64,
    pub grid_buy: f64,
    pub grid_sell: f64,
}

impl Allocation {
    /// Net energy the building took from the market and grid together.
    pub fn net_energy(&self) -> f64 {
        self.market_buy + self.grid_buy - self.market_sell - self.grid_sell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlementRound {
    pub step: usize,
    pub market_price: f64,
    pub cleared_quantity: f64,
    /// Same order as the orders that were settled.
    pub allocations: Vec<Allocation>,
}

/// Demand-share price: grid sell price when only supply is offered, grid buy
/// price when only demand is, clamped to the market band.
pub fn price_curve(demand: f64, supply: f64, tariff: &GridTariff) -> Result<f64> {
    if demand < 0.0 || supply < 0.0 {
        return Err(Error::NegativeQuantity {
            bid: demand,
            ask: supply,
        });
    }
    Ok(curve_price(demand, supply, tariff))
}

#[inline]
pub(crate) fn curve_price(demand: f64, supply: f64, tariff: &GridTariff) -> f64 {
    let total = demand + supply;
    if total <= 0.0 {
        return 0.5 * (tariff.market_min + tariff.market_max);
    }
    let raw = tariff.grid_sell + (tariff.grid_buy - tariff.grid_sell) * (demand / total);
    raw.clamp(tariff.market_min, tariff.market_max)
}

/// Allocation of one order given the round totals; the pro-rata rule used by
/// `settle_round` for every order except the remainder holder.
#[inline]
pub fn own_allocation(bid_qty: f64, ask_qty: f64, demand: f64, supply: f64) -> Allocation {
    let mut a = Allocation::default();
    if bid_qty > 0.0 {
        a.market_buy = if demand <= supply {
            bid_qty
        } else {
            bid_qty * (supply / demand)
        };
        a.grid_buy = bid_qty - a.market_buy;
    }
    if ask_qty > 0.0 {
        a.market_sell = if supply <= demand {
            ask_qty
        } else {
            ask_qty * (demand / supply)
        };
        a.grid_sell = ask_qty - a.market_sell;
    }
    a
}

pub fn make_bid_ask(building_id: impl Into<String>, net_load: f64, price: f64) -> BidAsk {
    BidAsk {
        building_id: building_id.into(),
        bid: Order {
            price,
            quantity: net_load.max(0.0),
        },
        ask: Order {
            price,
            quantity: (-net_load).max(0.0),
        },
    }
}

fn check_order(o: &BidAsk, tariff: &GridTariff) -> Result<()> {
    let (b, a) = (o.bid.quantity, o.ask.quantity);
    if !(b >= 0.0 && a >= 0.0) {
        return Err(Error::NegativeQuantity { bid: b, ask: a });
    }
    if b > 0.0 && a > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "building `{}` bids and asks in the same round",
            o.building_id
        )));
    }
    for side in [&o.bid, &o.ask] {
        if side.quantity > 0.0 && !(tariff.market_min..=tariff.market_max).contains(&side.price) {
            return Err(Error::InvalidArgument(format!(
                "building `{}` order price {} outside the market band",
                o.building_id, side.price
            )));
        }
    }
    Ok(())
}

/// Clears one round.
///
/// Pro-rata shares on the long side are computed as `q * (short / long)`; the
/// largest long-side order (first on ties) takes the remainder so that the
/// long side sums to the cleared quantity.
pub fn settle_round(orders: &[BidAsk], tariff: &GridTariff, step: usize) -> Result<SettlementRound> {
    for o in orders {
        check_order(o, tariff)?;
    }
    let demand: f64 = orders.iter().map(|o| o.bid.quantity).sum();
    let supply: f64 = orders.iter().map(|o| o.ask.quantity).sum();
    let price = curve_price(demand, supply, tariff);
    let cleared = demand.min(supply);

    let mut allocations: Vec<Allocation> = orders
        .iter()
        .map(|o| own_allocation(o.bid.quantity, o.ask.quantity, demand, supply))
        .collect();

    if cleared > 0.0 && demand != supply {
        let buyers_long = demand > supply;
        let qty = |o: &BidAsk| if buyers_long { o.bid.quantity } else { o.ask.quantity };
        let largest = orders
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, o)| match best {
                Some((_, q)) if qty(o) <= q => best,
                _ => Some((i, qty(o))),
            })
            .map(|(i, _)| i)
            .expect("a long side with positive quantity has an order");
        let others: f64 = allocations
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != largest)
            .map(|(_, a)| if buyers_long { a.market_buy } else { a.market_sell })
            .sum();
        let q = qty(&orders[largest]);
        let share = (cleared - others).clamp(0.0, q);
        let a = &mut allocations[largest];
        if buyers_long {
            a.market_buy = share;
            a.grid_buy = q - share;
        } else {
            a.market_sell = share;
            a.grid_sell = q - share;
        }
    }

    Ok(SettlementRound {
        step,
        market_price: price,
        cleared_quantity: cleared,
        allocations,
    })
}

/// Settlement without a local market: everything goes to the grid.
pub fn settle_grid_only(orders: &[BidAsk], tariff: &GridTariff, step: usize) -> Result<SettlementRound> {
    for o in orders {
        check_order(o, tariff)?;
    }
    let demand: f64 = orders.iter().map(|o| o.bid.quantity).sum();
    let supply: f64 = orders.iter().map(|o| o.ask.quantity).sum();
    Ok(SettlementRound {
        step,
        market_price: curve_price(demand, supply, tariff),
        cleared_quantity: 0.0,
        allocations: orders
            .iter()
            .map(|o| Allocation {
                grid_buy: o.bid.quantity,
                grid_sell: o.ask.quantity,
                ..Allocation::default()
            })
            .collect(),
    })
}

pub fn building_bill(alloc: &Allocation, market_price: f64, tariff: &GridTariff) -> f64 {
    (alloc.market_buy - alloc.market_sell) * market_price + alloc.grid_buy * tariff.grid_buy
        - alloc.grid_sell * tariff.grid_sell
        + tariff.fees_per_step
}
