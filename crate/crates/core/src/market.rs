//! Posted-price service market: payments, profits, social welfare and the
//! per-round workload allocation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::PriceVector;
use crate::error::{Error, Result};
use crate::solver::{continuous_cost, mtv as max_volume, mutv as unc_volume, SolveInput};

/// `p_r = Δθ·Φ`.
pub fn app_payment(phi: f64, dtheta: f64) -> f64 {
    dtheta * phi
}

/// `p_n = Δs·N`.
pub fn client_payment(n: u64, ds: f64) -> f64 {
    ds * n as f64
}

/// `α·R^m + β·ΣR_n`.
pub fn social_welfare(server_profit: f64, client_profit_sum: f64, alpha: f64, beta: f64) -> f64 {
    alpha * server_profit + beta * client_profit_sum
}

/// What a client offers for one round: its gain rate and its minimum cost
/// at every workload it can take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientQuote {
    pub id: u32,
    pub qod: f64,
    /// Learning gain per sample, `λ_sp·Q`.
    pub gain_rate: f64,
    pub mutv: i64,
    /// Largest feasible workload, −1 when the client cannot serve at all.
    pub mtv: i64,
    /// `cost_curve[N]` is the minimum cost of `N` samples, `N ≤ mtv`.
    pub cost_curve: Vec<f64>,
}

impl ClientQuote {
    /// Samples the solver's minimum cost at every integer workload up to the
    /// client's maximum volume, truncated at `cap`.
    pub fn build(id: u32, qod: f64, lambda_sp: f64, input: &SolveInput, cap: u64) -> Result<Self> {
        let mtv = max_volume(input)?;
        let mutv = unc_volume(input)?;
        let top = if mtv < 0 { -1 } else { (mtv as u64).min(cap) as i64 };
        let mut cost_curve = Vec::with_capacity((top + 1).max(0) as usize);
        for n in 0..=top {
            match continuous_cost(input, n as f64) {
                Some(c) => cost_curve.push(c),
                None => break,
            }
        }
        Ok(ClientQuote {
            id,
            qod,
            gain_rate: lambda_sp * qod,
            mutv,
            mtv: cost_curve.len() as i64 - 1,
            cost_curve,
        })
    }

    /// Builds quotes for many clients in parallel, preserving order.
    pub fn build_all(items: &[(u32, f64, SolveInput)], lambda_sp: f64, cap: u64) -> Result<Vec<Self>> {
        items
            .par_iter()
            .map(|(id, q, input)| ClientQuote::build(*id, *q, lambda_sp, input, cap))
            .collect()
    }

    pub fn max_workload(&self) -> u64 {
        self.cost_curve.len().saturating_sub(1) as u64
    }

    pub fn cost(&self, n: u64) -> f64 {
        self.cost_curve[n as usize]
    }
}

/// Weights and gain-target window for one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub alpha: f64,
    pub beta: f64,
    /// Lower end of the gain window.
    pub theta0: f64,
    /// Width of the gain window; `Φ < θ0 + interval`.
    pub interval: f64,
    pub max_active: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            alpha: 1.0,
            beta: 1.0,
            theta0: 0.0,
            interval: f64::INFINITY,
            max_active: usize::MAX,
        }
    }
}

/// Workload per quote, aligned with the quote slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub ids: Vec<u32>,
    pub workloads: Vec<u64>,
}

impl Allocation {
    pub fn active_count(&self) -> usize {
        self.workloads.iter().filter(|&&n| n > 0).count()
    }

    pub fn workload_of(&self, id: u32) -> u64 {
        self.ids.iter().position(|&i| i == id).map(|k| self.workloads[k]).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub id: u32,
    pub workload: u64,
    pub qod: f64,
    pub gain: f64,
    pub payment: f64,
    pub cost: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub phi: f64,
    pub p_r: f64,
    pub sum_p_n: f64,
    pub sum_c_n: f64,
    pub r_m: f64,
    pub sum_r_n: f64,
    pub r: f64,
    pub active_count: usize,
    pub alpha: f64,
    pub beta: f64,
    pub clients: Vec<ClientRecord>,
}

impl WelfareReport {
    /// Books payments, costs and profits of `alloc` against `quotes`.
    pub fn from_allocation(
        quotes: &[ClientQuote],
        alloc: &Allocation,
        prices: &PriceVector,
        alpha: f64,
        beta: f64,
    ) -> Self {
        let clients: Vec<ClientRecord> = quotes
            .iter()
            .zip(&alloc.workloads)
            .map(|(q, &n)| {
                let payment = client_payment(n, prices.ds);
                let cost = if n == 0 { 0.0 } else { q.cost(n) };
                ClientRecord {
                    id: q.id,
                    workload: n,
                    qod: q.qod,
                    gain: q.gain_rate * n as f64,
                    payment,
                    cost,
                    profit: payment - cost,
                }
            })
            .collect();
        Self::from_records(clients, prices, alpha, beta)
    }

    pub fn from_records(clients: Vec<ClientRecord>, prices: &PriceVector, alpha: f64, beta: f64) -> Self {
        let phi: f64 = clients.iter().map(|c| c.gain).sum();
        let sum_p_n: f64 = clients.iter().map(|c| c.payment).sum();
        let sum_c_n: f64 = clients.iter().map(|c| c.cost).sum();
        let sum_r_n: f64 = clients.iter().map(|c| c.profit).sum();
        let p_r = app_payment(phi, prices.dtheta);
        let r_m = p_r - sum_p_n;
        WelfareReport {
            phi,
            p_r,
            sum_p_n,
            sum_c_n,
            r_m,
            sum_r_n,
            r: social_welfare(r_m, sum_r_n, alpha, beta),
            active_count: clients.iter().filter(|c| c.workload > 0).count(),
            alpha,
            beta,
            clients,
        }
    }

    pub fn empty(alpha: f64, beta: f64) -> Self {
        Self::from_records(Vec::new(), &PriceVector::default(), alpha, beta)
    }

    /// Re-derives the aggregates from the per-client rows.
    pub fn check_identity(&self, tol: f64) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        let sum_p: f64 = self.clients.iter().map(|c| c.payment).sum();
        let sum_r: f64 = self.clients.iter().map(|c| c.profit).sum();
        let checks = [
            ("r_m", close(self.r_m, self.p_r - self.sum_p_n)),
            ("sum_p_n", self.clients.is_empty() || close(sum_p, self.sum_p_n)),
            ("sum_r_n", self.clients.is_empty() || close(sum_r, self.sum_r_n)),
            ("sum_r_n", close(self.sum_r_n, self.sum_p_n - self.sum_c_n)),
            ("r", close(self.r, social_welfare(self.r_m, self.sum_r_n, self.alpha, self.beta))),
        ];
        for c in &self.clients {
            if !close(c.profit, c.payment - c.cost) {
                return Err(Error::InvalidArgument(format!("client {} profit mismatch", c.id)));
            }
        }
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::InvalidArgument(format!("bookkeeping identity broken at {name}"))),
            None => Ok(()),
        }
    }
}

struct Offer<'a> {
    quote: &'a ClientQuote,
    /// Workloads at which the client breaks even or better; always has 0.
    eligible: Vec<u64>,
}

fn client_welfare(q: &ClientQuote, n: u64, prices: &PriceVector, alpha: f64, beta: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    alpha * (prices.dtheta * q.gain_rate - prices.ds) * nf + beta * (prices.ds * nf - q.cost(n))
}

fn greedy(offers: &[Offer], prices: &PriceVector, params: &MarketParams) -> Vec<u64> {
    extend(offers, prices, params, vec![0u64; offers.len()])
}

/// Greedy growth from the workloads `n`.
fn extend(offers: &[Offer], prices: &PriceVector, params: &MarketParams, mut n: Vec<u64>) -> Vec<u64> {
    let ceiling = params.theta0 + params.interval;
    let mut phi: f64 = offers.iter().zip(&n).map(|(o, &m)| o.quote.gain_rate * m as f64).sum();
    let mut active = n.iter().filter(|&&m| m > 0).count();
    loop {
        let below = phi < params.theta0;
        // (score, client, new workload)
        let mut best: Option<(f64, usize, u64)> = None;
        for (k, o) in offers.iter().enumerate() {
            let g = o.quote.gain_rate;
            if n[k] == 0 && active >= params.max_active {
                continue;
            }
            let w0 = client_welfare(o.quote, n[k], prices, params.alpha, params.beta);
            let start = o.eligible.partition_point(|&e| e <= n[k]);
            for &m in &o.eligible[start..] {
                let dphi = g * (m - n[k]) as f64;
                if !(phi + dphi < ceiling) {
                    break;
                }
                let dw = client_welfare(o.quote, m, prices, params.alpha, params.beta) - w0;
                let score = if below {
                    if dphi <= 0.0 {
                        continue;
                    }
                    dw / dphi
                } else {
                    if dw <= 0.0 {
                        continue;
                    }
                    dw
                };
                if best.map_or(true, |(s, _, _)| score > s + 1e-12 * (1.0 + s.abs())) {
                    best = Some((score, k, m));
                }
            }
        }
        let Some((_, k, m)) = best else { break };
        if n[k] == 0 {
            active += 1;
        }
        phi += offers[k].quote.gain_rate * (m - n[k]) as f64;
        n[k] = m;
    }
    n
}

fn server_profit(quotes: &[&ClientQuote], n: &[u64], prices: &PriceVector) -> f64 {
    quotes
        .iter()
        .zip(n)
        .map(|(q, &m)| (prices.dtheta * q.gain_rate - prices.ds) * m as f64)
        .sum()
}

/// Largest gain the quotes can deliver under the active-client cap,
/// ignoring the window ceiling and profitability.
pub fn max_achievable_gain(quotes: &[ClientQuote], max_active: usize) -> f64 {
    let mut g: Vec<f64> = quotes.iter().map(|q| q.gain_rate * q.max_workload() as f64).collect();
    g.sort_by(|a, b| b.total_cmp(a));
    g.iter().take(max_active).sum()
}

/// Welfare-maximizing workload assignment.
///
/// Only individually rational workloads (payment covers cost) are offered.
/// Below the gain window the allocator buys gain at the best welfare per
/// unit gain; inside it, it keeps adding the largest welfare improvement
/// while the gain stays under the window ceiling. If the server would run a
/// loss, clients whose gain is worth less than their payment are excluded
/// and the allocation is redone.
pub fn allocate_workloads(
    quotes: &[ClientQuote],
    prices: &PriceVector,
    params: &MarketParams,
) -> Result<(Allocation, WelfareReport)> {
    let offers_for = |exclude_unprofitable: bool| -> Vec<Offer> {
        quotes
            .iter()
            .map(|q| {
                let allowed = !exclude_unprofitable || prices.dtheta * q.gain_rate >= prices.ds;
                let mut eligible = vec![0];
                if allowed && q.gain_rate > 0.0 {
                    eligible.extend((1..=q.max_workload()).filter(|&m| prices.ds * m as f64 >= q.cost(m)));
                }
                Offer { quote: q, eligible }
            })
            .collect()
    };

    let refs: Vec<&ClientQuote> = quotes.iter().collect();
    let mut n = greedy(&offers_for(false), prices, params);
    if server_profit(&refs, &n, prices) < 0.0 {
        n = greedy(&offers_for(true), prices, params);
    }
    let phi: f64 = quotes.iter().zip(&n).map(|(q, &m)| q.gain_rate * m as f64).sum();
    if phi < params.theta0 - 1e-9 * (1.0 + params.theta0) {
        return Err(Error::GainShortfall {
            target: params.theta0,
            max_achievable: max_achievable_gain(quotes, params.max_active),
        });
    }
    let alloc = Allocation {
        ids: quotes.iter().map(|q| q.id).collect(),
        workloads: n,
    };
    let report = WelfareReport::from_allocation(quotes, &alloc, prices, params.alpha, params.beta);
    Ok((alloc, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices() -> PriceVector {
        PriceVector {
            dt: 1.0,
            db: 1.0,
            ds: 1.0,
            dtheta: 2.0,
            df: 1.0,
        }
    }

    fn quote(id: u32, gain_rate: f64, curve: Vec<f64>) -> ClientQuote {
        ClientQuote {
            id,
            qod: 1.0,
            gain_rate,
            mutv: 0,
            mtv: curve.len() as i64 - 1,
            cost_curve: curve,
        }
    }

    fn convex(scale: f64, len: usize) -> Vec<f64> {
        (0..len).map(|n| scale * (n * n) as f64 / len as f64).collect()
    }

    #[test]
    fn payment_formulas() {
        assert_eq!(app_payment(0.0, 10.0), 0.0);
        assert_eq!(app_payment(2.5, 10.0), 25.0);
        assert_eq!(app_payment(2.5, 20.0), 2.0 * app_payment(2.5, 10.0));
        assert_eq!(client_payment(0, 2.0), 0.0);
        assert_eq!(client_payment(100, 2.0), 200.0);
        assert_eq!(social_welfare(3.0, 2.0, 1.0, 1.0), 5.0);
        assert_eq!(social_welfare(3.0, 2.0, 1.0, 0.0), 3.0);
        assert_eq!(social_welfare(0.0, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn cap_of_one_picks_lower_id() {
        let qs = vec![quote(0, 1.0, convex(0.5, 11)), quote(1, 1.0, convex(0.5, 11))];
        let params = MarketParams {
            max_active: 1,
            ..MarketParams::default()
        };
        let (alloc, report) = allocate_workloads(&qs, &prices(), &params).unwrap();
        assert!(alloc.workloads[0] > 0);
        assert_eq!(alloc.workloads[1], 0);
        assert_eq!(report.active_count, 1);
    }

    #[test]
    fn cheaper_client_gets_at_least_as_much() {
        let qs = vec![quote(0, 1.0, convex(0.3, 21)), quote(1, 1.0, convex(0.6, 21))];
        let (alloc, _) = allocate_workloads(&qs, &prices(), &MarketParams::default()).unwrap();
        assert!(alloc.workloads[0] >= alloc.workloads[1]);
    }

    #[test]
    fn unprofitable_market_is_empty() {
        let qs = vec![quote(0, 1.0, vec![0.0, 5.0, 10.0]), quote(1, 1.0, vec![0.0, 7.0, 14.0])];
        let (alloc, report) = allocate_workloads(&qs, &prices(), &MarketParams::default()).unwrap();
        assert_eq!(alloc.workloads, vec![0, 0]);
        assert_eq!(report.r, 0.0);
    }

    #[test]
    fn gain_shortfall_reports_ceiling() {
        let qs = vec![quote(0, 1.0, vec![0.0; 4])];
        let params = MarketParams {
            theta0: 10.0,
            ..MarketParams::default()
        };
        match allocate_workloads(&qs, &prices(), &params) {
            Err(Error::GainShortfall { target, max_achievable }) => {
                assert_eq!(target, 10.0);
                assert_eq!(max_achievable, 3.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gain_stays_inside_window() {
        let qs = vec![quote(0, 1.0, convex(0.2, 30)), quote(1, 0.5, convex(0.1, 30))];
        let params = MarketParams {
            theta0: 5.0,
            interval: 3.0,
            ..MarketParams::default()
        };
        let (_, report) = allocate_workloads(&qs, &prices(), &params).unwrap();
        assert!(report.phi >= 5.0 && report.phi < 8.0, "{}", report.phi);
    }

    #[test]
    fn fixed_cost_is_bundled_over() {
        // A setup cost makes every single-sample step unprofitable; only a
        // bundle pays off.
        let curve: Vec<f64> = (0..=20).map(|n| if n == 0 { 0.0 } else { 8.0 + 0.5 * n as f64 }).collect();
        let qs = vec![quote(0, 1.0, curve)];
        let (alloc, report) = allocate_workloads(&qs, &prices(), &MarketParams::default()).unwrap();
        assert_eq!(alloc.workloads[0], 20);
        assert!(report.r > 0.0);
    }

    #[test]
    fn report_identity_holds() {
        let qs = vec![quote(0, 1.0, convex(0.3, 21)), quote(1, 0.7, convex(0.2, 21))];
        let (_, report) = allocate_workloads(&qs, &prices(), &MarketParams::default()).unwrap();
        report.check_identity(1e-9).unwrap();
        let mut broken = report.clone();
        broken.r += 1.0;
        assert!(broken.check_identity(1e-9).is_err());
    }
}
