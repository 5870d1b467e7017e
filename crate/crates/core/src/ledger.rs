//! Secret-key ledger with one-time-pad encrypted syndromes.
//!
//! Each error-correction round spends `L_s` bits of stored key to mask the
//! syndrome. A successful round returns `L_s` plus the fresh key; a failed
//! round loses the pad, of which `L_s - pulses * chi` bits can be recovered by
//! privacy amplification when recycling is on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::KeyRateBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub bob: usize,
    pub pulses: u64,
    pub syndrome_len: u64,
    pub outcome: Outcome,
    /// Bits added to the balance, pad refund included.
    pub credit: u64,
    /// Bits taken from the balance.
    pub debit: u64,
    /// Part of `credit` recovered from a lost pad.
    pub recycled: u64,
}

impl RoundRecord {
    pub fn net(&self) -> i64 {
        self.credit as i64 - self.debit as i64
    }
}

/// Per-Bob key balances and the history of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyLedger {
    balances: Vec<u64>,
    records: Vec<RoundRecord>,
    recycling: bool,
}

impl KeyLedger {
    pub fn new(n_bobs: usize, recycling: bool) -> Self {
        Self {
            balances: vec![0; n_bobs],
            records: Vec::new(),
            recycling,
        }
    }

    pub fn balance(&self, bob: usize) -> Result<u64> {
        self.balances
            .get(bob)
            .copied()
            .ok_or_else(|| Error::Domain(format!("no ledger for bob {bob}")))
    }

    pub fn balances(&self) -> &[u64] {
        &self.balances
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn recycling(&self) -> bool {
        self.recycling
    }

    /// Key shared in advance, e.g. from a preceding session.
    pub fn bootstrap(&mut self, bob: usize, bits: u64) -> Result<()> {
        self.balance(bob)?;
        self.balances[bob] += bits;
        Ok(())
    }

    /// Apply one error-correction round. The pad must be payable from the
    /// current balance; otherwise the round is rejected and nothing changes.
    pub fn apply_round(
        &mut self,
        bob: usize,
        pulses: u64,
        rate: &KeyRateBreakdown,
        syndrome_len: u64,
        outcome: Outcome,
    ) -> Result<RoundRecord> {
        let available = self.balance(bob)?;
        if pulses == 0 {
            return Err(Error::Domain("round with zero pulses".into()));
        }
        if available < syndrome_len {
            return Err(Error::InsufficientBalance {
                bob,
                needed: syndrome_len,
                available,
            });
        }
        let n = pulses as f64;
        let (credit, recycled) = match outcome {
            Outcome::Success => {
                let fresh = (n * rate.k_without_failures()).floor() as u64;
                (fresh + syndrome_len, 0)
            }
            Outcome::Fail if self.recycling => {
                let r = (syndrome_len as f64 - n * rate.chi_be).max(0.0).floor() as u64;
                (r, r)
            }
            Outcome::Fail => (0, 0),
        };
        let record = RoundRecord {
            bob,
            pulses,
            syndrome_len,
            outcome,
            credit,
            debit: syndrome_len,
            recycled,
        };
        self.balances[bob] = available - syndrome_len + credit;
        self.records.push(record);
        Ok(record)
    }
}

/// Functional form of [`KeyLedger::apply_round`].
pub fn ledger_round(
    mut ledger: KeyLedger,
    bob: usize,
    pulses: u64,
    rate: &KeyRateBreakdown,
    syndrome_len: u64,
    outcome: Outcome,
) -> Result<KeyLedger> {
    ledger.apply_round(bob, pulses, rate, syndrome_len, outcome)?;
    Ok(ledger)
}

/// Summary of a stochastic ledger run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerStats {
    pub rounds: u64,
    pub failures: u64,
    pub mean_net_per_pulse: f64,
    pub std_error: f64,
    pub final_balance: u64,
}

/// Run `rounds` rounds for one Bob with failures drawn at probability
/// `rate.params.p_f`. The ledger is preloaded with one pad.
pub fn simulate_ledger(
    rate: &KeyRateBreakdown,
    pulses: u64,
    syndrome_len: u64,
    rounds: u64,
    recycling: bool,
    seed: u64,
) -> Result<LedgerStats> {
    if rounds == 0 {
        return Err(Error::Domain("need at least one round".into()));
    }
    let p_f = rate.params.p_f;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = KeyLedger::new(1, recycling);
    ledger.bootstrap(0, syndrome_len)?;
    let (mut sum, mut sum_sq, mut failures) = (0.0, 0.0, 0);
    for _ in 0..rounds {
        let outcome = if rng.random_bool(p_f) {
            failures += 1;
            Outcome::Fail
        } else {
            Outcome::Success
        };
        let rec = ledger.apply_round(0, pulses, rate, syndrome_len, outcome)?;
        let x = rec.net() as f64 / pulses as f64;
        sum += x;
        sum_sq += x * x;
    }
    let r = rounds as f64;
    let mean = sum / r;
    let var = if rounds > 1 {
        ((sum_sq - r * mean * mean) / (r - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(LedgerStats {
        rounds,
        failures,
        mean_net_per_pulse: mean,
        std_error: (var / r).sqrt(),
        final_balance: ledger.balance(0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::{Adversary, ProtocolParams};

    fn rate(p_f: f64) -> KeyRateBreakdown {
        let params = ProtocolParams::new(4.0, 0.95, p_f, 1e9, 1_000_000).unwrap();
        KeyRateBreakdown {
            target: 2,
            n_bobs: 2,
            i_ab: 0.2,
            chi_be: 0.1,
            i_bb_max: 0.01,
            k_bit_per_pulse: (params.beta_t() * 0.2 - 0.1f64).max(0.0),
            k_bps: 0.0,
            aggregate_bps: 0.0,
            binding_adversary: Adversary::Eve,
            beta_t: params.beta_t(),
            params,
        }
    }

    #[test]
    fn success_round_adds_fresh_key() {
        let r = rate(0.0);
        let mut l = KeyLedger::new(1, true);
        l.bootstrap(0, 300_000).unwrap();
        let rec = l.apply_round(0, 1_000_000, &r, 300_000, Outcome::Success).unwrap();
        assert_eq!(rec.net(), 90_000);
        assert_eq!(l.balance(0).unwrap(), 390_000);
    }

    #[test]
    fn failed_round_with_and_without_recycling() {
        let r = rate(0.1);
        for (recycling, expected) in [(true, -100_000i64), (false, -300_000)] {
            let mut l = KeyLedger::new(1, recycling);
            l.bootstrap(0, 300_000).unwrap();
            let rec = l.apply_round(0, 1_000_000, &r, 300_000, Outcome::Fail).unwrap();
            assert_eq!(rec.net(), expected);
            assert!(rec.recycled <= rec.syndrome_len);
        }
    }

    #[test]
    fn unpayable_round_is_rejected() {
        let r = rate(0.0);
        let mut l = KeyLedger::new(2, true);
        l.bootstrap(1, 10).unwrap();
        let err = l.apply_round(1, 1000, &r, 11, Outcome::Success).unwrap_err();
        assert!(matches!(err, Error::InsufficientBalance { bob: 1, needed: 11, available: 10 }));
        assert_eq!(l.balance(1).unwrap(), 10);
        assert!(l.records().is_empty());
    }

    #[test]
    fn functional_round_matches_method() {
        let r = rate(0.0);
        let mut a = KeyLedger::new(1, true);
        a.bootstrap(0, 50).unwrap();
        let b = ledger_round(a.clone(), 0, 1000, &r, 50, Outcome::Success).unwrap();
        a.apply_round(0, 1000, &r, 50, Outcome::Success).unwrap();
        assert_eq!(a, b);
    }
}
