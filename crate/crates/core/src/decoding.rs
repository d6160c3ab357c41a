//! Greedy and beam search over anything that yields next-token
//! log-probabilities.

use laqg_data::{BOS, EOS, PAD};

use crate::error::{ModelError, Result};

pub const DEFAULT_BEAM: usize = 5;

/// A left-to-right scorer. The first call to `step` is fed BOS.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Result<Self::State>;

    /// Log-probabilities of the next token given the state and the token
    /// just emitted, plus the advanced state.
    fn step(&self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, without BOS and without the terminal EOS.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Whether EOS was emitted (false when cut at `max_len`).
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens scored by the model (EOS included when finished).
    pub fn scored_len(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }
}

fn banned(token: usize) -> bool {
    token == PAD || token == BOS
}

/// Index of the largest entry, excluding PAD/BOS; ties go to the lowest id.
pub fn argmax(log_probs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in log_probs.iter().enumerate() {
        if banned(i) || v.is_nan() || v == f64::NEG_INFINITY {
            continue;
        }
        if best.map_or(true, |b| v > log_probs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Emits the argmax token until EOS or `max_len` generated tokens.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis> {
    let mut state = model.start()?;
    let mut prev = BOS;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < max_len {
        let (lp, next) = model.step(&state, prev)?;
        let tok = argmax(&lp).ok_or_else(|| ModelError::Contract("no token has finite probability".into()))?;
        log_prob += lp[tok];
        if tok == EOS {
            return Ok(Hypothesis { tokens, log_prob, finished: true });
        }
        tokens.push(tok);
        state = next;
        prev = tok;
    }
    Ok(Hypothesis { tokens, log_prob, finished: false })
}

/// `log_prob / len^alpha`; `alpha = 0` ranks by raw log-probability.
pub fn normalized_score(h: &Hypothesis, alpha: f64) -> f64 {
    if alpha == 0.0 {
        h.log_prob
    } else {
        h.log_prob / (h.scored_len().max(1) as f64).powf(alpha)
    }
}

struct Live<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
}

/// Standard beam search: each step keeps the `width` best expansions of the
/// live hypotheses; expansions ending in EOS retire to the finished pool and
/// shrink the live beam. The best finished hypothesis under
/// [`normalized_score`] is returned (hypotheses cut at `max_len` compete too).
/// Candidate ties are broken by parent rank, then by lowest token id.
pub fn beam_search<M: StepModel>(model: &M, width: usize, length_penalty: f64, max_len: usize) -> Result<Hypothesis> {
    if width < 1 {
        return Err(ModelError::Config("beam width must be >= 1".into()));
    }
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.start()?,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        if live[0].tokens.len() >= max_len {
            finished.extend(live.drain(..).map(|l| Hypothesis {
                tokens: l.tokens,
                log_prob: l.log_prob,
                finished: false,
            }));
            break;
        }
        // (score, parent, token)
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (p, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (lp, next) = model.step(&hyp.state, prev)?;
            for (tok, &v) in lp.iter().enumerate() {
                if banned(tok) || v.is_nan() || v == f64::NEG_INFINITY {
                    continue;
                }
                candidates.push((hyp.log_prob + v, p, tok));
            }
            next_states.push(next);
        }
        if candidates.is_empty() {
            return Err(ModelError::Contract("no token has finite probability".into()));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(width);
        let mut next_live = Vec::new();
        for (score, p, tok) in candidates {
            let mut tokens = live[p].tokens.clone();
            if tok == EOS {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: true,
                });
            } else {
                tokens.push(tok);
                next_live.push(Live {
                    tokens,
                    log_prob: score,
                    state: next_states[p].clone(),
                });
            }
        }
        live = next_live;
    }
    let mut best: Option<Hypothesis> = None;
    for h in finished {
        let better = match &best {
            None => true,
            Some(b) => normalized_score(&h, length_penalty) > normalized_score(b, length_penalty),
        };
        if better {
            best = Some(h);
        }
    }
    best.ok_or_else(|| ModelError::Contract("beam search produced no hypothesis".into()))
}

/// A fixed next-token table keyed by prefix, for tests and hand-built
/// fixtures. Prefixes missing from the table get `default`.
#[derive(Clone, Debug)]
pub struct TableModel {
    pub vocab: usize,
    pub table: std::collections::HashMap<Vec<usize>, Vec<f64>>,
    pub default: Vec<f64>,
}

impl TableModel {
    /// `probs` are probabilities; they are stored as log-probabilities.
    pub fn new(vocab: usize, default_probs: &[f64]) -> Self {
        TableModel {
            vocab,
            table: Default::default(),
            default: default_probs.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn set(&mut self, prefix: &[usize], probs: &[f64]) {
        assert_eq!(probs.len(), self.vocab);
        self.table.insert(prefix.to_vec(), probs.iter().map(|p| p.ln()).collect());
    }

    /// Log-probability the table assigns to `tokens` followed by EOS.
    pub fn sequence_log_prob(&self, tokens: &[usize], with_eos: bool) -> f64 {
        let mut total = 0.0;
        let mut seq: Vec<usize> = tokens.to_vec();
        if with_eos {
            seq.push(EOS);
        }
        for i in 0..seq.len() {
            let row = self.table.get(&seq[..i]).unwrap_or(&self.default);
            total += row[seq[i]];
        }
        total
    }
}

impl StepModel for TableModel {
    type State = Vec<usize>;

    fn start(&self) -> Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn step(&self, state: &Vec<usize>, prev: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut prefix = state.clone();
        if prev != BOS {
            prefix.push(prev);
        }
        let row = self.table.get(&prefix).unwrap_or(&self.default).clone();
        Ok((row, prefix))
    }
}

/// Every EOS-terminated sequence of at most `max_len` content tokens, plus
/// the unterminated ones of exactly `max_len`, with their log-probabilities.
pub fn enumerate_sequences<M: StepModel>(model: &M, max_len: usize) -> Result<Vec<Hypothesis>> {
    fn rec<M: StepModel>(
        model: &M,
        state: &M::State,
        prev: usize,
        tokens: &mut Vec<usize>,
        lp: f64,
        max_len: usize,
        out: &mut Vec<Hypothesis>,
    ) -> Result<()> {
        if tokens.len() == max_len {
            out.push(Hypothesis { tokens: tokens.clone(), log_prob: lp, finished: false });
            return Ok(());
        }
        let (row, next) = model.step(state, prev)?;
        for (tok, &v) in row.iter().enumerate() {
            if banned(tok) || v == f64::NEG_INFINITY {
                continue;
            }
            if tok == EOS {
                out.push(Hypothesis { tokens: tokens.clone(), log_prob: lp + v, finished: true });
            } else {
                tokens.push(tok);
                rec(model, &next, tok, tokens, lp + v, max_len, out)?;
                tokens.pop();
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(model, &model.start()?, BOS, &mut Vec::new(), 0.0, max_len, &mut out)?;
    Ok(out)
}

/// Small table models shared by tests.
pub mod fixtures {
    use super::TableModel;

    // ids: 0 pad, 1 bos, 2 eos, 3.. content
    pub fn probs(v: &[(usize, f64)], vocab: usize) -> Vec<f64> {
        let mut p = vec![0.0; vocab];
        for &(i, x) in v {
            p[i] = x;
        }
        p
    }

    /// Greedy takes 3 (0.5) and then is stuck with 0.3; beam width 2 keeps
    /// 4 (0.4) whose continuation 5 has 0.9.
    pub fn counterexample() -> TableModel {
        let v = 6;
        let mut m = TableModel::new(v, &probs(&[(2, 1.0)], v));
        m.set(&[], &probs(&[(3, 0.5), (4, 0.4), (2, 0.1)], v));
        m.set(&[3], &probs(&[(5, 0.3), (4, 0.3), (3, 0.2), (2, 0.2)], v));
        m.set(&[4], &probs(&[(5, 0.9), (2, 0.1)], v));
        m.set(&[3, 5], &probs(&[(2, 1.0)], v));
        m.set(&[4, 5], &probs(&[(2, 1.0)], v));
        m
    }

    /// A depth-`depth` tree of random next-token rows (PAD/BOS get zero mass).
    pub fn random_table(seed: u64, vocab: usize, depth: usize) -> TableModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let row = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut p: Vec<f64> = (0..vocab).map(|i| if i < 2 { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
            let z: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= z);
            p
        };
        let default = row(&mut rng);
        let mut m = TableModel::new(vocab, &default);
        let mut frontier = vec![Vec::new()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for prefix in frontier {
                let r = row(&mut rng);
                m.set(&prefix, &r);
                for t in 3..vocab {
                    let mut p: Vec<usize> = prefix.clone();
                    p.push(t);
                    next.push(p);
                }
            }
            frontier = next;
        }
        m
    }
}
