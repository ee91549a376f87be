#![allow(dead_code)]
//! A two-bar toy domain small enough to enumerate exhaustively.

use tension_core::beamsearch::*;
use tension_core::seqmodel::{logsumexp, ModelError, SequenceModel};
use tension_core::tension::curve_similarity;

pub const BOS: u32 = 0;
pub const BAR: u32 = 1;
pub const EOS: u32 = 2;
pub const NOTES: [u32; 3] = [3, 4, 5];

/// Two bars of at most three note tokens: BOS Bar x Bar y EOS.
pub struct ToyDomain {
    pub max_per_bar: usize,
    pub bars: usize,
}

impl ToyDomain {
    pub fn state(&self, ctx: &[u32]) -> (usize, usize) {
        let bars = ctx.iter().filter(|&&t| t == BAR).count();
        let since = ctx.iter().rev().take_while(|&&t| t != BAR && t != BOS).count();
        (bars, since)
    }
}

pub fn toy_tension(bar: &[u32]) -> f64 {
    bar.iter().map(|&t| (t as f64 - 3.5).powi(2) + t as f64 * 0.1).sum::<f64>()
}

pub fn bar_segments(tokens: &[u32]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    for &t in tokens {
        match t {
            BAR => out.push(Vec::new()),
            EOS | BOS => {}
            n => out.last_mut().expect("note inside a bar").push(n),
        }
    }
    out
}

impl SearchDomain for ToyDomain {
    fn bos(&self) -> u32 {
        BOS
    }
    fn is_bar(&self, id: u32) -> bool {
        id == BAR
    }
    fn is_eos(&self, id: u32) -> bool {
        id == EOS
    }
    fn controls(&self, _bar: usize) -> &[u32] {
        &[]
    }
    fn segment_diversity(&self, segment: &[u32]) -> DiversityMetrics {
        let notes: Vec<(u8, u16)> = segment.iter().filter(|t| **t >= 3).map(|&t| (t as u8, 1)).collect();
        DiversityMetrics::from_notes(&notes)
    }
    fn reference_diversity(&self, _bar: usize) -> DiversityMetrics {
        DiversityMetrics { pv: 0.7, dv: 0.3, pe: 0.0 }
    }
    fn bar_tension(&self, tokens: &[u32], bar: usize) -> Result<f64, SearchError> {
        Ok(toy_tension(&bar_segments(&tokens[..tokens.len() - 1])[bar]))
    }
}

/// Context-hashed logits restricted to the toy grammar.
pub struct ToyModel<'a> {
    pub domain: &'a ToyDomain,
    pub salt: u64,
}

impl SequenceModel for ToyModel<'_> {
    fn vocab_size(&self) -> usize {
        6
    }

    fn next_token_logprobs(&self, context: &[u32], _controls: &[u32]) -> Result<Vec<f64>, ModelError> {
        let (bars, since) = self.domain.state(context);
        let mut allowed = [false; 6];
        if bars == 0 {
            allowed[BAR as usize] = true;
        } else {
            let end = if bars < self.domain.bars { BAR } else { EOS };
            allowed[end as usize] = true;
            if since < self.domain.max_per_bar {
                for n in NOTES {
                    allowed[n as usize] = true;
                }
            }
        }
        let mut h = self.salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
        for &t in context {
            h = (h ^ t as u64).wrapping_mul(0x1000_0000_01B3).rotate_left(17);
        }
        let logits: Vec<f64> = (0..6)
            .map(|i| {
                if !allowed[i] {
                    return f64::NEG_INFINITY;
                }
                let x = (h ^ (i as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407)).wrapping_mul(0x9FB2_1C65_1E98_DF25);
                ((x >> 11) as f64 / (1u64 << 53) as f64) * 3.0
            })
            .collect();
        let z = logsumexp(&logits);
        Ok(logits.into_iter().map(|l| l - z).collect())
    }
}

/// Every complete toy sequence.
pub fn enumerate(domain: &ToyDomain) -> Vec<Vec<u32>> {
    let mut bars: Vec<Vec<u32>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..domain.max_per_bar {
        frontier = frontier
            .iter()
            .flat_map(|b| NOTES.iter().map(move |&n| b.iter().copied().chain([n]).collect::<Vec<u32>>()))
            .collect();
        bars.extend(frontier.iter().cloned());
    }
    let mut seqs = vec![vec![BOS]];
    for i in 0..domain.bars {
        let end = if i + 1 < domain.bars { vec![] } else { vec![EOS] };
        seqs = seqs
            .iter()
            .flat_map(|s| {
                let end = end.clone();
                bars.iter().map(move |b| {
                    let mut v = s.clone();
                    v.push(BAR);
                    v.extend(b);
                    v.extend(&end);
                    v
                })
            })
            .collect();
    }
    seqs
}

pub fn oracle_score(model: &ToyModel, seq: &[u32], target: &[f64], params: &SearchParams) -> f64 {
    let mut cum = 0.0;
    for i in 1..seq.len() {
        cum += model.next_token_logprobs(&seq[..i], &[]).unwrap()[seq[i] as usize];
    }
    let tensions: Vec<f64> = bar_segments(seq).iter().map(|b| toy_tension(b)).collect();
    let sim = curve_similarity(&tensions, &target[..tensions.len()], &params.similarity_config()).unwrap();
    cum / (seq.len() - 1) as f64 + params.tension_weight * sim.value
}
