use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;

use super::{minmax, Ctx, Picked, SelectionError};
use crate::model::{fit, Standardizer};
use crate::seed;

/// Minimum raw inner-CV AUC gain for forward search to continue.
const SFS_MIN_GAIN: f64 = 1e-4;
const RFE_DROP_FRACTION: f64 = 0.1;

const GA_POPULATION: usize = 40;
const GA_GENERATIONS: usize = 60;
const GA_CROSSOVER: f64 = 0.8;
const GA_MUTATION: f64 = 0.02;
const GA_ELITE: usize = 2;
/// Expected initial subset size of a GA individual.
const GA_INIT_SIZE: f64 = 10.0;

/// Index of the maximum of `score`, ties going to the candidate whose key
/// sorts first.
fn argmax_by_key<K: Ord>(score: &[f64], key: impl Fn(usize) -> K) -> usize {
    let mut best = 0;
    for i in 1..score.len() {
        match score[i].total_cmp(&score[best]) {
            Ordering::Greater => best = i,
            Ordering::Equal if key(i) < key(best) => best = i,
            _ => {}
        }
    }
    best
}

/// The recorded subset with the best raw objective `(1 - w) auc + w cbar`
/// no larger than the size cap; ties go to the smaller subset.
fn best_recorded(ctx: &Ctx, sets: &[Vec<usize>], aucs: &[f64]) -> Option<usize> {
    let kmax = ctx.max_k();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() || s.len() > kmax {
            continue;
        }
        let j = ctx.combine(aucs[i], ctx.cbar(s));
        let take = match best {
            None => true,
            Some((b, bj)) => {
                if ctx.cfg.target_k.is_some() {
                    s.len() > sets[b].len() || (s.len() == sets[b].len() && j > bj)
                } else {
                    j > bj || (j == bj && s.len() < sets[b].len())
                }
            }
        };
        if take {
            best = Some((i, j));
        }
    }
    best.map(|b| b.0)
}

fn sorted_with(set: &[usize], extra: usize) -> Vec<usize> {
    let mut v = set.to_vec();
    v.push(extra);
    v.sort_unstable();
    v
}

fn sorted_without(set: &[usize], gone: usize) -> Vec<usize> {
    set.iter().copied().filter(|&j| j != gone).collect()
}

pub(crate) fn sfs(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let limit = ctx.max_k();
    let mut order: Vec<usize> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut cur_auc = f64::NEG_INFINITY;
    while cur.len() < limit {
        let cands: Vec<usize> = (0..ctx.p())
            .filter(|j| !cur.contains(j))
            .filter(|&j| ctx.legal(&sorted_with(&cur, j)))
            .collect();
        if cands.is_empty() {
            break;
        }
        let sets: Vec<Vec<usize>> = cands.iter().map(|&j| sorted_with(&cur, j)).collect();
        let aucs = ctx.eval.auc_many(&sets)?;
        let s = minmax(&aucs);
        let cb: Vec<f64> = sets.iter().map(|st| ctx.cbar(st)).collect();
        let comb: Vec<f64> = (0..sets.len()).map(|i| ctx.combine(s[i], cb[i])).collect();
        for i in 0..sets.len() {
            ctx.log(&sets[i], s[i], cb[i], format!("candidate +{}", ctx.names[cands[i]]));
        }
        let b = argmax_by_key(&comb, |i| ctx.names[cands[i]].clone());
        if ctx.cfg.target_k.is_none() && !cur.is_empty() && aucs[b] <= cur_auc + SFS_MIN_GAIN {
            ctx.log(&cur, 1.0, ctx.cbar(&cur), "stop: no improvement".into());
            break;
        }
        cur = sets[b].clone();
        cur_auc = aucs[b];
        order.push(cands[b]);
        ctx.log(&cur, s[b], cb[b], format!("add {}", ctx.names[cands[b]]));
    }
    Ok(Picked { ranking: order.clone(), selected: order })
}

/// Orders a chosen subset of a backward elimination: the longest survivors
/// come first.
fn survivors_first(elimination: &[usize], last: &[usize], chosen: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = last.to_vec();
    order.extend(elimination.iter().rev());
    order.into_iter().filter(|j| chosen.contains(j)).collect()
}

pub(crate) fn sbs(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let mut cur = ctx.backward_start();
    let mut sets = vec![cur.clone()];
    let mut aucs = vec![ctx.eval.auc(&cur)?];
    let cb0 = ctx.cbar(&cur);
    ctx.log(&cur, aucs[0], cb0, "start".into());
    let mut eliminated = Vec::new();
    while cur.len() > 1 {
        let cands: Vec<usize> = cur
            .iter()
            .copied()
            .filter(|&j| ctx.legal(&sorted_without(&cur, j)))
            .collect();
        if cands.is_empty() {
            break;
        }
        let next: Vec<Vec<usize>> = cands.iter().map(|&j| sorted_without(&cur, j)).collect();
        let a = ctx.eval.auc_many(&next)?;
        let s = minmax(&a);
        let cb: Vec<f64> = next.iter().map(|st| ctx.cbar(st)).collect();
        let comb: Vec<f64> = (0..next.len()).map(|i| ctx.combine(s[i], cb[i])).collect();
        for i in 0..next.len() {
            ctx.log(&next[i], s[i], cb[i], format!("candidate -{}", ctx.names[cands[i]]));
        }
        let b = argmax_by_key(&comb, |i| ctx.names[cands[i]].clone());
        eliminated.push(cands[b]);
        cur = next[b].clone();
        ctx.log(&cur, s[b], cb[b], format!("remove {}", ctx.names[cands[b]]));
        sets.push(cur.clone());
        aucs.push(a[b]);
    }
    let Some(best) = best_recorded(ctx, &sets, &aucs) else {
        return Err(SelectionError::EmptySelection("backward search kept no admissible subset".into()));
    };
    let chosen = sets[best].clone();
    let cb = ctx.cbar(&chosen);
    ctx.log(&chosen, aucs[best], cb, format!("select size {}", chosen.len()));
    let order = survivors_first(&eliminated, &cur, &chosen);
    Ok(Picked { ranking: survivors_first(&eliminated, &cur, &sets[0]), selected: order })
}

pub(crate) fn rfe(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let mut cur = ctx.backward_start();
    let mut sets = vec![cur.clone()];
    let mut eliminated = Vec::new();
    while cur.len() > 1 {
        let xs = ctx.x.select_columns(&cur);
        let st = Standardizer::fit(&xs);
        let m = fit(&ctx.spec, &st.transform(&xs), ctx.y)?;
        let s = minmax(&m.weights.iter().map(|w| w.abs()).collect::<Vec<_>>());
        let comb: Vec<f64> = cur.iter().enumerate().map(|(i, &j)| ctx.combine(s[i], ctx.icc[j])).collect();
        let mut order: Vec<usize> = (0..cur.len()).collect();
        order.sort_by(|&a, &b| comb[a].total_cmp(&comb[b]).then_with(|| ctx.names[cur[b]].cmp(&ctx.names[cur[a]])));
        let quota = ((cur.len() as f64 * RFE_DROP_FRACTION).ceil() as usize).max(1);
        let mut next = cur.clone();
        let mut dropped = Vec::new();
        for &i in &order {
            if dropped.len() == quota || next.len() == 1 {
                break;
            }
            let trial = sorted_without(&next, cur[i]);
            if ctx.legal(&trial) {
                next = trial;
                dropped.push(cur[i]);
            }
        }
        if dropped.is_empty() {
            break;
        }
        for &j in &dropped {
            let pos = cur.iter().position(|&c| c == j).expect("member");
            ctx.log(&next, s[pos], ctx.icc[j], format!("drop {}", ctx.names[j]));
        }
        eliminated.extend(dropped);
        cur = next;
        sets.push(cur.clone());
    }
    let aucs = ctx.eval.auc_many(&sets)?;
    for (i, st) in sets.iter().enumerate() {
        let cb = ctx.cbar(st);
        ctx.log(st, aucs[i], cb, format!("round {i} size {}", st.len()));
    }
    let Some(best) = best_recorded(ctx, &sets, &aucs) else {
        return Err(SelectionError::EmptySelection("elimination kept no admissible subset".into()));
    };
    let chosen = sets[best].clone();
    let cb = ctx.cbar(&chosen);
    ctx.log(&chosen, aucs[best], cb, format!("select round {best}"));
    let order = survivors_first(&eliminated, &cur, &chosen);
    Ok(Picked { ranking: survivors_first(&eliminated, &cur, &sets[0]), selected: order })
}

fn members(bits: &[bool]) -> Vec<usize> {
    (0..bits.len()).filter(|&j| bits[j]).collect()
}

/// Makes an individual admissible: non-empty, within the size cap and, in
/// the semi-robust regime, satisfying the pool rule.
fn repair<R: Rng>(ctx: &Ctx, bits: &mut [bool], cap: usize, rng: &mut R) {
    loop {
        let m = members(bits);
        if m.len() <= cap {
            break;
        }
        bits[m[rng.random_range(0..m.len())]] = false;
    }
    while !ctx.legal(&members(bits)) {
        let bad: Vec<usize> = members(bits).into_iter().filter(|&j| !ctx.robust[j]).collect();
        bits[bad[rng.random_range(0..bad.len())]] = false;
    }
    if members(bits).is_empty() {
        let pool: Vec<usize> = (0..bits.len()).filter(|&j| ctx.semi.is_none() || ctx.robust[j]).collect();
        bits[pool[rng.random_range(0..pool.len())]] = true;
    }
}

pub(crate) fn ga(ctx: &mut Ctx) -> Result<Picked, SelectionError> {
    let p = ctx.p();
    let cap = ctx.max_k();
    let mut rng = seed::rng(seed::mix_str(ctx.cfg.seed, "ga"));
    let density = (GA_INIT_SIZE / p as f64).min(0.5);
    let mut pop: Vec<Vec<bool>> = (0..GA_POPULATION)
        .map(|_| {
            let mut b: Vec<bool> = (0..p).map(|_| rng.random_bool(density)).collect();
            repair(ctx, &mut b, cap, &mut rng);
            b
        })
        .collect();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut seen_auc: Vec<f64> = Vec::new();
    let mut seen_keys: HashSet<Vec<usize>> = HashSet::new();
    for gen in 0..=GA_GENERATIONS {
        let sets: Vec<Vec<usize>> = pop.iter().map(|b| members(b)).collect();
        let aucs = ctx.eval.auc_many(&sets)?;
        for (s, &a) in sets.iter().zip(&aucs) {
            if seen_keys.insert(s.clone()) {
                seen.push(s.clone());
                seen_auc.push(a);
            }
        }
        let s = minmax(&aucs);
        let cb: Vec<f64> = sets.iter().map(|st| ctx.cbar(st)).collect();
        let fit: Vec<f64> = (0..sets.len()).map(|i| ctx.combine(s[i], cb[i])).collect();
        // rank: fitness, then smaller subset, then member names
        let keys: Vec<(usize, Vec<String>)> = sets.iter().map(|st| (st.len(), ctx.member_names(st))).collect();
        let key = |i: usize| &keys[i];
        let mut rank: Vec<usize> = (0..pop.len()).collect();
        rank.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]).then_with(|| key(a).cmp(&key(b))));
        let top = rank[0];
        ctx.log(&sets[top], s[top], cb[top], format!("generation {gen} best auc {:.6}", aucs[top]));
        if gen == GA_GENERATIONS {
            break;
        }
        let better = |a: usize, b: usize| match fit[a].total_cmp(&fit[b]) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => key(a) <= key(b),
        };
        let mut next: Vec<Vec<bool>> = rank[..GA_ELITE.min(pop.len())].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < GA_POPULATION {
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
                let (a, b) = (rng.random_range(0..pop.len()), rng.random_range(0..pop.len()));
                if better(a, b) {
                    a
                } else {
                    b
                }
            };
            let (pa, pb) = (pick(&mut rng), pick(&mut rng));
            let (mut c1, mut c2) = (pop[pa].clone(), pop[pb].clone());
            if rng.random_bool(GA_CROSSOVER) {
                for j in 0..p {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut c1[j], &mut c2[j]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for bit in c.iter_mut() {
                    if rng.random_bool(GA_MUTATION) {
                        *bit = !*bit;
                    }
                }
                repair(ctx, c, cap, &mut rng);
            }
            next.push(c1);
            if next.len() < GA_POPULATION {
                next.push(c2);
            }
        }
        pop = next;
    }
    let Some(best) = best_recorded(ctx, &seen, &seen_auc) else {
        return Err(SelectionError::EmptySelection("genetic search found no admissible subset".into()));
    };
    let chosen = seen[best].clone();
    let cb = ctx.cbar(&chosen);
    ctx.log(&chosen, seen_auc[best], cb, "select best individual".into());
    Ok(Picked { ranking: chosen.clone(), selected: chosen })
}
