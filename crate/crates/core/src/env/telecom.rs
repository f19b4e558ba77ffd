//! Network selection: top-three ranking, handoff-aware rate, association
//! under per-station quotas.

use crate::road::{BsKind, World};

use super::state::TelecomAction;

/// Handoff penalty for attaching to `candidate` when the AV was served by
/// `previous`. Initial attachment (no previous station) costs nothing.
pub fn handoff_penalty(previous: Option<usize>, candidate: usize, candidate_kind: BsKind) -> f64 {
    match previous {
        Some(p) if p != candidate => match candidate_kind {
            BsKind::Tbs => 0.5,
            BsKind::Rbs => 0.1,
        },
        _ => 0.0,
    }
}

/// `T_q = T_ij / min(Q_j, n_s) * (1 - mu)`; `n_s` is floored at one since the
/// requesting AV always counts itself.
pub fn weighted_rate(rate: f64, quota: usize, load: usize, mu: f64) -> f64 {
    let divisor = quota.min(load.max(1)).max(1);
    rate / divisor as f64 * (1.0 - mu)
}

/// Indices of the (up to) three largest rates, descending, lower index first
/// on ties.
pub fn rank_bs(rates: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]).then(a.cmp(&b)));
    order.truncate(3);
    order
}

/// What selection needs to know about one station this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationView {
    pub kind: BsKind,
    pub quota: usize,
    /// AVs that listed the station in their top three.
    pub candidate_load: usize,
    /// AVs already associated with it this step.
    pub associated: usize,
}

impl StationView {
    pub fn has_room(&self) -> bool {
        self.associated < self.quota
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub bs: Option<usize>,
    /// Raw link rate to the chosen station.
    pub rate: f64,
    /// Handoff-aware rate with the true penalty of the executed switch.
    pub weighted: f64,
    pub mu: f64,
    pub handoff: bool,
}

impl Selection {
    pub const NONE: Selection = Selection {
        bs: None,
        rate: 0.0,
        weighted: 0.0,
        mu: 0.0,
        handoff: false,
    };
}

fn finish(
    previous: Option<usize>,
    bs: usize,
    rates: &[f64],
    stations: &[StationView],
) -> Selection {
    let st = &stations[bs];
    let mu = handoff_penalty(previous, bs, st.kind);
    Selection {
        bs: Some(bs),
        rate: rates[bs],
        weighted: weighted_rate(rates[bs], st.quota, st.candidate_load, mu),
        mu,
        handoff: previous.is_some_and(|p| p != bs),
    }
}

/// Attaches the AV to the best available station among `order`, falling back
/// to the previous station, then to no service.
pub fn associate_in_order(
    previous: Option<usize>,
    order: &[usize],
    rates: &[f64],
    stations: &[StationView],
) -> Selection {
    if let Some(&bs) = order.iter().find(|&&j| stations[j].has_room()) {
        return finish(previous, bs, rates, stations);
    }
    match previous {
        Some(p) if stations[p].has_room() => finish(previous, p, rates, stations),
        _ => Selection::NONE,
    }
}

/// Chooses a serving station among `top3` according to the telecom action.
///
/// `rates` and `stations` are indexed by station id and cover every station.
pub fn select_bs(
    previous: Option<usize>,
    action: TelecomAction,
    top3: &[usize],
    rates: &[f64],
    stations: &[StationView],
) -> Selection {
    let metric = |j: usize| {
        let st = &stations[j];
        match action {
            TelecomAction::HandoffAware => weighted_rate(
                rates[j],
                st.quota,
                st.candidate_load,
                handoff_penalty(previous, j, st.kind),
            ),
            TelecomAction::NoHandoffPenalty => {
                weighted_rate(rates[j], st.quota, st.candidate_load, 0.0)
            }
            TelecomAction::MaxRate => rates[j],
        }
    };
    let mut order = top3.to_vec();
    order.sort_by(|&a, &b| metric(b).total_cmp(&metric(a)).then(a.cmp(&b)));
    associate_in_order(previous, &order, rates, stations)
}

/// Every station ordered by straight-line distance from the AV, nearest
/// first, lower id on ties.
pub fn nearest_order(world: &World, av: usize) -> Vec<usize> {
    let d: Vec<f64> = (0..world.stations.len())
        .map(|j| world.distance(av, j))
        .collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order
}

/// Per-AV association bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationState {
    pub previous_bs: Option<usize>,
    pub current_bs: Option<usize>,
    /// `(station, rate)` sorted by rate, descending.
    pub top3: Vec<(usize, f64)>,
    pub handoff_count: usize,
    pub steps_elapsed: usize,
}

impl AssociationState {
    /// Handoffs per elapsed step, zero before the first step.
    pub fn handoff_prob(&self) -> f64 {
        if self.steps_elapsed == 0 {
            0.0
        } else {
            self.handoff_count as f64 / self.steps_elapsed as f64
        }
    }

    pub fn record(&mut self, sel: &Selection, counted_step: bool) {
        self.previous_bs = self.current_bs;
        self.current_bs = sel.bs;
        if counted_step {
            self.steps_elapsed += 1;
            self.handoff_count += usize::from(sel.handoff);
        }
    }

    /// Forgets the serving station, e.g. after a collision.
    pub fn detach(&mut self) {
        self.previous_bs = None;
        self.current_bs = None;
        self.top3.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(kind: BsKind, quota: usize, load: usize, associated: usize) -> StationView {
        StationView {
            kind,
            quota,
            candidate_load: load,
            associated,
        }
    }

    #[test]
    fn weighted_rate_examples() {
        assert_eq!(weighted_rate(1e9, 5, 2, 0.0), 5e8);
        assert_eq!(weighted_rate(1e9, 5, 2, 0.5), 2.5e8);
        assert_eq!(
            weighted_rate(1e9, 5, 5, 0.0),
            weighted_rate(1e9, 5, 50, 0.0)
        );
        assert_eq!(weighted_rate(1e9, 5, 0, 0.0), 1e9);
    }

    #[test]
    fn penalties() {
        assert_eq!(handoff_penalty(Some(3), 3, BsKind::Tbs), 0.0);
        assert_eq!(handoff_penalty(Some(0), 3, BsKind::Tbs), 0.5);
        assert_eq!(handoff_penalty(Some(3), 0, BsKind::Rbs), 0.1);
        assert_eq!(handoff_penalty(None, 0, BsKind::Tbs), 0.0);
    }

    #[test]
    fn ranking_and_ties() {
        assert_eq!(rank_bs(&[1.0, 5.0, 3.0, 5.0, 0.5]), vec![1, 3, 2]);
        assert_eq!(rank_bs(&[2.0, 1.0]), vec![0, 1]);
        assert!(rank_bs(&[]).is_empty());
    }

    #[test]
    fn single_candidate_under_quota() {
        let st = [view(BsKind::Tbs, 5, 1, 0)];
        let s = select_bs(None, TelecomAction::HandoffAware, &[0], &[1e8], &st);
        assert_eq!((s.bs, s.handoff, s.weighted), (Some(0), false, 1e8));
    }

    #[test]
    fn handoff_aware_keeps_incumbent_when_gain_is_small() {
        // incumbent RBS 0 at T_old, new TBS 1 at 1.2 T_old; penalty 0.5 makes 0.6 T_old
        let t_old = 1e8;
        let rates = [t_old, 1.2 * t_old];
        let st = [view(BsKind::Rbs, 2, 1, 0), view(BsKind::Tbs, 5, 1, 0)];
        let top = rank_bs(&rates);
        let greedy = select_bs(Some(0), TelecomAction::MaxRate, &top, &rates, &st);
        assert_eq!(greedy.bs, Some(1));
        assert!(greedy.handoff);
        assert!((greedy.weighted - 0.6 * t_old).abs() < 1e-6);
        let aware = select_bs(Some(0), TelecomAction::HandoffAware, &top, &rates, &st);
        assert_eq!(
            (aware.bs, aware.handoff, aware.weighted),
            (Some(0), false, t_old)
        );
        let naive = select_bs(Some(0), TelecomAction::NoHandoffPenalty, &top, &rates, &st);
        assert_eq!(naive.bs, Some(1));
    }

    #[test]
    fn modes_agree_without_penalty_and_equal_loads() {
        let rates = [3e8, 1e8, 2e8];
        let st = [
            view(BsKind::Tbs, 5, 2, 0),
            view(BsKind::Rbs, 2, 2, 0),
            view(BsKind::Tbs, 5, 2, 0),
        ];
        let top = rank_bs(&rates);
        let a = select_bs(None, TelecomAction::HandoffAware, &top, &rates, &st);
        let b = select_bs(None, TelecomAction::MaxRate, &top, &rates, &st);
        let c = select_bs(None, TelecomAction::NoHandoffPenalty, &top, &rates, &st);
        assert_eq!(a.bs, b.bs);
        assert_eq!(b.bs, c.bs);
    }

    #[test]
    fn quota_full_candidates_are_skipped() {
        let rates = [3e8, 2e8, 1e8];
        let st = [
            view(BsKind::Tbs, 1, 1, 1),
            view(BsKind::Tbs, 1, 1, 0),
            view(BsKind::Tbs, 1, 1, 0),
        ];
        let s = select_bs(None, TelecomAction::MaxRate, &[0, 1, 2], &rates, &st);
        assert_eq!(s.bs, Some(1));
    }

    #[test]
    fn all_full_keeps_previous_or_drops() {
        let rates = [3e8, 2e8, 1e8, 5e7];
        let mut st = [
            view(BsKind::Tbs, 1, 1, 1),
            view(BsKind::Tbs, 1, 1, 1),
            view(BsKind::Tbs, 1, 1, 1),
            view(BsKind::Rbs, 2, 0, 0),
        ];
        let s = select_bs(
            Some(3),
            TelecomAction::HandoffAware,
            &[0, 1, 2],
            &rates,
            &st,
        );
        assert_eq!((s.bs, s.handoff, s.rate), (Some(3), false, 5e7));
        st[3].associated = 2;
        let s = select_bs(
            Some(3),
            TelecomAction::HandoffAware,
            &[0, 1, 2],
            &rates,
            &st,
        );
        assert_eq!(s, Selection::NONE);
    }

    #[test]
    fn association_bookkeeping() {
        let mut a = AssociationState::default();
        assert_eq!(a.handoff_prob(), 0.0);
        let first = Selection {
            bs: Some(1),
            rate: 1.0,
            weighted: 1.0,
            mu: 0.0,
            handoff: false,
        };
        let switch = Selection {
            bs: Some(2),
            rate: 1.0,
            weighted: 0.5,
            mu: 0.5,
            handoff: true,
        };
        a.record(&first, true);
        a.record(&switch, true);
        a.record(&switch, true);
        assert_eq!((a.previous_bs, a.current_bs), (Some(2), Some(2)));
        assert!((a.handoff_prob() - 2.0 / 3.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn handoff_aware_is_an_argmax(
                rates in proptest::collection::vec(0.0f64..1e9, 1..6),
                prev in proptest::option::of(0usize..6),
                loads in proptest::collection::vec(0usize..8, 6),
                tbs in proptest::collection::vec(any::<bool>(), 6),
            ) {
                let n = rates.len();
                let prev = prev.filter(|&p| p < n);
                let st: Vec<StationView> = (0..n)
                    .map(|j| view(if tbs[j] { BsKind::Tbs } else { BsKind::Rbs }, if tbs[j] { 5 } else { 2 }, loads[j], 0))
                    .collect();
                let top = rank_bs(&rates);
                let s = select_bs(prev, TelecomAction::HandoffAware, &top, &rates, &st);
                let chosen = s.bs.unwrap();
                prop_assert!(s.weighted <= s.rate);
                for &j in &top {
                    let m = weighted_rate(rates[j], st[j].quota, st[j].candidate_load, handoff_penalty(prev, j, st[j].kind));
                    prop_assert!(s.weighted >= m, "chose {} at {} but {} offers {}", chosen, s.weighted, j, m);
                }
            }
        }
    }
}
