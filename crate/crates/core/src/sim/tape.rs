use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::domain::{ClusterState, KeyGroupId, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What a workload event applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    /// Spread evenly over the key groups on the node when the event fires.
    Node(NodeId),
    Group(KeyGroupId),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Node(n) => write!(f, "{n}"),
            Target::Group(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let num = |rest: &str| rest.parse::<u32>().map_err(|_| format!("bad id {s:?}"));
        match s.split_at_checked(1) {
            Some(("n", rest)) => Ok(Target::Node(NodeId(num(rest)?))),
            Some(("g", rest)) => Ok(Target::Group(KeyGroupId(num(rest)?))),
            _ => Err(format!("expected n<id> or g<id>, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TapeEvent<S> {
    pub tick: u64,
    pub target: Target,
    pub delta: S,
}

/// Time-ordered load changes. Comparison runs replay one tape so every
/// optimizer sees the same workload.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkloadTape<S> {
    events: Vec<TapeEvent<S>>,
}

impl<S: Scalar> WorkloadTape<S> {
    pub fn new(mut events: Vec<TapeEvent<S>>) -> Self {
        // stable: same-tick events keep their order
        events.sort_by_key(|e| e.tick);
        WorkloadTape { events }
    }

    pub fn events(&self) -> &[TapeEvent<S>] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn at(&self, tick: u64) -> &[TapeEvent<S>] {
        let lo = self.events.partition_point(|e| e.tick < tick);
        let hi = self.events.partition_point(|e| e.tick <= tick);
        &self.events[lo..hi]
    }

    /// Writes `tick,nodeOrGroupId,deltaLoad` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "nodeOrGroupId", "deltaLoad"])?;
        for e in &self.events {
            w.write_record([
                e.tick.to_string(),
                e.target.to_string(),
                format!("{}", e.delta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut events = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let bad = |message: String| Error::TapeFormat { line, message };
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", rec.len())));
            }
            let tick = rec[0]
                .parse::<u64>()
                .map_err(|e| bad(format!("tick: {e}")))?;
            let target = rec[1].parse::<Target>().map_err(bad)?;
            let delta = rec[2]
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite())
                .ok_or_else(|| bad(format!("deltaLoad: not a number: {:?}", &rec[2])))?;
            events.push(TapeEvent {
                tick,
                target,
                delta: S::lit(delta),
            });
        }
        Ok(WorkloadTape::new(events))
    }
}

/// Applies this tick's events. Loads never drop below zero; events for
/// nodes or key groups that no longer exist are ignored.
pub fn step_workload<S: Scalar>(
    tape: &WorkloadTape<S>,
    tick: u64,
    cluster: &ClusterState<S>,
) -> ClusterState<S> {
    let events = tape.at(tick);
    if events.is_empty() {
        return cluster.clone();
    }
    let mut next = cluster.clone();
    for e in events {
        let (groups, share) = match e.target {
            Target::Group(g) => (vec![g], e.delta),
            Target::Node(n) => {
                let groups = next.groups_on(n);
                if groups.is_empty() {
                    continue;
                }
                let share = e.delta / S::from_count(groups.len());
                (groups, share)
            }
        };
        for g in groups {
            if let Some(stat) = next.stat(g) {
                let load = (stat.load + share).max(S::zero());
                // the group exists, so this cannot fail
                let _ = next.set_group_load(g, load);
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::cluster;

    fn tape() -> WorkloadTape<f64> {
        WorkloadTape::new(vec![
            TapeEvent {
                tick: 3,
                target: Target::Node(NodeId(0)),
                delta: 4.0,
            },
            TapeEvent {
                tick: 1,
                target: Target::Group(KeyGroupId(1)),
                delta: -5.0,
            },
        ])
    }

    #[test]
    fn csv_round_trip() {
        let t = tape();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tick,nodeOrGroupId,deltaLoad\n1,g1,-5\n"));
        assert_eq!(WorkloadTape::<f64>::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn bad_rows_report_their_line() {
        let err = WorkloadTape::<f64>::read_csv(
            "tick,nodeOrGroupId,deltaLoad\n1,g1,2\n2,x9,1\n".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::TapeFormat { line: 3, .. }), "{err}");
    }

    #[test]
    fn no_event_leaves_cluster_unchanged() {
        let c = cluster(&[(0, false)], &[(0, 3.0, 0), (1, 1.0, 0)]);
        assert_eq!(step_workload(&tape(), 2, &c), c);
    }

    #[test]
    fn node_events_spread_and_loads_clamp_at_zero() {
        let c = cluster(&[(0, false)], &[(0, 3.0, 0), (1, 1.0, 0)]);
        let c1 = step_workload(&tape(), 1, &c);
        assert_eq!(c1.stat(KeyGroupId(1)).unwrap().load, 0.0);
        let c3 = step_workload(&tape(), 3, &c1);
        assert_eq!(c3.stat(KeyGroupId(0)).unwrap().load, 5.0);
        assert_eq!(c3.stat(KeyGroupId(1)).unwrap().load, 2.0);
    }
}
