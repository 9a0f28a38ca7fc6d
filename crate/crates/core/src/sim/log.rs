//! Event logs and their on-disk form.
//!
//! A log is a CSV with header `t,kind,pre_state,label` plus a JSON sidecar
//! holding the horizon, initial condition and provenance. Floats are written
//! in shortest round-trip form so a write/read cycle is bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Design, PriceLabel, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// A customer joins; `pre_state` is the queue length before joining.
    Arrival { pre_state: usize, label: PriceLabel },
    /// A service completes; `pre_state` is the queue length before it leaves.
    Departure { pre_state: usize },
    /// The posted price changes to `label` while the queue holds `state`.
    PriceSwitch { state: usize, label: PriceLabel },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Everything about a log except the events themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub horizon: f64,
    pub initial_state: usize,
    pub initial_label: PriceLabel,
    pub seed: u64,
    pub stream: u64,
    pub design: Design,
    pub model_id: String,
    pub mu: f64,
    pub capacity: usize,
}

/// A simulated (or recorded) trajectory over `[0, horizon]`.
///
/// Arrival and departure times are strictly increasing. A price switch may
/// share the timestamp of the transition that triggered it (a regenerative
/// switchback re-draws the price the instant the queue hits the regeneration
/// state) but never precedes it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn horizon(&self) -> f64 {
        self.header.horizon
    }

    /// Checks time ordering, the state path and label consistency.
    pub fn validate(&self) -> Result<(), SimError> {
        let h = &self.header;
        let corrupt = |i: usize, msg: String| SimError::CorruptLog(format!("event {i}: {msg}"));
        if !(h.horizon >= 0.0) || !h.horizon.is_finite() {
            return Err(SimError::CorruptLog(format!("bad horizon {}", h.horizon)));
        }
        if h.initial_state > h.capacity {
            return Err(SimError::CorruptLog(format!(
                "initial state {} exceeds capacity {}",
                h.initial_state, h.capacity
            )));
        }
        let user_level = matches!(h.design, Design::UserLevel { .. });
        let switchback = h.design.is_switchback();
        if switchback == (h.initial_label == PriceLabel::Base) {
            return Err(SimError::CorruptLog(format!(
                "initial label {} inconsistent with design {}",
                h.initial_label,
                h.design.name()
            )));
        }
        let mut state = h.initial_state;
        let mut label = h.initial_label;
        let mut last_transition = f64::NEG_INFINITY;
        let mut last_time = 0.0_f64;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t >= 0.0 && e.t <= h.horizon) {
                return Err(corrupt(i, format!("time {} outside [0, {}]", e.t, h.horizon)));
            }
            if e.t < last_time {
                return Err(corrupt(i, format!("time {} goes backwards", e.t)));
            }
            last_time = e.t;
            match e.kind {
                EventKind::Arrival { pre_state, label: l } => {
                    if e.t <= last_transition {
                        return Err(corrupt(i, "transition times not strictly increasing".into()));
                    }
                    last_transition = e.t;
                    if pre_state != state {
                        return Err(corrupt(i, format!("pre_state {pre_state}, path is at {state}")));
                    }
                    if state >= h.capacity {
                        return Err(corrupt(i, format!("arrival at capacity {}", h.capacity)));
                    }
                    let ok = if user_level { l != PriceLabel::Base } else { l == label };
                    if !ok {
                        return Err(corrupt(i, format!("arrival label {l} while price is {label}")));
                    }
                    state += 1;
                }
                EventKind::Departure { pre_state } => {
                    if e.t <= last_transition {
                        return Err(corrupt(i, "transition times not strictly increasing".into()));
                    }
                    last_transition = e.t;
                    if pre_state != state {
                        return Err(corrupt(i, format!("pre_state {pre_state}, path is at {state}")));
                    }
                    if state == 0 {
                        return Err(corrupt(i, "departure from an empty queue".into()));
                    }
                    state -= 1;
                }
                EventKind::PriceSwitch { state: s, label: l } => {
                    if !switchback {
                        return Err(corrupt(i, format!("price switch under {}", h.design.name())));
                    }
                    if s != state {
                        return Err(corrupt(i, format!("switch records state {s}, path is at {state}")));
                    }
                    if l == PriceLabel::Base {
                        return Err(corrupt(i, "switch to the base price".into()));
                    }
                    label = l;
                }
            }
        }
        Ok(())
    }

    /// Queue length at the end of the horizon.
    pub fn final_state(&self) -> usize {
        self.events.iter().fold(self.header.initial_state, |s, e| match e.kind {
            EventKind::Arrival { .. } => s + 1,
            EventKind::Departure { .. } => s - 1,
            EventKind::PriceSwitch { .. } => s,
        })
    }

    /// Price label in force at the end of the horizon.
    pub fn final_label(&self) -> PriceLabel {
        self.events
            .iter()
            .rev()
            .find_map(|e| match e.kind {
                EventKind::PriceSwitch { label, .. } => Some(label),
                _ => None,
            })
            .unwrap_or(self.header.initial_label)
    }

    /// Appends `next`, shifted to start at this log's horizon. `next` must
    /// start in this log's final state.
    pub fn concat(&self, next: &EventLog) -> Result<EventLog, SimError> {
        if next.header.initial_state != self.final_state() {
            return Err(SimError::CorruptLog(format!(
                "cannot join: first log ends in state {}, second starts in {}",
                self.final_state(),
                next.header.initial_state
            )));
        }
        let offset = self.header.horizon;
        let mut events = self.events.clone();
        if next.header.initial_label != self.final_label() {
            events.push(Event {
                t: offset,
                kind: EventKind::PriceSwitch { state: next.header.initial_state, label: next.header.initial_label },
            });
        }
        events.extend(next.events.iter().map(|e| Event { t: e.t + offset, kind: e.kind }));
        let mut header = self.header.clone();
        header.horizon = offset + next.header.horizon;
        Ok(EventLog { header, events })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "kind", "pre_state", "label"])?;
        for e in &self.events {
            let t = e.t.to_string();
            match e.kind {
                EventKind::Arrival { pre_state, label } => {
                    w.write_record([t.as_str(), "A", &pre_state.to_string(), label.as_str()])?
                }
                EventKind::Departure { pre_state } => w.write_record([t.as_str(), "D", &pre_state.to_string(), ""])?,
                EventKind::PriceSwitch { state, label } => {
                    w.write_record([t.as_str(), "S", &state.to_string(), label.as_str()])?
                }
            }
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(header: LogHeader, input: R) -> Result<EventLog, SimError> {
        let mut r = csv::Reader::from_reader(input);
        let expected = ["t", "kind", "pre_state", "label"];
        let got = r.headers()?.clone();
        if got.iter().ne(expected.iter().copied()) {
            return Err(SimError::CorruptLog(format!("unexpected header {got:?}")));
        }
        let mut events = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| SimError::CorruptLog(format!("row {}: bad {what}", i + 1));
            let t: f64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("time"))?;
            let state: usize = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("pre_state"))?;
            let label = rec.get(3).unwrap_or("");
            let kind = match rec.get(1) {
                Some("A") => EventKind::Arrival {
                    pre_state: state,
                    label: PriceLabel::parse(label).ok_or_else(|| bad("label"))?,
                },
                Some("D") => {
                    if !label.is_empty() {
                        return Err(bad("label"));
                    }
                    EventKind::Departure { pre_state: state }
                }
                Some("S") => {
                    EventKind::PriceSwitch { state, label: PriceLabel::parse(label).ok_or_else(|| bad("label"))? }
                }
                _ => return Err(bad("kind")),
            };
            events.push(Event { t, kind });
        }
        Ok(EventLog { header, events })
    }

    /// Writes `path` (CSV) and its sidecar (see [`sidecar_path`]).
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let f = File::create(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(BufWriter::new(f))?;
        let side = sidecar_path(path);
        let f = File::create(&side).map_err(|e| SimError::Io(format!("{}: {e}", side.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &self.header).map_err(|e| SimError::Io(e.to_string()))?;
        Ok(())
    }

    /// Reads a log CSV and its sidecar, then validates it.
    pub fn load(path: &Path) -> Result<EventLog, SimError> {
        let side = sidecar_path(path);
        let f = File::open(&side).map_err(|e| SimError::Io(format!("{}: {e}", side.display())))?;
        let header: LogHeader = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| SimError::CorruptLog(format!("sidecar {}: {e}", side.display())))?;
        let f = File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let log = EventLog::read_csv(header, BufReader::new(f))?;
        log.validate()?;
        Ok(log)
    }
}

/// `run.csv` -> `run.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header(design: Design, label: PriceLabel) -> LogHeader {
        LogHeader {
            horizon: 10.0,
            initial_state: 0,
            initial_label: label,
            seed: 0,
            stream: 0,
            design,
            model_id: "test".into(),
            mu: 1.0,
            capacity: 3,
        }
    }

    fn sb() -> Design {
        Design::IntervalSwitchback { p: 1.0, zeta: 0.1, interval_length: 5.0, assignment: Default::default() }
    }

    fn ev(t: f64, kind: EventKind) -> Event {
        Event { t, kind }
    }

    fn small_log() -> EventLog {
        EventLog {
            header: header(sb(), PriceLabel::Plus),
            events: vec![
                ev(1.0, EventKind::Arrival { pre_state: 0, label: PriceLabel::Plus }),
                ev(2.0, EventKind::Departure { pre_state: 1 }),
                ev(5.0, EventKind::PriceSwitch { state: 0, label: PriceLabel::Minus }),
                ev(6.0, EventKind::Arrival { pre_state: 0, label: PriceLabel::Minus }),
            ],
        }
    }

    #[test]
    fn small_log_is_valid() {
        small_log().validate().unwrap();
        assert_eq!(small_log().final_state(), 1);
        assert_eq!(small_log().final_label(), PriceLabel::Minus);
    }

    #[test]
    fn validation_catches_bad_paths() {
        let mut log = small_log();
        log.events[1] = ev(2.0, EventKind::Departure { pre_state: 0 });
        assert!(log.validate().is_err());

        let mut log = small_log();
        log.events[3] = ev(6.0, EventKind::Arrival { pre_state: 0, label: PriceLabel::Plus });
        assert!(log.validate().is_err(), "label must follow the switch history");

        let mut log = small_log();
        log.events[1].t = 1.0;
        assert!(log.validate().is_err(), "transitions must be strictly increasing");

        let mut log = small_log();
        log.events[3].t = 11.0;
        assert!(log.validate().is_err());

        let mut log = small_log();
        log.events.insert(0, ev(0.5, EventKind::Departure { pre_state: 0 }));
        assert!(log.validate().is_err());

        let log = EventLog {
            header: LogHeader { capacity: 1, ..header(sb(), PriceLabel::Plus) },
            events: vec![
                ev(1.0, EventKind::Arrival { pre_state: 0, label: PriceLabel::Plus }),
                ev(2.0, EventKind::Arrival { pre_state: 1, label: PriceLabel::Plus }),
            ],
        };
        assert!(log.validate().is_err(), "no arrivals at capacity");
    }

    #[test]
    fn switch_may_share_a_transition_time() {
        let mut log = small_log();
        log.events[2].t = 2.0;
        log.validate().unwrap();
    }

    #[test]
    fn user_level_arrivals_need_a_side() {
        let log = EventLog {
            header: header(Design::UserLevel { p: 1.0, zeta: 0.1 }, PriceLabel::Base),
            events: vec![ev(1.0, EventKind::Arrival { pre_state: 0, label: PriceLabel::Base })],
        };
        assert!(log.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_format() {
        let log = small_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "t,kind,pre_state,label\n1,A,0,+\n2,D,1,\n5,S,0,-\n6,A,0,-\n");
        let back = EventLog::read_csv(log.header.clone(), &buf[..]).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        small_log().save(&path).unwrap();
        assert!(dir.path().join("run.json").exists());
        assert_eq!(EventLog::load(&path).unwrap(), small_log());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let h = small_log().header;
        assert!(EventLog::read_csv(h.clone(), "t,kind,pre_state,label\n1,X,0,+\n".as_bytes()).is_err());
        assert!(EventLog::read_csv(h.clone(), "t,kind,pre_state,label\nx,A,0,+\n".as_bytes()).is_err());
        assert!(EventLog::read_csv(h.clone(), "t,kind,state,label\n".as_bytes()).is_err());
        assert!(EventLog::read_csv(h, "t,kind,pre_state,label\n1,A,0,?\n".as_bytes()).is_err());
    }

    #[test]
    fn concat_shifts_and_inserts_switch() {
        let a = small_log();
        let mut b = small_log();
        b.header.initial_state = 1;
        b.header.initial_label = PriceLabel::Plus;
        b.events = vec![ev(1.5, EventKind::Departure { pre_state: 1 })];
        let c = a.concat(&b).unwrap();
        c.validate().unwrap();
        assert_eq!(c.header.horizon, 20.0);
        assert_eq!(c.events.len(), 6);
        assert_eq!(c.events[4].t, 10.0);
        assert_eq!(c.events[5].t, 11.5);
    }
}
