//! TUIO 1.1 cursor profile plus a hand profile, carried in OSC bundles.
//!
//! Every frame becomes one bundle: `/tuio/2Dcur alive`, one `/tuio/2Dcur set`
//! per changed cursor, `/custom/_hand alive`, one `/custom/_hand set` per
//! hand, and `/tuio/2Dcur fseq`.
//!
//! A hand set message reads
//! `set sid type posx posy width height sid_1 .. sid_n f_1 .. f_n` where
//! `type` is `left`, `right` or `unknown`, the box is normalized, `sid_k` are
//! member cursor ids and `f_k` are one-letter finger codes (`t i m r l`, or
//! `u` when unregistered).

pub mod osc;
mod sender;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::hands::{Finger, Handedness};
use crate::image::BoundingBox;
pub use osc::{OscArg, OscBundle, OscMessage, OscPacket, IMMEDIATE};
pub use sender::UdpSender;

pub const CURSOR_PROFILE: &str = "/tuio/2Dcur";
pub const HAND_PROFILE: &str = "/custom/_hand";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CursorState {
    pub sid: i32,
    /// Normalized surface position.
    pub position: [f32; 2],
    /// Normalized units per second.
    pub velocity: [f32; 2],
    pub acceleration: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandState {
    pub sid: i32,
    pub kind: &'static str,
    pub center: [f32; 2],
    pub extent: [f32; 2],
    pub members: Vec<i32>,
    pub fingers: Vec<char>,
}

/// One frame of protocol state.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TuioFrame {
    pub fseq: i32,
    /// All live cursor ids, ascending.
    pub alive: Vec<i32>,
    /// Cursors that changed this frame, ascending by id.
    pub set: Vec<CursorState>,
    /// Hands, ascending by id.
    pub hands: Vec<HandState>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TuioError {
    #[error("cursor {0} is set but not alive")]
    SetNotAlive(i32),
    #[error("hand {hand} lists cursor {cursor}, which is not alive")]
    MemberNotAlive { hand: i32, cursor: i32 },
    #[error("hand {0} has {1} members but {2} finger codes")]
    FingerCount(i32, usize, usize),
    #[error("invalid finger code {0:?}")]
    FingerCode(char),
    #[error(transparent)]
    Osc(#[from] osc::OscError),
}

pub fn encode_frame(frame: &TuioFrame) -> Result<OscBundle, TuioError> {
    for c in &frame.set {
        if !frame.alive.contains(&c.sid) {
            return Err(TuioError::SetNotAlive(c.sid));
        }
    }
    for h in &frame.hands {
        if let Some(&m) = h.members.iter().find(|m| !frame.alive.contains(m)) {
            return Err(TuioError::MemberNotAlive { hand: h.sid, cursor: m });
        }
        if h.members.len() != h.fingers.len() {
            return Err(TuioError::FingerCount(h.sid, h.members.len(), h.fingers.len()));
        }
        if let Some(&f) = h.fingers.iter().find(|f| !"timrlu".contains(**f)) {
            return Err(TuioError::FingerCode(f));
        }
    }
    let msg = |profile: &str, args: Vec<OscArg>| OscPacket::Message(OscMessage::new(profile, args));
    let mut elements = Vec::with_capacity(frame.set.len() + frame.hands.len() + 3);
    let mut alive: Vec<OscArg> = vec!["alive".into()];
    alive.extend(frame.alive.iter().map(|&s| OscArg::Int(s)));
    elements.push(msg(CURSOR_PROFILE, alive));
    for c in &frame.set {
        elements.push(msg(
            CURSOR_PROFILE,
            vec![
                "set".into(),
                c.sid.into(),
                c.position[0].into(),
                c.position[1].into(),
                c.velocity[0].into(),
                c.velocity[1].into(),
                c.acceleration.into(),
            ],
        ));
    }
    let mut hand_alive: Vec<OscArg> = vec!["alive".into()];
    hand_alive.extend(frame.hands.iter().map(|h| OscArg::Int(h.sid)));
    elements.push(msg(HAND_PROFILE, hand_alive));
    for h in &frame.hands {
        let mut args: Vec<OscArg> = vec![
            "set".into(),
            h.sid.into(),
            h.kind.into(),
            h.center[0].into(),
            h.center[1].into(),
            h.extent[0].into(),
            h.extent[1].into(),
        ];
        args.extend(h.members.iter().map(|&m| OscArg::Int(m)));
        args.extend(h.fingers.iter().map(|f| OscArg::Str(f.to_string())));
        elements.push(msg(HAND_PROFILE, args));
    }
    elements.push(msg(CURSOR_PROFILE, vec!["fseq".into(), frame.fseq.into()]));
    Ok(OscBundle {
        timetag: IMMEDIATE,
        elements,
    })
}

/// A tracked fingertip, in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CursorInput {
    pub id: u64,
    pub position: [f64; 2],
}

/// A fingertip cluster, in frame pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct HandInput {
    /// Member track ids.
    pub members: Vec<u64>,
    pub bbox: BoundingBox,
    pub handedness: Option<Handedness>,
    /// Finger of each member, when registered.
    pub fingers: Option<Vec<Finger>>,
}

#[derive(Debug, Clone, Copy)]
struct CursorMemory {
    position: [f32; 2],
    velocity: [f32; 2],
    acceleration: f32,
}

/// Turns per-frame fingertips and hands into protocol frames: normalizes
/// coordinates, differentiates velocities and keeps hand ids stable.
#[derive(Debug, Clone)]
pub struct TuioState {
    width: f64,
    height: f64,
    fps: f64,
    fseq: i32,
    cursors: BTreeMap<i32, CursorMemory>,
    /// Hand id and member cursor ids from the previous frame.
    hands: Vec<(i32, Vec<i32>)>,
    next_hand: i32,
}

fn sid(id: u64) -> i32 {
    id as i32
}

impl TuioState {
    pub fn new(width: usize, height: usize, fps: f64) -> Self {
        TuioState {
            width: width as f64,
            height: height as f64,
            fps,
            fseq: 0,
            cursors: BTreeMap::new(),
            hands: Vec::new(),
            next_hand: 0,
        }
    }

    /// Hand ids of the last frame, in the order the hands were passed in.
    pub fn hand_ids(&self) -> Vec<i32> {
        self.hands.iter().map(|h| h.0).collect()
    }

    pub fn frame(&mut self, cursors: &[CursorInput], hands: &[HandInput]) -> TuioFrame {
        self.fseq = self.fseq.wrapping_add(1);
        let mut next = BTreeMap::new();
        let mut set = Vec::new();
        for c in cursors {
            let s = sid(c.id);
            let position = [(c.position[0] / self.width) as f32, (c.position[1] / self.height) as f32];
            let mem = match self.cursors.get(&s) {
                None => CursorMemory {
                    position,
                    velocity: [0.0; 2],
                    acceleration: 0.0,
                },
                Some(prev) => {
                    let fps = self.fps as f32;
                    let velocity = [
                        (position[0] - prev.position[0]) * fps,
                        (position[1] - prev.position[1]) * fps,
                    ];
                    let speed = velocity[0].hypot(velocity[1]);
                    let prev_speed = prev.velocity[0].hypot(prev.velocity[1]);
                    CursorMemory {
                        position,
                        velocity,
                        acceleration: (speed - prev_speed).abs() * fps,
                    }
                }
            };
            let changed = self.cursors.get(&s).is_none_or(|p| {
                p.position != mem.position || p.velocity != mem.velocity || p.acceleration != mem.acceleration
            });
            if changed {
                set.push(CursorState {
                    sid: s,
                    position: mem.position,
                    velocity: mem.velocity,
                    acceleration: mem.acceleration,
                });
            }
            next.insert(s, mem);
        }
        set.sort_by_key(|c| c.sid);
        self.cursors = next;

        let hand_sids = self.assign_hand_ids(hands);
        let mut out_hands: Vec<HandState> = hands
            .iter()
            .zip(&hand_sids)
            .map(|(h, &hs)| HandState {
                sid: hs,
                kind: h.handedness.map_or("unknown", Handedness::name),
                center: [
                    ((h.bbox.min[0] + h.bbox.max[0]) / 2.0 / self.width) as f32,
                    ((h.bbox.min[1] + h.bbox.max[1]) / 2.0 / self.height) as f32,
                ],
                extent: [
                    ((h.bbox.max[0] - h.bbox.min[0]) / self.width) as f32,
                    ((h.bbox.max[1] - h.bbox.min[1]) / self.height) as f32,
                ],
                members: h.members.iter().map(|&m| sid(m)).collect(),
                fingers: match &h.fingers {
                    Some(f) => f.iter().map(|f| f.code()).collect(),
                    None => vec!['u'; h.members.len()],
                },
            })
            .collect();
        out_hands.sort_by_key(|h| h.sid);
        TuioFrame {
            fseq: self.fseq,
            alive: self.cursors.keys().copied().collect(),
            set,
            hands: out_hands,
        }
    }

    /// A hand inherits the id of the previous-frame hand it shares the most
    /// cursors with; ties go to the lower id, and each id is used once.
    fn assign_hand_ids(&mut self, hands: &[HandInput]) -> Vec<i32> {
        let mut pairs = Vec::new();
        for (i, h) in hands.iter().enumerate() {
            for (prev_sid, members) in &self.hands {
                let shared = h.members.iter().filter(|&&m| members.contains(&sid(m))).count();
                if shared > 0 {
                    pairs.push((std::cmp::Reverse(shared), *prev_sid, i));
                }
            }
        }
        pairs.sort();
        let mut assigned = vec![None; hands.len()];
        let mut used = Vec::new();
        for (_, prev_sid, i) in pairs {
            if assigned[i].is_none() && !used.contains(&prev_sid) {
                assigned[i] = Some(prev_sid);
                used.push(prev_sid);
            }
        }
        let ids: Vec<i32> = assigned
            .into_iter()
            .map(|a| {
                a.unwrap_or_else(|| {
                    let s = self.next_hand;
                    self.next_hand = self.next_hand.wrapping_add(1);
                    s
                })
            })
            .collect();
        self.hands = hands
            .iter()
            .zip(&ids)
            .map(|(h, &s)| (s, h.members.iter().map(|&m| sid(m)).collect()))
            .collect();
        ids
    }
}
