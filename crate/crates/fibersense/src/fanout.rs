//! Per-subscriber bounded buffers between the detector and stream clients.
//!
//! Publishing never blocks. When a buffer is full a new message displaces
//! the oldest queued tile; events are never dropped, so a subscriber whose
//! buffer is full of events is cut off with an overflow notice instead.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use fibersense_core::engine::{EventKind, EventRecord};
use tokio::sync::Notify;

use crate::tile::TilePacket;

pub const SUBSCRIBER_BUFFER: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum StreamMessage {
    Tile(Arc<TilePacket>),
    Event(Arc<EventRecord>),
}

/// State a new subscriber starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t_s: f64,
    pub events: Vec<EventRecord>,
}

/// What a subscriber reads next.
#[derive(Debug, PartialEq)]
pub enum Delivery {
    Messages(Vec<StreamMessage>),
    /// The buffer overflowed with undeliverable events; the subscriber must
    /// resynchronize.
    Overflow,
    Closed,
}

#[derive(Default)]
struct Queue {
    buf: VecDeque<StreamMessage>,
    overflowed: bool,
    closed: bool,
}

struct Slot {
    queue: Mutex<Queue>,
    notify: Notify,
    capacity: usize,
}

impl Slot {
    fn push(&self, msg: StreamMessage) -> PushOutcome {
        let mut q = self.queue.lock().unwrap();
        if q.overflowed || q.closed {
            return PushOutcome::Gone;
        }
        let mut outcome = PushOutcome::Queued;
        if q.buf.len() >= self.capacity {
            if let Some(i) = q.buf.iter().position(|m| matches!(m, StreamMessage::Tile(_))) {
                q.buf.remove(i);
                outcome = PushOutcome::DisplacedTile;
            } else if matches!(msg, StreamMessage::Tile(_)) {
                return PushOutcome::DroppedTile;
            } else {
                q.overflowed = true;
                q.buf.clear();
                drop(q);
                self.notify.notify_one();
                return PushOutcome::Gone;
            }
        }
        q.buf.push_back(msg);
        drop(q);
        self.notify.notify_one();
        outcome
    }
}

enum PushOutcome {
    Queued,
    DisplacedTile,
    DroppedTile,
    Gone,
}

struct HubState {
    next_id: u64,
    slots: BTreeMap<u64, Arc<Slot>>,
    live: BTreeMap<u64, EventRecord>,
    t_s: f64,
    closed: bool,
}

/// Broadcasts tiles and event records to any number of subscribers.
pub struct Hub {
    state: Mutex<HubState>,
    capacity: usize,
    dropped_tiles: AtomicU64,
}

impl Default for Hub {
    fn default() -> Self {
        Self::new(SUBSCRIBER_BUFFER)
    }
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "subscriber buffer must hold at least one message");
        Self {
            state: Mutex::new(HubState {
                next_id: 0,
                slots: BTreeMap::new(),
                live: BTreeMap::new(),
                t_s: 0.0,
                closed: false,
            }),
            capacity,
            dropped_tiles: AtomicU64::new(0),
        }
    }

    /// Registers a subscriber. The snapshot and the registration are atomic
    /// with respect to publishing, so the subscriber sees every event after
    /// the snapshot and none before it.
    pub fn subscribe(self: &Arc<Self>) -> (Snapshot, Subscription) {
        let mut st = self.state.lock().unwrap();
        let id = st.next_id;
        st.next_id += 1;
        let queue = Queue { closed: st.closed, ..Queue::default() };
        let slot = Arc::new(Slot { queue: Mutex::new(queue), notify: Notify::new(), capacity: self.capacity });
        st.slots.insert(id, slot.clone());
        let snap = Snapshot { t_s: st.t_s, events: st.live.values().cloned().collect() };
        (snap, Subscription { hub: self.clone(), id, slot })
    }

    pub fn subscriber_count(&self) -> usize {
        self.state.lock().unwrap().slots.len()
    }

    pub fn dropped_tiles(&self) -> u64 {
        self.dropped_tiles.load(Ordering::Relaxed)
    }

    pub fn live_events(&self) -> Vec<EventRecord> {
        self.state.lock().unwrap().live.values().cloned().collect()
    }

    pub fn publish_event(&self, rec: EventRecord) {
        let mut st = self.state.lock().unwrap();
        st.t_s = st.t_s.max(rec.t_s);
        if rec.event == EventKind::Ended {
            st.live.remove(&rec.id);
        } else {
            st.live.insert(rec.id, rec.clone());
        }
        self.broadcast(&mut st, StreamMessage::Event(Arc::new(rec)));
    }

    pub fn publish_tile(&self, tile: TilePacket) {
        let mut st = self.state.lock().unwrap();
        self.broadcast(&mut st, StreamMessage::Tile(Arc::new(tile)));
    }

    /// Wakes every subscriber with [`Delivery::Closed`] once its buffer
    /// drains.
    pub fn close(&self) {
        let mut st = self.state.lock().unwrap();
        st.closed = true;
        for slot in st.slots.values() {
            slot.queue.lock().unwrap().closed = true;
            slot.notify.notify_one();
        }
    }

    fn broadcast(&self, st: &mut HubState, msg: StreamMessage) {
        let mut gone = Vec::new();
        for (&id, slot) in &st.slots {
            match slot.push(msg.clone()) {
                PushOutcome::Queued => {}
                PushOutcome::DisplacedTile | PushOutcome::DroppedTile => {
                    self.dropped_tiles.fetch_add(1, Ordering::Relaxed);
                }
                PushOutcome::Gone => gone.push(id),
            }
        }
        for id in gone {
            st.slots.remove(&id);
        }
    }
}

/// A subscriber's end of the hub. Dropping it unsubscribes.
pub struct Subscription {
    hub: Arc<Hub>,
    id: u64,
    slot: Arc<Slot>,
}

impl Subscription {
    /// Takes everything queued without waiting. An empty batch means
    /// nothing is pending.
    pub fn try_take(&self) -> Delivery {
        let mut q = self.slot.queue.lock().unwrap();
        if q.overflowed {
            return Delivery::Overflow;
        }
        if q.buf.is_empty() && q.closed {
            return Delivery::Closed;
        }
        Delivery::Messages(q.buf.drain(..).collect())
    }

    /// Waits until at least one message is queued, then takes them all.
    pub async fn next_batch(&self) -> Delivery {
        loop {
            match self.try_take() {
                Delivery::Messages(m) if m.is_empty() => self.slot.notify.notified().await,
                other => return other,
            }
        }
    }

    pub fn pending(&self) -> usize {
        self.slot.queue.lock().unwrap().buf.len()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.hub.state.lock().unwrap().slots.remove(&self.id);
    }
}
