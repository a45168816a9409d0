//! Wall-clock and virtual-time clocks behind one handle.
//!
//! Shaped benchmarks run in virtual time: a simulated clock advanced by
//! modeled resource charges instead of real sleeping. Every participating
//! thread (the driver, each in-flight invocation) registers as an *actor*.
//! The virtual clock serializes actors: exactly one runs at a time, and the
//! scheduler always resumes the parked actor with the smallest
//! `(wake_time, actor_id)`. Compute between waits costs zero virtual time,
//! so a run is fully determined by each actor's sequence of charges.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Nanoseconds since the clock's epoch (process start for wall clocks,
/// simulation start for virtual clocks).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl std::ops::Add<Duration> for SimTime {
    type Output = SimTime;
    fn add(self, d: Duration) -> SimTime {
        SimTime(self.0.saturating_add(d.as_nanos() as u64))
    }
}

/// Identifier of a registered virtual-time actor.
pub type ActorId = u64;

thread_local! {
    static CURRENT_ACTOR: Cell<Option<ActorId>> = const { Cell::new(None) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Waiting until the given virtual time.
    Parked { wake: u64 },
    /// Picked by the scheduler, thread not yet resumed.
    Granted,
    /// Currently executing.
    Running,
}

struct VcState {
    now: u64,
    next_id: ActorId,
    actors: BTreeMap<ActorId, Slot>,
    running: Option<ActorId>,
}

struct VirtualClock {
    state: Mutex<VcState>,
    cond: Condvar,
}

impl VirtualClock {
    fn new() -> Self {
        VirtualClock {
            state: Mutex::new(VcState {
                now: 0,
                next_id: 0,
                actors: BTreeMap::new(),
                running: None,
            }),
            cond: Condvar::new(),
        }
    }

    /// Pick the parked actor with the smallest (wake, id) and grant it the
    /// run token, advancing global time to its wake point.
    fn schedule(&self, state: &mut VcState) {
        if state.running.is_some() {
            return;
        }
        let pick = state
            .actors
            .iter()
            .filter_map(|(&id, slot)| match slot {
                Slot::Parked { wake } => Some((*wake, id)),
                _ => None,
            })
            .min();
        if let Some((wake, id)) = pick {
            state.now = state.now.max(wake);
            state.actors.insert(id, Slot::Granted);
            state.running = Some(id);
            self.cond.notify_all();
        }
    }

    fn register(&self) -> ActorId {
        let mut state = self.state.lock().unwrap();
        let id = state.next_id;
        state.next_id += 1;
        let wake = state.now;
        state.actors.insert(id, Slot::Parked { wake });
        id
    }

    /// Block the calling thread until the actor is granted the run token.
    fn enter(&self, id: ActorId) {
        let mut state = self.state.lock().unwrap();
        self.schedule(&mut state);
        while state.running != Some(id) {
            state = self.cond.wait(state).unwrap();
        }
        state.actors.insert(id, Slot::Running);
    }

    fn sleep(&self, id: ActorId, d: Duration) {
        let mut state = self.state.lock().unwrap();
        debug_assert_eq!(state.running, Some(id), "sleep from non-running actor");
        let wake = state.now.saturating_add(d.as_nanos() as u64);
        state.actors.insert(id, Slot::Parked { wake });
        state.running = None;
        self.schedule(&mut state);
        while state.running != Some(id) {
            state = self.cond.wait(state).unwrap();
        }
        state.actors.insert(id, Slot::Running);
    }

    fn sleep_until(&self, id: ActorId, t: SimTime) {
        let now = self.state.lock().unwrap().now;
        let d = Duration::from_nanos(t.0.saturating_sub(now));
        self.sleep(id, d);
    }

    fn finish(&self, id: ActorId) {
        let mut state = self.state.lock().unwrap();
        state.actors.remove(&id);
        if state.running == Some(id) {
            state.running = None;
        }
        self.schedule(&mut state);
    }
}

enum Inner {
    Wall { epoch: Instant },
    Virtual(VirtualClock),
}

/// Shared clock handle. `Clock::wall()` follows real time and sleeps for
/// real; `Clock::virtual_time()` is the deterministic simulation clock.
#[derive(Clone)]
pub struct Clock {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Clock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self.inner {
            Inner::Wall { .. } => write!(f, "Clock::Wall"),
            Inner::Virtual(_) => write!(f, "Clock::Virtual(now={})", self.now().0),
        }
    }
}

impl Clock {
    pub fn wall() -> Clock {
        Clock {
            inner: Arc::new(Inner::Wall {
                epoch: Instant::now(),
            }),
        }
    }

    /// Create a virtual clock and attach the calling thread as its first
    /// actor (the control thread). The returned guard must stay alive for
    /// as long as the caller participates in the simulation.
    pub fn virtual_time() -> (Clock, ActorGuard) {
        let clock = Clock {
            inner: Arc::new(Inner::Virtual(VirtualClock::new())),
        };
        let id = clock.register_actor();
        let guard = clock.enter_actor(id);
        (clock, guard)
    }

    pub fn is_virtual(&self) -> bool {
        matches!(*self.inner, Inner::Virtual(_))
    }

    pub fn now(&self) -> SimTime {
        match &*self.inner {
            Inner::Wall { epoch } => SimTime(epoch.elapsed().as_nanos() as u64),
            Inner::Virtual(vc) => SimTime(vc.state.lock().unwrap().now),
        }
    }

    /// Advance this thread's time by `d`: a real sleep in wall mode, a
    /// virtual charge in virtual mode.
    pub fn sleep(&self, d: Duration) {
        match &*self.inner {
            Inner::Wall { .. } => {
                if !d.is_zero() {
                    std::thread::sleep(d);
                }
            }
            Inner::Virtual(vc) => {
                let id = current_actor_or_panic();
                vc.sleep(id, d);
            }
        }
    }

    pub fn sleep_until(&self, t: SimTime) {
        match &*self.inner {
            Inner::Wall { epoch } => {
                let now = epoch.elapsed().as_nanos() as u64;
                if t.0 > now {
                    std::thread::sleep(Duration::from_nanos(t.0 - now));
                }
            }
            Inner::Virtual(vc) => {
                let id = current_actor_or_panic();
                vc.sleep_until(id, t);
            }
        }
    }

    /// Let other actors with the same wake time run. No-op in wall mode.
    pub fn yield_now(&self) {
        if self.is_virtual() {
            self.sleep(Duration::ZERO);
        }
    }

    /// Register a new simulation actor starting at the current virtual time.
    /// In wall mode this is a no-op returning a dummy id.
    pub fn register_actor(&self) -> ActorId {
        match &*self.inner {
            Inner::Wall { .. } => 0,
            Inner::Virtual(vc) => vc.register(),
        }
    }

    /// Bind the calling thread to a registered actor; blocks until the
    /// scheduler grants it the run token. The guard releases the actor on
    /// drop.
    pub fn enter_actor(&self, id: ActorId) -> ActorGuard {
        if let Inner::Virtual(vc) = &*self.inner {
            vc.enter(id);
            CURRENT_ACTOR.with(|c| c.set(Some(id)));
        }
        ActorGuard {
            clock: self.clone(),
            id,
        }
    }
}

fn current_actor_or_panic() -> ActorId {
    CURRENT_ACTOR
        .with(|c| c.get())
        .expect("virtual clock used from a thread that is not an attached actor")
}

/// RAII binding of a thread to a virtual-time actor.
pub struct ActorGuard {
    clock: Clock,
    id: ActorId,
}

impl ActorGuard {
    pub fn actor_id(&self) -> ActorId {
        self.id
    }
}

impl Drop for ActorGuard {
    fn drop(&mut self) {
        if let Inner::Virtual(vc) = &*self.clock.inner {
            CURRENT_ACTOR.with(|c| c.set(None));
            vc.finish(self.id);
        }
    }
}
