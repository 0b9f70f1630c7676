use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::model::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
    /// Blocks until `t`, or earlier once `stop` is set.
    fn sleep_until(&self, t: Timestamp, stop: &AtomicBool);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::now()
    }

    fn sleep_until(&self, t: Timestamp, stop: &AtomicBool) {
        while !stop.load(Ordering::SeqCst) {
            let left = t.seconds_since(self.now());
            if left <= 0 {
                return;
            }
            std::thread::sleep(Duration::from_millis(200).min(Duration::from_secs(left as u64)));
        }
    }
}

/// Jumps straight to the requested time. With `stop_at` set, the first
/// sleep reaching that instant raises the stop flag, as a shutdown signal
/// arriving mid-window would.
pub struct LogicalClock {
    now: Mutex<Timestamp>,
    stop_at: Option<Timestamp>,
}

impl LogicalClock {
    pub fn new(start: Timestamp) -> Self {
        LogicalClock { now: Mutex::new(start), stop_at: None }
    }

    pub fn stopping_at(start: Timestamp, stop_at: Timestamp) -> Self {
        LogicalClock { now: Mutex::new(start), stop_at: Some(stop_at) }
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Timestamp {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, t: Timestamp, stop: &AtomicBool) {
        let mut now = self.now.lock().unwrap();
        if self.stop_at.is_some_and(|s| s <= t) {
            stop.store(true, Ordering::SeqCst);
        }
        *now = (*now).max(t);
    }
}
