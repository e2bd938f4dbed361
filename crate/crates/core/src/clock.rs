use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use chrono::{DateTime, Utc};

/// Time source used by the crawler, so tests can run without real sleeps.
pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now_secs(&self) -> f64;
    fn sleep(&self, secs: f64);

    fn now_utc(&self) -> DateTime<Utc> {
        let secs = self.now_secs();
        DateTime::from_timestamp(secs.floor() as i64, ((secs.fract()) * 1e9) as u32).unwrap_or_default()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_secs(&self) -> f64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

/// Advances only when asked to sleep; records every sleep.
#[derive(Debug)]
pub struct VirtualClock {
    state: Mutex<(f64, Vec<f64>)>,
}

/// 2024-01-01T00:00:00Z
pub const VIRTUAL_EPOCH: f64 = 1_704_067_200.0;

impl VirtualClock {
    pub fn new() -> Self {
        Self::starting_at(VIRTUAL_EPOCH)
    }

    pub fn starting_at(secs: f64) -> Self {
        VirtualClock { state: Mutex::new((secs, Vec::new())) }
    }

    pub fn sleeps(&self) -> Vec<f64> {
        self.state.lock().unwrap().1.clone()
    }

    pub fn advance(&self, secs: f64) {
        self.state.lock().unwrap().0 += secs;
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now_secs(&self) -> f64 {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, secs: f64) {
        let mut st = self.state.lock().unwrap();
        st.0 += secs.max(0.0);
        st.1.push(secs);
    }
}
